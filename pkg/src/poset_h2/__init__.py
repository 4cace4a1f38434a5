"""H2-optimal decentralized state feedback for poset-causal LTI systems.

The toolkit decomposes the structured synthesis problem into one standard
Riccati subproblem per poset element, assembles the optimal controller in
state space, and verifies every structural property of the result
(incidence-algebra membership, internal stability, filter-pair inversion,
degree bounds).
"""

__version__ = "0.1.0"

from . import errors
from .poset import (
    BlockPartition,
    IncidencePattern,
    Poset,
    block_submatrix,
    build_poset,
    chains_between,
    conforms,
    downstream,
    downstream_strict,
    incidence_inverse,
    interval,
    off_stream,
    sigma,
    upstream,
    upstream_strict,
)
from .riccati import RiccatiSolution, hautus_stabilizable, ric
from .statespace import (
    StateSpaceRealization,
    TransferSample,
    default_frequency_grid,
    evaluate,
    h2_norm,
    hcat,
    is_stable,
    lft,
    lyapunov_gramian,
    sample_transfer,
    spectral_abscissa,
)
from .synthesis import (
    AssemblyMatrices,
    PlantData,
    SynthesisResult,
    assemble,
    controller,
    embed_hat,
    extract,
    filters,
    p_matrix,
    q_star,
    recover_K_from_Q,
    solve_subproblems,
    synthesize,
    validate_plant,
)
from .verify import (
    NormReport,
    Tolerances,
    Verdict,
    compute_norm_report,
    empirical_h2,
    run_all,
)

__all__ = [
    "__version__",
    "errors",
    # poset
    "Poset",
    "BlockPartition",
    "IncidencePattern",
    "build_poset",
    "downstream",
    "downstream_strict",
    "upstream",
    "upstream_strict",
    "off_stream",
    "interval",
    "chains_between",
    "conforms",
    "incidence_inverse",
    "block_submatrix",
    "sigma",
    # statespace
    "StateSpaceRealization",
    "TransferSample",
    "evaluate",
    "lft",
    "hcat",
    "is_stable",
    "spectral_abscissa",
    "lyapunov_gramian",
    "h2_norm",
    "default_frequency_grid",
    "sample_transfer",
    # riccati
    "RiccatiSolution",
    "ric",
    "hautus_stabilizable",
    # synthesis
    "PlantData",
    "AssemblyMatrices",
    "SynthesisResult",
    "validate_plant",
    "extract",
    "embed_hat",
    "solve_subproblems",
    "assemble",
    "controller",
    "filters",
    "q_star",
    "p_matrix",
    "recover_K_from_Q",
    "synthesize",
    # verify
    "Tolerances",
    "Verdict",
    "NormReport",
    "compute_norm_report",
    "empirical_h2",
    "run_all",
]

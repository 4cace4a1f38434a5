"""Decentralized H2 state-feedback synthesis for poset-causal plants.

The pipeline mirrors the decomposition the problem admits:

1. ``validate_plant`` checks every structural assumption (block causality
   of A and B, block-diagonal full-column-rank disturbance map, zero
   state/input cross penalty, positive definite input weight, per-subsystem
   stabilizability).
2. ``solve_subproblems`` solves one standard Riccati subproblem per poset
   element on the principal submatrices indexed by its downstream set, with
   the disturbance entering only through the element's own block.
3. ``assemble`` stacks the per-element closed loops into block-diagonal
   matrices and builds the structural selectors relating subproblem
   coordinates to plant coordinates.
4. ``controller`` / ``filters`` / ``q_star`` read the optimal controller,
   the propagation/differential filter pair and the optimal disturbance
   response directly off the assembled matrices.

States of the controller correspond to predicted-state corrections: the
state block ``q[i|j]`` tracks the differential improvement, at subsystem j,
of the prediction of subsystem i's state, for i strictly downstream of j.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg

from .errors import (
    AssemblyIdentityViolated,
    CrossTermNonzero,
    DimensionMismatch,
    FNotBlockDiagonal,
    FRankDeficient,
    InputWeightSingular,
    NotPosetCausal,
    SubsystemNotStabilizable,
    UnknownLabel,
)
from .poset import (
    BlockPartition,
    IncidencePattern,
    Poset,
    block_submatrix,
    downstream_strict,
    sigma,
)
from .riccati import RiccatiSolution, hautus_stabilizable, ric
from .statespace import (
    StateSpaceRealization,
    TransferSample,
    default_frequency_grid,
    evaluate,
    spectral_abscissa,
)

__all__ = [
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
]

log = logging.getLogger("poset_h2.synthesis")


def _offsets(dims) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(dims)))


@dataclass(frozen=True)
class PlantData:
    """A validated poset-causal plant; construct via :func:`validate_plant`."""

    poset: Poset
    partition: BlockPartition
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        for M in (self.A, self.B, self.C, self.D, self.F):
            M.setflags(write=False)

    def down(self, j: int) -> list[int]:
        return self.poset.down_indices(j)

    @property
    def state_pattern(self) -> IncidencePattern:
        return IncidencePattern(
            self.poset, self.partition.state_dims, self.partition.state_dims
        )

    @property
    def input_state_pattern(self) -> IncidencePattern:
        return IncidencePattern(
            self.poset, self.partition.input_dims, self.partition.state_dims
        )

    @property
    def input_disturbance_pattern(self) -> IncidencePattern:
        return IncidencePattern(
            self.poset, self.partition.input_dims, self.partition.disturbance_dims
        )


def validate_plant(
    poset: Poset,
    partition: BlockPartition,
    A,
    B,
    C,
    D,
    F,
    atol: float = 1e-9,
) -> PlantData:
    """Check all structural plant assumptions, or raise a named diagnostic.

    Failures identify the violated invariant and the offending block, e.g.
    ``NotPosetCausal(1,2)`` when block (1, 2) of A is nonzero although
    element 2 is not upstream of element 1.
    """
    p = len(poset)
    if partition.num_blocks != p:
        raise DimensionMismatch("partition must have one block per poset element")
    n = partition.total_states
    m = partition.total_inputs
    l = partition.output_dim
    f = partition.total_disturbances
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    C = np.array(C, dtype=float)
    D = np.array(D, dtype=float)
    F = np.array(F, dtype=float)
    shapes = {"A": (A, (n, n)), "B": (B, (n, m)), "C": (C, (l, n)),
              "D": (D, (l, m)), "F": (F, (n, f))}
    for name, (M, want) in shapes.items():
        if M.shape != want:
            raise DimensionMismatch(f"{name} is {M.shape}, expected {want}")

    # Poset causality of the dynamics: forbidden blocks of A and B vanish.
    so = _offsets(partition.state_dims)
    io = _offsets(partition.input_dims)
    for i in range(p):
        for j in range(p):
            if poset.leq[j, i]:
                continue
            if np.abs(A[so[i]:so[i + 1], so[j]:so[j + 1]]).max() > atol:
                raise NotPosetCausal(
                    poset.elements[i], poset.elements[j], "A",
                    "state block influenced by a non-upstream element",
                )
            if np.abs(B[so[i]:so[i + 1], io[j]:io[j + 1]]).max() > atol:
                raise NotPosetCausal(
                    poset.elements[i], poset.elements[j], "B",
                    "input block influences a non-downstream element",
                )

    # Disturbance map: block diagonal with full-column-rank blocks.
    fo = _offsets(partition.disturbance_dims)
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            blk = F[so[i]:so[i + 1], fo[j]:fo[j + 1]]
            if blk.size and np.abs(blk).max() > atol:
                raise FNotBlockDiagonal(
                    f"block ({poset.elements[i]},{poset.elements[j]}) is nonzero"
                )
    for j in range(p):
        blk = F[so[j]:so[j + 1], fo[j]:fo[j + 1]]
        if np.linalg.matrix_rank(blk) < partition.disturbance_dims[j]:
            raise FRankDeficient(poset.elements[j])

    cross = C.T @ D
    if np.abs(cross).max() > max(atol, 1e-12):
        raise CrossTermNonzero("C'D must vanish")
    r_eigs = np.linalg.eigvalsh(D.T @ D)
    if r_eigs.min() <= 1e-12 * max(1.0, r_eigs.max()):
        raise InputWeightSingular("D'D must be positive definite")

    for j in range(p):
        Ajj = A[so[j]:so[j + 1], so[j]:so[j + 1]]
        Bjj = B[so[j]:so[j + 1], io[j]:io[j + 1]]
        if not hautus_stabilizable(Ajj, Bjj):
            raise SubsystemNotStabilizable(poset.elements[j])

    return PlantData(poset, partition, A, B, C, D, F)


def extract(plant: PlantData, j: str):
    """Principal submatrices indexed by the downstream set of ``j``.

    Returns ``(A(dj,dj), B(dj,dj), C(dj), D(dj), F_jj)`` with blocks in
    linear-extension order (``j`` itself first).
    """
    k = plant.poset.index(j)
    dj = plant.down(k)
    part = plant.partition
    Adj = block_submatrix(plant.A, part.state_dims, part.state_dims, dj, dj)
    Bdj = block_submatrix(plant.B, part.state_dims, part.input_dims, dj, dj)
    Cdj = block_submatrix(plant.C, (part.output_dim,), part.state_dims, [0], dj)
    Ddj = block_submatrix(plant.D, (part.output_dim,), part.input_dims, [0], dj)
    Fjj = block_submatrix(
        plant.F, part.state_dims, part.disturbance_dims, [k], [k]
    )
    return Adj, Bdj, Cdj, Ddj, Fjj


def embed_hat(poset: Poset, partition: BlockPartition, K_sub, j: str) -> np.ndarray:
    """Zero-pad a downstream-set gain into the full input-by-state matrix.

    ``K_sub`` is the block matrix over the downstream set of ``j`` (rows are
    input blocks, columns state blocks); entries outside that set are zero.
    """
    k = poset.index(j)
    dj = poset.down_indices(k)
    K_sub = np.asarray(K_sub, dtype=float)
    rows = [partition.input_dims[i] for i in dj]
    cols = [partition.state_dims[i] for i in dj]
    if K_sub.shape != (sum(rows), sum(cols)):
        raise DimensionMismatch(
            f"gain is {K_sub.shape}, downstream set implies ({sum(rows)}, {sum(cols)})"
        )
    io = _offsets(partition.input_dims)
    so = _offsets(partition.state_dims)
    ro, co = _offsets(rows), _offsets(cols)
    out = np.zeros((partition.total_inputs, partition.total_states))
    for a, i in enumerate(dj):
        for b, q in enumerate(dj):
            out[io[i]:io[i + 1], so[q]:so[q + 1]] = K_sub[
                ro[a]:ro[a + 1], co[b]:co[b + 1]
            ]
    return out


def solve_subproblems(
    plant: PlantData, parallel: bool = True
) -> dict[str, RiccatiSolution]:
    """Solve the per-element Riccati subproblems.

    For element j the data is the downstream-set restriction of the plant
    with the disturbance entering only through the j-th diagonal block of F.
    Subproblems are independent; with ``parallel`` they run on a thread
    pool (the LAPACK kernels release the GIL).
    """
    poset = plant.poset
    part = plant.partition

    def solve_one(j: str) -> RiccatiSolution:
        Adj, Bdj, Cdj, Ddj, Fjj = extract(plant, j)
        k = poset.index(j)
        ndj = sum(part.state_dims[i] for i in plant.down(k))
        F_sub = np.zeros((ndj, Fjj.shape[1]))
        F_sub[: part.state_dims[k], :] = Fjj
        try:
            return ric(Adj, Bdj, Cdj, Ddj, F_sub)
        except Exception as exc:
            exc.args = (f"subproblem {j!r}: {exc}",) + exc.args[1:]
            raise

    labels = list(poset.elements)
    if parallel and len(labels) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(labels))) as pool:
            solved = list(pool.map(solve_one, labels))
    else:
        solved = [solve_one(j) for j in labels]
    return dict(zip(labels, solved))


@dataclass(frozen=True)
class AssemblyMatrices:
    """Block matrices assembled from the subproblem gains.

    ``bigA``/``bigK`` stack the per-element closed loops and gains block
    diagonally; ``Pi1``/``Pi2`` select, within each downstream-set block,
    the element's own states respectively the strictly-downstream ones;
    ``Rsel`` (and its input-space counterpart ``Rsel_inputs``) scatter the
    stacked coordinates back to plant coordinates.
    """

    bigA: np.ndarray
    bigK: np.ndarray
    Pi1: np.ndarray
    Pi2: np.ndarray
    Rsel: np.ndarray
    Rsel_inputs: np.ndarray
    A_Phi: np.ndarray
    B_Phi: np.ndarray
    C_Phi: np.ndarray
    C_Q: np.ndarray
    down_sets: tuple[tuple[int, ...], ...]
    state_dims: tuple[int, ...]
    input_dims: tuple[int, ...]
    state_labels: tuple[str, ...] = field(default=())


def _gain_matrix(entry) -> np.ndarray:
    if isinstance(entry, RiccatiSolution):
        return entry.L
    return np.asarray(entry, dtype=float)


def assemble(
    plant: PlantData,
    gains: Mapping[str, RiccatiSolution | np.ndarray],
    identity_atol: float = 1e-9,
) -> AssemblyMatrices:
    """Assemble the stacked closed-loop matrices and structural selectors.

    The structural identities relating the selectors to the plant (the
    permutation property of ``[Pi1 Pi2]``, the scatter/projection identities
    and stability of the stacked closed loop) are verified and a violation
    raises :class:`AssemblyIdentityViolated` naming the failed identity.
    """
    poset = plant.poset
    part = plant.partition
    p = len(poset)
    down_sets = tuple(tuple(plant.down(j)) for j in range(p))

    K_blocks = []
    A_blocks = []
    for j, label in enumerate(poset.elements):
        if label not in gains:
            raise UnknownLabel(f"missing gain for element {label!r}")
        Kj = _gain_matrix(gains[label])
        Adj, Bdj, *_ = extract(plant, label)
        if Kj.shape != (Bdj.shape[1], Adj.shape[0]):
            raise DimensionMismatch(
                f"gain for {label!r} is {Kj.shape}, expected "
                f"({Bdj.shape[1]}, {Adj.shape[0]})"
            )
        K_blocks.append(Kj)
        A_blocks.append(Adj - Bdj @ Kj)

    bigA = scipy.linalg.block_diag(*A_blocks)
    bigK = scipy.linalg.block_diag(*K_blocks)

    nd = [sum(part.state_dims[i] for i in ds) for ds in down_sets]
    md = [sum(part.input_dims[i] for i in ds) for ds in down_sets]
    N = sum(nd)
    big_off = _offsets(nd)
    big_in_off = _offsets(md)
    so = _offsets(part.state_dims)
    io = _offsets(part.input_dims)

    n = part.total_states
    Pi1 = np.zeros((N, n))
    Pi2 = np.zeros((N, N - n))
    Rsel = np.zeros((n, N))
    Rsel_in = np.zeros((part.total_inputs, sum(md)))
    labels: list[str] = []
    col = 0
    for j in range(p):
        row = big_off[j]
        nj = part.state_dims[j]
        Pi1[row:row + nj, so[j]:so[j + 1]] = np.eye(nj)
        inner = row
        inner_in = big_in_off[j]
        for i in down_sets[j]:
            ni = part.state_dims[i]
            mi = part.input_dims[i]
            Rsel[so[i]:so[i + 1], inner:inner + ni] = np.eye(ni)
            Rsel_in[io[i]:io[i + 1], inner_in:inner_in + mi] = np.eye(mi)
            if i != j:
                Pi2[inner:inner + ni, col:col + ni] = np.eye(ni)
                for k in range(ni):
                    suffix = f".{k}" if ni > 1 else ""
                    labels.append(
                        f"q[{poset.elements[i]}|{poset.elements[j]}]{suffix}"
                    )
                col += ni
            inner += ni
            inner_in += mi

    A_Phi = Pi2.T @ bigA @ Pi2
    B_Phi = Pi2.T @ bigA @ Pi1
    C_Phi = Rsel @ Pi2
    C_Q = -Rsel_in @ bigK

    perm = np.hstack([Pi1, Pi2])
    checks = {
        "selector_permutation": max(
            np.abs(perm @ perm.T - np.eye(N)).max(),
            np.abs(perm.T @ perm - np.eye(N)).max(),
        ),
        "scatter_complement": np.abs(Rsel @ Pi2 @ Pi2.T + Pi1.T - Rsel).max(),
        "closed_loop_intertwining": np.abs(
            Rsel @ bigA - plant.B @ C_Q - plant.A @ Rsel
        ).max(),
        "head_projection": np.abs(plant.A @ Rsel @ Pi1 - plant.A).max(),
    }
    for name, deviation in checks.items():
        if deviation > identity_atol:
            raise AssemblyIdentityViolated(name, float(deviation), identity_atol)
    abscissa = spectral_abscissa(bigA)
    if abscissa >= 0.0:
        raise AssemblyIdentityViolated(
            "stacked_closed_loop_stable", float(abscissa), 0.0
        )

    return AssemblyMatrices(
        bigA=bigA,
        bigK=bigK,
        Pi1=Pi1,
        Pi2=Pi2,
        Rsel=Rsel,
        Rsel_inputs=Rsel_in,
        A_Phi=A_Phi,
        B_Phi=B_Phi,
        C_Phi=C_Phi,
        C_Q=C_Q,
        down_sets=down_sets,
        state_dims=tuple(part.state_dims),
        input_dims=tuple(part.input_dims),
        state_labels=tuple(labels),
    )


def controller(assembly: AssemblyMatrices) -> StateSpaceRealization:
    """The optimal decentralized controller read off the assembled matrices.

    Its states are exactly the strictly-downstream prediction corrections;
    on a one-element poset it degenerates to the static centralized gain.
    """
    A_K = assembly.A_Phi - assembly.B_Phi @ assembly.C_Phi
    B_K = assembly.B_Phi
    C_K = assembly.C_Q @ (assembly.Pi2 - assembly.Pi1 @ assembly.C_Phi)
    D_K = assembly.C_Q @ assembly.Pi1
    return StateSpaceRealization(A_K, B_K, C_K, D_K)


def filters(assembly: AssemblyMatrices):
    """The propagation/differential filter pair and the gain-side factor.

    Returns ``(Phi, Gamma, K_Phi)``.  ``Phi`` propagates each subsystem's
    local correction signal to strictly-downstream state predictions;
    ``Gamma`` is its inverse; the controller factors as
    ``K = K_Phi * Gamma`` with ``K_Phi`` sharing the filter state.
    """
    n = assembly.Rsel.shape[0]
    eye = np.eye(n)
    phi = StateSpaceRealization(
        assembly.A_Phi, assembly.B_Phi, assembly.C_Phi, eye
    )
    gamma = StateSpaceRealization(
        assembly.A_Phi - assembly.B_Phi @ assembly.C_Phi,
        assembly.B_Phi,
        -assembly.C_Phi,
        eye,
    )
    k_phi = StateSpaceRealization(
        assembly.A_Phi,
        assembly.B_Phi,
        assembly.C_Q @ assembly.Pi2,
        assembly.C_Q @ assembly.Pi1,
    )
    return phi, gamma, k_phi


def q_star(plant: PlantData, assembly: AssemblyMatrices) -> StateSpaceRealization:
    """Optimal disturbance-to-input response of the synthesized loop."""
    B = assembly.Pi1 @ plant.F
    D = np.zeros((plant.partition.total_inputs, plant.F.shape[1]))
    return StateSpaceRealization(assembly.bigA, B, assembly.C_Q, D)


def p_matrix(plant: PlantData) -> StateSpaceRealization:
    """Four-block plant map from (w, u) to (z, x) used for loop closure."""
    n = plant.partition.total_states
    m = plant.partition.total_inputs
    l = plant.partition.output_dim
    f = plant.F.shape[1]
    B = np.hstack([plant.F, plant.B])
    C = np.vstack([plant.C, np.eye(n)])
    D = np.zeros((l + n, f + m))
    D[:l, f:] = plant.D
    return StateSpaceRealization(plant.A, B, C, D)


def recover_K_from_Q(
    plant: PlantData, Q: StateSpaceRealization, points=None
) -> list[TransferSample]:
    """Recover controller samples from a disturbance-response parameter.

    Evaluates ``K = Q P21_left (I + P22 Q P21_left)^{-1}`` with the left
    inverse ``P21_left = pinv(F) (sI - A)`` at the deterministic frequency
    grid; points where the algebra degenerates are nudged and retried.
    This is a cross-check oracle, not the synthesis path.
    """
    if points is None:
        points = default_frequency_grid(avoid=[plant.A, Q.A])
    F_pinv = np.linalg.pinv(plant.F)
    n = plant.partition.total_states
    samples = []
    for s in points:
        attempt = complex(s)
        for _ in range(40):
            try:
                Qs = evaluate(Q, attempt)
                resolvent = np.linalg.solve(
                    attempt * np.eye(n) - plant.A, np.hstack([plant.F, plant.B])
                )
                P22 = resolvent[:, plant.F.shape[1]:]
                P21_left = F_pinv @ (attempt * np.eye(n) - plant.A)
                core = Qs @ P21_left
                Ks = core @ np.linalg.inv(np.eye(n) + P22 @ core)
            except np.linalg.LinAlgError:
                attempt += 0.0173 + 0.0119j
                continue
            samples.append(TransferSample(attempt, Ks))
            break
        else:
            raise DimensionMismatch(
                f"could not evaluate recovery near s = {s}"
            )
    return samples


@dataclass(frozen=True)
class SynthesisResult:
    """Everything the synthesis produces for one plant."""

    gains: dict[str, RiccatiSolution]
    assembly: AssemblyMatrices
    K_star: StateSpaceRealization
    Phi: StateSpaceRealization
    Gamma: StateSpaceRealization
    K_Phi: StateSpaceRealization
    Q_star: StateSpaceRealization
    degree_bound: int
    sigma_times_nmax: int
    norms: object
    controller_state_labels: tuple[str, ...]


def synthesize(
    plant: PlantData,
    parallel: bool = True,
    identity_atol: float = 1e-9,
) -> SynthesisResult:
    """Run the full pipeline and return the controller with diagnostics."""
    gains = solve_subproblems(plant, parallel=parallel)
    assembly = assemble(plant, gains, identity_atol=identity_atol)
    K_star = controller(assembly)
    phi, gamma, k_phi = filters(assembly)
    Qs = q_star(plant, assembly)

    part = plant.partition
    degree_bound = sum(
        part.state_dims[plant.poset.index(i)]
        for j in plant.poset.elements
        for i in downstream_strict(plant.poset, j)
    )
    sigma_times_nmax = sigma(plant.poset) * max(part.state_dims)
    log.info(
        "synthesized controller: degree %d (bound %d, poset bound %d)",
        K_star.nstates, degree_bound, sigma_times_nmax,
    )

    from .verify import compute_norm_report  # deferred: verify imports us

    norms = compute_norm_report(plant, K_star)
    return SynthesisResult(
        gains=gains,
        assembly=assembly,
        K_star=K_star,
        Phi=phi,
        Gamma=gamma,
        K_Phi=k_phi,
        Q_star=Qs,
        degree_bound=degree_bound,
        sigma_times_nmax=sigma_times_nmax,
        norms=norms,
        controller_state_labels=assembly.state_labels,
    )

"""Diagnostics for synthesized controllers.

``run_all`` re-checks every structural property a synthesis result claims
(incidence membership, internal stability, the filter-pair algebra, the
disturbance-response identities, degree bounds) and reports one verdict per
check plus the norm triple.  Checks never raise: a failure inside a check
becomes a failed verdict so the report is always complete.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import UnstableSystem
from .poset import IncidencePattern, chains_between, max_forbidden_magnitude, sigma
from .riccati import ric
from .statespace import (
    StateSpaceRealization,
    default_frequency_grid,
    evaluate,
    h2_norm,
    is_stable,
    lft,
    spectral_abscissa,
)
from .synthesis import PlantData, extract, p_matrix, recover_K_from_Q

__all__ = [
    "Tolerances",
    "Verdict",
    "NormReport",
    "GainRecord",
    "StoredResult",
    "compute_norm_report",
    "empirical_h2",
    "run_all",
    "CHECK_REFERENCES",
]

log = logging.getLogger("poset_h2.verify")


@dataclass(frozen=True)
class Tolerances:
    """Central tolerance configuration for all verdicts."""

    pattern_atol: float = 1e-8
    identity_atol: float = 1e-9
    filter_inversion: float = 1e-8
    transfer_tol: float = 1e-7
    spectrum_tol: float = 1e-6
    norm_order_slack: float = 1e-9
    riccati_residual_scale: float = 1e-7
    empirical_abs: float = 1e-3
    empirical_rel: float = 2e-3
    stability_margin: float = 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class Verdict:
    """One diagnostic outcome; ``passed`` iff ``measured <= tolerance``."""

    check_name: str
    passed: bool
    measured: float
    tolerance: float
    reference: str

    def to_dict(self) -> dict:
        measured = self.measured if math.isfinite(self.measured) else "inf"
        return {
            "check_name": self.check_name,
            "passed": bool(self.passed),
            "measured": measured,
            "tolerance": self.tolerance,
            "reference": self.reference,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        measured = data["measured"]
        measured = math.inf if measured == "inf" else float(measured)
        return cls(
            check_name=data["check_name"],
            passed=bool(data["passed"]),
            measured=measured,
            tolerance=float(data["tolerance"]),
            reference=data["reference"],
        )


@dataclass(frozen=True)
class NormReport:
    """Open-loop, centralized and decentralized closed-loop H2 norms."""

    h_open: float
    h_centralized: float
    h_decentralized: float

    def to_dict(self) -> dict:
        def enc(x: float):
            return x if math.isfinite(x) else "inf"

        return {
            "h_open": enc(self.h_open),
            "h_centralized": enc(self.h_centralized),
            "h_decentralized": enc(self.h_decentralized),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormReport":
        def dec(x) -> float:
            return math.inf if x == "inf" else float(x)

        return cls(
            dec(data["h_open"]),
            dec(data["h_centralized"]),
            dec(data["h_decentralized"]),
        )


@dataclass(frozen=True)
class GainRecord:
    """Per-element gain data restored from a result file."""

    L: np.ndarray
    X: np.ndarray
    residual: float


@dataclass(frozen=True)
class StoredResult:
    """A synthesis result reconstructed from serialized realizations."""

    K_star: StateSpaceRealization
    Phi: StateSpaceRealization
    Gamma: StateSpaceRealization
    K_Phi: StateSpaceRealization
    Q_star: StateSpaceRealization
    gains: dict | None = None


def compute_norm_report(plant: PlantData, k_star: StateSpaceRealization) -> NormReport:
    """Norm triple: open loop, centralized baseline, synthesized loop.

    The centralized baseline closes the loop with the unstructured optimal
    state feedback for the same data, so it lower-bounds the decentralized
    value and coincides with it on one-element posets.
    """
    zero_d = np.zeros((plant.C.shape[0], plant.F.shape[1]))
    h_open = h2_norm(StateSpaceRealization(plant.A, plant.F, plant.C, zero_d))
    central = ric(plant.A, plant.B, plant.C, plant.D, plant.F)
    h_central = h2_norm(
        StateSpaceRealization(
            plant.A - plant.B @ central.L,
            plant.F,
            plant.C - plant.D @ central.L,
            zero_d,
        )
    )
    h_decent = h2_norm(lft(p_matrix(plant), k_star))
    return NormReport(h_open, h_central, h_decent)


def empirical_h2(sys: StateSpaceRealization, horizon: float, step: float) -> float:
    """H2 norm by fixed-step quadrature of the impulse-response energy.

    Integrates the squared Frobenius norm of ``C exp(At) B`` on
    ``[0, horizon]`` with composite Simpson weights.  Independent of the
    gramian path, so it serves as an oracle for :func:`h2_norm`.
    """
    if sys.D.size and np.abs(sys.D).max() > 0.0:
        raise ValueError("time-domain quadrature needs a strictly proper system")
    if sys.nstates == 0:
        return 0.0
    if not is_stable(sys.A):
        raise UnstableSystem("time-domain quadrature needs a stable system")
    steps = int(round(horizon / step))
    steps = max(steps + steps % 2, 2)  # composite Simpson needs an even count
    h = horizon / steps
    E = scipy.linalg.expm(sys.A * h)
    M = sys.B.copy()
    C = sys.C
    g = np.empty(steps + 1)
    g[0] = float(np.sum((C @ M) ** 2))
    for k in range(1, steps + 1):
        M = E @ M
        g[k] = float(np.sum((C @ M) ** 2))
    integral = (h / 3.0) * (
        g[0] + g[-1] + 4.0 * g[1:-1:2].sum() + 2.0 * g[2:-1:2].sum()
    )
    return math.sqrt(max(integral, 0.0))


# check name -> short statement of the verified property
CHECK_REFERENCES = {
    "closed_loop_stable": "internal stability of the interconnected loop",
    "closed_loop_spectrum": "closed-loop spectrum equals the stacked subproblem spectrum",
    "stacked_closed_loop_stable": "stability of the stacked subproblem closed loops",
    "pattern_controller": "incidence membership of the controller (sampled)",
    "pattern_controller_feedthrough": "incidence membership of the controller feedthrough (exact)",
    "pattern_phi": "incidence membership of the propagation filter (sampled)",
    "pattern_gamma": "incidence membership of the differential filter (sampled)",
    "pattern_k_phi": "incidence membership of the gain-side factor (sampled)",
    "pattern_q_star": "incidence membership of the disturbance response (sampled)",
    "filter_inversion": "propagation and differential filters are mutual inverses",
    "gamma_chain_formula": "differential filter equals the signed chain-product sum",
    "controller_factorization": "controller factors as gain-side factor times differential filter",
    "youla_consistency": "disturbance response matches the closed loop of the controller",
    "youla_recovery": "controller is recoverable from the disturbance response",
    "degree_exact": "controller degree equals the strict-downstream state total",
    "degree_poset_bound": "controller degree within the combinatorial poset bound",
    "norm_ordering": "centralized norm lower-bounds the decentralized norm",
    "riccati_residuals": "per-element Riccati equations are satisfied",
    "time_domain_norm_agreement": "gramian norm agrees with time-domain quadrature",
}


def _spectrum_distance(A1: np.ndarray, A2: np.ndarray) -> float:
    e1 = np.sort_complex(np.linalg.eigvals(A1)) if A1.shape[0] else np.zeros(0)
    e2 = np.sort_complex(np.linalg.eigvals(A2)) if A2.shape[0] else np.zeros(0)
    if e1.shape != e2.shape:
        return math.inf
    if e1.size == 0:
        return 0.0
    return float(np.abs(e1 - e2).max())


def _max_sample_deviation(grid, fn) -> float:
    worst = 0.0
    for s in grid:
        worst = max(worst, float(fn(s)))
    return worst


def run_all(
    plant: PlantData,
    result,
    tolerances: Tolerances | None = None,
    freq_points=None,
    freq_count: int = 20,
    time_domain_check: bool = True,
):
    """Run the full diagnostic suite; returns ``(verdicts, norm_report)``.

    ``result`` may be a fresh ``SynthesisResult`` or a ``StoredResult``
    rebuilt from a result file; only the stored realizations are inspected,
    nothing is re-derived from the gains.  Deterministic for a fixed
    frequency grid; check failures are reported, never raised.
    """
    tol = tolerances or DEFAULT_TOLERANCES
    K = result.K_star
    phi, gamma, k_phi, q_star_sys = result.Phi, result.Gamma, result.K_Phi, result.Q_star
    big_a = q_star_sys.A
    part = plant.partition
    poset = plant.poset

    closed = lft(p_matrix(plant), K)
    norms = compute_norm_report(plant, K)
    if freq_points is None:
        freq_points = default_frequency_grid(
            avoid=[plant.A, big_a, phi.A, gamma.A, closed.A], count=freq_count
        )

    in_state = IncidencePattern(poset, part.input_dims, part.state_dims)
    in_dist = IncidencePattern(poset, part.input_dims, part.disturbance_dims)
    state_state = IncidencePattern(poset, part.state_dims, part.state_dims)

    so = np.concatenate(([0], np.cumsum(part.state_dims)))
    strict_pairs = [
        (i, j)
        for i in range(len(poset))
        for j in range(len(poset))
        if i != j and poset.leq[j, i]
    ]

    def check_closed_loop_stable():
        return spectral_abscissa(closed.A), -tol.stability_margin

    def check_closed_loop_spectrum():
        return _spectrum_distance(closed.A, big_a), tol.spectrum_tol

    def check_stacked_stable():
        return spectral_abscissa(big_a), -tol.stability_margin

    def sampled_pattern(sys, pattern):
        return _max_sample_deviation(
            freq_points,
            lambda s: max_forbidden_magnitude(pattern, evaluate(sys, s)),
        )

    def check_pattern_controller():
        return sampled_pattern(K, in_state), tol.pattern_atol

    def check_pattern_controller_feedthrough():
        return max_forbidden_magnitude(in_state, K.D), 0.0

    def check_pattern_phi():
        return sampled_pattern(phi, state_state), tol.pattern_atol

    def check_pattern_gamma():
        return sampled_pattern(gamma, state_state), tol.pattern_atol

    def check_pattern_k_phi():
        return sampled_pattern(k_phi, in_state), tol.pattern_atol

    def check_pattern_q_star():
        return sampled_pattern(q_star_sys, in_dist), tol.pattern_atol

    def check_filter_inversion():
        n = part.total_states
        eye = np.eye(n)

        def dev(s):
            ps, gs = evaluate(phi, s), evaluate(gamma, s)
            return max(
                np.linalg.norm(ps @ gs - eye), np.linalg.norm(gs @ ps - eye)
            )

        return _max_sample_deviation(freq_points, dev), tol.filter_inversion

    def check_gamma_chain_formula():
        def dev(s):
            ps, gs = evaluate(phi, s), evaluate(gamma, s)
            worst = 0.0
            for i, j in strict_pairs:
                total = np.zeros(
                    (part.state_dims[i], part.state_dims[j]), dtype=complex
                )
                for chain in chains_between(
                    poset, poset.elements[j], poset.elements[i]
                ):
                    term = np.eye(part.state_dims[i], dtype=complex)
                    for lo, hi in reversed(chain):
                        a, b = poset.index(lo), poset.index(hi)
                        term = term @ (-ps[so[b]:so[b + 1], so[a]:so[a + 1]])
                    total += term
                got = gs[so[i]:so[i + 1], so[j]:so[j + 1]]
                worst = max(worst, float(np.abs(got - total).max()))
            return worst

        return _max_sample_deviation(freq_points, dev), tol.transfer_tol

    def check_controller_factorization():
        def dev(s):
            return np.abs(
                evaluate(K, s) - evaluate(k_phi, s) @ evaluate(gamma, s)
            ).max()

        return _max_sample_deviation(freq_points, dev), tol.transfer_tol

    def check_youla_consistency():
        n = part.total_states
        m = part.total_inputs
        f = plant.F.shape[1]
        # Map (w, u) -> (u, x): closing it with K yields the w -> u response.
        D = np.zeros((m + n, f + m))
        D[:m, f:] = np.eye(m)
        M = StateSpaceRealization(
            plant.A,
            np.hstack([plant.F, plant.B]),
            np.vstack([np.zeros((m, n)), np.eye(n)]),
            D,
        )
        q_from_k = lft(M, K)

        def dev(s):
            return np.abs(evaluate(q_from_k, s) - evaluate(q_star_sys, s)).max()

        return _max_sample_deviation(freq_points, dev), tol.transfer_tol

    def check_youla_recovery():
        samples = recover_K_from_Q(plant, q_star_sys, points=freq_points)
        worst = 0.0
        for sample in samples:
            worst = max(
                worst,
                float(np.abs(sample.value - evaluate(K, sample.s)).max()),
            )
        return worst, tol.transfer_tol

    def check_degree_exact():
        strict_total = sum(
            part.state_dims[j]
            for i in range(len(poset))
            for j in range(len(poset))
            if i != j and poset.leq[i, j]
        )
        return float(abs(K.nstates - strict_total)), 0.0

    def check_degree_poset_bound():
        bound = sigma(poset) * max(part.state_dims)
        return float(K.nstates - bound), 0.0

    def check_norm_ordering():
        if not math.isfinite(norms.h_decentralized):
            return math.inf, tol.norm_order_slack
        return norms.h_centralized - norms.h_decentralized, tol.norm_order_slack

    def check_riccati_residuals():
        worst = 0.0
        for label, record in result.gains.items():
            Adj, Bdj, Cdj, Ddj, _ = extract(plant, label)
            X = record.X
            R_inv = np.linalg.inv(Ddj.T @ Ddj)
            res = np.linalg.norm(
                Adj.T @ X + X @ Adj - X @ Bdj @ R_inv @ Bdj.T @ X + Cdj.T @ Cdj
            )
            worst = max(worst, res / (1.0 + np.linalg.norm(X)))
        return worst, tol.riccati_residual_scale

    def check_time_domain_norm():
        if not math.isfinite(norms.h_decentralized):
            return math.inf, tol.empirical_abs
        alpha = -spectral_abscissa(closed.A)
        horizon = min(max(14.0 / max(alpha, 1e-2), 10.0), 200.0)
        emp = empirical_h2(closed, horizon=horizon, step=horizon / 20000.0)
        allowed = max(tol.empirical_abs, tol.empirical_rel * norms.h_decentralized)
        return abs(emp - norms.h_decentralized), allowed

    registry = [
        ("closed_loop_stable", check_closed_loop_stable),
        ("closed_loop_spectrum", check_closed_loop_spectrum),
        ("stacked_closed_loop_stable", check_stacked_stable),
        ("pattern_controller", check_pattern_controller),
        ("pattern_controller_feedthrough", check_pattern_controller_feedthrough),
        ("pattern_phi", check_pattern_phi),
        ("pattern_gamma", check_pattern_gamma),
        ("pattern_k_phi", check_pattern_k_phi),
        ("pattern_q_star", check_pattern_q_star),
        ("filter_inversion", check_filter_inversion),
        ("gamma_chain_formula", check_gamma_chain_formula),
        ("controller_factorization", check_controller_factorization),
        ("youla_consistency", check_youla_consistency),
        ("youla_recovery", check_youla_recovery),
        ("degree_exact", check_degree_exact),
        ("degree_poset_bound", check_degree_poset_bound),
        ("norm_ordering", check_norm_ordering),
    ]
    if getattr(result, "gains", None):
        registry.append(("riccati_residuals", check_riccati_residuals))
    if time_domain_check:
        registry.append(("time_domain_norm_agreement", check_time_domain_norm))

    verdicts = []
    for name, fn in registry:
        reference = CHECK_REFERENCES[name]
        try:
            measured, tolerance = fn()
            measured = float(measured)
        except Exception as exc:  # a failed check is a verdict, not a crash
            log.warning("check %s errored: %s", name, exc)
            measured, tolerance = math.inf, 0.0
        verdicts.append(
            Verdict(
                check_name=name,
                passed=bool(measured <= tolerance),
                measured=measured,
                tolerance=float(tolerance) + 0.0,  # normalizes -0.0
                reference=reference,
            )
        )
    return verdicts, norms

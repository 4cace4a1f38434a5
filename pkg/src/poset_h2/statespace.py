"""State-space realizations and the operations the synthesis relies on.

Continuous time throughout.  Realizations are plain (A, B, C, D) quadruples;
zero-state realizations (static gains) are supported everywhere so that
degenerate posets produce static controllers without special casing.

The H2 norm of an unstable or non-strictly-proper system is reported as the
``inf`` sentinel instead of raising, so norm comparisons remain total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    EigendecompositionFailure,
    PartitionInvalid,
    ResolventSingular,
    UnstableA,
)

__all__ = [
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
]


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D array")
    return M


@dataclass(frozen=True)
class StateSpaceRealization:
    """A realization ``x' = Ax + Bu``, ``y = Cx + Du``.

    The state count is the realization degree (not necessarily minimal).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(
                f"D is {D.shape}, expected ({C.shape[0]}, {B.shape[1]})"
            )
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, M)
            M.setflags(write=False)

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    @property
    def ninputs(self) -> int:
        return self.B.shape[1]

    @property
    def noutputs(self) -> int:
        return self.C.shape[0]

    @classmethod
    def static_gain(cls, D) -> "StateSpaceRealization":
        D = _as_matrix(D, "D")
        q, m = D.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((q, 0)), D)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpaceRealization":
        return cls(
            np.array(data["A"], dtype=float).reshape(len(data["A"]), -1),
            np.array(data["B"], dtype=float).reshape(len(data["B"]), -1),
            np.array(data["C"], dtype=float).reshape(len(data["C"]), -1),
            np.array(data["D"], dtype=float).reshape(len(data["D"]), -1),
        )


@dataclass(frozen=True)
class TransferSample:
    """A transfer matrix evaluated at one complex frequency point."""

    s: complex
    value: np.ndarray


def evaluate(sys: StateSpaceRealization, s: complex) -> np.ndarray:
    """Evaluate ``C (sI - A)^{-1} B + D`` at the complex point ``s``."""
    n = sys.nstates
    if n == 0:
        return sys.D.astype(complex)
    R = s * np.eye(n) - sys.A
    try:
        sol = np.linalg.solve(R, sys.B.astype(complex))
    except np.linalg.LinAlgError:
        raise ResolventSingular(f"s = {s} is an eigenvalue of A") from None
    if not np.all(np.isfinite(sol)):
        raise ResolventSingular(f"resolvent overflow at s = {s}")
    return sys.C @ sol + sys.D


def lft(M: StateSpaceRealization, K: StateSpaceRealization) -> StateSpaceRealization:
    """Close the loop ``M11 + M12 K (I - M22 K)^{-1} M21``.

    The input/output partition of ``M`` is inferred from the shape of ``K``:
    the last ``K.noutputs`` inputs and last ``K.ninputs`` outputs of ``M`` are
    the loop channel.  The direct feedthrough of the ``M22`` channel must be
    zero (the well-posedness case the closed-form state formulas cover);
    otherwise :class:`PartitionInvalid` is raised.
    """
    nu = K.noutputs
    ny = K.ninputs
    nw = M.ninputs - nu
    nz = M.noutputs - ny
    if nw < 0 or nz < 0:
        raise DimensionMismatch(
            f"controller ({K.noutputs}x{K.ninputs}) larger than plant channels"
        )
    B1, B2 = M.B[:, :nw], M.B[:, nw:]
    C1, C2 = M.C[:nz, :], M.C[nz:, :]
    D11, D12 = M.D[:nz, :nw], M.D[:nz, nw:]
    D21, D22 = M.D[nz:, :nw], M.D[nz:, nw:]
    if D22.size and np.abs(D22).max() > 0.0:
        raise PartitionInvalid("feedthrough of the loop channel must be zero")

    n, nk = M.nstates, K.nstates
    A = np.zeros((n + nk, n + nk))
    A[:n, :n] = M.A + B2 @ K.D @ C2
    A[:n, n:] = B2 @ K.C
    A[n:, :n] = K.B @ C2
    A[n:, n:] = K.A
    B = np.vstack([B1 + B2 @ K.D @ D21, K.B @ D21])
    C = np.hstack([C1 + D12 @ K.D @ C2, D12 @ K.C])
    D = D11 + D12 @ K.D @ D21
    return StateSpaceRealization(A, B, C, D)


def hcat(*systems: StateSpaceRealization) -> StateSpaceRealization:
    """Concatenate realizations column-wise: ``[G1 G2 ...]``.

    States and inputs stack block-diagonally; all systems must share the
    output dimension.
    """
    if not systems:
        raise DimensionMismatch("hcat needs at least one system")
    q = systems[0].noutputs
    if any(sys.noutputs != q for sys in systems):
        raise DimensionMismatch("output dimensions differ")
    n = sum(sys.nstates for sys in systems)
    m = sum(sys.ninputs for sys in systems)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    C = np.zeros((q, n))
    D = np.hstack([sys.D for sys in systems])
    r = c = 0
    for sys in systems:
        nk, mk = sys.nstates, sys.ninputs
        A[r:r + nk, r:r + nk] = sys.A
        B[r:r + nk, c:c + mk] = sys.B
        C[:, r:r + nk] = sys.C
        r += nk
        c += mk
    return StateSpaceRealization(A, B, C, D)


def _eigenvalues(A: np.ndarray) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionFailure(str(exc)) from exc


def spectral_abscissa(A) -> float:
    """Largest real part over the spectrum (``-inf`` for empty matrices)."""
    A = np.asarray(A, dtype=float)
    eig = _eigenvalues(A)
    return float(eig.real.max()) if eig.size else -math.inf


def is_stable(A, margin: float = 0.0) -> bool:
    """True iff every eigenvalue satisfies ``Re(lambda) < -margin``."""
    return spectral_abscissa(A) < -margin


def lyapunov_gramian(A, W) -> np.ndarray:
    """Solve ``A P + P A' + W = 0`` for the unique symmetric ``P``.

    ``A`` must be stable (raises :class:`UnstableA` otherwise).  ``W`` is
    expected symmetric; the result is symmetrized against roundoff.
    """
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or W.shape != (n, n):
        raise DimensionMismatch("A and W must be square of matching size")
    if n == 0:
        return np.zeros((0, 0))
    if not is_stable(A):
        raise UnstableA("Lyapunov gramian requires a stable A")
    P = scipy.linalg.solve_continuous_lyapunov(A, -W)
    return (P + P.T) / 2.0


def h2_norm(sys: StateSpaceRealization) -> float:
    """H2 norm via the controllability gramian.

    Returns ``inf`` for unstable or non-strictly-proper systems so that
    comparisons between candidate designs never raise.
    """
    if sys.D.size and np.abs(sys.D).max() > 0.0:
        return math.inf
    if sys.nstates == 0:
        return 0.0
    if not is_stable(sys.A):
        return math.inf
    P = lyapunov_gramian(sys.A, sys.B @ sys.B.T)
    return math.sqrt(max(float(np.trace(sys.C @ P @ sys.C.T)), 0.0))


def default_frequency_grid(
    avoid=(), count: int = 20, clearance: float = 1e-4
) -> list[complex]:
    """Deterministic sample frequencies for transfer-function comparisons.

    Half the points march up the imaginary axis, half along the positive
    real axis.  Points landing within ``clearance`` of an eigenvalue of any
    matrix in ``avoid`` are nudged by a fixed offset until clear, keeping
    the grid reproducible.
    """
    eigs: list[complex] = []
    for A in avoid:
        A = np.asarray(A, dtype=float)
        if A.shape[0]:
            eigs.extend(_eigenvalues(A))
    half = max(count // 2, 1)
    points = [0.1j * k for k in range(1, half + 1)]
    points += [0.3 * k for k in range(1, count - half + 1)]

    cleared = []
    for s in points:
        guard = 0
        while eigs and min(abs(s - lam) for lam in eigs) < clearance:
            s = s + 0.0173 + 0.0119j
            guard += 1
            if guard > 100:  # eigenvalues cannot tile the nudge path
                break
        cleared.append(complex(s))
    return cleared


def sample_transfer(sys: StateSpaceRealization, points) -> list[TransferSample]:
    """Evaluate a realization over a list of frequency points."""
    return [TransferSample(complex(s), evaluate(sys, s)) for s in points]

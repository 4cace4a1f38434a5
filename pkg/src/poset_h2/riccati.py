"""Stabilizing solutions of the continuous-time algebraic Riccati equation.

``ric`` solves

    A'X + XA - XB (D'D)^{-1} B'X + C'C = 0

for the unique stabilizing, symmetric, positive semidefinite X by extracting
the stable invariant subspace of the associated Hamiltonian matrix (real
ordered Schur form), and packages the state-feedback gain together with the
optimal disturbance-to-input map it induces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    CrossTermNonzero,
    DimensionMismatch,
    InputWeightSingular,
    NotStabilizable,
    SubspaceExtractionFailure,
)
from .statespace import StateSpaceRealization, is_stable

__all__ = ["RiccatiSolution", "ric", "hautus_stabilizable"]

# Relative symmetry defect above which the subspace extraction is rejected
# instead of silently symmetrized.
_SYMMETRY_RTOL = 1e-6
# Most-negative eigenvalue of X still accepted as "positive semidefinite".
_PSD_FLOOR = -1e-9


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing Riccati solution with its gain and optimal-response map.

    ``Q`` realizes the closed-loop map from the disturbance input to the
    control signal, ``(A - B L, F, -L, 0)``.  ``residual`` is the Frobenius
    norm of the Riccati equation evaluated at ``X``.
    """

    X: np.ndarray
    L: np.ndarray
    Q: StateSpaceRealization
    residual: float


def hautus_stabilizable(A, B) -> bool:
    """PBH test: rank ``[A - lambda I, B]`` is full at each unstable mode."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionMismatch("A must be square and B row-compatible")
    if n == 0:
        return True
    for lam in np.linalg.eigvals(A):
        if lam.real >= 0.0:
            pencil = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if np.linalg.matrix_rank(pencil) < n:
                return False
    return True


def ric(A_H, B_H, C_H, D_H, F_H) -> RiccatiSolution:
    """Solve the state-feedback H2 subproblem for the data (A, B, C, D, F).

    Preconditions are validated explicitly: (A, B) stabilizable, zero
    state/input cross penalty ``C'D = 0`` and positive definite input weight
    ``D'D``.  The returned gain renders ``A - B L`` stable, and ``Q`` is the
    realization ``(A - B L, F, -L, 0)`` of the optimal disturbance response.
    """
    A = np.atleast_2d(np.asarray(A_H, dtype=float))
    B = np.atleast_2d(np.asarray(B_H, dtype=float))
    C = np.atleast_2d(np.asarray(C_H, dtype=float))
    D = np.atleast_2d(np.asarray(D_H, dtype=float))
    F = np.atleast_2d(np.asarray(F_H, dtype=float))
    n, m = B.shape
    if A.shape != (n, n) or C.shape[1] != n or D.shape[1] != m:
        raise DimensionMismatch("Riccati data dimensions are inconsistent")
    if C.shape[0] != D.shape[0]:
        raise DimensionMismatch("C and D must share the output dimension")
    if F.shape[0] != n:
        raise DimensionMismatch("F must have one row per state")

    if not hautus_stabilizable(A, B):
        raise NotStabilizable("(A, B) fails the Hautus rank test")
    cross = C.T @ D
    cross_scale = 1.0
    if C.size and D.size:
        cross_scale += float(np.abs(C).max()) * float(np.abs(D).max())
    if cross.size and np.abs(cross).max() > 1e-10 * cross_scale:
        raise CrossTermNonzero("state/input cross penalty C'D must vanish")
    R = D.T @ D
    r_eigs = np.linalg.eigvalsh(R)
    if r_eigs.size == 0 or r_eigs.min() <= 1e-12 * max(1.0, r_eigs.max()):
        raise InputWeightSingular("input weight D'D must be positive definite")
    R_inv = np.linalg.inv(R)

    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = A
    H[:n, n:] = -B @ R_inv @ B.T
    H[n:, :n] = -C.T @ C
    H[n:, n:] = -A.T

    _, Z, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise SubspaceExtractionFailure(
            f"stable eigenspace has dimension {sdim}, expected {n}"
        )
    X1 = Z[:n, :n]
    X2 = Z[n:, :n]
    if 1.0 / np.linalg.cond(X1) < 1e-13:
        raise SubspaceExtractionFailure("stable subspace basis is degenerate")
    X = X2 @ np.linalg.inv(X1)
    defect = np.linalg.norm(X - X.T)
    if defect > _SYMMETRY_RTOL * max(np.linalg.norm(X), 1.0):
        raise SubspaceExtractionFailure(
            f"solution symmetry defect {defect:.3e} too large"
        )
    X = (X + X.T) / 2.0
    if n and np.linalg.eigvalsh(X).min() < _PSD_FLOOR:
        raise SubspaceExtractionFailure("solution is not positive semidefinite")

    L = R_inv @ B.T @ X
    Acl = A - B @ L
    if not is_stable(Acl):
        raise SubspaceExtractionFailure("extracted gain is not stabilizing")
    residual = float(
        np.linalg.norm(A.T @ X + X @ A - X @ B @ R_inv @ B.T @ X + C.T @ C)
    )
    Q = StateSpaceRealization(Acl, F, -L, np.zeros((m, F.shape[1])))
    return RiccatiSolution(X=X, L=L, Q=Q, residual=residual)

"""Exception hierarchy for the poset_h2 toolkit.

Every error raised by the library derives from :class:`PosetH2Error`, so
callers can catch one type at the boundary.  Validation errors carry enough
context (block labels, invariant names) for the CLI to print actionable
one-line diagnostics.
"""


class PosetH2Error(Exception):
    """Base class for all toolkit errors."""


# ---------------------------------------------------------------- poset layer

class UnknownLabel(PosetH2Error):
    """An element label is not part of the poset."""


class CycleDetected(PosetH2Error):
    """The supplied covering relations violate antisymmetry."""


class NotComparable(PosetH2Error):
    """Chain enumeration requested between unrelated elements."""


class DimensionMismatch(PosetH2Error):
    """Matrix dimensions do not agree with the block partition."""


class SingularDiagonalBlock(PosetH2Error):
    """A diagonal block is singular, so no structured inverse exists."""


# ----------------------------------------------------------- statespace layer

class ResolventSingular(PosetH2Error):
    """Transfer evaluation requested at an eigenvalue of the A matrix."""


class PartitionInvalid(PosetH2Error):
    """A partitioned realization violates the interconnection assumptions."""


class EigendecompositionFailure(PosetH2Error):
    """The eigenvalue solver did not converge."""


class UnstableA(PosetH2Error):
    """A stable state matrix was required."""


class UnstableSystem(PosetH2Error):
    """Time-domain norm estimation requires a stable system."""


# -------------------------------------------------------------- riccati layer

class NotStabilizable(PosetH2Error):
    """The (A, B) pair fails the Hautus stabilizability test."""


class CrossTermNonzero(PosetH2Error):
    """The output map mixes state and input penalties (C'D != 0)."""


class InputWeightSingular(PosetH2Error):
    """The input penalty D'D is not positive definite."""


class SubspaceExtractionFailure(PosetH2Error):
    """No n-dimensional stable invariant subspace / valid solution found."""


# ------------------------------------------------------------ synthesis layer

class PlantValidationError(PosetH2Error):
    """Base class for structured plant-ingestion failures.

    ``invariant`` is a short machine-readable name such as
    ``"NotPosetCausal(1,2)"``; ``str(err)`` starts with that name so CLI
    diagnostics stay grep-able.
    """

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        message = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(message)


class NotPosetCausal(PlantValidationError):
    """A block of A or B is nonzero where the poset forbids influence."""

    def __init__(self, row_label, col_label, matrix_name="A", detail=""):
        self.row_label = row_label
        self.col_label = col_label
        self.matrix_name = matrix_name
        super().__init__(f"NotPosetCausal({row_label},{col_label})", detail)


class FNotBlockDiagonal(PlantValidationError):
    def __init__(self, detail=""):
        super().__init__("FNotBlockDiagonal", detail)


class FRankDeficient(PlantValidationError):
    def __init__(self, block_label, detail=""):
        self.block_label = block_label
        super().__init__(f"FRankDeficient({block_label})", detail)


class SubsystemNotStabilizable(PlantValidationError):
    def __init__(self, block_label, detail=""):
        self.block_label = block_label
        super().__init__(f"SubsystemNotStabilizable({block_label})", detail)


class AssemblyIdentityViolated(PosetH2Error):
    """A structural identity of the assembled matrices failed numerically."""

    def __init__(self, name, deviation, tolerance):
        self.name = name
        self.deviation = deviation
        self.tolerance = tolerance
        super().__init__(
            f"AssemblyIdentityViolated({name}): deviation {deviation:.3e} "
            f"exceeds {tolerance:.1e}"
        )

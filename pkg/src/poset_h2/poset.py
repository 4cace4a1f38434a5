"""Finite partially ordered sets and block incidence-algebra patterns.

A poset is built from element labels plus covering relations (the edges of
its Hasse diagram); the full order is the reflexive-transitive closure of
those edges.  Element indexing is always consistent with a fixed linear
extension, so matrices that conform to the incidence pattern of the poset
are block lower triangular in the internal order.

Conventions used throughout the toolkit:

* ``downstream(j)`` is the set of elements reachable from ``j`` (including
  ``j`` itself); ``upstream(j)`` is the set of elements that reach ``j``.
* A block matrix ``M`` conforms to the incidence pattern iff the block
  ``M[i, j]`` vanishes whenever ``j`` is not upstream of ``i``.  The set of
  conforming matrices is closed under sums, products and (when all diagonal
  blocks are invertible) inverses.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DimensionMismatch,
    NotComparable,
    SingularDiagonalBlock,
    UnknownLabel,
)

__all__ = [
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
    "sigma",
    "conforms",
    "incidence_inverse",
    "block_submatrix",
]


@dataclass(frozen=True)
class Poset:
    """A finite poset with elements stored in linear-extension order.

    ``leq[i, j]`` is True iff element ``i`` precedes (or equals) element
    ``j``.  Because the element order is a linear extension, ``leq`` is
    upper triangular and conforming matrices are lower triangular.
    """

    elements: tuple[str, ...]
    leq: np.ndarray
    hasse_edges: tuple[tuple[str, str], ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {e: k for k, e in enumerate(self.elements)}
        )
        self.leq.setflags(write=False)

    def __len__(self) -> int:
        return len(self.elements)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabel(f"unknown element {label!r}") from None

    def less_equal(self, a: str, b: str) -> bool:
        return bool(self.leq[self.index(a), self.index(b)])

    # Index-level variants used by the matrix machinery; the label-level
    # functions below are thin wrappers.
    def down_indices(self, j: int) -> list[int]:
        return [q for q in range(len(self)) if self.leq[j, q]]

    def up_indices(self, j: int) -> list[int]:
        return [q for q in range(len(self)) if self.leq[q, j]]


def build_poset(elements: Sequence[str], hasse_edges) -> Poset:
    """Close the covering relations into a poset and fix a linear extension.

    The linear extension is the stable topological order of the input: if
    the given element order is already consistent with the edges it is kept
    unchanged.  Raises :class:`CycleDetected` when the closure would violate
    antisymmetry and :class:`UnknownLabel` for edges naming unknown elements.
    """
    labels = [str(e) for e in elements]
    if len(set(labels)) != len(labels):
        raise UnknownLabel("element labels must be distinct")
    pos = {e: k for k, e in enumerate(labels)}
    p = len(labels)

    edges = []
    for a, b in hasse_edges:
        a, b = str(a), str(b)
        if a not in pos or b not in pos:
            raise UnknownLabel(f"edge ({a!r}, {b!r}) references unknown label")
        edges.append((a, b))

    leq = np.eye(p, dtype=bool)
    for a, b in edges:
        if a == b:
            continue
        leq[pos[a], pos[b]] = True
    # Warshall closure at this scale is simplest and exact.
    for k in range(p):
        leq |= np.outer(leq[:, k], leq[k, :])
    cyc = leq & leq.T & ~np.eye(p, dtype=bool)
    if cyc.any():
        i, j = map(int, np.argwhere(cyc)[0])
        raise CycleDetected(
            f"elements {labels[i]!r} and {labels[j]!r} precede each other"
        )

    # Stable topological order: repeatedly take the minimal element with the
    # smallest original position.
    strict = leq & ~np.eye(p, dtype=bool)
    indeg = strict.sum(axis=0)
    ready = [k for k in range(p) if indeg[k] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    indeg = indeg.copy()
    while ready:
        k = heapq.heappop(ready)
        order.append(k)
        for q in range(p):
            if strict[k, q]:
                indeg[q] -= 1
                if indeg[q] == 0:
                    heapq.heappush(ready, q)
    perm = np.array(order)
    leq_sorted = leq[np.ix_(perm, perm)]
    sorted_labels = tuple(labels[k] for k in order)

    # Store the transitive reduction so the Hasse diagram stays minimal even
    # if redundant edges were supplied.
    strict_sorted = leq_sorted & ~np.eye(p, dtype=bool)
    redundant = strict_sorted @ strict_sorted
    cover = strict_sorted & ~redundant
    hasse = tuple(
        (sorted_labels[i], sorted_labels[j])
        for i, j in np.argwhere(cover)
    )
    return Poset(sorted_labels, leq_sorted, hasse)


def _labels(poset: Poset, idxs) -> tuple[str, ...]:
    return tuple(poset.elements[k] for k in idxs)


def downstream(poset: Poset, j: str) -> tuple[str, ...]:
    """Elements reachable from ``j``, including ``j``, in extension order."""
    return _labels(poset, poset.down_indices(poset.index(j)))


def downstream_strict(poset: Poset, j: str) -> tuple[str, ...]:
    k = poset.index(j)
    return _labels(poset, [q for q in poset.down_indices(k) if q != k])


def upstream(poset: Poset, j: str) -> tuple[str, ...]:
    """Elements from which ``j`` is reachable, including ``j``."""
    return _labels(poset, poset.up_indices(poset.index(j)))


def upstream_strict(poset: Poset, j: str) -> tuple[str, ...]:
    k = poset.index(j)
    return _labels(poset, [q for q in poset.up_indices(k) if q != k])


def off_stream(poset: Poset, j: str) -> tuple[str, ...]:
    """Elements with no order relation to ``j`` at all."""
    k = poset.index(j)
    return _labels(
        poset,
        [q for q in range(len(poset)) if not poset.leq[k, q] and not poset.leq[q, k]],
    )


def interval(poset: Poset, i: str, j: str) -> tuple[str, ...]:
    """All elements q with i <= q <= j (empty when i does not reach j)."""
    a, b = poset.index(i), poset.index(j)
    return _labels(
        poset,
        [q for q in range(len(poset)) if poset.leq[a, q] and poset.leq[q, b]],
    )


def chains_between(poset: Poset, i: str, j: str) -> frozenset:
    """All chains from ``i`` up to ``j`` as tuples of strict order steps.

    Every step of a chain is any strict relation of the poset (not only a
    covering edge), so for a three-element chain both the two-step path and
    the direct relation appear.  The chain from an element to itself is the
    empty tuple.  Raises :class:`NotComparable` when i does not precede j.
    """
    a, b = poset.index(i), poset.index(j)
    if not poset.leq[a, b]:
        raise NotComparable(f"{i!r} does not precede {j!r}")

    chains: set[tuple[tuple[str, str], ...]] = set()

    def walk(v: int, acc: tuple):
        if v == b:
            chains.add(acc)
            return
        for w in range(len(poset)):
            if w != v and poset.leq[v, w] and poset.leq[w, b]:
                walk(w, acc + ((poset.elements[v], poset.elements[w]),))

    walk(a, ())
    return frozenset(chains)


def sigma(poset: Poset) -> int:
    """Sum over all elements of the strict-downstream set sizes.

    This purely combinatorial quantity governs the degree of the
    synthesized controller.
    """
    strict = poset.leq & ~np.eye(len(poset), dtype=bool)
    return int(strict.sum())


@dataclass(frozen=True)
class BlockPartition:
    """Per-subsystem block sizes for states, inputs and disturbances.

    ``output_dim`` is the size of the single exogenous output block.  The
    disturbance partition defaults to the state partition (the common case
    of a square block-diagonal disturbance map).
    """

    state_dims: tuple[int, ...]
    input_dims: tuple[int, ...]
    output_dim: int
    disturbance_dims: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "state_dims", tuple(int(d) for d in self.state_dims))
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        if not self.disturbance_dims:
            object.__setattr__(self, "disturbance_dims", self.state_dims)
        else:
            object.__setattr__(
                self, "disturbance_dims", tuple(int(d) for d in self.disturbance_dims)
            )
        if len(self.state_dims) != len(self.input_dims):
            raise DimensionMismatch("state and input partitions differ in length")
        if len(self.disturbance_dims) != len(self.state_dims):
            raise DimensionMismatch("disturbance partition has wrong length")
        if any(d < 1 for d in self.state_dims + self.input_dims + self.disturbance_dims):
            raise DimensionMismatch("all block dimensions must be >= 1")
        if self.output_dim < 1:
            raise DimensionMismatch("output dimension must be >= 1")

    @property
    def num_blocks(self) -> int:
        return len(self.state_dims)

    @property
    def total_states(self) -> int:
        return sum(self.state_dims)

    @property
    def total_inputs(self) -> int:
        return sum(self.input_dims)

    @property
    def total_disturbances(self) -> int:
        return sum(self.disturbance_dims)


def _offsets(dims: Sequence[int]) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(dims)))


def block_submatrix(M, row_dims, col_dims, row_blocks, col_blocks) -> np.ndarray:
    """Extract the submatrix made of the listed row and column blocks."""
    M = np.asarray(M)
    ro, co = _offsets(row_dims), _offsets(col_dims)
    if M.shape != (ro[-1], co[-1]):
        raise DimensionMismatch(
            f"matrix is {M.shape}, partition implies ({ro[-1]}, {co[-1]})"
        )
    rows = np.concatenate(
        [np.arange(ro[i], ro[i + 1]) for i in row_blocks]
    ) if row_blocks else np.empty(0, dtype=int)
    cols = np.concatenate(
        [np.arange(co[j], co[j + 1]) for j in col_blocks]
    ) if col_blocks else np.empty(0, dtype=int)
    return M[np.ix_(rows, cols)]


@dataclass(frozen=True)
class IncidencePattern:
    """Block sparsity pattern induced by a poset on a partitioned matrix.

    ``row_dims[i]`` / ``col_dims[j]`` give the block sizes; block (i, j) is
    allowed to be nonzero only when element j precedes element i.
    """

    poset: Poset
    row_dims: tuple[int, ...]
    col_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "row_dims", tuple(int(d) for d in self.row_dims))
        object.__setattr__(self, "col_dims", tuple(int(d) for d in self.col_dims))
        p = len(self.poset)
        if len(self.row_dims) != p or len(self.col_dims) != p:
            raise DimensionMismatch("one block dimension per poset element required")

    @property
    def shape(self) -> tuple[int, int]:
        return (int(sum(self.row_dims)), int(sum(self.col_dims)))

    def block(self, M: np.ndarray, i: int, j: int) -> np.ndarray:
        ro, co = _offsets(self.row_dims), _offsets(self.col_dims)
        return M[ro[i]:ro[i + 1], co[j]:co[j + 1]]

    def forbidden_blocks(self):
        """Index pairs (i, j) whose blocks must vanish."""
        p = len(self.poset)
        return [(i, j) for i in range(p) for j in range(p) if not self.poset.leq[j, i]]


def conforms(pattern: IncidencePattern, M, atol: float = 1e-9) -> bool:
    """True iff every forbidden block of ``M`` vanishes to within ``atol``."""
    return max_forbidden_magnitude(pattern, M) <= atol


def max_forbidden_magnitude(pattern: IncidencePattern, M) -> float:
    """Largest entry magnitude found in blocks the pattern forbids."""
    M = np.asarray(M)
    if M.shape != pattern.shape:
        raise DimensionMismatch(
            f"matrix is {M.shape}, pattern expects {pattern.shape}"
        )
    worst = 0.0
    for i, j in pattern.forbidden_blocks():
        blk = pattern.block(M, i, j)
        if blk.size:
            worst = max(worst, float(np.abs(blk).max()))
    return worst


def incidence_inverse(pattern: IncidencePattern, M) -> np.ndarray:
    """Invert a conforming matrix by summing over chains of the poset.

    The (i, j) block of the inverse is assembled from products of
    ``-M[l, k] @ inv(M[k, k])`` factors along every chain from j up to i,
    premultiplied by ``inv(M[i, i])``; the result conforms to the same
    pattern.  Requires square diagonal blocks, hence equal row and column
    partitions.
    """
    M = np.asarray(M, dtype=float)
    if pattern.row_dims != pattern.col_dims:
        raise DimensionMismatch("structured inversion needs a square block partition")
    if M.shape != pattern.shape:
        raise DimensionMismatch(
            f"matrix is {M.shape}, pattern expects {pattern.shape}"
        )
    poset = pattern.poset
    p = len(poset)
    diag_inv = []
    for i in range(p):
        blk = pattern.block(M, i, i)
        if blk.size and (1.0 / np.linalg.cond(blk)) < 1e-13:
            raise SingularDiagonalBlock(
                f"diagonal block {poset.elements[i]!r} is singular"
            )
        diag_inv.append(np.linalg.inv(blk))

    off = _offsets(pattern.row_dims)
    out = np.zeros_like(M)
    for i in range(p):
        out[off[i]:off[i + 1], off[i]:off[i + 1]] = diag_inv[i]
    for i in range(p):
        for j in range(p):
            if i == j or not poset.leq[j, i]:
                continue
            total = np.zeros((pattern.row_dims[i], pattern.col_dims[j]))
            for chain in chains_between(poset, poset.elements[j], poset.elements[i]):
                term = np.eye(pattern.row_dims[i])
                # Walk the chain from the step nearest i down to the step
                # nearest j; matrix factors do not commute.
                for lo, hi in reversed(chain):
                    k, l = poset.index(lo), poset.index(hi)
                    term = term @ (-pattern.block(M, l, k) @ diag_inv[k])
                total += term
            out[off[i]:off[i + 1], off[j]:off[j + 1]] = diag_inv[i] @ total
    return out

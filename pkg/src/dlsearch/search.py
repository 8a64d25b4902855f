"""Two-stage k-nearest-neighbor query over a LinkIndex.

*Descend* follows the links of the closest vector found so far for as long
as that keeps getting closer to the query.  *Spread* then expands the links
of every vector currently in the bounded result heap.  A Spread round that
finds a new overall closest vector hands control back to Descend, one that
only improves the heap runs Spread again, and one that improves nothing
ends the query.  Query distances are memoized, so no vector is evaluated
twice for the same query.

Because each node's links are sorted by length, expansion of a node ``v``
stops at the first link longer than ``|q - v| + D_L`` (``D_L`` being the
current heap boundary): by the triangle inequality none of the remaining
endpoints could enter the heap.  This never changes results, only the
number of distances computed; pass ``prune=False`` to disable it.
"""

from __future__ import annotations

import enum
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import DimensionMismatchError
from .index import LinkIndex
from .vecstore import VectorSet, as_vectorset

__all__ = [
    "SearchScratch",
    "SpreadOutcome",
    "knn_query",
    "start_query",
    "descend_stage",
    "spread_stage",
]


class SpreadOutcome(enum.Enum):
    EXHAUSTED = K.SPREAD_EXHAUSTED
    IMPROVED_LOCAL = K.SPREAD_LOCAL
    IMPROVED_GLOBAL = K.SPREAD_GLOBAL


class SearchScratch:
    """Per-query working memory; reusable across queries on one thread."""

    def __init__(self, n: int, k_search: int) -> None:
        if k_search < 1:
            raise ValueError("k_search must be >= 1")
        self.n = n
        self.k_search = k_search
        self.seen = np.zeros(n, dtype=np.int64)
        self.expanded = np.zeros(n, dtype=np.int64)
        self.memo = np.zeros(n, dtype=np.float64)
        self.hd = np.zeros(k_search, dtype=np.float64)
        self.he = np.zeros(k_search, dtype=np.int64)
        self.md = np.zeros(k_search, dtype=np.float64)
        self.me = np.zeros(k_search, dtype=np.int64)
        self.ints = np.zeros(5, dtype=np.int64)
        self.flt = np.zeros(1, dtype=np.float64)
        self._out_e = np.zeros(k_search, dtype=np.int64)
        self._out_d = np.zeros(k_search, dtype=np.float64)

    @property
    def distance_evals(self) -> int:
        return int(self.ints[K.S_EVALS])

    @property
    def iterations(self) -> int:
        return int(self.ints[K.S_ITERS])

    @property
    def closest(self) -> tuple[int, float]:
        return int(self.ints[K.S_VC]), float(self.flt[0])

    @property
    def heap_bound(self) -> float:
        """Largest distance kept in the heap once it is full, else ``inf``."""
        if self.ints[K.S_HN] < self.k_search:
            return float("inf")
        return float(self.hd[0])

    def visited(self) -> dict[int, float]:
        """Memo of query distances computed so far."""
        ids = np.flatnonzero(self.seen == self.ints[K.S_STAMP])
        return {int(i): float(self.memo[i]) for i in ids}

    def results(self, k: Optional[int] = None) -> list[tuple[int, float]]:
        k = self.k_search if k is None else k
        n = K.sorted_results(
            self.hd, self.he, int(self.ints[K.S_HN]), k, self._out_e, self._out_d
        )
        return list(zip(self._out_e[:n].tolist(), self._out_d[:n].tolist()))


def _as_query(q, dim: int) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.shape != (dim,):
        raise DimensionMismatchError(f"query has shape {q.shape}, expected ({dim},)")
    return q


def _check(index: LinkIndex, vectors: VectorSet) -> None:
    if vectors.count != index.count or vectors.dim != index.dim:
        raise DimensionMismatchError(
            f"index covers {index.count}x{index.dim} vectors, "
            f"got {vectors.count}x{vectors.dim}"
        )


def start_query(scratch: SearchScratch, index: LinkIndex, vectors, q) -> np.ndarray:
    """Reset ``scratch`` for a new query, seeded with the index root."""
    vectors = as_vectorset(vectors)
    _check(index, vectors)
    q = _as_query(q, vectors.dim)
    K.search_init(
        vectors.data, q, index.root, scratch.seen, scratch.memo, scratch.hd,
        scratch.he, scratch.ints, scratch.flt, scratch.k_search,
    )
    return q


def descend_stage(
    scratch: SearchScratch, index: LinkIndex, vectors, q, prune: bool = True
) -> bool:
    """Evaluate the links of the current closest vector.

    Returns True when one of them is closer to the query (the closest
    vector moves there), False otherwise.
    """
    vectors = as_vectorset(vectors)
    return bool(
        K.descend_stage(
            index.offsets, index.endpoints, index.lengths, vectors.data,
            np.ascontiguousarray(q, dtype=np.float64), scratch.seen, scratch.memo,
            scratch.expanded, scratch.hd, scratch.he, scratch.ints, scratch.flt,
            scratch.k_search, prune,
        )
    )


def spread_stage(
    scratch: SearchScratch, index: LinkIndex, vectors, q, prune: bool = True
) -> SpreadOutcome:
    """Expand the links of every not yet expanded vector in the result heap."""
    vectors = as_vectorset(vectors)
    out = K.spread_stage(
        index.offsets, index.endpoints, index.lengths, vectors.data,
        np.ascontiguousarray(q, dtype=np.float64), scratch.seen, scratch.memo,
        scratch.expanded, scratch.hd, scratch.he, scratch.ints, scratch.flt,
        scratch.k_search, prune, scratch.md, scratch.me,
    )
    return SpreadOutcome(int(out))


def knn_query(
    index: LinkIndex,
    vectors,
    q,
    k_search: int,
    k: int,
    scratch: Optional[SearchScratch] = None,
    prune: bool = True,
) -> list[tuple[int, float]]:
    """Approximate ``k`` nearest neighbors of ``q``.

    Returns ``(id, distance)`` pairs sorted ascending by ``(distance, id)``,
    at most ``min(k, N)`` of them.  Pass a :class:`SearchScratch` to reuse
    buffers between queries; its ``distance_evals`` then reports the cost of
    the last query.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k_search < k:
        raise ValueError(f"k_search ({k_search}) must be >= k ({k})")
    vectors = as_vectorset(vectors)
    _check(index, vectors)
    q = _as_query(q, vectors.dim)
    if scratch is None:
        scratch = SearchScratch(index.count, k_search)
    elif scratch.n != index.count or scratch.k_search != k_search:
        raise ValueError("scratch was sized for a different index or k_search")
    K.knn_search(
        index.offsets, index.endpoints, index.lengths, vectors.data, q, index.root,
        scratch.seen, scratch.memo, scratch.expanded, scratch.hd, scratch.he,
        scratch.ints, scratch.flt, k_search, prune, scratch.md, scratch.me,
    )
    return scratch.results(k)

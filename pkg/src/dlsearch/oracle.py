"""Exact brute-force k-NN and the Recall@k scorer.

Distances here are accumulated in float64 from the stored float32 values,
so the oracle is never less precise than the index it is checking.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError
from .vecstore import as_vectorset

__all__ = ["brute_knn", "ground_truth", "brute_distances", "recall_at_k", "mean_recall"]

# relative tolerance for counting a boundary tie as a hit
TIE_RTOL = 1e-6


def brute_distances(vectors, q) -> np.ndarray:
    """Euclidean distance from ``q`` to every row, in float64."""
    vectors = as_vectorset(vectors)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (vectors.dim,):
        raise DimensionMismatchError(
            f"query has shape {q.shape}, expected ({vectors.dim},)"
        )
    diff = vectors.data.astype(np.float64) - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def brute_knn(vectors, q, k: int) -> list[tuple[int, float]]:
    """Exact ``min(k, N)`` nearest neighbors, ascending by ``(distance, id)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    vectors = as_vectorset(vectors)
    if vectors.count == 0:
        return []
    d = brute_distances(vectors, q)
    k = min(k, vectors.count)
    if k < vectors.count:
        # everything up to and including the k-th distance, then exact sort
        kth = np.partition(d, k - 1)[k - 1]
        cand = np.flatnonzero(d <= kth)
    else:
        cand = np.arange(vectors.count)
    order = cand[np.lexsort((cand, d[cand]))][:k]
    return [(int(i), float(d[i])) for i in order]


def ground_truth(vectors, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch :func:`brute_knn`: returns ``(ids, dists)`` of shape ``(Q, k')``."""
    vectors = as_vectorset(vectors)
    queries = as_vectorset(queries)
    if queries.count and queries.dim != vectors.dim:
        raise DimensionMismatchError(
            f"queries have dim {queries.dim}, vectors have dim {vectors.dim}"
        )
    kk = min(k, vectors.count)
    ids = np.zeros((queries.count, kk), dtype=np.int64)
    dists = np.zeros((queries.count, kk), dtype=np.float64)
    for i in range(queries.count):
        res = brute_knn(vectors, queries[i], k)
        ids[i] = [r[0] for r in res]
        dists[i] = [r[1] for r in res]
    return ids, dists


def recall_at_k(
    retrieved: Sequence[int],
    truth: Sequence[int],
    k: int,
    retrieved_dists: Optional[Sequence[float]] = None,
    truth_dists: Optional[Sequence[float]] = None,
) -> float:
    """Percentage of the true top-``k`` ids found in the retrieved top-``k``.

    When both distance lists are given, a retrieved id that is not in the
    true top-``k`` still counts if its distance ties the ``k``-th true
    distance (within a relative 1e-6), so equally good answers are not
    penalized for a different tie order.  Missing retrieved items count as
    misses.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(truth) < k:
        raise ValueError(f"truth has {len(truth)} ids, need at least k={k}")
    top_t = [int(x) for x in truth[:k]]
    top_r = [int(x) for x in retrieved[:k]]
    tset = set(top_t)
    hits = 0
    boundary = None
    if retrieved_dists is not None and truth_dists is not None:
        boundary = float(truth_dists[k - 1])
    seen = set()
    for i, r in enumerate(top_r):
        if r in seen:
            continue
        seen.add(r)
        if r in tset:
            hits += 1
        elif boundary is not None:
            d = float(retrieved_dists[i])
            if abs(d - boundary) <= TIE_RTOL * max(abs(boundary), 1e-300):
                hits += 1
    return 100.0 * min(hits, k) / k


def mean_recall(
    retrieved: Iterable[Sequence[int]], truth: np.ndarray, k: int
) -> float:
    vals = [recall_at_k(r, t, k) for r, t in zip(retrieved, truth)]
    return float(np.mean(vals)) if vals else 0.0

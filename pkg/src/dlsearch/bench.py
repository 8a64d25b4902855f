"""Recall / latency benchmark over a built index.

Only the :func:`knn_query` call sits inside the timed region. Queries run
one at a time on the calling thread, after a few untimed warm-up queries.
The brute-force baseline (:func:`brute_knn`, float64 numpy scan) is timed
the same way, so ``speedup_vs_brute`` compares like with like on the
current machine.  A float32 matrix-vector scan, less exact but faster, is
timed as well and reported under ``extra``.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .index import LinkIndex
from .oracle import brute_knn, recall_at_k
from .search import SearchScratch, knn_query
from .vecstore import as_vectorset

__all__ = ["BenchReport", "run_benchmark", "SCHEMA_VERSION", "METRIC_FIELDS"]

SCHEMA_VERSION = 1

# fields that depend only on the inputs, not on the machine or the clock
METRIC_FIELDS = (
    "n", "dim", "k_index", "k_search", "k", "seed", "num_queries",
    "recall_at_10", "recall_at_k", "distance_evals_mean",
    "distance_evals_fraction", "build_distance_evals",
)


@dataclass
class BenchReport:
    dataset: str
    n: int
    dim: int
    k_index: int
    k_search: int
    k: int
    seed: int
    num_queries: int
    atpq_ms: float
    latency_p50_ms: float
    latency_p95_ms: float
    latency_p99_ms: float
    recall_at_10: Optional[float]
    recall_at_k: float
    distance_evals_mean: float
    distance_evals_fraction: float
    build_seconds: Optional[float]
    build_distance_evals: int
    brute_atpq_ms: Optional[float] = None
    speedup_vs_brute: Optional[float] = None
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def metrics(self) -> dict:
        """The deterministic subset of the report."""
        d = self.to_dict()
        return {k: d[k] for k in METRIC_FIELDS}


def _gemv_topk(data: np.ndarray, sq: np.ndarray, q: np.ndarray, k: int) -> np.ndarray:
    # float32 ||x||^2 - 2 x.q scan: the fastest plain-numpy brute force
    d2 = sq - 2.0 * (data @ q)
    if k < d2.shape[0]:
        part = np.argpartition(d2, k - 1)[:k]
    else:
        part = np.arange(d2.shape[0])
    return part[np.argsort(d2[part], kind="stable")]


def _pct(a: np.ndarray, q: float) -> float:
    return float(np.percentile(a, q)) if a.size else 0.0


def run_benchmark(
    index: LinkIndex,
    vectors,
    queries,
    k_search: int,
    k: int = 10,
    truth: Optional[np.ndarray] = None,
    dataset: str = "",
    warmup: int = 5,
    time_brute: bool = True,
) -> BenchReport:
    """Run every query once and summarize recall, cost and latency.

    ``truth`` is an ``(Q, >=k)`` id matrix (e.g. read from ivecs); when it
    is None the exact neighbors come from the brute-force scan.
    """
    vectors = as_vectorset(vectors)
    queries = as_vectorset(queries)
    nq = queries.count
    k_out = min(k_search, max(k, 10))
    scratch = SearchScratch(index.count, k_search)

    for i in range(min(warmup, nq)):
        knn_query(index, vectors, queries[i], k_search, k_out, scratch=scratch)

    lat = np.zeros(nq)
    evals = np.zeros(nq, dtype=np.int64)
    results = []
    for i in range(nq):
        q = queries[i]
        t0 = time.perf_counter_ns()
        res = knn_query(index, vectors, q, k_search, k_out, scratch=scratch)
        lat[i] = (time.perf_counter_ns() - t0) / 1e6
        evals[i] = scratch.distance_evals
        results.append(res)

    k_truth = min(max(k, 10), vectors.count)
    brute_ms = None
    gemv_ms = None
    exact_d = None
    if time_brute or truth is None:
        for i in range(min(warmup, nq)):
            brute_knn(vectors, queries[i], k_truth)
        blat = np.zeros(nq)
        exact = np.zeros((nq, k_truth), dtype=np.int64)
        exact_d = np.zeros((nq, k_truth))
        for i in range(nq):
            q = queries[i]
            t0 = time.perf_counter_ns()
            r = brute_knn(vectors, q, k_truth)
            blat[i] = (time.perf_counter_ns() - t0) / 1e6
            exact[i] = [x[0] for x in r]
            exact_d[i] = [x[1] for x in r]
        brute_ms = float(blat.mean()) if nq else None
        data = vectors.data
        sq = np.einsum("ij,ij->i", data, data)
        glat = np.zeros(nq)
        for i in range(nq):
            q = queries[i]
            t0 = time.perf_counter_ns()
            _gemv_topk(data, sq, q, k_truth)
            glat[i] = (time.perf_counter_ns() - t0) / 1e6
        gemv_ms = float(glat.mean()) if nq else None
        if truth is None:
            truth = exact
        else:
            exact_d = None  # supplied truth: no distances to judge ties with
    truth = np.asarray(truth)
    if truth.ndim != 2 or truth.shape[0] != nq:
        raise ValueError(f"truth has shape {truth.shape}, expected ({nq}, k)")

    def mean_recall(kk: int) -> Optional[float]:
        if kk > truth.shape[1] or kk > k_out:
            return None
        vals = []
        for i, res in enumerate(results):
            ids = [e for e, _ in res]
            if exact_d is not None:
                vals.append(recall_at_k(ids, truth[i], kk, [d for _, d in res], exact_d[i]))
            else:
                vals.append(recall_at_k(ids, truth[i], kk))
        return float(np.mean(vals)) if vals else 0.0

    kk = min(k, vectors.count)
    atpq = float(lat.mean()) if nq else 0.0
    return BenchReport(
        dataset=dataset,
        n=index.count,
        dim=index.dim,
        k_index=index.k_index,
        k_search=k_search,
        k=k,
        seed=index.seed,
        num_queries=nq,
        atpq_ms=atpq,
        latency_p50_ms=_pct(lat, 50),
        latency_p95_ms=_pct(lat, 95),
        latency_p99_ms=_pct(lat, 99),
        recall_at_10=mean_recall(10) if vectors.count >= 10 else None,
        recall_at_k=mean_recall(kk) or 0.0,
        distance_evals_mean=float(evals.mean()) if nq else 0.0,
        distance_evals_fraction=float(evals.mean()) / index.count if nq else 0.0,
        build_seconds=index.build_seconds,
        build_distance_evals=index.distance_evals,
        brute_atpq_ms=brute_ms,
        speedup_vs_brute=(brute_ms / atpq) if brute_ms and atpq > 0 else None,
        extra={"brute_gemv_f32_atpq_ms": gemv_ms} if gemv_ms is not None else {},
    )

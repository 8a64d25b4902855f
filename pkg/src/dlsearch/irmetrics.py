"""TREC-style retrieval metrics: P@k, MAP, R-precision and bpref.

Judgments are binary: a judged document is relevant or judged
non-relevant, anything else is unjudged.  Queries that appear in a run but
not in the qrels are skipped with a warning and left out of every average.
Queries with no relevant documents score 0 and are still averaged in.

Two metrics come in two flavors:

* ``mean_average_precision(variant="trec")`` is the usual average of the
  precision at each relevant retrieved rank, divided by R.
  ``variant="paper"`` instead averages P@i over the ranks i = 1..m, where
  m is the number of relevant documents retrieved (the literal formula;
  it does not weight by where those documents sit).
* ``bpref(variant="paper")`` penalizes each relevant document by
  ``min(n_above, R) / R``; ``variant="trec"`` divides by ``min(R, N)``
  (N = judged non-relevant count) and gives full credit when no judged
  non-relevant document was ranked above it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "QrelSet",
    "RunRanking",
    "average_precision",
    "precision_at",
    "r_precision_one",
    "bpref_one",
    "precision_at_k",
    "mean_average_precision",
    "r_precision",
    "bpref",
    "evaluate",
]

log = logging.getLogger(__name__)


@dataclass
class QrelSet:
    """Per-query judgments: ``judgments[qid][docid] = True`` if relevant."""

    judgments: dict[str, dict[str, bool]] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, m: Mapping[str, Mapping[str, object]]) -> "QrelSet":
        out = cls()
        for q, docs in m.items():
            out.judgments[str(q)] = {str(d): bool(v) for d, v in docs.items()}
        return out

    def add(self, qid: str, docid: str, relevant: bool) -> None:
        docs = self.judgments.setdefault(qid, {})
        if docid in docs and docs[docid] != relevant:
            raise ValueError(f"conflicting judgments for query {qid}, doc {docid}")
        docs[docid] = relevant

    def queries(self) -> list[str]:
        return list(self.judgments)

    def num_relevant(self, qid: str) -> int:
        return sum(self.judgments.get(qid, {}).values())

    def num_nonrelevant(self, qid: str) -> int:
        docs = self.judgments.get(qid, {})
        return len(docs) - sum(docs.values())


@dataclass
class RunRanking:
    """Per-query ranked document ids (rank 1 first) with their scores."""

    rankings: dict[str, list[str]] = field(default_factory=dict)
    scores: dict[str, list[float]] = field(default_factory=dict)
    tag: str = "run"

    @classmethod
    def from_lists(cls, m: Mapping[str, Sequence[str]], tag: str = "run") -> "RunRanking":
        """Ranking given in order; scores are assigned as ``len - position``."""
        out = cls(tag=tag)
        for q, docs in m.items():
            docs = [str(d) for d in docs]
            if len(set(docs)) != len(docs):
                raise ValueError(f"query {q} ranks a document twice")
            out.rankings[str(q)] = docs
            out.scores[str(q)] = [float(len(docs) - i) for i in range(len(docs))]
        return out

    def queries(self) -> list[str]:
        return list(self.rankings)


# ------------------------------------------------------------ per query


def _flags(docs: Sequence[str], judged: Mapping[str, bool]) -> list[Optional[bool]]:
    # True relevant, False judged non-relevant, None unjudged
    return [judged.get(d) for d in docs]


def precision_at(docs: Sequence[str], judged: Mapping[str, bool], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(1 for f in _flags(docs[:k], judged) if f) / k


def average_precision(
    docs: Sequence[str],
    judged: Mapping[str, bool],
    variant: str = "trec",
    depth: Optional[int] = None,
) -> float:
    R = sum(judged.values())
    if R == 0:
        return 0.0
    flags = _flags(docs if depth is None else docs[:depth], judged)
    if variant == "trec":
        total = 0.0
        hits = 0
        for i, f in enumerate(flags, start=1):
            if f:
                hits += 1
                total += hits / i
        return total / R
    if variant == "paper":
        rel = [1 if f else 0 for f in flags]
        m = sum(rel)
        if m == 0:
            return 0.0
        hits = np.cumsum(rel[:m])
        return float(np.mean(hits / np.arange(1, m + 1)))
    raise ValueError(f"unknown MAP variant {variant!r}")


def r_precision_one(docs: Sequence[str], judged: Mapping[str, bool]) -> float:
    R = sum(judged.values())
    if R == 0:
        return 0.0
    return sum(1 for f in _flags(docs[:R], judged) if f) / R


def bpref_one(docs: Sequence[str], judged: Mapping[str, bool], variant: str = "paper") -> float:
    R = sum(judged.values())
    N = len(judged) - R
    if R == 0:
        return 0.0
    if variant not in ("paper", "trec"):
        raise ValueError(f"unknown bpref variant {variant!r}")
    nonrel = 0
    total = 0.0
    for f in _flags(docs, judged):
        if f is None:
            continue
        if not f:
            nonrel += 1
            continue
        if variant == "paper":
            total += 1.0 - min(nonrel, R) / R
        elif nonrel:
            total += 1.0 - min(nonrel, R) / min(R, N)
        else:
            total += 1.0
    return total / R


# ------------------------------------------------------------ aggregates


def _scored(run: RunRanking, qrels: QrelSet) -> list[str]:
    out = []
    for q in run.queries():
        if q in qrels.judgments:
            out.append(q)
        else:
            log.warning("query %s is in the run but not in the qrels; skipped", q)
    return out


def _mean(vals: Iterable[float]) -> float:
    vals = list(vals)
    return float(np.mean(vals)) if vals else 0.0


def precision_at_k(run: RunRanking, qrels: QrelSet, k: int) -> float:
    return _mean(precision_at(run.rankings[q], qrels.judgments[q], k) for q in _scored(run, qrels))


def mean_average_precision(
    run: RunRanking, qrels: QrelSet, variant: str = "trec", depth: Optional[int] = None
) -> float:
    return _mean(
        average_precision(run.rankings[q], qrels.judgments[q], variant, depth)
        for q in _scored(run, qrels)
    )


def r_precision(run: RunRanking, qrels: QrelSet) -> float:
    return _mean(r_precision_one(run.rankings[q], qrels.judgments[q]) for q in _scored(run, qrels))


def bpref(run: RunRanking, qrels: QrelSet, variant: str = "paper") -> float:
    return _mean(bpref_one(run.rankings[q], qrels.judgments[q], variant) for q in _scored(run, qrels))


def evaluate(
    run: RunRanking,
    qrels: QrelSet,
    ks: Sequence[int] = (5, 10, 20),
    map_variant: str = "trec",
    bpref_variant: str = "paper",
) -> dict:
    """All metrics in one dict, plus the number of scored queries."""
    if not run.queries():
        log.warning("run is empty; every metric is 0")
    qs = _scored(run, qrels)
    sub = RunRanking({q: run.rankings[q] for q in qs}, {q: run.scores.get(q, []) for q in qs}, run.tag)
    out = {"num_queries": len(qs)}
    out["map"] = mean_average_precision(sub, qrels, map_variant)
    for k in ks:
        out[f"P@{k}"] = precision_at_k(sub, qrels, k)
    out["Rprec"] = r_precision(sub, qrels)
    out["bpref"] = bpref(sub, qrels, bpref_variant)
    out["map_variant"] = map_variant
    out["bpref_variant"] = bpref_variant
    return out

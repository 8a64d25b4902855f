import numpy as np
import pytest

from dlsearch import (
    DimensionMismatchError,
    SearchScratch,
    VectorSet,
    brute_knn,
    build_index,
    knn_query,
    recall_at_k,
)
from dlsearch.index import LinkIndex
from dlsearch.search import SpreadOutcome, descend_stage, spread_stage, start_query
from dlsearch.synth import generate

from refimpl import reference_search


def _index_links(index):
    return [list(zip(*(a.tolist() for a in index.links(v)))) for v in range(index.count)]


def _manual_index(links, dim=1, root=0):
    # links: {v: [(endpoint, length), ...]} already sorted
    n = len(links)
    offs, ends, lens = [0], [], []
    for v in range(n):
        for e, l in links[v]:
            ends.append(e)
            lens.append(l)
        offs.append(len(ends))
    return LinkIndex(n, dim, root, 1, 0, np.array(offs), np.array(ends), np.array(lens, dtype=np.float32))


@pytest.fixture(scope="module")
def small():
    X = generate(300, 8, "uniform", seed=3)
    return X, build_index(X, 8, seed=1)


def test_self_hit_first(small):
    X, idx = small
    for v in (0, 17, 123, 299):
        res = knn_query(idx, X, X[v], 10, 5)
        assert res[0] == (v, 0.0)


def test_full_heap_equals_brute_force():
    X = generate(200, 6, "uniform", seed=11)
    idx = build_index(X, 5, seed=2)
    Q = generate(30, 6, "uniform", seed=12)
    for q in Q.data:
        res = knn_query(idx, X, q, 200, 200)
        exact = brute_knn(X, q, 200)
        assert [e for e, _ in res] == [e for e, _ in exact]
        np.testing.assert_allclose([d for _, d in res], [d for _, d in exact], rtol=1e-12)


def test_sorted_and_lower_bounded(small):
    X, idx = small
    Q = generate(20, 8, "uniform", seed=5)
    for q in Q.data:
        res = knn_query(idx, X, q, 20, 20)
        ds = [d for _, d in res]
        assert ds == sorted(ds)
        assert len({e for e, _ in res}) == len(res)
        nn = brute_knn(X, q, 1)[0][1]
        assert min(ds) >= nn - 1e-12


@pytest.mark.parametrize("prune", [False, True])
def test_matches_reference_search(prune):
    for seed in range(6):
        X = generate(150 + 40 * seed, 2 + seed, "clustered" if seed % 2 else "uniform", seed=seed)
        idx = build_index(X, 3 + seed, seed=seed)
        links = _index_links(idx)
        Q = generate(10, X.dim, "uniform", seed=100 + seed)
        for ks in (1, 4, 15):
            sc = SearchScratch(idx.count, ks)
            for q in Q.data:
                res = knn_query(idx, X, q, ks, ks, scratch=sc, prune=prune)
                ref, evals = reference_search(links, X.data, q, idx.root, ks)
                assert [e for e, _ in res] == [e for e, _ in ref]
                np.testing.assert_allclose([d for _, d in res], [d for _, d in ref], rtol=1e-12)
                if prune:
                    assert sc.distance_evals <= evals
                else:
                    assert sc.distance_evals == evals


def test_evals_and_iterations_bounded(small):
    X, idx = small
    sc = SearchScratch(idx.count, 50)
    for q in generate(20, 8, "gaussian", seed=7).data:
        knn_query(idx, X, q, 50, 10, scratch=sc)
        assert 1 <= sc.distance_evals <= idx.count
        assert sc.iterations <= idx.count
        assert len(sc.visited()) == sc.distance_evals


def test_deterministic(small):
    X, idx = small
    q = generate(1, 8, "uniform", seed=9)[0]
    a, b = SearchScratch(idx.count, 20), SearchScratch(idx.count, 20)
    ra = knn_query(idx, X, q, 20, 10, scratch=a)
    rb = knn_query(idx, X, q, 20, 10, scratch=b)
    assert ra == rb and a.distance_evals == b.distance_evals
    # scratch reuse gives the same answer again
    assert knn_query(idx, X, q, 20, 10, scratch=a) == ra


def test_tiny_index_returns_what_exists():
    X = VectorSet([[0.0], [1.0], [3.0]])
    idx = build_index(X, 1)
    res = knn_query(idx, X, [0.9], 10, 10)
    assert [e for e, _ in res] == [1, 0, 2]


def test_errors(small):
    X, idx = small
    with pytest.raises(ValueError):
        knn_query(idx, X, X[0], 5, 10)
    with pytest.raises(ValueError):
        knn_query(idx, X, X[0], 5, 0)
    with pytest.raises(DimensionMismatchError):
        knn_query(idx, X, np.zeros(3), 10, 5)
    with pytest.raises(ValueError):
        knn_query(idx, X, X[0], 10, 5, scratch=SearchScratch(idx.count, 11))
    with pytest.raises(DimensionMismatchError):
        knn_query(idx, generate(300, 4, seed=0), np.zeros(4), 10, 5)


# ---------------------------------------------------------------- stages
#
# A hand-made index on the line, mirroring the walk-through where the
# closest vector has distance 18 and its two links give 23 and 32.

def _line_case():
    # positions; the query sits at 0
    pos = {0: 18.0, 1: 23.0, 2: -32.0, 3: 40.0, 4: 10.0}
    X = VectorSet([[pos[i]] for i in range(5)])
    links = {
        0: [(1, 5.0), (2, 50.0)],
        1: [(0, 5.0), (3, 17.0)],
        2: [(0, 50.0)],
        3: [(1, 17.0), (4, 30.0)],
        4: [(3, 30.0)],
    }
    return X, _manual_index(links)


def test_descend_no_improvement():
    X, idx = _line_case()
    sc = SearchScratch(idx.count, 3)
    q = start_query(sc, idx, X, [0.0])
    assert sc.closest == (0, 18.0)
    assert descend_stage(sc, idx, X, q, prune=False) is False
    assert sc.closest == (0, 18.0)
    assert sorted(sc.visited().values()) == [18.0, 23.0, 32.0]
    # nothing left to look at from here: no new evaluations
    before = sc.distance_evals
    assert descend_stage(sc, idx, X, q, prune=False) is False
    assert sc.distance_evals == before


def test_descend_improves_and_moves():
    X, idx = _line_case()
    sc = SearchScratch(idx.count, 3)
    q = start_query(sc, idx, X, [20.0])  # root at 2, its links at 3 and 52
    sc2 = SearchScratch(idx.count, 3)
    q2 = start_query(sc2, idx, X, [22.0])
    assert descend_stage(sc2, idx, X, q2, prune=False) is True
    assert sc2.closest == (1, 1.0)
    assert descend_stage(sc, idx, X, q, prune=False) is False


def test_descend_memo_short_circuit():
    X, idx = _line_case()
    sc = SearchScratch(idx.count, 5)
    q = start_query(sc, idx, X, [0.0])
    spread_stage(sc, idx, X, q, prune=False)
    spread_stage(sc, idx, X, q, prune=False)
    # all neighbors of 0 are memoized: no distance work
    sc.expanded[:] = 0
    n = sc.distance_evals
    assert descend_stage(sc, idx, X, q, prune=False) is False
    assert sc.distance_evals == n


def test_spread_outcomes():
    X, idx = _line_case()
    sc = SearchScratch(idx.count, 3)
    q = start_query(sc, idx, X, [0.0])
    descend_stage(sc, idx, X, q, prune=False)
    # heap {0:18, 1:23, 2:32}; expanding 1 finds 3 (40): not better than D_L
    assert spread_stage(sc, idx, X, q, prune=False) is SpreadOutcome.EXHAUSTED
    assert sc.distance_evals == 4

    sc = SearchScratch(idx.count, 4)
    q = start_query(sc, idx, X, [0.0])
    descend_stage(sc, idx, X, q, prune=False)
    # heap not full: 3 (40) enters, between D_C and D_L
    assert spread_stage(sc, idx, X, q, prune=False) is SpreadOutcome.IMPROVED_LOCAL
    assert sc.closest == (0, 18.0)
    # expanding 3 finds 4 at 10 < D_C
    assert spread_stage(sc, idx, X, q, prune=False) is SpreadOutcome.IMPROVED_GLOBAL
    assert sc.closest == (4, 10.0)
    assert [e for e, _ in sc.results()] == [4, 0, 1, 2]
    assert spread_stage(sc, idx, X, q, prune=False) is SpreadOutcome.EXHAUSTED


def test_local_improvement_ejects_top():
    X, idx = _line_case()
    sc = SearchScratch(idx.count, 2)
    q = start_query(sc, idx, X, [0.0])
    descend_stage(sc, idx, X, q, prune=False)
    assert [e for e, _ in sc.results()] == [0, 1]
    assert sc.heap_bound == 23.0


def test_exhausted_trace_twenty_points():
    # 20-point instance: replay the stages by hand and check each step
    X = generate(20, 2, "uniform", seed=4)
    idx = build_index(X, 2, seed=0)
    links = _index_links(idx)
    q = np.array([0.5, 0.5])
    sc = SearchScratch(idx.count, 4)
    q = start_query(sc, idx, X, q)
    d = lambda v: float(np.linalg.norm(X.data[v].astype(np.float64) - q))
    memo = {idx.root}
    expanded = set()
    while True:
        while True:
            vc = sc.closest[0]
            expanded.add(vc)
            new = [e for e, _ in links[vc] if e not in memo]
            memo.update(new)
            moved = descend_stage(sc, idx, X, q, prune=False)
            assert moved == any(d(e) < d(vc) for e in new)
            if not moved:
                break
        while True:
            members = [e for e, _ in sc.results()]
            before_heap = sc.results()
            todo = [v for v in members if v not in expanded]
            expanded.update(todo)
            out = spread_stage(sc, idx, X, q, prune=False)
            if not todo:
                assert out is SpreadOutcome.EXHAUSTED
            news = []
            for v in todo:
                for e, _ in links[v]:
                    if e not in memo:
                        memo.add(e)
                        news.append(e)
            assert set(sc.visited()) == memo
            if out is not SpreadOutcome.IMPROVED_LOCAL:
                break
        if out is SpreadOutcome.EXHAUSTED:
            # nothing new made it into the heap
            bound = before_heap[-1][1] if len(before_heap) == 4 else np.inf
            assert all(d(e) >= bound for e in news)
            assert all(v in expanded for v, _ in sc.results())
            break


@pytest.mark.slow
def test_recall_non_decreasing_in_k_search():
    data = generate(10_500, 16, "uniform", seed=21).data
    X, Q = VectorSet(data[:10_000]), data[10_000:]
    idx = build_index(X, 20, seed=0)
    means = []
    for ks in (10, 20, 50):
        sc = SearchScratch(idx.count, ks)
        vals = []
        for q in Q:
            res = knn_query(idx, X, q, ks, 10, scratch=sc)
            vals.append(recall_at_k([e for e, _ in res], [e for e, _ in brute_knn(X, q, 10)], 10))
        means.append(np.mean(vals))
    assert means[1] >= means[0] - 0.5
    assert means[2] >= means[1] - 0.5

import itertools
import math

import numpy as np
import pytest

from dlsearch import DimensionMismatchError, VectorSet, brute_knn, ground_truth, recall_at_k
from dlsearch.oracle import brute_distances, mean_recall


def selection_scan(X, q, k):
    # repeated selection of the minimum: independent of numpy sorting
    X = np.asarray(X, dtype=np.float64).tolist()
    q = [float(x) for x in q]
    d = [math.sqrt(sum((a - b) ** 2 for a, b in zip(row, q))) for row in X]
    taken = [False] * len(X)
    out = []
    for _ in range(min(k, len(X))):
        best = None
        for i, di in enumerate(d):
            if not taken[i] and (best is None or di < d[best]):
                best = i
        taken[best] = True
        out.append((best, d[best]))
    return out


def test_line_example():
    X = VectorSet([[0.0], [10.0], [20.0]])
    assert brute_knn(X, [1.0], 2) == [(0, 1.0), (1, 9.0)]


def test_k_larger_than_n():
    X = VectorSet([[0.0], [10.0], [20.0]])
    res = brute_knn(X, [12.0], 10)
    assert [e for e, _ in res] == [1, 2, 0]


def test_empty_and_bad_k():
    assert brute_knn(VectorSet.empty(3), np.zeros(3), 5) == []
    with pytest.raises(ValueError):
        brute_knn(VectorSet([[1.0]]), [0.0], 0)
    with pytest.raises(DimensionMismatchError):
        brute_knn(VectorSet([[1.0]]), [0.0, 1.0], 1)


def test_dual_implementation(rng):
    X = VectorSet(rng.random((1000, 32), dtype=np.float32))
    for q in rng.random((5, 32)):
        a = brute_knn(X, q, 15)
        b = selection_scan(X.data, q, 15)
        assert [e for e, _ in a] == [e for e, _ in b]
        np.testing.assert_allclose([d for _, d in a], [d for _, d in b], rtol=1e-12)


def test_ties_by_id_and_sorted():
    X = VectorSet([[1.0], [-1.0], [1.0], [0.0], [-1.0]])
    res = brute_knn(X, [0.0], 5)
    assert res == [(3, 0.0), (0, 1.0), (1, 1.0), (2, 1.0), (4, 1.0)]
    assert [e for e, _ in brute_knn(X, [0.0], 2)] == [3, 0]


def test_distances_float64_accumulation():
    X = VectorSet(np.full((1, 3), 1e4, dtype=np.float32))
    d = brute_distances(X, np.full(3, 1e4 + 1))
    assert d.dtype == np.float64
    assert d[0] == pytest.approx(math.sqrt(3))


def test_ground_truth_shapes(rng):
    X = VectorSet(rng.random((50, 4)))
    Q = VectorSet(rng.random((7, 4)))
    ids, dists = ground_truth(X, Q, 10)
    assert ids.shape == dists.shape == (7, 10)
    assert np.all(np.diff(dists, axis=1) >= 0)
    assert ids[3].tolist() == [e for e, _ in brute_knn(X, Q[3], 10)]


def test_recall_examples():
    t = list(range(10))
    assert recall_at_k(t, t, 10) == 100.0
    assert recall_at_k(list(range(10, 20)), t, 10) == 0.0
    assert recall_at_k([0, 1, 2, 3, 4, 5, 6, 50, 51, 52], t, 10) == 70.0


def test_recall_short_and_errors():
    assert recall_at_k([0, 1], list(range(10)), 10) == 20.0
    with pytest.raises(ValueError):
        recall_at_k([0], [0], 2)
    with pytest.raises(ValueError):
        recall_at_k([0], [0], 0)


def test_recall_permutation_invariant():
    t = [5, 3, 8, 1, 9]
    r = [9, 1, 7, 3, 4]
    for p in itertools.permutations(r):
        assert recall_at_k(list(p), t, 5) == 60.0


def test_recall_boundary_tie():
    truth, tdist = [0, 1, 2], [0.5, 1.0, 2.0]
    # id 7 sits exactly at the 3rd true distance
    assert recall_at_k([0, 1, 7], truth, 3, [0.5, 1.0, 2.0], tdist) == 100.0
    assert recall_at_k([0, 1, 7], truth, 3, [0.5, 1.0, 2.001], tdist) == pytest.approx(200 / 3)
    assert recall_at_k([0, 1, 7], truth, 3) == pytest.approx(200 / 3)


def test_mean_recall():
    truth = np.array([[0, 1], [2, 3]])
    assert mean_recall([[0, 1], [2, 9]], truth, 2) == 75.0

"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line (printed immediately and again in
the pytest summary) before asserting.  Run on its own with::

    pytest tests/test_acceptance.py -v
"""

import itertools
import sys
import time

import numpy as np
import pytest

from dlsearch import VectorSet, brute_knn, build_index, knn_query, recall_at_k
from dlsearch import io as dio
from dlsearch.bench import run_benchmark
from dlsearch.errors import FormatError
from dlsearch.irmetrics import average_precision, bpref_one, evaluate, precision_at, r_precision_one
from dlsearch.pooling import (
    LayerNormParams,
    pool_gem,
    pool_layernorm_mean,
    pool_mean,
    softmax,
    spatial_attention_weights,
)
from dlsearch.synth import generate

import trec_fixture
from acceptance_log import record
from checks import connected, knn_mismatches, monotone, sorted_unique
from oracles_ir import o_ap, o_ap_paper, o_bpref, o_precision, o_rprec
from oracles_pool import scalar_layernorm_mean


@pytest.fixture(scope="module")
def artificial():
    """10,000 uniform 40-d vectors: 9,000 indexed, 1,000 queries."""
    t0 = time.perf_counter()
    data = generate(10_000, 40, "uniform", seed=1).data
    X, Q = VectorSet(data[:9_000]), VectorSet(data[9_000:])
    index = build_index(X, 50, seed=0)
    report = run_benchmark(index, X, Q, k_search=20, k=10, dataset="artificial-synthetic")
    return report, time.perf_counter() - t0


def test_criterion_1_artificial_recall(artificial):
    report, secs = artificial
    ok = report.recall_at_10 >= 98.5 and secs < 60.0
    record(1, "artificial-scale R@10 >= 98.5% within 60 s", ok,
           f"R@10={report.recall_at_10:.2f}%, end-to-end {secs:.1f} s, build {report.build_seconds:.1f} s")
    assert report.recall_at_10 >= 98.5
    assert secs < 60.0


def test_criterion_2_full_exploration_is_exact():
    worst = 100.0
    cases = 0
    for seed, (dist, dim, k_index) in enumerate(
        [("uniform", 2, 2), ("uniform", 8, 5), ("gaussian", 16, 10), ("clustered", 4, 3), ("uniform", 32, 20)]
    ):
        X = generate(200, dim, dist, seed=seed)
        index = build_index(X, k_index, seed=seed)
        Q = generate(40, dim, dist, seed=100 + seed)
        queries = np.vstack([Q.data, X.data[:10]])
        for q in queries:
            res = knn_query(index, X, q, 200, 200)
            exact = brute_knn(X, q, 200)
            for k in (10, 200):
                r = recall_at_k([e for e, _ in res], [e for e, _ in exact], k)
                worst = min(worst, r)
            cases += 1
    ok = worst == 100.0
    record(2, "k_search = N on 200 points is exact", ok, f"min recall {worst:.1f}% over {cases} queries")
    assert worst == 100.0


def test_criterion_3_speed_proxy(artificial):
    report, _ = artificial
    frac = report.distance_evals_fraction
    speedup = report.speedup_vs_brute
    ok = frac <= 0.20 and speedup >= 5.0
    record(3, "evals <= 20% of N and ATPQ >= 5x below brute force", ok,
           f"evals {report.distance_evals_mean:.0f} = {100 * frac:.1f}% of N, "
           f"ATPQ {report.atpq_ms:.3f} ms vs brute {report.brute_atpq_ms:.3f} ms = {speedup:.2f}x; "
           f"float32 GEMV scan {report.extra.get('brute_gemv_f32_atpq_ms', float('nan')):.3f} ms")
    assert frac <= 0.20
    assert speedup >= 5.0


def test_criterion_4_index_invariants():
    rng = np.random.default_rng(4)
    failures = []
    for b in range(50):
        n = int(rng.integers(50, 2001))
        d = int(rng.integers(2, 65))
        k = int(rng.integers(2, 21))
        dist = ("uniform", "gaussian", "clustered")[b % 3]
        X = generate(n, d, dist, seed=1000 + b)
        index = build_index(X, k, seed=b)
        scale = float(np.ptp(X.data))
        checks = {
            "knn": not knn_mismatches(index, X.data, k),
            "sorted": sorted_unique(index),
            "connected": connected(index),
            "monotone": monotone(index, scale),
        }
        bad = [name for name, good in checks.items() if not good]
        if bad:
            failures.append((n, d, k, dist, bad))
    ok = not failures
    record(4, "index invariants over 50 random builds", ok,
           f"{50 - len(failures)}/50 builds pass" + (f"; first failure {failures[0]}" if failures else ""))
    assert not failures


def test_criterion_5_pooling_oracles():
    rng = np.random.default_rng(5)
    fails = []
    for _ in range(50):
        m = rng.random((int(rng.integers(1, 9)), int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        if np.max(np.abs(pool_gem(m, 1.0) - pool_mean(m))) > 1e-6:
            fails.append("gem p=1")
        outs = [pool_gem(m, p) for p in (1.0, 1.25, 2.0, 3.0, 5.0, 16.0, 64.0)]
        if any(np.any(a > b + 1e-9) for a, b in zip(outs, outs[1:])):
            fails.append("gem monotone")
        K = m.shape[0]
        g, bta = rng.normal(size=K), rng.normal(size=K)
        ref = scalar_layernorm_mean(m, g, bta, 1e-6)
        if np.max(np.abs(pool_layernorm_mean(m, LayerNormParams(g, bta)) - ref)) > 1e-5:
            fails.append("layernorm")
    for mag in (1.0, 1e2, 1e3, 1e4):
        x = rng.uniform(-mag, mag, size=(6, 7))
        for axis in (0, 1):
            s = softmax(x, axis=axis)
            if np.any(s < 0) or np.max(np.abs(s.sum(axis=axis) - 1.0)) > 1e-6:
                fails.append(f"softmax {mag:g}")
        m = rng.uniform(-mag, mag, size=(3, 6, 7))
        for mode, axis in (("row", -1), ("col", -2)):
            if np.max(np.abs(spatial_attention_weights(m, mode).sum(axis=axis) - 1.0)) > 1e-6:
                fails.append(f"attention softmax {mag:g}")
    ok = not fails
    record(5, "pooling oracle suite", ok, "all checks agree" if ok else f"failed: {sorted(set(fails))}")
    assert not fails


def test_criterion_6_ir_oracles(tmp_path):
    mismatches = 0
    checked = 0
    docs = [f"d{i}" for i in range(6)]
    for nr in range(7):
        for nn in range(7 - nr):
            for extra in (0, 1):
                qrel = {d: i < nr for i, d in enumerate(docs) if i < nr + nn}
                if extra:
                    qrel["missing"] = True
                for perm in itertools.permutations(docs):
                    p = list(perm)
                    pairs = [
                        (average_precision(p, qrel), o_ap(p, qrel)),
                        (average_precision(p, qrel, "paper"), o_ap_paper(p, qrel)),
                        (r_precision_one(p, qrel), o_rprec(p, qrel)),
                        (bpref_one(p, qrel), o_bpref(p, qrel)),
                        (bpref_one(p, qrel, "trec"), o_bpref(p, qrel, True)),
                    ] + [(precision_at(p, qrel, k), o_precision(p, qrel, k)) for k in (1, 2, 5, 10)]
                    checked += 1
                    if any(abs(a - b) > 1e-12 for a, b in pairs):
                        mismatches += 1
    qp, rp = trec_fixture.write(tmp_path)
    run, qrels = dio.parse_run(rp), dio.parse_qrels(qp)
    exp = trec_fixture.EXPECTED
    res = evaluate(run, qrels)
    alt = evaluate(run, qrels, map_variant="paper", bpref_variant="trec")
    fixture_ok = all(abs(res[k] - exp[k]) < 1e-12 for k in ("map", "P@5", "P@10", "P@20", "Rprec", "bpref"))
    fixture_ok &= abs(alt["map"] - exp["map_paper"]) < 1e-12 and abs(alt["bpref"] - exp["bpref_trec"]) < 1e-12
    ok = mismatches == 0 and fixture_ok
    record(6, "IR metrics oracle suite", ok,
           f"{checked - mismatches}/{checked} permutation instances agree, fixture {'ok' if fixture_ok else 'MISMATCH'}")
    assert mismatches == 0
    assert fixture_ok


def test_criterion_7_determinism(tmp_path):
    data = generate(4_000, 24, "clustered", seed=7).data
    X, Q = VectorSet(data[:3_800]), VectorSet(data[3_800:])
    blobs, metrics = [], []
    for i in range(2):
        index = build_index(X, 16, seed=42)
        path = tmp_path / f"run{i}.dlsi"
        dio.write_index(index, path)
        blobs.append(path.read_bytes())
        rep = run_benchmark(dio.read_index(path), X, Q, k_search=30, k=10, time_brute=False)
        metrics.append(rep.metrics())
    ok = blobs[0] == blobs[1] and metrics[0] == metrics[1]
    record(7, "identical runs give identical index bytes and metrics", ok,
           f"index {len(blobs[0])} bytes {'equal' if blobs[0] == blobs[1] else 'DIFFER'}, "
           f"metrics {'equal' if metrics[0] == metrics[1] else 'DIFFER'}")
    assert blobs[0] == blobs[1]
    assert metrics[0] == metrics[1]


def test_criterion_8_serialization(tmp_path):
    from test_io import _mutate  # same mutation model as the unit tests

    X = generate(500, 12, "gaussian", seed=8)
    index = build_index(X, 10, seed=8)
    dio.write_index(index, tmp_path / "i.dlsi")
    index_ok = dio.read_index(tmp_path / "i.dlsi") == index
    t = np.random.default_rng(8).normal(size=(16, 7, 7)).astype(np.float32)
    dio.write_tensor(tmp_path / "t.dlst", t)
    back = dio.read_tensor(tmp_path / "t.dlst")
    tensor_ok = back.shape == t.shape and np.array_equal(back, t)
    rng = np.random.default_rng(88)
    detected = 0
    trials = 0
    for raw, parse in (
        (dio.index_bytes(index), dio.index_from_bytes),
        (dio.tensor_bytes(t), dio.tensor_from_bytes),
    ):
        for _ in range(1000):
            trials += 1
            try:
                parse(_mutate(raw, rng))
            except FormatError:
                detected += 1
    ok = index_ok and tensor_ok and detected == trials
    record(8, "round-trips exact and corruption always detected", ok,
           f"index {'ok' if index_ok else 'DIFFERS'}, tensor {'ok' if tensor_ok else 'DIFFERS'}, "
           f"{detected}/{trials} mutations detected")
    assert index_ok and tensor_ok
    assert detected == trials


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

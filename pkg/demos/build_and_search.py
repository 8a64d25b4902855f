"""Build an index over clustered data, query it, and compare with brute force.

    python demos/build_and_search.py [--n 20000] [--dim 32]
"""

import argparse
import time

import numpy as np

from dlsearch import SearchScratch, brute_knn, build_index, knn_query, recall_at_k
from dlsearch.synth import generate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--queries", type=int, default=200)
    args = ap.parse_args()

    data = generate(args.n + args.queries, args.dim, "clustered", seed=0)
    X, Q = data.data[: args.n], data.data[args.n :]

    t0 = time.perf_counter()
    index = build_index(X, k_index=30, seed=0)
    secs = time.perf_counter() - t0
    pairs = args.n * (args.n - 1) / 2
    print(f"built {index} in {secs:.1f} s")
    print(f"  {index.distance_evals:,} distances, {index.distance_evals / pairs:.1%} of all pairs")
    print(f"  mean degree {index.num_links / index.count:.1f}, root {index.root} has {index.degree(index.root)} links")

    # the first node's links are long, later nodes' links are short
    cd = index.stats["create_distances"]
    print(f"  create distance of node 2: {cd[1]:.3f}, of the last node: {cd[-1]:.4f}")

    for k_search in (10, 20, 50):
        sc = SearchScratch(index.count, k_search)
        recalls, evals, t = [], [], 0.0
        for q in Q:
            t0 = time.perf_counter()
            res = knn_query(index, X, q, k_search, 10, scratch=sc)
            t += time.perf_counter() - t0
            evals.append(sc.distance_evals)
            truth = [e for e, _ in brute_knn(X, q, 10)]
            recalls.append(recall_at_k([e for e, _ in res], truth, 10))
        print(f"k_search={k_search:3d}: R@10 {np.mean(recalls):6.2f}%  "
              f"{np.mean(evals):7.0f} distances/query ({np.mean(evals) / args.n:.1%} of N)  "
              f"{1e3 * t / len(Q):.3f} ms/query")


if __name__ == "__main__":
    main()

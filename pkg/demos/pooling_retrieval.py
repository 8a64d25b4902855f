"""Pool synthetic feature maps, rank by cosine similarity, score with IR metrics.

Each "image" is a K x W x H activation map.  Images of the same class
share a channel profile and differ by noise and by where the activation
sits spatially, so pooling has to discard location to group them.

    python demos/pooling_retrieval.py
"""

import numpy as np

from dlsearch.irmetrics import QrelSet, RunRanking, evaluate
from dlsearch.pooling import LayerNormParams, pool, rank_by_cosine

K, W, H = 64, 7, 7
CLASSES, PER_CLASS = 8, 12


def make_images(rng):
    base = rng.gamma(2.0, 1.0, size=K)
    profiles = base * rng.uniform(0.6, 1.4, size=(CLASSES, K))
    maps, labels = [], []
    for c in range(CLASSES):
        for _ in range(PER_CLASS):
            blob = np.zeros((W, H))
            i, j = rng.integers(W), rng.integers(H)
            blob[max(0, i - 1) : i + 2, max(0, j - 1) : j + 2] = 1.0
            m = profiles[c][:, None, None] * blob[None] + rng.gamma(1.0, 1.5, size=(K, W, H))
            maps.append(m)
            labels.append(c)
    return np.array(maps), np.array(labels)


def main():
    rng = np.random.default_rng(0)
    maps, labels = make_images(rng)
    ids = [f"img{i:03d}" for i in range(len(maps))]
    params = LayerNormParams.identity(K)

    # one query per class, the rest is the database
    qidx = [c * PER_CLASS for c in range(CLASSES)]
    didx = [i for i in range(len(maps)) if i not in qidx]
    qrels = QrelSet()
    for q in qidx:
        for d in didx:
            qrels.add(ids[q], ids[d], bool(labels[q] == labels[d]))

    print(f"{'mode':12s} {'MAP':>6s} {'P@5':>6s} {'P@10':>6s} {'Rprec':>6s} {'bpref':>6s}")
    for mode in ("max", "sum", "mean", "gem", "spatial", "channel", "lnorm-mean"):
        desc = pool(maps, mode, p=2.0, params=params)
        corpus = desc[didx]
        rankings = {}
        for q in qidx:
            order = rank_by_cosine(desc[q], corpus)
            rankings[ids[q]] = [ids[didx[i]] for i, _ in order]
        res = evaluate(RunRanking.from_lists(rankings, tag=mode), qrels, ks=(5, 10))
        print(f"{mode:12s} {res['map']:6.3f} {res['P@5']:6.3f} {res['P@10']:6.3f} "
              f"{res['Rprec']:6.3f} {res['bpref']:6.3f}")


if __name__ == "__main__":
    main()

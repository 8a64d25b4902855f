"""Synthetic data sets for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .vecstore import VectorSet

__all__ = ["generate", "DISTRIBUTIONS"]

DISTRIBUTIONS = ("uniform", "gaussian", "clustered")


def generate(n: int, dim: int, dist: str = "uniform", seed: int = 0, clusters: int = 32) -> VectorSet:
    """``n`` float32 vectors of dimension ``dim``.

    * uniform: i.i.d. on the unit cube
    * gaussian: standard normal
    * clustered: ``clusters`` centers on the unit cube, points scattered
      around them with standard deviation 0.05
    """
    if n < 0 or dim < 1:
        raise ValueError("need n >= 0 and dim >= 1")
    rng = np.random.default_rng(seed)
    if dist == "uniform":
        x = rng.random((n, dim))
    elif dist == "gaussian":
        x = rng.standard_normal((n, dim))
    elif dist == "clustered":
        if clusters < 1:
            raise ValueError("clusters must be >= 1")
        centers = rng.random((clusters, dim))
        labels = rng.integers(clusters, size=n)
        x = centers[labels] + rng.normal(0.0, 0.05, (n, dim))
    else:
        raise ValueError(f"unknown distribution {dist!r}; use one of {DISTRIBUTIONS}")
    return VectorSet(x.astype(np.float32))

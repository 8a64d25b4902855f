"""Aggregation of K x W x H feature maps into K-dimensional descriptors.

All operators take an array whose last three axes are ``(K, W, H)``; any
leading axes are treated as a batch.  Inputs must be finite.

Spatial attention weights the cells by ``w = sum_k x_k`` (a W x H map).
The default (``mode="mean"``) combines the two axis softmaxes as::

    alpha = (softmax_over_H(w) + softmax_over_W(w)) / (2 * W)

``softmax_over_H`` normalizes each of the W rows, ``softmax_over_W`` each
of the H columns.  The division by ``2 * W`` makes the row-softmax half sum
to 1/2 over the map and the column-softmax half sum to H/(2W), which equals
1/2 for square maps.  ``mode="row"`` and ``mode="col"`` use a single axis
softmax instead.  Every mode reduces to ``pool_mean`` times a constant on a
uniform map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .vecstore import VectorSet

__all__ = [
    "LayerNormParams",
    "softmax",
    "sigmoid",
    "pool_max",
    "pool_sum",
    "pool_mean",
    "pool_gem",
    "pool_spatial_attention",
    "spatial_attention_weights",
    "pool_channel_attention",
    "pool_layernorm_mean",
    "pool",
    "cosine_similarity",
    "rank_by_cosine",
    "POOL_MODES",
]

POOL_MODES = ("max", "sum", "mean", "gem", "spatial", "channel", "lnorm-mean")


def _fmap(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim < 3:
        raise ValueError(f"feature map needs shape (..., K, W, H), got {m.shape}")
    if min(m.shape[-3:]) < 1:
        raise ValueError(f"feature map has an empty axis: {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("feature map contains NaN or Inf")
    return m


def softmax(x, axis: int = -1) -> np.ndarray:
    """Softmax with max subtraction, stable for large magnitudes."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def pool_max(m) -> np.ndarray:
    return _fmap(m).max(axis=(-2, -1))


def pool_sum(m) -> np.ndarray:
    return _fmap(m).sum(axis=(-2, -1))


def pool_mean(m) -> np.ndarray:
    return _fmap(m).mean(axis=(-2, -1))


def pool_gem(m, p=2.0) -> np.ndarray:
    """Generalized mean ``(mean y**p) ** (1/p)`` per channel.

    Negative activations are clamped to 0.  ``p`` is a scalar or one value
    per channel, each >= 1.  Channels are scaled by their maximum before
    powering so large ``p`` does not overflow.
    """
    m = np.maximum(_fmap(m), 0.0)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim > 1 or (p.ndim == 1 and p.shape[0] != m.shape[-3]):
        raise ValueError("p must be a scalar or have one entry per channel")
    if not np.all(np.isfinite(p)) or np.any(p < 1.0):
        raise ValueError("GeM exponent p must be >= 1")
    pk = p[:, None, None] if p.ndim == 1 else p
    scale = m.max(axis=(-2, -1), keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    y = (m / safe) ** pk
    out = y.mean(axis=(-2, -1)) ** (1.0 / (p if p.ndim else float(p)))
    return out * scale[..., 0, 0]


def spatial_attention_weights(m, mode: str = "mean") -> np.ndarray:
    """The ``(..., W, H)`` attention map used by :func:`pool_spatial_attention`."""
    m = _fmap(m)
    w = m.sum(axis=-3)
    W = w.shape[-2]
    if mode == "mean":
        return (softmax(w, axis=-1) + softmax(w, axis=-2)) / (2.0 * W)
    if mode == "row":
        return softmax(w, axis=-1)
    if mode == "col":
        return softmax(w, axis=-2)
    raise ValueError(f"unknown spatial attention mode {mode!r}")


def pool_spatial_attention(m, mode: str = "mean") -> np.ndarray:
    m = _fmap(m)
    alpha = spatial_attention_weights(m, mode)
    return (m * alpha[..., None, :, :]).mean(axis=(-2, -1))


def pool_channel_attention(m) -> np.ndarray:
    """``beta = softmax(sum of each channel)``, ``f_k = mean(x_k) * beta_k``."""
    m = _fmap(m)
    beta = softmax(m.sum(axis=(-2, -1)), axis=-1)
    return m.mean(axis=(-2, -1)) * beta


@dataclass(frozen=True)
class LayerNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-6

    def __post_init__(self) -> None:
        g = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        b = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if g.shape != b.shape:
            raise ValueError(f"gamma has {g.size} entries, beta has {b.size}")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(b))):
            raise ValueError("LayerNorm parameters contain NaN or Inf")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "beta", b)

    @classmethod
    def identity(cls, k: int, eps: float = 1e-6) -> "LayerNormParams":
        return cls(np.ones(k), np.zeros(k), eps)

    @classmethod
    def from_array(cls, a, eps: float = 1e-6) -> "LayerNormParams":
        """From a ``(2, K)`` array holding gamma then beta."""
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != 2:
            raise ValueError(f"expected a (2, K) parameter tensor, got {a.shape}")
        return cls(a[0], a[1], eps)


def pool_layernorm_mean(m, params: LayerNormParams) -> np.ndarray:
    """LayerNorm(sigmoid(mean pool)) over the channel axis.

    Uses the biased variance, like the usual LayerNorm.
    """
    m = _fmap(m)
    k = m.shape[-3]
    if params.gamma.shape[0] != k:
        raise ValueError(f"parameters have {params.gamma.shape[0]} channels, map has {k}")
    v = sigmoid(m.mean(axis=(-2, -1)))
    mu = v.mean(axis=-1, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
    return (v - mu) / np.sqrt(var + params.eps) * params.gamma + params.beta


def pool(m, mode: str, p=2.0, params: LayerNormParams | None = None) -> np.ndarray:
    """Dispatch by mode name (see ``POOL_MODES``)."""
    if mode == "max":
        return pool_max(m)
    if mode == "sum":
        return pool_sum(m)
    if mode == "mean":
        return pool_mean(m)
    if mode == "gem":
        return pool_gem(m, p)
    if mode == "spatial":
        return pool_spatial_attention(m)
    if mode == "channel":
        return pool_channel_attention(m)
    if mode == "lnorm-mean":
        if params is None:
            raise ValueError("lnorm-mean needs LayerNorm parameters")
        return pool_layernorm_mean(m, params)
    raise ValueError(f"unknown pooling mode {mode!r}")


# ------------------------------------------------------------ cosine ranking


def cosine_similarity(q, corpus) -> np.ndarray:
    """Cosine similarity of ``q`` to each corpus row; zero-norm rows give 0."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    c = np.asarray(corpus, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != q.shape[0]:
        raise DimensionMismatchError(f"query has dim {q.shape[0]}, corpus has shape {c.shape}")
    qn = np.linalg.norm(q)
    cn = np.linalg.norm(c, axis=1)
    denom = qn * cn
    dots = c @ q
    out = np.zeros(c.shape[0])
    ok = denom > 0
    out[ok] = dots[ok] / denom[ok]
    return out


def rank_by_cosine(q, corpus) -> list[tuple[int, float]]:
    """Corpus ids by descending similarity, ties broken by smaller id."""
    if isinstance(corpus, VectorSet):
        corpus = corpus.data
    s = cosine_similarity(q, corpus)
    order = np.lexsort((np.arange(s.shape[0]), -s))
    return [(int(i), float(s[i])) for i in order]

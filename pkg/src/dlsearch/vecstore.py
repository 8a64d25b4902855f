"""In-memory vector storage and the Euclidean distance kernel."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError

__all__ = ["VectorSet", "as_vectorset", "distance", "get"]


class VectorSet:
    """An immutable ``N x d`` matrix of float32 vectors.

    Rows are stored contiguously in row-major order so that a row can be
    handed to the distance kernels as a zero-copy view.

    Args:
        data: Anything convertible to a 2-D float array. It is converted
            to C-contiguous float32 (copied only if needed).  Without a
            copy the set shares memory with ``data``, which must then not
            be modified.
    """

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise ValueError("vector dimension must be >= 1")
        # a fresh view, so the caller's own array stays writable
        arr = arr.view()
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def empty(cls, dim: int) -> "VectorSet":
        return cls(np.empty((0, dim), dtype=np.float32))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def count(self) -> int:
        return self._data.shape[0]

    @property
    def dim(self) -> int:
        return self._data.shape[1]

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> np.ndarray:
        return get(self, i)

    def __repr__(self) -> str:
        return f"VectorSet(count={self.count}, dim={self.dim})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorSet):
            return NotImplemented
        return self._data.shape == other._data.shape and np.array_equal(
            self._data, other._data
        )

    __hash__ = None


def as_vectorset(x) -> VectorSet:
    return x if isinstance(x, VectorSet) else VectorSet(x)


def get(vectors: VectorSet, i: int) -> np.ndarray:
    """Return row ``i`` as a read-only view (no copy)."""
    i = int(i)
    if not 0 <= i < vectors.count:
        raise IndexError(f"vector id {i} out of range [0, {vectors.count})")
    return vectors.data[i]


def distance(a, b) -> float:
    """True (non-squared) Euclidean distance, accumulated in float64."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatchError(
            f"cannot compare vectors of shape {a.shape} and {b.shape}"
        )
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt(np.dot(diff, diff)))

"""Dense-link nearest neighbor search.

Build an index once, then answer k-NN queries by following its links::

    from dlsearch import VectorSet, build_index, knn_query
    index = build_index(vectors, k_index=50)
    hits = knn_query(index, vectors, q, k_search=20, k=10)
"""

from .errors import (
    ChecksumError,
    DimensionMismatchError,
    DLSError,
    EmptyInputError,
    FormatError,
    UnsupportedVersionError,
)
from .index import BuildState, LinkIndex, build_index
from .oracle import brute_knn, ground_truth, recall_at_k
from .search import SearchScratch, knn_query
from .vecstore import VectorSet, distance, get

__version__ = "0.1.0"

__all__ = [
    "VectorSet",
    "distance",
    "get",
    "LinkIndex",
    "BuildState",
    "build_index",
    "knn_query",
    "SearchScratch",
    "brute_knn",
    "ground_truth",
    "recall_at_k",
    "DLSError",
    "DimensionMismatchError",
    "EmptyInputError",
    "FormatError",
    "UnsupportedVersionError",
    "ChecksumError",
]

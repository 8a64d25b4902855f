"""Construction of the dense-link index.

Vectors become nodes one at a time, always the unindexed vector furthest
from every existing node.  Each vector keeps a bounded near heap (its
``k_index`` closest links so far, whose furthest entry defines its near
radius) and a far list (links from vectors that consider it near).  A new
node is linked to every unindexed vector that it considers near or that
considers it near; links nobody considers near are dropped.  The near heap
of a vector at the moment it becomes a node is kept as its *descend* links.
At the end every vector's descend links, near heap and far list are merged
into one array sorted by length.  Descend links are kept at both of their
endpoints, so the early nodes also carry the long links that later nodes
made to them.

Typical use::

    index = build_index(vectors, k_index=50, seed=0)

The individual steps (:func:`pop_create_vector`, :func:`link_new_node`,
:func:`try_add_link`, :func:`update_nearest_node_dist`, :func:`finalize`)
are exposed for inspection and testing; they drive the same compiled
kernels that :func:`build_index` uses.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as K
from .errors import DLSError, EmptyInputError
from .vecstore import as_vectorset

__all__ = [
    "LinkIndex",
    "BuildState",
    "Placement",
    "LinkPlacement",
    "build_index",
    "pop_create_vector",
    "link_new_node",
    "try_add_link",
    "update_nearest_node_dist",
    "finalize",
    "splitmix64",
    "default_pivot_count",
]

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 generator (returns the mixed output)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def default_pivot_count(n: int, k_index: int) -> int:
    # the first k_index nodes compare against everything anyway
    return min(n, max(k_index, 16))


class Placement(enum.Enum):
    HEAP = K.PLACE_HEAP
    LIST = K.PLACE_LIST


class LinkPlacement(NamedTuple):
    """Where a new link landed for each endpoint; ``None`` fields mean dropped."""

    a: Optional[Placement]
    b: Optional[Placement]

    @property
    def dropped(self) -> bool:
        return self.a is None


@dataclass(eq=False)
class LinkIndex:
    """A finished, immutable index.

    Links are stored in CSR form: the links of node ``v`` are
    ``endpoints[offsets[v]:offsets[v+1]]`` with matching ``lengths``, sorted
    ascending by ``(length, endpoint)`` and free of duplicates.
    """

    count: int
    dim: int
    root: int
    k_index: int
    seed: int
    offsets: np.ndarray
    endpoints: np.ndarray
    lengths: np.ndarray
    distance_evals: int = 0
    build_seconds: Optional[float] = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        self.endpoints = np.ascontiguousarray(self.endpoints, dtype=np.int64)
        self.lengths = np.ascontiguousarray(self.lengths, dtype=np.float32)
        for a in (self.offsets, self.endpoints, self.lengths):
            a.setflags(write=False)

    def links(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """``(endpoints, lengths)`` of node ``v``."""
        lo, hi = self.offsets[v], self.offsets[v + 1]
        return self.endpoints[lo:hi], self.lengths[lo:hi]

    def degree(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    @property
    def num_links(self) -> int:
        return int(self.endpoints.shape[0])

    def __eq__(self, other) -> bool:
        # build_seconds and stats are runtime observations, not structure
        if not isinstance(other, LinkIndex):
            return NotImplemented
        return (
            self.count == other.count
            and self.dim == other.dim
            and self.root == other.root
            and self.k_index == other.k_index
            and self.seed == other.seed
            and self.distance_evals == other.distance_evals
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.endpoints, other.endpoints)
            and np.array_equal(self.lengths, other.lengths)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"LinkIndex(count={self.count}, dim={self.dim}, root={self.root}, "
            f"k_index={self.k_index}, links={self.num_links})"
        )


class BuildState:
    """All mutable state of an index build.

    Attribute names follow the kernel layout documented in
    ``dlsearch._kernels``.  ``C`` is the distance of each vector to its
    closest node (``inf`` until first contact), ``order`` / ``create_dist``
    record the node creation sequence.
    """

    def __init__(
        self,
        vectors,
        k_index: int,
        seed: int = 0,
        n_pivots: Optional[int] = None,
    ) -> None:
        vectors = as_vectorset(vectors)
        n = vectors.count
        if n == 0:
            raise EmptyInputError("cannot build an index over zero vectors")
        if k_index < 1:
            raise ValueError("k_index must be >= 1")
        if n_pivots is None:
            n_pivots = default_pivot_count(n, k_index)
        if not 1 <= n_pivots <= n:
            raise ValueError(f"n_pivots must be in [1, {n}]")
        self.vectors = vectors
        self.X = vectors.data
        self.N = n
        self.K = int(k_index)
        self.seed = int(seed) & _MASK64
        self.start = splitmix64(self.seed) % n
        cap = n * self.K + 2

        self.C = np.full(n, np.inf)
        self.isnode = np.zeros(n, dtype=np.uint8)
        self.gh = np.arange(n, dtype=np.int64)
        self.gpos = np.arange(n, dtype=np.int64)
        self.ctr = np.zeros(K.CTR_SIZE, dtype=np.int64)
        self.ctr[K.CTR_FREE_TOP] = cap
        self.ctr[K.CTR_GSIZE] = n
        self.ctr[K.CTR_N_UNIND] = n
        self.ctr[K.CTR_START] = self.start
        self.ctr[K.CTR_PIVOTS] = n_pivots
        self.unind = np.arange(n, dtype=np.int64)
        self.unind_pos = np.arange(n, dtype=np.int64)
        self.stamp = np.zeros(n, dtype=np.int64)
        self.buf = np.empty(n, dtype=np.int64)
        self.pivd = np.zeros((n, n_pivots), dtype=np.float64)

        self.heap_d = np.zeros((n, self.K), dtype=np.float64)
        self.heap_e = np.full((n, self.K), -1, dtype=np.int64)
        self.heap_l = np.full((n, self.K), -1, dtype=np.int64)
        self.heap_n = np.zeros(n, dtype=np.int64)

        self.link_e = np.full((cap, 2), -1, dtype=np.int64)
        self.link_d = np.zeros(cap, dtype=np.float64)
        self.slot_heap = np.zeros(2 * cap, dtype=np.uint8)
        self.slot_nx = np.full(2 * cap, -1, dtype=np.int64)
        self.slot_pv = np.full(2 * cap, -1, dtype=np.int64)
        self.list_head = np.full(n, -1, dtype=np.int64)
        self.list_n = np.zeros(n, dtype=np.int64)
        # popped from the top, so the lowest ids are handed out first
        self.free_ids = np.arange(cap - 1, -1, -1, dtype=np.int64)

        self.desc_e = np.full((n, self.K), -1, dtype=np.int64)
        self.desc_d = np.zeros((n, self.K), dtype=np.float64)
        self.desc_n = np.zeros(n, dtype=np.int64)
        self.order = np.full(n, -1, dtype=np.int64)
        self.create_dist = np.full(n, np.nan)

    # argument bundles in kernel order
    def _heaps(self):
        return (self.heap_d, self.heap_e, self.heap_l, self.heap_n)

    def _links(self):
        return (
            self.link_e, self.link_d, self.slot_heap, self.slot_nx,
            self.slot_pv, self.list_head, self.list_n, self.free_ids,
        )

    @property
    def n_nodes(self) -> int:
        return int(self.ctr[K.CTR_N_NODES])

    @property
    def distance_evals(self) -> int:
        return int(self.ctr[K.CTR_EVALS])

    @property
    def n_pivots(self) -> int:
        return int(self.ctr[K.CTR_PIVOTS])

    def radius(self, v: int) -> float:
        """Near distance of ``v``: its furthest near link once the heap is full."""
        return float(K.near_radius(self.heap_d, self.heap_n, self.K, v))

    def near_heap(self, v: int) -> list[tuple[int, float]]:
        """Contents of ``v``'s near heap as ``(endpoint, length)``, ascending."""
        n = self.heap_n[v]
        pairs = zip(self.heap_e[v, :n].tolist(), self.heap_d[v, :n].tolist())
        return sorted(pairs, key=lambda p: (p[1], p[0]))

    def far_list(self, v: int) -> list[tuple[int, float]]:
        out = []
        s = int(self.list_head[v])
        while s >= 0:
            link = s >> 1
            out.append((int(self.link_e[link, 1 - (s & 1)]), float(self.link_d[link])))
            s = int(self.slot_nx[s])
        return sorted(out, key=lambda p: (p[1], p[0]))

    def descend_links(self, v: int) -> list[tuple[int, float]]:
        n = self.desc_n[v]
        pairs = zip(self.desc_e[v, :n].tolist(), self.desc_d[v, :n].tolist())
        return sorted(pairs, key=lambda p: (p[1], p[0]))

    def creation_sequence(self) -> list[tuple[int, float]]:
        n = self.n_nodes
        return list(zip(self.order[:n].tolist(), self.create_dist[:n].tolist()))


def update_nearest_node_dist(v: int, d: float, state: BuildState) -> None:
    """Lower ``C[v]`` to ``d`` if smaller; no-op when ``v`` is already a node."""
    K.update_nearest_node_dist(
        int(v), float(d), state.C, state.isnode, state.gh, state.gpos, state.ctr
    )


def pop_create_vector(state: BuildState) -> Optional[tuple[int, float]]:
    """Make the next create vector a node.

    Returns ``(vector_id, create_distance)``, or ``None`` once every vector
    is a node.  The first call returns the seeded start vector with an
    infinite create distance.
    """
    m = K.pop_create_vector(
        state.K, state.C, state.isnode, state.gh, state.gpos, state.ctr,
        state.unind, state.unind_pos, state.heap_d, state.heap_e, state.heap_n,
        state.desc_e, state.desc_d, state.desc_n, state.order, state.create_dist,
    )
    if m < 0:
        return None
    return int(m), float(state.C[m])


def link_new_node(m: int, state: BuildState) -> None:
    """Create all links between the freshly popped node ``m`` and unindexed vectors."""
    if not state.isnode[m]:
        raise DLSError(f"vector {m} is not a node yet")
    K.link_new_node(
        int(m), state.X, state.K, state.C, state.isnode, state.gh, state.gpos,
        state.ctr, state.unind, state.stamp, state.buf, state.pivd,
        *state._heaps(), *state._links(),
    )


def _decode(code: int) -> LinkPlacement:
    if code == K.PLACE_DROPPED:
        return LinkPlacement(None, None)
    return LinkPlacement(Placement(code % 4), Placement(code // 4))


def try_add_link(a: int, b: int, d: float, state: BuildState) -> LinkPlacement:
    """Offer link ``a``-``b`` of length ``d`` to both endpoints.

    The link goes into an endpoint's near heap if that endpoint considers
    the other near (``(d, other) < (radius, top endpoint)``), otherwise onto
    its far list; it is not created at all when neither side considers the
    other near.  A link pushed out of a full heap moves to that endpoint's
    far list if the other endpoint still holds it in its heap, and is
    dropped otherwise.
    """
    if a == b:
        raise ValueError("self-links are not allowed")
    code = K.try_add_link(
        int(a), int(b), float(d), state.K, *state._heaps(), *state._links(), state.ctr
    )
    return _decode(int(code))


def finalize(state: BuildState) -> LinkIndex:
    """Merge descend links, near heap and far list of every node into a LinkIndex."""
    if state.n_nodes != state.N:
        raise DLSError(
            f"finalize called with {state.N - state.n_nodes} vectors not yet indexed"
        )
    own, end, dist = K.gather_links(
        state.N, state.heap_d, state.heap_e, state.heap_n, state.link_e,
        state.link_d, state.slot_nx, state.list_head, state.list_n,
        state.desc_e, state.desc_d, state.desc_n,
    )
    lens = dist.astype(np.float32)
    order = np.lexsort((end, lens, own))
    own, end, lens = own[order], end[order], lens[order]
    if own.size:
        keep = np.ones(own.size, dtype=bool)
        keep[1:] = (own[1:] != own[:-1]) | (end[1:] != end[:-1])
        own, end, lens = own[keep], end[keep], lens[keep]
    offsets = np.zeros(state.N + 1, dtype=np.int64)
    np.cumsum(np.bincount(own, minlength=state.N), out=offsets[1:])
    ctr = state.ctr
    return LinkIndex(
        count=state.N,
        dim=state.vectors.dim,
        root=int(state.order[0]),
        k_index=state.K,
        seed=state.seed,
        offsets=offsets,
        endpoints=end,
        lengths=lens,
        distance_evals=int(ctr[K.CTR_EVALS]),
        stats={
            "n_pivots": int(ctr[K.CTR_PIVOTS]),
            "links_created": int(ctr[K.CTR_LINKS_MADE]),
            "links_dropped": int(ctr[K.CTR_LINKS_DROPPED]),
            "graph_pass_evals": int(ctr[K.CTR_PHASE1_EVALS]),
        },
    )


def build_index(
    vectors,
    k_index: int,
    seed: int = 0,
    n_pivots: Optional[int] = None,
) -> LinkIndex:
    """Build a LinkIndex over ``vectors`` keeping ``k_index`` neighbors per node.

    The result is fully determined by ``(vectors, k_index, seed, n_pivots)``.
    ``n_pivots`` only changes how many distances are computed, never the
    links themselves; it defaults to ``max(k_index, 16)``.
    """
    t0 = time.perf_counter()
    state = BuildState(vectors, k_index, seed, n_pivots)
    K.run_build(
        state.X, state.K, state.C, state.isnode, state.gh, state.gpos, state.ctr,
        state.unind, state.unind_pos, state.stamp, state.buf, state.pivd,
        *state._heaps(), *state._links(),
        state.desc_e, state.desc_d, state.desc_n, state.order, state.create_dist,
    )
    index = finalize(state)
    index.build_seconds = time.perf_counter() - t0
    index.stats["create_distances"] = state.create_dist
    return index

"""Compiled kernels for index construction and search.

Everything here works on plain numpy arrays so that the same code path is
used by the one-shot builders and by the step-by-step Python API in
``index.py`` / ``search.py``.  Orderings are lexicographic on
``(distance, id)`` throughout, which makes every build and query
reproducible bit for bit.

Build state layout (``N`` vectors, heap capacity ``K``):

* near heaps: ``heap_d`` / ``heap_e`` / ``heap_l`` of shape ``(N, K)`` hold
  link length, far endpoint and link id; ``heap_n[v]`` is the fill level.
  Each is a max-heap with the furthest link at slot 0.
* link table: ``link_e[l] = (a, b)`` and ``link_d[l]``.  Every link has two
  *slots*, ``2*l`` for endpoint ``a`` and ``2*l + 1`` for ``b``.  A slot is
  either in its owner's heap (``slot_heap == 1``) or threaded on the owner's
  far list (a doubly linked list through ``slot_nx`` / ``slot_pv`` starting
  at ``list_head``).  At least one slot of a live link is in a heap, so the
  number of live links never exceeds ``N*K`` and ids are recycled through
  the ``free_ids`` stack.
* global heap: ``gh`` holds unindexed vector ids as a max-heap on
  ``(C[v], -v)``; ``gpos`` maps ids to positions (``-1`` once a node).
* ``ctr`` counters, see the ``CTR_*`` constants.
"""

import numpy as np
from numba import njit

INF = np.inf

CTR_EVALS = 0
CTR_FREE_TOP = 1
CTR_GSIZE = 2
CTR_N_UNIND = 3
CTR_N_NODES = 4
CTR_START = 5
CTR_LINKS_MADE = 6
CTR_LINKS_DROPPED = 7
CTR_PIVOTS = 8
CTR_PHASE1_EVALS = 9
CTR_SIZE = 10

# try_add_link placement codes, one per endpoint
PLACE_DROPPED = 0
PLACE_HEAP = 1
PLACE_LIST = 2

SPREAD_EXHAUSTED = 0
SPREAD_LOCAL = 1
SPREAD_GLOBAL = 2

# slack for triangle-inequality pruning against float rounding
_REL_SLACK = 1e-6
_ABS_SLACK = 1e-12


@njit(cache=True)
def l2_rows(X, i, j):
    s = 0.0
    for t in range(X.shape[1]):
        diff = np.float64(X[i, t]) - np.float64(X[j, t])
        s += diff * diff
    return np.sqrt(s)


@njit(cache=True)
def l2_query(X, i, q):
    # four partial sums break the serial add chain
    d = X.shape[1]
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    t = 0
    while t + 4 <= d:
        a = np.float64(X[i, t]) - q[t]
        b = np.float64(X[i, t + 1]) - q[t + 1]
        c = np.float64(X[i, t + 2]) - q[t + 2]
        e = np.float64(X[i, t + 3]) - q[t + 3]
        s0 += a * a
        s1 += b * b
        s2 += c * c
        s3 += e * e
        t += 4
    while t < d:
        a = np.float64(X[i, t]) - q[t]
        s0 += a * a
        t += 1
    return np.sqrt((s0 + s1) + (s2 + s3))


@njit(cache=True)
def _key_gt(d1, e1, d2, e2):
    return d1 > d2 or (d1 == d2 and e1 > e2)


# ---------------------------------------------------------------- near heaps


@njit(cache=True)
def near_radius(heap_d, heap_n, K, v):
    if heap_n[v] < K:
        return INF
    return heap_d[v, 0]


@njit(cache=True)
def considers_near(heap_d, heap_e, heap_n, K, v, d, u):
    if heap_n[v] < K:
        return True
    td = heap_d[v, 0]
    return d < td or (d == td and u < heap_e[v, 0])


@njit(cache=True)
def _heap_push(heap_d, heap_e, heap_l, heap_n, v, d, e, l):
    i = heap_n[v]
    heap_n[v] = i + 1
    while i > 0:
        p = (i - 1) // 2
        if _key_gt(d, e, heap_d[v, p], heap_e[v, p]):
            heap_d[v, i] = heap_d[v, p]
            heap_e[v, i] = heap_e[v, p]
            heap_l[v, i] = heap_l[v, p]
            i = p
        else:
            break
    heap_d[v, i] = d
    heap_e[v, i] = e
    heap_l[v, i] = l


@njit(cache=True)
def _heap_replace_top(heap_d, heap_e, heap_l, heap_n, v, d, e, l):
    """Replace the top of a full heap; return the ejected link id."""
    out = heap_l[v, 0]
    n = heap_n[v]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and _key_gt(heap_d[v, c + 1], heap_e[v, c + 1], heap_d[v, c], heap_e[v, c]):
            c += 1
        if _key_gt(heap_d[v, c], heap_e[v, c], d, e):
            heap_d[v, i] = heap_d[v, c]
            heap_e[v, i] = heap_e[v, c]
            heap_l[v, i] = heap_l[v, c]
            i = c
        else:
            break
    heap_d[v, i] = d
    heap_e[v, i] = e
    heap_l[v, i] = l
    return out


# ----------------------------------------------------------------- far lists


@njit(cache=True)
def _list_insert(slot_nx, slot_pv, list_head, list_n, owner, s):
    h = list_head[owner]
    slot_nx[s] = h
    slot_pv[s] = -1
    if h >= 0:
        slot_pv[h] = s
    list_head[owner] = s
    list_n[owner] += 1


@njit(cache=True)
def _list_remove(slot_nx, slot_pv, list_head, list_n, owner, s):
    p = slot_pv[s]
    n = slot_nx[s]
    if p >= 0:
        slot_nx[p] = n
    else:
        list_head[owner] = n
    if n >= 0:
        slot_pv[n] = p
    slot_nx[s] = -1
    slot_pv[s] = -1
    list_n[owner] -= 1


# --------------------------------------------------------------- link making


@njit(cache=True)
def try_add_link(
    a, b, d, K,
    heap_d, heap_e, heap_l, heap_n,
    link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n,
    free_ids, ctr,
):
    """Create link a-b of length d if either endpoint considers the other near.

    Returns ``place_a + 4 * place_b`` using the PLACE_* codes.
    """
    na = considers_near(heap_d, heap_e, heap_n, K, a, d, b)
    nb = considers_near(heap_d, heap_e, heap_n, K, b, d, a)
    if not na and not nb:
        return PLACE_DROPPED
    ctr[CTR_FREE_TOP] -= 1
    l = free_ids[ctr[CTR_FREE_TOP]]
    link_e[l, 0] = a
    link_e[l, 1] = b
    link_d[l] = d
    ctr[CTR_LINKS_MADE] += 1
    code = 0
    for side in range(2):
        if side == 0:
            o = a
            x = b
            near = na
        else:
            o = b
            x = a
            near = nb
        s = 2 * l + side
        if not near:
            slot_heap[s] = 0
            _list_insert(slot_nx, slot_pv, list_head, list_n, o, s)
            code += PLACE_LIST * (1 if side == 0 else 4)
            continue
        slot_heap[s] = 1
        code += PLACE_HEAP * (1 if side == 0 else 4)
        if heap_n[o] < K:
            _heap_push(heap_d, heap_e, heap_l, heap_n, o, d, x, l)
            continue
        t = _heap_replace_top(heap_d, heap_e, heap_l, heap_n, o, d, x, l)
        t_side = 0 if link_e[t, 0] == o else 1
        s_own = 2 * t + t_side
        s_other = 2 * t + (1 - t_side)
        y = link_e[t, 1 - t_side]
        if slot_heap[s_other] == 1:
            # y still holds the link in its heap: o keeps it as a far link
            slot_heap[s_own] = 0
            _list_insert(slot_nx, slot_pv, list_head, list_n, o, s_own)
        else:
            # neither endpoint considers the other near any more
            _list_remove(slot_nx, slot_pv, list_head, list_n, y, s_other)
            link_e[t, 0] = -1
            link_e[t, 1] = -1
            free_ids[ctr[CTR_FREE_TOP]] = t
            ctr[CTR_FREE_TOP] += 1
            ctr[CTR_LINKS_DROPPED] += 1
    return code


# --------------------------------------------------------------- global heap


@njit(cache=True)
def _g_higher(C, i, j):
    return C[i] > C[j] or (C[i] == C[j] and i < j)


@njit(cache=True)
def _g_sift_down(gh, gpos, C, n, i):
    v = gh[i]
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and _g_higher(C, gh[c + 1], gh[c]):
            c += 1
        if _g_higher(C, gh[c], v):
            gh[i] = gh[c]
            gpos[gh[i]] = i
            i = c
        else:
            break
    gh[i] = v
    gpos[v] = i


@njit(cache=True)
def _g_sift_up(gh, gpos, C, i):
    v = gh[i]
    while i > 0:
        p = (i - 1) // 2
        if _g_higher(C, v, gh[p]):
            gh[i] = gh[p]
            gpos[gh[i]] = i
            i = p
        else:
            break
    gh[i] = v
    gpos[v] = i


@njit(cache=True)
def _g_remove_at(gh, gpos, C, ctr, i):
    n = ctr[CTR_GSIZE] - 1
    ctr[CTR_GSIZE] = n
    v = gh[i]
    gpos[v] = -1
    if i == n:
        return v
    moved = gh[n]
    gh[i] = moved
    gpos[moved] = i
    _g_sift_up(gh, gpos, C, i)
    _g_sift_down(gh, gpos, C, n, gpos[moved])
    return v


@njit(cache=True)
def update_nearest_node_dist(v, d, C, isnode, gh, gpos, ctr):
    if isnode[v]:
        return
    if d < C[v]:
        C[v] = d
        # C only shrinks, so v can only move away from the top
        _g_sift_down(gh, gpos, C, ctr[CTR_GSIZE], gpos[v])


@njit(cache=True)
def pop_create_vector(
    K, C, isnode, gh, gpos, ctr, unind, unind_pos,
    heap_d, heap_e, heap_n, desc_e, desc_d, desc_n, order, create_dist,
):
    """Turn the furthest unindexed vector into a node; return its id or -1."""
    if ctr[CTR_GSIZE] == 0:
        return -1
    if ctr[CTR_N_NODES] == 0:
        m = _g_remove_at(gh, gpos, C, ctr, gpos[ctr[CTR_START]])
    else:
        m = _g_remove_at(gh, gpos, C, ctr, 0)
    isnode[m] = 1
    # descend links: the near heap just before the vector becomes a node
    n = heap_n[m]
    for i in range(n):
        desc_e[m, i] = heap_e[m, i]
        desc_d[m, i] = heap_d[m, i]
    desc_n[m] = n
    # swap-remove from the compact unindexed list
    p = unind_pos[m]
    last = ctr[CTR_N_UNIND] - 1
    w = unind[last]
    unind[p] = w
    unind_pos[w] = p
    unind_pos[m] = -1
    ctr[CTR_N_UNIND] = last
    order[ctr[CTR_N_NODES]] = m
    create_dist[ctr[CTR_N_NODES]] = C[m]
    ctr[CTR_N_NODES] += 1
    return m


@njit(cache=True)
def _evaluate_pair(
    m, u, d, K, C, isnode, gh, gpos,
    heap_d, heap_e, heap_l, heap_n,
    link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n,
    free_ids, ctr,
):
    update_nearest_node_dist(u, d, C, isnode, gh, gpos, ctr)
    try_add_link(
        m, u, d, K, heap_d, heap_e, heap_l, heap_n,
        link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n,
        free_ids, ctr,
    )


@njit(cache=True)
def link_new_node(
    m, X, K, C, isnode, gh, gpos, ctr, unind, stamp, buf, pivd,
    heap_d, heap_e, heap_l, heap_n,
    link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n, free_ids,
):
    """Create every link between new node ``m`` and the unindexed vectors.

    Pivot phase: the first ``P`` nodes are compared with every unindexed
    vector and the distances are kept as a pivot table.

    Afterwards two passes run.  The first evaluates the unindexed vectors
    in the near heaps of ``m``'s linked nodes (cheap, finds most neighbors,
    shrinks ``m``'s radius early).  The second visits the remaining
    unindexed vectors and evaluates only those whose pivot lower bound
    ``max_j |piv(j, m) - piv(j, u)|`` does not rule out either endpoint
    considering the other near, so no required link is ever missed.
    """
    t = ctr[CTR_N_NODES]
    P = ctr[CTR_PIVOTS]
    n_unind = ctr[CTR_N_UNIND]
    if t <= P:
        j = t - 1
        pivd[m, j] = 0.0
        for i in range(n_unind):
            u = unind[i]
            d = l2_rows(X, m, u)
            ctr[CTR_EVALS] += 1
            pivd[u, j] = d
            _evaluate_pair(
                m, u, d, K, C, isnode, gh, gpos, heap_d, heap_e, heap_l, heap_n,
                link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n,
                free_ids, ctr,
            )
        return

    # pass 1: unindexed endpoints of links held by m's linked nodes
    nbuf = 0
    for pass_heap in range(2):
        if pass_heap == 0:
            cnt = heap_n[m]
        else:
            cnt = list_n[m]
        s = list_head[m]
        for i in range(cnt):
            if pass_heap == 0:
                p = heap_e[m, i]
            else:
                l = s >> 1
                p = link_e[l, 1 - (s & 1)]
                s = slot_nx[s]
            for k in range(heap_n[p]):
                u = heap_e[p, k]
                if not isnode[u] and stamp[u] != t:
                    stamp[u] = t
                    buf[nbuf] = u
                    nbuf += 1
    for i in range(nbuf):
        u = buf[i]
        d = l2_rows(X, m, u)
        ctr[CTR_EVALS] += 1
        ctr[CTR_PHASE1_EVALS] += 1
        if d >= C[u] and heap_n[m] == K and heap_n[u] == K:
            if d > heap_d[m, 0] and d > heap_d[u, 0]:
                continue
        _evaluate_pair(
            m, u, d, K, C, isnode, gh, gpos, heap_d, heap_e, heap_l, heap_n,
            link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n,
            free_ids, ctr,
        )

    # pass 2: pivot-certified scan of everything else
    for i in range(n_unind):
        u = unind[i]
        if stamp[u] == t:
            continue
        rm = near_radius(heap_d, heap_n, K, m)
        ru = near_radius(heap_d, heap_n, K, u)
        thr = rm if rm > ru else ru
        if thr < INF:
            thr = thr * (1.0 + _REL_SLACK) + _ABS_SLACK
            skip = False
            for j in range(P):
                lb = pivd[m, j] - pivd[u, j]
                if lb > thr or -lb > thr:
                    skip = True
                    break
            if skip:
                continue
        d = l2_rows(X, m, u)
        ctr[CTR_EVALS] += 1
        if d >= C[u] and heap_n[m] == K and heap_n[u] == K:
            # cheap reject: nothing changes unless one side considers it near
            if d > heap_d[m, 0] and d > heap_d[u, 0]:
                continue
        _evaluate_pair(
            m, u, d, K, C, isnode, gh, gpos, heap_d, heap_e, heap_l, heap_n,
            link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n,
            free_ids, ctr,
        )


@njit(cache=True)
def run_build(
    X, K, C, isnode, gh, gpos, ctr, unind, unind_pos, stamp, buf, pivd,
    heap_d, heap_e, heap_l, heap_n,
    link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n, free_ids,
    desc_e, desc_d, desc_n, order, create_dist,
):
    while True:
        m = pop_create_vector(
            K, C, isnode, gh, gpos, ctr, unind, unind_pos,
            heap_d, heap_e, heap_n, desc_e, desc_d, desc_n, order, create_dist,
        )
        if m < 0:
            break
        link_new_node(
            m, X, K, C, isnode, gh, gpos, ctr, unind, stamp, buf, pivd,
            heap_d, heap_e, heap_l, heap_n,
            link_e, link_d, slot_heap, slot_nx, slot_pv, list_head, list_n, free_ids,
        )


@njit(cache=True)
def gather_links(
    N, heap_d, heap_e, heap_n, link_e, link_d, slot_nx, list_head, list_n,
    desc_e, desc_d, desc_n,
):
    """Flatten descend snapshot, near heap and far list of every vector.

    A descend link is an edge between two nodes, so it is emitted for both
    of its endpoints; this is what lets a search starting at the root reach
    the nodes created after it.
    """
    total = 0
    for v in range(N):
        total += 2 * desc_n[v] + heap_n[v] + list_n[v]
    own = np.empty(total, dtype=np.int64)
    end = np.empty(total, dtype=np.int64)
    dist = np.empty(total, dtype=np.float64)
    k = 0
    for v in range(N):
        for i in range(desc_n[v]):
            own[k] = v
            end[k] = desc_e[v, i]
            dist[k] = desc_d[v, i]
            k += 1
            own[k] = desc_e[v, i]
            end[k] = v
            dist[k] = desc_d[v, i]
            k += 1
        for i in range(heap_n[v]):
            own[k] = v
            end[k] = heap_e[v, i]
            dist[k] = heap_d[v, i]
            k += 1
        s = list_head[v]
        while s >= 0:
            l = s >> 1
            own[k] = v
            end[k] = link_e[l, 1 - (s & 1)]
            dist[k] = link_d[l]
            k += 1
            s = slot_nx[s]
    return own, end, dist


# -------------------------------------------------------------------- search
#
# Search scratch layout: ``seen`` / ``expanded`` hold the stamp of the query
# that last touched each vector (so nothing needs clearing between queries),
# ``memo`` the query distance, ``hd`` / ``he`` the bounded result max-heap.
# ``ints = [stamp, heap_size, evals, closest_id, iterations]``,
# ``flt = [closest_dist]``.

S_STAMP = 0
S_HN = 1
S_EVALS = 2
S_VC = 3
S_ITERS = 4


@njit(cache=True)
def _result_push(hd, he, ints, Ks, d, e):
    n = ints[S_HN]
    if n < Ks:
        i = n
        ints[S_HN] = n + 1
        while i > 0:
            p = (i - 1) // 2
            if _key_gt(d, e, hd[p], he[p]):
                hd[i] = hd[p]
                he[i] = he[p]
                i = p
            else:
                break
        hd[i] = d
        he[i] = e
        return True
    if not _key_gt(hd[0], he[0], d, e):
        return False
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and _key_gt(hd[c + 1], he[c + 1], hd[c], he[c]):
            c += 1
        if _key_gt(hd[c], he[c], d, e):
            hd[i] = hd[c]
            he[i] = he[c]
            i = c
        else:
            break
    hd[i] = d
    he[i] = e
    return True


@njit(cache=True)
def _prunable(length, dq, hd, ints, Ks):
    # every later link is at least this long, so |q - e| >= length - dq;
    # once that exceeds the heap boundary nothing further can enter
    if ints[S_HN] < Ks:
        return False
    return length / (1.0 + _REL_SLACK) - _ABS_SLACK > dq + hd[0]


@njit(cache=True)
def search_init(X, q, root, seen, memo, hd, he, ints, flt, Ks):
    ints[S_STAMP] += 1
    ints[S_HN] = 0
    ints[S_EVALS] = 0
    ints[S_ITERS] = 0
    stamp = ints[S_STAMP]
    d = l2_query(X, root, q)
    ints[S_EVALS] += 1
    seen[root] = stamp
    memo[root] = d
    _result_push(hd, he, ints, Ks, d, root)
    ints[S_VC] = root
    flt[0] = d


@njit(cache=True)
def descend_stage(offsets, ends, lens, X, q, seen, memo, expanded, hd, he, ints, flt, Ks, prune):
    stamp = ints[S_STAMP]
    vc = ints[S_VC]
    if expanded[vc] == stamp:
        return False
    expanded[vc] = stamp
    dc = flt[0]
    best = vc
    bestd = dc
    for j in range(offsets[vc], offsets[vc + 1]):
        e = ends[j]
        if seen[e] == stamp:
            continue
        if prune and _prunable(lens[j], dc, hd, ints, Ks):
            break
        de = l2_query(X, e, q)
        ints[S_EVALS] += 1
        seen[e] = stamp
        memo[e] = de
        _result_push(hd, he, ints, Ks, de, e)
        if de < bestd or (de == bestd and e < best):
            best = e
            bestd = de
    if best == vc:
        return False
    ints[S_VC] = best
    flt[0] = bestd
    return True


@njit(cache=True)
def spread_stage(offsets, ends, lens, X, q, seen, memo, expanded, hd, he, ints, flt, Ks, prune, md, me):
    stamp = ints[S_STAMP]
    n = ints[S_HN]
    # snapshot of the heap members, ascending by (distance, id)
    for i in range(n):
        d = hd[i]
        e = he[i]
        k = i
        while k > 0 and _key_gt(md[k - 1], me[k - 1], d, e):
            md[k] = md[k - 1]
            me[k] = me[k - 1]
            k -= 1
        md[k] = d
        me[k] = e
    vn = -1
    dn = INF
    for i in range(n):
        v = me[i]
        if expanded[v] == stamp:
            continue
        expanded[v] = stamp
        dv = md[i]
        for j in range(offsets[v], offsets[v + 1]):
            e = ends[j]
            if seen[e] == stamp:
                continue
            if prune and _prunable(lens[j], dv, hd, ints, Ks):
                break
            de = l2_query(X, e, q)
            ints[S_EVALS] += 1
            seen[e] = stamp
            memo[e] = de
            if _result_push(hd, he, ints, Ks, de, e):
                if de < dn or (de == dn and e < vn):
                    vn = e
                    dn = de
    if vn < 0:
        return SPREAD_EXHAUSTED
    dc = flt[0]
    if dn < dc or (dn == dc and vn < ints[S_VC]):
        ints[S_VC] = vn
        flt[0] = dn
        return SPREAD_GLOBAL
    return SPREAD_LOCAL


@njit(cache=True)
def knn_search(offsets, ends, lens, X, q, root, seen, memo, expanded, hd, he, ints, flt, Ks, prune, md, me):
    search_init(X, q, root, seen, memo, hd, he, ints, flt, Ks)
    while True:
        while descend_stage(offsets, ends, lens, X, q, seen, memo, expanded, hd, he, ints, flt, Ks, prune):
            ints[S_ITERS] += 1
        ints[S_ITERS] += 1
        while True:
            out = spread_stage(offsets, ends, lens, X, q, seen, memo, expanded, hd, he, ints, flt, Ks, prune, md, me)
            ints[S_ITERS] += 1
            if out != SPREAD_LOCAL:
                break
        if out == SPREAD_EXHAUSTED:
            break


@njit(cache=True)
def sorted_results(hd, he, n, k, out_e, out_d):
    """Write the ``k`` best heap entries, ascending, into out_e/out_d."""
    for i in range(n):
        d = hd[i]
        e = he[i]
        j = i
        while j > 0 and _key_gt(out_d[j - 1], out_e[j - 1], d, e):
            out_d[j] = out_d[j - 1]
            out_e[j] = out_e[j - 1]
            j -= 1
        out_d[j] = d
        out_e[j] = e
    return min(n, k)

"""Compiled inner loops over compressed-row adjacency (indptr/indices)."""

import numpy as np
from numba import njit


@njit(cache=True)
def vertex_max_codegree(indptr, indices, alive):
    """Per alive vertex u, the largest |N(u) ∩ N(x)| over alive x != u.

    Only alive vertices count as common neighbours.  Each unordered pair is
    counted once (from its lower endpoint).  Cost is O(sum deg^2).
    """
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.int64)
    cnt = np.zeros(n, dtype=np.int32)
    touched = np.empty(n, dtype=np.int32)
    for u in range(n):
        if not alive[u]:
            continue
        nt = 0
        for a in range(indptr[u], indptr[u + 1]):
            w = indices[a]
            if not alive[w]:
                continue
            for b in range(indptr[w], indptr[w + 1]):
                x = indices[b]
                if x <= u or not alive[x]:
                    continue
                c = cnt[x]
                if c == 0:
                    touched[nt] = x
                    nt += 1
                cnt[x] = c + 1
        best = 0
        for t in range(nt):
            x = touched[t]
            c = cnt[x]
            if c > best:
                best = c
            if c > out[x]:
                out[x] = c
            cnt[x] = 0
        if best > out[u]:
            out[u] = best
    return out


@njit(cache=True)
def pairs_with_codegree_at_least(indptr, indices, threshold):
    """Vertices u that have some x != u sharing at least ``threshold`` neighbours."""
    n = indptr.shape[0] - 1
    flag = np.zeros(n, dtype=np.bool_)
    cnt = np.zeros(n, dtype=np.int32)
    touched = np.empty(n, dtype=np.int32)
    for u in range(n):
        nt = 0
        for a in range(indptr[u], indptr[u + 1]):
            w = indices[a]
            for b in range(indptr[w], indptr[w + 1]):
                x = indices[b]
                if x <= u:
                    continue
                if cnt[x] == 0:
                    touched[nt] = x
                    nt += 1
                cnt[x] += 1
                if cnt[x] >= threshold:
                    flag[u] = True
                    flag[x] = True
        for t in range(nt):
            cnt[touched[t]] = 0
    return flag


@njit(cache=True)
def greedy_by_order(indptr, indices, order):
    n = indptr.shape[0] - 1
    blocked = np.zeros(n, dtype=np.bool_)
    chosen = np.zeros(n, dtype=np.bool_)
    for i in range(order.shape[0]):
        v = order[i]
        if blocked[v]:
            continue
        chosen[v] = True
        blocked[v] = True
        for a in range(indptr[v], indptr[v + 1]):
            blocked[indices[a]] = True
    return chosen


@njit(cache=True)
def bfs_within(indptr, indices, u, v, depth):
    """True iff dist(u, v) <= depth."""
    n = indptr.shape[0] - 1
    if u == v:
        return True
    seen = np.zeros(n, dtype=np.bool_)
    seen[u] = True
    frontier = np.empty(n, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)
    frontier[0] = u
    nf = 1
    for _ in range(depth):
        nn = 0
        for i in range(nf):
            x = frontier[i]
            for a in range(indptr[x], indptr[x + 1]):
                y = indices[a]
                if y == v:
                    return True
                if not seen[y]:
                    seen[y] = True
                    nxt[nn] = y
                    nn += 1
        if nn == 0:
            return False
        frontier, nxt = nxt, frontier
        nf = nn
    return False


# -- regularization ---------------------------------------------------------
#
# The working graph is a padded adjacency table ``adj[v, :deg[v]]`` (rows are
# unsorted; the caller sorts when converting back).  ``stamp`` marks the
# closed 2-ball of the vertex currently being saturated: a candidate v is at
# distance <= 3 from u iff v or one of its neighbours carries the stamp.


@njit(cache=True)
def _mark_ball2(adj, deg, stamp, u, tag):
    stamp[u] = tag
    for a in range(deg[u]):
        w = adj[u, a]
        stamp[w] = tag
        for b in range(deg[w]):
            stamp[adj[w, b]] = tag


@njit(cache=True)
def _far(adj, deg, stamp, v, tag):
    if stamp[v] == tag:
        return False
    for a in range(deg[v]):
        if stamp[adj[v, a]] == tag:
            return False
    return True


@njit(cache=True)
def _add_edge(adj, deg, stamp, u, v, tag):
    adj[u, deg[u]] = v
    deg[u] += 1
    adj[v, deg[v]] = u
    deg[v] += 1
    # v and N(v) are now within distance 2 of u
    stamp[v] = tag
    for a in range(deg[v]):
        stamp[adj[v, a]] = tag


@njit(cache=True)
def regularize_kernel(adj, deg, target):
    """Two-phase greedy edge addition towards degrees in {target, target+1}.

    Phase 1 joins pairs of deficient vertices (degree < target) at distance
    >= 4; phase 2 joins a deficient vertex to any vertex of degree <= target at
    distance >= 4.  Vertices are handled lowest index first, and for each the
    lowest-index admissible partner is taken.  Returns
    ``(status, phase1_edges, phase2_edges, stuck_vertex)`` where status 0 means
    every degree reached ``target`` and 1 means phase 2 found no partner for
    ``stuck_vertex`` (the phase is then abandoned).
    """
    n = deg.shape[0]
    stamp = np.zeros(n, dtype=np.int64)
    tag = 0

    # phase 1: deficient vertices in a doubly linked list, in index order.
    # A vertex leaves the list once saturated, or once it has been the head
    # without finding a partner (distances only shrink, so it never will).
    prv = np.full(n + 2, -1, dtype=np.int64)
    nxt = np.full(n + 2, -1, dtype=np.int64)
    head = n  # sentinel ids: n is the head, n + 1 the tail
    last = head
    for v in range(n):
        if deg[v] < target:
            nxt[last] = v
            prv[v] = last
            last = v
    nxt[last] = n + 1
    prv[n + 1] = last
    added1 = 0
    while nxt[head] != n + 1:
        u = nxt[head]
        tag += 1
        _mark_ball2(adj, deg, stamp, u, tag)
        v = nxt[u]
        while deg[u] < target and v != n + 1:
            after = nxt[v]
            if _far(adj, deg, stamp, v, tag):
                _add_edge(adj, deg, stamp, u, v, tag)
                added1 += 1
                if deg[v] >= target:
                    nxt[prv[v]] = after
                    prv[after] = prv[v]
            v = after
        nxt[head] = nxt[u]
        prv[nxt[u]] = head

    # phase 2: partners may be any vertex of degree <= target
    added2 = 0
    status = 0
    stuck = -1
    for u in range(n):
        if deg[u] >= target:
            continue
        tag += 1
        _mark_ball2(adj, deg, stamp, u, tag)
        v = 0
        while deg[u] < target and v < n:
            if v != u and deg[v] <= target and _far(adj, deg, stamp, v, tag):
                _add_edge(adj, deg, stamp, u, v, tag)
                added2 += 1
            v += 1
        if deg[u] < target:
            status = 1
            stuck = u
            break
    return status, added1, added2, stuck


@njit(cache=True)
def nibble_survivors(indptr, indices, A):
    """Edges inside ``A``, the survivor mask of ``V - (A + N(A))`` and surviving degrees."""
    n = indptr.shape[0] - 1
    alive = np.ones(n, dtype=np.bool_)
    e_inside = 0
    for v in range(n):
        if A[v]:
            alive[v] = False
            for a in range(indptr[v], indptr[v + 1]):
                w = indices[a]
                alive[w] = False
                if A[w] and w > v:
                    e_inside += 1
    deg = np.zeros(n, dtype=np.int64)
    for v in range(n):
        if alive[v]:
            c = 0
            for a in range(indptr[v], indptr[v + 1]):
                if alive[indices[a]]:
                    c += 1
            deg[v] = c
    return e_inside, alive, deg


@njit(cache=True)
def count_in_mask(indptr, indices, mask):
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.int64)
    for v in range(n):
        c = 0
        for a in range(indptr[v], indptr[v + 1]):
            if mask[indices[a]]:
                c += 1
        out[v] = c
    return out

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for graph construction and edge-count sweeps.

Every function here has a numpy twin with the same signature in
:mod:`graphscan._kernels_py`; the two are checked against each other in the
test suite.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


cdef i64 _find(i64[::1] parent, i64 x) noexcept nogil:
    cdef i64 root = x
    cdef i64 nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


def kruskal_pass(i64[::1] ii, i64[::1] jj, i64 n, cnp.uint8_t[::1] used):
    """Run one Kruskal pass over edges already sorted by weight.

    Edges flagged in ``used`` are skipped; accepted edges are flagged on
    return. Returns the positions (into ``ii``/``jj``) of the accepted edges
    and the final union-find parent array.
    """
    cdef i64 m = ii.shape[0]
    cdef i64[::1] parent = np.arange(n, dtype=np.int64)
    cdef i64[::1] rank = np.zeros(n, dtype=np.int64)
    out = np.empty(max(n - 1, 0), dtype=np.int64)
    cdef i64[::1] acc = out
    cdef i64 k = 0, e, ra, rb
    with nogil:
        for e in range(m):
            if k == n - 1:
                break
            if used[e]:
                continue
            ra = _find(parent, ii[e])
            rb = _find(parent, jj[e])
            if ra == rb:
                continue
            if rank[ra] < rank[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            if rank[ra] == rank[rb]:
                rank[ra] += 1
            used[e] = 1
            acc[k] = e
            k += 1
        for e in range(n):
            _find(parent, e)
    return out[:k], np.asarray(parent)


cdef void _single(const i64[::1] indptr, const i64[::1] indices,
                  const i64[::1] order, i64[::1] pos,
                  i64[::1] r1, i64[::1] r2, i64 n) noexcept nogil:
    cdef i64 t, v, a, q, n_edges
    n_edges = indptr[n] // 2
    for t in range(n):
        pos[order[t]] = t
    r1[0] = 0
    r2[0] = n_edges
    for t in range(n):
        # node at position t joins the "before" group
        v = order[t]
        r1[t + 1] = r1[t]
        r2[t + 1] = r2[t]
        for a in range(indptr[v], indptr[v + 1]):
            q = pos[indices[a]]
            if q < t:
                r1[t + 1] += 1
            elif q > t:
                r2[t + 1] -= 1


def single_counts(const i64[::1] indptr, const i64[::1] indices,
                  const i64[::1] order):
    """Within-group counts R1(t), R2(t) for t = 0..n.

    ``order[p]`` is the node placed at sequence position ``p``; group 1 is
    positions ``< t``.
    """
    cdef i64 n = order.shape[0]
    r1 = np.empty(n + 1, dtype=np.int64)
    r2 = np.empty(n + 1, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    cdef i64[::1] r1v = r1, r2v = r2, posv = pos
    with nogil:
        _single(indptr, indices, order, posv, r1v, r2v, n)
    return r1, r2


def single_counts_batch(const i64[::1] indptr, const i64[::1] indices,
                        const i64[:, ::1] orders):
    """Row-wise :func:`single_counts` for a stack of orderings."""
    cdef i64 b = orders.shape[0]
    cdef i64 n = orders.shape[1]
    r1 = np.empty((b, n + 1), dtype=np.int64)
    r2 = np.empty((b, n + 1), dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    cdef i64[:, ::1] r1v = r1, r2v = r2
    cdef i64[::1] posv = pos
    cdef i64 r
    with nogil:
        for r in range(b):
            _single(indptr, indices, orders[r], posv, r1v[r], r2v[r], n)
    return r1, r2


def interval_counts(const i64[::1] indptr, const i64[::1] indices,
                    const i64[::1] order, i64 lmin, i64 lmax):
    """Outside/inside counts for every interval (t1, t2] with
    ``lmin <= t2 - t1 <= lmax``.

    Returns two ``(n+1, n+1)`` arrays indexed ``[t1, t2]``; entries outside
    the length constraint are -1.
    """
    cdef i64 n = order.shape[0]
    cdef i64 n_edges = indptr[n] // 2
    r1 = np.full((n + 1, n + 1), -1, dtype=np.int64)
    r2 = np.full((n + 1, n + 1), -1, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    cdef i64[:, ::1] r1v = r1, r2v = r2
    cdef i64[::1] posv = pos
    cdef i64 t1, t2, v, a, q, out_cnt, in_cnt, hi
    with nogil:
        for t2 in range(n):
            posv[order[t2]] = t2
        for t1 in range(n):
            out_cnt = n_edges
            in_cnt = 0
            hi = t1 + lmax
            if hi > n:
                hi = n
            for t2 in range(t1 + 1, hi + 1):
                # node at position t2-1 moves inside (t1, t2]
                v = order[t2 - 1]
                for a in range(indptr[v], indptr[v + 1]):
                    q = posv[indices[a]]
                    if q >= t1 and q < t2 - 1:
                        in_cnt += 1
                    elif q < t1 or q >= t2:
                        out_cnt -= 1
                if t2 - t1 >= lmin:
                    r1v[t1, t2] = out_cnt
                    r2v[t1, t2] = in_cnt
    return r1, r2

"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def _edge_positions(indptr, indices, order):
    n = order.shape[0]
    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    keep = src < indices
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n, dtype=np.int64)
    pu = pos[src[keep]]
    pv = pos[indices[keep]]
    return np.minimum(pu, pv), np.maximum(pu, pv)


def kruskal_pass(ii, jj, n, used):
    parent = np.arange(n, dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    acc = []
    for e in np.flatnonzero(used == 0):
        if len(acc) == n - 1:
            break
        ra, rb = find(ii[e]), find(jj[e])
        if ra == rb:
            continue
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1
        used[e] = 1
        acc.append(e)
    for v in range(n):
        find(v)
    return np.asarray(acc, dtype=np.int64), parent


def single_counts(indptr, indices, order):
    n = order.shape[0]
    lo, hi = _edge_positions(indptr, indices, order)
    # R1(t): both endpoints at positions < t; R2(t): both >= t
    r1 = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(hi, minlength=n), out=r1[1:])
    below = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(lo, minlength=n), out=below[1:])
    r2 = lo.shape[0] - below
    return r1, r2


def single_counts_batch(indptr, indices, orders):
    b, n = orders.shape
    r1 = np.empty((b, n + 1), dtype=np.int64)
    r2 = np.empty((b, n + 1), dtype=np.int64)
    for r in range(b):
        r1[r], r2[r] = single_counts(indptr, indices, orders[r])
    return r1, r2


def interval_counts(indptr, indices, order, lmin, lmax):
    n = order.shape[0]
    lo, hi = _edge_positions(indptr, indices, order)
    n_edges = lo.shape[0]
    cnt = np.zeros((n, n), dtype=np.int64)
    np.add.at(cnt, (lo, hi), 1)
    # inside (t1, t2] holds positions t1..t2-1: need lo >= t1 and hi <= t2-1
    suffix_lo = np.zeros((n + 1, n), dtype=np.int64)
    suffix_lo[:n] = np.cumsum(cnt[::-1], axis=0)[::-1]
    inside = np.zeros((n + 1, n + 1), dtype=np.int64)
    inside[:, 1:] = np.cumsum(suffix_lo, axis=1)
    # crossing the whole interval: lo < t1 and hi >= t2
    prefix_lo = np.zeros((n + 1, n), dtype=np.int64)
    prefix_lo[1:] = np.cumsum(cnt, axis=0)
    straddle = np.zeros((n + 1, n + 1), dtype=np.int64)
    straddle[:, :n] = np.cumsum(prefix_lo[:, ::-1], axis=1)[:, ::-1]
    below = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(hi, minlength=n), out=below[1:])
    above = n_edges - np.concatenate([[0], np.cumsum(np.bincount(lo, minlength=n))])
    outside = below[:, None] + above[None, :] + straddle

    t1 = np.arange(n + 1)[:, None]
    t2 = np.arange(n + 1)[None, :]
    length = t2 - t1
    ok = (length >= max(lmin, 1)) & (length <= lmax)
    r1 = np.where(ok, outside, -1)
    r2 = np.where(ok, inside, -1)
    return r1, r2

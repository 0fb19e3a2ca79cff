"""Compiled kernels vs the numpy fallback on the hot loops.

Usage: python3 benchmarks/bench_kernels.py [--n 1000] [--reps 5]
"""

import argparse
import timeit

import numpy as np

from graphscan import _kernels_py
from graphscan.graph import _SortedPairs, build_kmst, compute_distances

try:
    from graphscan import _kernels as compiled
except ImportError:
    compiled = None


def cases(n, rng):
    dist = compute_distances(rng.standard_normal((n, 10)))
    g = build_kmst(dist, 5)
    indptr, indices = g.csr
    pairs = _SortedPairs(dist)
    orders = np.array([rng.permutation(n) for _ in range(64)], dtype=np.int64)
    order = orders[0]
    return {
        "kruskal_pass": lambda k: k.kruskal_pass(pairs.ii, pairs.jj, n, pairs.used.copy()),
        "single_counts": lambda k: k.single_counts(indptr, indices, order),
        "single_counts_batch(64)": lambda k: k.single_counts_batch(indptr, indices, orders),
        "interval_counts": lambda k: k.interval_counts(indptr, indices, order, 20, n - 20),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"n={args.n}, best of {args.reps}")
    print(f"{'kernel':<26}{'cython (ms)':>12}{'numpy (ms)':>12}{'speedup':>9}")
    for name, fn in cases(args.n, rng).items():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.reps)) * 1e3
        if compiled is None:
            print(f"{name:<26}{'-':>12}{py:12.2f}{'-':>9}")
            continue
        cy = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.reps)) * 1e3
        print(f"{name:<26}{cy:12.2f}{py:12.2f}{py / cy:8.1f}x")


if __name__ == "__main__":
    main()

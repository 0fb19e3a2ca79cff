"""Permutation-null sampling of scan maxima.

Replicate ``r`` draws its ordering from a generator seeded by ``(seed, r)``,
so results do not depend on how replicates are split across threads.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .graph import GraphError, SimilarityGraph
from .scanstats import (
    _canonical,
    degenerate_diff,
    interval_candidates,
    interval_profile,
    moment_arrays,
    scan,
    single_profile,
    standardize,
    window_mask,
)

CHUNK = 256
STREAM_PERMUTATION = 0
STREAM_THIRD_MOMENTS = 1


def replicate_rng(seed: int, r: int, stream: int = STREAM_PERMUTATION) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(stream, int(r))))


def block_order(n: int, block_size: int, rng: np.random.Generator) -> np.ndarray:
    """Circular block permutation: rotate by a uniform offset, cut into
    ``ceil(n / block_size)`` contiguous blocks, shuffle the blocks."""
    if block_size <= 1:
        return rng.permutation(n).astype(np.int64)
    offset = int(rng.integers(n))
    seq = (offset + np.arange(n, dtype=np.int64)) % n
    blocks = [seq[i:i + block_size] for i in range(0, n, block_size)]
    return np.concatenate([blocks[j] for j in rng.permutation(len(blocks))])


def replicate_orders(n: int, seed: int, start: int, stop: int, block_size: int = 1,
                     stream: int = STREAM_PERMUTATION) -> np.ndarray:
    out = np.empty((stop - start, n), dtype=np.int64)
    for i, r in enumerate(range(start, stop)):
        out[i] = block_order(n, block_size, replicate_rng(seed, r, stream))
    return out


@dataclass(frozen=True)
class PermutationPlan:
    B: int = 1000
    seed: int = 0
    block_size: int = 1
    statistic: str = "M"
    alternative: str = "single"
    window: tuple = (20, None)
    exhaustive: bool = False
    threads: int = 1
    max_work: float = 5e10

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.block_size < 1:
            raise ValueError("block_size must be at least 1")
        if self.alternative not in ("single", "interval"):
            raise ValueError(f"unknown alternative {self.alternative!r}")

    def resolved_window(self, n: int) -> tuple:
        lo, hi = self.window
        return (lo, n - lo if hi is None else hi)


@dataclass
class PermutationResult:
    statistic: str
    observed: float
    maxima: np.ndarray
    p: float
    B: int
    seed: int
    block_size: int
    exhaustive: bool = False
    location: tuple = field(default=())

    def critical_value(self, alpha: float) -> float:
        return nearest_rank_quantile(self.maxima, alpha)


def nearest_rank_quantile(maxima: np.ndarray, alpha: float) -> float:
    """Empirical (1 - alpha) quantile by nearest rank."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    b = len(maxima)
    if b < math.ceil(1 / alpha):
        raise ValueError(f"B={b} is too small for alpha={alpha}; need at least {math.ceil(1 / alpha)}")
    srt = np.sort(maxima)
    return float(srt[math.ceil((1 - alpha) * b) - 1])


def _window_max(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    ok = mask & np.isfinite(values)
    return np.where(ok, values, -np.inf).max(axis=-1)


class _Scanner:
    """Computes window maxima of several statistics for batches of orderings."""

    def __init__(self, g: SimilarityGraph, alternative: str, window: tuple, statistics):
        self.g = g
        self.n = g.n
        self.alternative = alternative
        self.window = window
        self.keys = [_canonical(s) for s in statistics]
        self.degen = degenerate_diff(g)
        n = g.n
        if alternative == "single":
            self.size1 = np.arange(1, n)
            self.mask = window_mask("single", self.size1, window)
        else:
            lo, hi = window
            self.t1, self.t2 = interval_candidates(n, lo, hi)
            self.size1 = n - (self.t2 - self.t1)
            self.mask = np.ones(len(self.t1), dtype=bool)
        self.mom = moment_arrays(n, g.edge_count, g.sum_sq_degrees, self.size1)

    def work(self) -> float:
        per = self.n + 2 * self.g.edge_count
        return per * (self.n if self.alternative == "interval" else 1)

    def maxima(self, orders: np.ndarray) -> dict:
        indptr, indices = self.g.csr
        if self.alternative == "single":
            r1, r2 = kernels.single_counts_batch(indptr, indices, np.ascontiguousarray(orders))
            st = standardize(r1[:, 1:-1], r2[:, 1:-1], self.n, self.mom, self.size1, self.degen)
            return {k: _window_max(st[k], self.mask) for k in self.keys}
        out = {k: np.empty(len(orders)) for k in self.keys}
        lo, hi = self.window
        for i, order in enumerate(orders):
            r1, r2 = kernels.interval_counts(indptr, indices, order, lo, hi)
            st = standardize(r1[self.t1, self.t2], r2[self.t1, self.t2], self.n,
                             self.mom, self.size1, self.degen)
            for k in self.keys:
                out[k][i] = _window_max(st[k], self.mask)
        return out


def _check_window(n: int, alternative: str, window: tuple) -> None:
    lo, hi = window
    if alternative == "single" and not 1 <= lo <= hi <= n - 1:
        raise GraphError(f"infeasible window n0={lo}, n1={hi} for n={n}")
    if alternative == "interval" and not 1 <= lo <= hi <= n - 1:
        raise GraphError(f"infeasible window l0={lo}, l1={hi} for n={n}")


def observed_maxima(g: SimilarityGraph, statistics, alternative: str, window: tuple) -> dict:
    """Observed scan maxima and their locations, keyed by statistic."""
    if alternative == "single":
        prof = single_profile(g)
    else:
        prof = interval_profile(g, window[0], window[1])
    out = {}
    for s in statistics:
        res = scan(prof, s, window)
        out[_canonical(s)] = (res.value, res.location)
    return out


def replicate_maxima(g: SimilarityGraph, plan: PermutationPlan, statistics) -> dict:
    """Scan maxima over ``plan.B`` null replicates (or all ``n!`` orderings
    in exhaustive mode), keyed by statistic."""
    n = g.n
    window = plan.resolved_window(n)
    _check_window(n, plan.alternative, window)
    scanner = _Scanner(g, plan.alternative, window, statistics)
    if plan.exhaustive:
        if n > 8:
            raise GraphError("exhaustive enumeration is limited to n <= 8")
        orders = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
        return scanner.maxima(orders)
    est = plan.B * scanner.work()
    if est > plan.max_work:
        raise GraphError(
            f"permutation run needs ~{est:.3g} operations, above the budget of {plan.max_work:.3g}; "
            "reduce B or raise max_work"
        )
    bounds = [(s, min(s + CHUNK, plan.B)) for s in range(0, plan.B, CHUNK)]

    def run(bound):
        orders = replicate_orders(n, plan.seed, bound[0], bound[1], plan.block_size)
        return scanner.maxima(orders)

    if plan.threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(plan.threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return {k: np.concatenate([p[k] for p in parts]) for k in scanner.keys}


def _p_value(observed: float, maxima: np.ndarray, exhaustive: bool) -> float:
    tol = 1e-9 * max(1.0, abs(observed))
    hits = int(np.sum(maxima >= observed - tol))
    if exhaustive:
        return hits / len(maxima)
    return (1 + hits) / (len(maxima) + 1)


def perm_test_multi(g: SimilarityGraph, plan: PermutationPlan, statistics) -> dict:
    """Permutation p-values for several statistics from one set of replicates."""
    window = plan.resolved_window(g.n)
    obs = observed_maxima(g, statistics, plan.alternative, window)
    reps = replicate_maxima(g, plan, statistics)
    out = {}
    for key, maxima in reps.items():
        value, loc = obs[key]
        out[key] = PermutationResult(
            key, value, maxima, _p_value(value, maxima, plan.exhaustive),
            len(maxima), plan.seed, plan.block_size, plan.exhaustive, loc,
        )
    return out


def perm_test(g: SimilarityGraph, plan: PermutationPlan) -> PermutationResult:
    return perm_test_multi(g, plan, [plan.statistic])[_canonical(plan.statistic)]


def perm_critical_value(g: SimilarityGraph, plan: PermutationPlan, alpha: float) -> float:
    if plan.B < math.ceil(1 / alpha) and not plan.exhaustive:
        raise ValueError(f"B={plan.B} is too small for alpha={alpha}")
    maxima = replicate_maxima(g, plan, [plan.statistic])[_canonical(plan.statistic)]
    return nearest_rank_quantile(maxima, alpha)


def write_maxima(path, maxima) -> None:
    with open(path, "w") as fh:
        for x in maxima:
            fh.write(f"{float(x)!r}\n")

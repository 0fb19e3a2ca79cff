"""Edge-count sweeps, permutation-null moments and standardized scan statistics.

Group 1 of a split is the set of observations "before t" (single change-point)
or *outside* the interval ``(t1, t2]`` (changed interval); group 2 is the
rest. All moments depend on the graph only through ``|G|`` and the sum of
squared degrees, and on the split only through the size of group 1, so the
interval moments are the single change-point moments at group size
``n - (t2 - t1)``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .graph import GraphError, SimilarityGraph

STATISTICS = ("Z", "Zw", "Zdiff", "S", "M")
_SINGULAR_RTOL = 1e-12


def _order(g: SimilarityGraph, order) -> np.ndarray:
    if order is None:
        return np.arange(g.n, dtype=np.int64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    if order.shape != (g.n,):
        raise GraphError(f"order must have length {g.n}")
    return order


@dataclass(frozen=True)
class EdgeCounts:
    """Within/between edge counts for t = 1..n-1."""

    t: np.ndarray
    R0: np.ndarray
    R1: np.ndarray
    R2: np.ndarray


def sweep_single(g: SimilarityGraph, order=None) -> EdgeCounts:
    """Counts for every split ``t``; ``order[p]`` is the node observed at
    position ``p`` (identity by default)."""
    indptr, indices = g.csr
    r1, r2 = kernels.single_counts(indptr, indices, _order(g, order))
    r1, r2 = r1[1:-1], r2[1:-1]
    return EdgeCounts(np.arange(1, g.n), g.edge_count - r1 - r2, r1, r2)


@dataclass(frozen=True)
class IntervalCounts:
    """Outside (R1) and inside (R2) counts as ``(n+1, n+1)`` arrays indexed
    ``[t1, t2]``; -1 marks intervals outside the length constraint."""

    n_edges: int
    R1: np.ndarray
    R2: np.ndarray

    @property
    def R0(self) -> np.ndarray:
        return np.where(self.R1 >= 0, self.n_edges - self.R1 - self.R2, -1)


def sweep_interval(g: SimilarityGraph, l0: int, l1: int, order=None) -> IntervalCounts:
    if not 1 <= l0 <= l1 <= g.n - 1:
        raise GraphError(f"need 1 <= l0 <= l1 <= n-1, got l0={l0}, l1={l1}, n={g.n}")
    indptr, indices = g.csr
    r1, r2 = kernels.interval_counts(indptr, indices, _order(g, order), l0, l1)
    return IntervalCounts(g.edge_count, r1, r2)


@dataclass(frozen=True)
class MomentSet:
    """Permutation-null moments of the edge counts at one split."""

    ER1: float
    ER2: float
    Sigma: np.ndarray
    ERw: float
    VarRw: float
    ERdiff: float
    VarRdiff: float
    n_edges: int = 0
    gamma_w: float | None = None
    gamma_diff: float | None = None

    @property
    def ER0(self) -> float:
        return self.n_edges - self.ER1 - self.ER2

    @property
    def VarR0(self) -> float:
        return float(self.Sigma.sum())


def moment_arrays(n: int, n_edges: int, sum_sq: int, size1) -> dict:
    """Vectorized moments for group-1 sizes ``size1``; group 2 has ``n - size1``."""
    if n < 4:
        raise GraphError("moments need n >= 4")
    t = np.asarray(size1, dtype=np.float64)
    s = n - t
    m = float(n_edges)
    q2 = float(sum_sq)
    nn2 = n * (n - 1.0)
    nn3 = nn2 * (n - 2.0)
    nn4 = nn3 * (n - 3.0)
    c_star = q2 - 2.0 * m  # ordered pairs of distinct edges sharing a node
    c_disj = m * m - q2 + m  # ordered pairs of node-disjoint edges

    er1 = m * t * (t - 1) / nn2
    er2 = m * s * (s - 1) / nn2
    s11 = er1 * (1 - er1) + t * (t - 1) * (t - 2) * c_star / nn3 \
        + t * (t - 1) * (t - 2) * (t - 3) * c_disj / nn4
    s22 = er2 * (1 - er2) + s * (s - 1) * (s - 2) * c_star / nn3 \
        + s * (s - 1) * (s - 2) * (s - 3) * c_disj / nn4
    s12 = t * (t - 1) * s * (s - 1) * c_disj / nn4 - er1 * er2
    erw = m * (t - 1) * (s - 1) / ((n - 1.0) * (n - 2.0))
    varw = t * (t - 1) * s * (s - 1) / nn4 * (
        m - q2 / (n - 2.0) + 2.0 * m * m / ((n - 1.0) * (n - 2.0))
    )
    erd = m * (t - s) / n
    vard = t * s * (q2 - 4.0 * m * m / n) / nn2
    return {
        "ER1": er1, "ER2": er2, "S11": s11, "S22": s22, "S12": s12,
        "ERw": erw, "VarRw": varw, "ERdiff": erd, "VarRdiff": vard,
        "n_edges": m,
    }


def _moment_set(mom: dict, m: int) -> MomentSet:
    f = {k: float(np.asarray(v)) for k, v in mom.items()}
    sigma = np.array([[f["S11"], f["S12"]], [f["S12"], f["S22"]]])
    return MomentSet(f["ER1"], f["ER2"], sigma, f["ERw"], f["VarRw"],
                     f["ERdiff"], f["VarRdiff"], n_edges=m)


def moments_single(g: SimilarityGraph, t: int) -> MomentSet:
    """Moments of (R1(t), R2(t)), R_w(t), R_diff(t) under the permutation null."""
    n = g.n
    if n < 4:
        raise GraphError("moments need n >= 4")
    if not 1 <= t <= n - 1:
        raise GraphError(f"t must lie in [1, n-1], got {t}")
    return _moment_set(moment_arrays(n, g.edge_count, g.sum_sq_degrees, t), g.edge_count)


def moments_interval(g: SimilarityGraph, t1: int, t2: int) -> MomentSet:
    """Moments for the interval split; R1 counts edges outside ``(t1, t2]``."""
    n = g.n
    if n < 4:
        raise GraphError("moments need n >= 4")
    if not 0 <= t1 < t2 <= n:
        raise GraphError(f"need 0 <= t1 < t2 <= n, got ({t1}, {t2})")
    size1 = n - (t2 - t1)
    return _moment_set(moment_arrays(n, g.edge_count, g.sum_sq_degrees, size1), g.edge_count)


def degenerate_diff(g: SimilarityGraph) -> bool:
    """True when Var(R_diff) vanishes identically (all degrees equal)."""
    return g.n * g.sum_sq_degrees == 4 * g.edge_count**2


def positive_variance(var, n_edges: float) -> np.ndarray:
    """Variance is treated as zero below a tolerance relative to |G|^2, which
    absorbs rounding in the closed forms for dense graphs."""
    return np.asarray(var) > _SINGULAR_RTOL * max(1.0, float(n_edges)) ** 2


def standardize(r1, r2, n: int, mom: dict, size1, degenerate: bool = False) -> dict:
    """All statistics from counts; broadcasts over leading replicate axes."""
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    t = np.asarray(size1, dtype=np.float64)
    m = mom["n_edges"]
    s11, s22, s12 = mom["S11"], mom["S22"], mom["S12"]
    a = r1 - mom["ER1"]
    b = r2 - mom["ER2"]
    det = s11 * s22 - s12 * s12
    var0 = s11 + s22 + 2 * s12
    varw = mom["VarRw"]
    okw = positive_variance(varw, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = -((m - r1 - r2) - (m - mom["ER1"] - mom["ER2"])) / np.sqrt(var0)
        z = np.where(positive_variance(var0, m), z, np.nan)
        rw = ((n - t - 1) * r1 + (t - 1) * r2) / (n - 2.0)
        zw = np.where(okw, (rw - mom["ERw"]) / np.sqrt(varw), np.nan)
        if degenerate:
            valid = np.broadcast_to(okw, zw.shape)
            zdiff = np.where(valid, 0.0, np.nan)
            s = zw * zw
        else:
            valid = np.broadcast_to((det > _SINGULAR_RTOL * s11 * s22) & okw, zw.shape)
            vard = mom["VarRdiff"]
            zdiff = (r1 - r2 - mom["ERdiff"]) / np.sqrt(vard)
            s = (s22 * a * a - 2 * s12 * a * b + s11 * b * b) / det
    zw = np.where(valid, zw, np.nan)
    zdiff = np.where(valid, zdiff, np.nan)
    s = np.where(valid, s, np.nan)
    mm = np.where(valid, np.maximum(np.abs(zdiff), zw), np.nan)
    return {"Z": z, "Zw": zw, "Zdiff": zdiff, "S": s, "M": mm, "valid": valid}


@dataclass
class ScanProfile:
    """Per-candidate counts and statistics.

    ``candidates`` is ``(N,)`` for single change-points and ``(N, 2)`` of
    ``(t1, t2)`` pairs for intervals.
    """

    alternative: str
    n: int
    candidates: np.ndarray
    R0: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    Z: np.ndarray
    Zw: np.ndarray
    Zdiff: np.ndarray
    S: np.ndarray
    M: np.ndarray
    valid: np.ndarray
    warnings: list = field(default_factory=list)

    def values(self, which: str) -> np.ndarray:
        key = _canonical(which)
        return getattr(self, key)

    @property
    def lengths(self) -> np.ndarray:
        if self.alternative == "single":
            return self.candidates
        return self.candidates[:, 1] - self.candidates[:, 0]

    def to_tsv(self, path) -> None:
        cols = ["t"] if self.alternative == "single" else ["t1", "t2"]
        cols += ["R0", "R1", "R2", "Z", "Zw", "Zdiff", "S", "M", "valid"]
        cand = self.candidates.reshape(len(self.R0), -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(cols)
            for i in range(len(self.R0)):
                row = [int(c) for c in cand[i]]
                row += [int(self.R0[i]), int(self.R1[i]), int(self.R2[i])]
                row += [_fmt(getattr(self, k)[i]) for k in ("Z", "Zw", "Zdiff", "S", "M")]
                row.append(int(bool(self.valid[i])))
                w.writerow(row)


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else repr(float(x))


def _canonical(which: str) -> str:
    table = {s.lower(): s for s in STATISTICS}
    key = table.get(str(which).lower())
    if key is None:
        raise ValueError(f"unknown statistic {which!r}; choose from {STATISTICS}")
    return key


def _degenerate_warning(g):
    msg = "Var(R_diff) is identically zero for this graph (all degrees equal); Z_diff set to 0"
    warnings.warn(msg, stacklevel=3)
    return [msg]


def single_profile(g: SimilarityGraph, order=None) -> ScanProfile:
    """Profile of all statistics over t = 1..n-1."""
    counts = sweep_single(g, order)
    return statistics_single(g, counts)


def statistics_single(g: SimilarityGraph, counts: EdgeCounts) -> ScanProfile:
    n = g.n
    mom = moment_arrays(n, g.edge_count, g.sum_sq_degrees, counts.t)
    degen = degenerate_diff(g)
    st = standardize(counts.R1, counts.R2, n, mom, counts.t, degen)
    return ScanProfile(
        "single", n, counts.t, counts.R0, counts.R1, counts.R2,
        st["Z"], st["Zw"], st["Zdiff"], st["S"], st["M"], np.asarray(st["valid"]),
        _degenerate_warning(g) if degen else [],
    )


def interval_candidates(n: int, l0: int, l1: int) -> tuple[np.ndarray, np.ndarray]:
    """``(t1, t2)`` with ``1 <= t1 < t2 <= n`` and ``l0 <= t2 - t1 <= l1``,
    ordered by t1 then t2."""
    t1, t2 = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    ok = (t1 >= 1) & (t2 - t1 >= l0) & (t2 - t1 <= l1)
    return t1[ok], t2[ok]


def interval_profile(g: SimilarityGraph, l0: int, l1: int, order=None) -> ScanProfile:
    """Profile over all intervals with length in ``[l0, l1]`` and ``t1 >= 1``."""
    n = g.n
    counts = sweep_interval(g, l0, l1, order)
    t1, t2 = interval_candidates(n, l0, l1)
    r1 = counts.R1[t1, t2]
    r2 = counts.R2[t1, t2]
    size1 = n - (t2 - t1)
    mom = moment_arrays(n, g.edge_count, g.sum_sq_degrees, size1)
    degen = degenerate_diff(g)
    st = standardize(r1, r2, n, mom, size1, degen)
    return ScanProfile(
        "interval", n, np.column_stack([t1, t2]), g.edge_count - r1 - r2, r1, r2,
        st["Z"], st["Zw"], st["Zdiff"], st["S"], st["M"], np.asarray(st["valid"]),
        _degenerate_warning(g) if degen else [],
    )


@dataclass
class ScanResult:
    statistic: str
    value: float
    location: tuple
    window: tuple
    candidates: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    profile: ScanProfile | None = None


def window_mask(alternative: str, candidates: np.ndarray, window: tuple) -> np.ndarray:
    lo, hi = window
    if alternative == "single":
        return (candidates >= lo) & (candidates <= hi)
    length = candidates[:, 1] - candidates[:, 0]
    return (length >= lo) & (length <= hi)


def scan_values(alternative, candidates, values, valid, window, statistic) -> ScanResult:
    """Maximum over valid in-window candidates; ties go to the first candidate."""
    ok = window_mask(alternative, candidates, window) & valid & np.isfinite(values)
    if not ok.any():
        raise GraphError(f"no valid candidate for {statistic} in window {window}")
    masked = np.where(ok, values, -np.inf)
    i = int(np.argmax(masked))
    loc = (int(candidates[i]),) if alternative == "single" else tuple(int(c) for c in candidates[i])
    return ScanResult(statistic, float(values[i]), loc, tuple(window), candidates, values, ok)


def scan(profile: ScanProfile, which: str, window: tuple) -> ScanResult:
    """Scan statistic ``which`` over ``window`` ((n0, n1) or (l0, l1))."""
    key = _canonical(which)
    res = scan_values(profile.alternative, profile.candidates, profile.values(key),
                      np.asarray(profile.valid), window, key)
    res.profile = profile
    return res

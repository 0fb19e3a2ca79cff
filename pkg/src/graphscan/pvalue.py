"""Analytic tail probabilities of the scan maxima.

The uncorrected approximations depend only on ``n``, the window and the
threshold ``b``; the skewness-corrected ones additionally need the third
moments of ``Z_w(t)`` and ``Z_diff(t)`` under the permutation null.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, sparse, special

from ._backend import kernels
from .graph import GraphError, SimilarityGraph
from .permutation import CHUNK, STREAM_THIRD_MOMENTS, replicate_orders
from .scanstats import moment_arrays, positive_variance

TAIL_STATISTICS = ("S", "Zw", "Zdiff", "M")
N_OMEGA = 128
EXTRAPOLATION_POINTS = 10
EXACT_MAX_N = 9


def nu(x):
    """Overshoot correction, via the closed-form approximation in terms of
    the normal cdf and density."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise ValueError("nu(x) is defined for x > 0")
    h = 0.5 * x
    cdf = special.ndtr(h)
    out = (2.0 / x) * (cdf - 0.5) / (h * cdf + _phi(h))
    return out if out.ndim else float(out)


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _check_unit(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any((x <= 0) | (x >= 1)):
        raise ValueError("x must lie strictly inside (0, 1)")
    return x


def h_w_star(x):
    x = _check_unit(x)
    return 1.0 / (x * (1 - x))


def h_diff(x, n: int | None = None):
    """``1 / (2 x (1 - x))``; the finite-sample form is identical."""
    x = _check_unit(x)
    return 0.5 / (x * (1 - x))


def h_w(n: int, x):
    """Finite-sample version of ``h_w_star``; tends to it as n grows."""
    if n < 4:
        raise ValueError("finite-sample h_w needs n >= 4")
    x = _check_unit(x)
    num = (n - 1.0) * (2.0 * n * x * x - 2.0 * n * x + 1.0)
    den = 2.0 * x * (1 - x) * (n * n * x * x - n * n * x + n - 1.0)
    return num / den


def h_functions(x, n: int | None = None):
    """``(h_w, h_diff)`` at ``x``; finite-sample when ``n`` is given."""
    hw = h_w_star(x) if n is None else h_w(n, x)
    return hw, h_diff(x)


def theta_b(gamma, b: float):
    """Tilt solving the third-order cumulant equation; NaN where
    ``1 + 2 gamma b <= 0``."""
    g = np.asarray(gamma, dtype=np.float64)
    disc = 1.0 + 2.0 * g * b
    small = np.abs(g) < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = (-1.0 + np.sqrt(disc)) / g
    series = b - 0.5 * g * b * b + 0.5 * g * g * b**3
    out = np.where(small, series, np.where(disc > 0, exact, np.nan))
    return out if out.ndim else float(out)


@dataclass
class ThirdMoments:
    """``gamma_w[t]`` = E[Z_w(t)^3], ``gamma_diff[t]`` = E[Z_diff(t)^3] for
    group-1 size ``t`` (index 0..n, NaN where not computed)."""

    n: int
    gamma_w: np.ndarray
    gamma_diff: np.ndarray
    method: str
    B: int | None = None
    seed: int | None = None
    std_err_w: np.ndarray | None = None
    std_err_diff: np.ndarray | None = None

    def provenance(self) -> dict:
        out = {"method": self.method}
        if self.method == "monte-carlo":
            out.update(B=self.B, seed=self.seed)
        return out


def _standardized(r1, r2, n, mom, t):
    rw = ((n - t - 1) * r1 + (t - 1) * r2) / (n - 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        zw = (rw - mom["ERw"]) / np.sqrt(mom["VarRw"])
        zd = (r1 - r2 - mom["ERdiff"]) / np.sqrt(mom["VarRdiff"])
    return zw, zd


@dataclass(frozen=True)
class EdgeTriples:
    """Counts of edge configurations that determine third moments.

    ``triangles``, ``stars`` (3 edges at one node), ``paths`` (3-edge paths),
    ``cherry_plus`` (two adjacent edges plus one disjoint from both) and
    ``matchings`` (3 pairwise disjoint edges) are unordered edge triples;
    ``adjacent``/``disjoint`` count ordered pairs of distinct edges.
    """

    edges: int
    adjacent: int
    disjoint: int
    triangles: int
    stars: int
    paths: int
    cherry_plus: int
    matchings: int


def edge_triples(g: SimilarityGraph) -> EdgeTriples:
    n, m = g.n, g.edge_count
    d = g.degrees.astype(np.int64)
    u, v = g.edges[:, 0], g.edges[:, 1]
    adj = sparse.csr_matrix((np.ones(m), (u, v)), shape=(n, n))
    adj = adj + adj.T
    tri = int(round((adj @ adj).multiply(adj).sum() / 6))
    cherries = int(np.sum(d * (d - 1) // 2))
    stars = int(np.sum(d * (d - 1) * (d - 2) // 6))
    paths = int(np.sum((d[u] - 1) * (d[v] - 1))) - 3 * tri
    # each unordered triple contributes its number of adjacent edge pairs
    cherry_plus = cherries * (m - 2) - 3 * tri - 3 * stars - 2 * paths
    matchings = m * (m - 1) * (m - 2) // 6 - tri - stars - paths - cherry_plus
    adjacent = int(np.sum(d * d)) - 2 * m
    return EdgeTriples(m, adjacent, m * (m - 1) - adjacent, tri, stars, paths,
                       cherry_plus, matchings)


def _falling(t, k1: int, k2: int, n: int):
    """P(k1 given nodes in group 1 and k2 others in group 2), group 1 of size t."""
    t = np.asarray(t, dtype=np.float64)
    if k1 + k2 > n:
        return np.zeros_like(t)
    out = np.ones_like(t)
    for i in range(k1):
        out = out * (t - i) / (n - i)
    for i in range(k2):
        out = out * (n - t - i) / (n - k1 - i)
    return out


def _raw_third(g: SimilarityGraph, t):
    """E[R1^3], E[R1^2 R2], E[R1 R2^2], E[R2^3] at group-1 sizes ``t``."""
    c, n = edge_triples(g), g.n
    t = np.asarray(t, dtype=np.float64)

    def same(s):
        return (c.edges * _falling(s, 2, 0, n)
                + (3 * c.adjacent + 6 * c.triangles) * _falling(s, 3, 0, n)
                + (3 * c.disjoint + 6 * (c.stars + c.paths)) * _falling(s, 4, 0, n)
                + 6 * c.cherry_plus * _falling(s, 5, 0, n)
                + 6 * c.matchings * _falling(s, 6, 0, n))

    def mixed(s):
        # two (possibly equal) edges in group 1, one in group 2 disjoint from both
        return (c.disjoint * _falling(s, 2, 2, n)
                + 2 * c.cherry_plus * _falling(s, 3, 2, n)
                + 6 * c.matchings * _falling(s, 4, 2, n))

    return same(t), mixed(t), mixed(n - t), same(n - t)


def third_moments(g: SimilarityGraph, ts=None, method: str = "auto", B: int = 2000,
                  seed: int = 0, threads: int = 1) -> ThirdMoments:
    """Third moments of the standardized statistics.

    ``exact`` averages over every assignment of nodes to the two groups
    (equivalent to averaging over all ``n!`` orderings); ``analytic`` uses
    closed forms in edge-triple counts; ``monte-carlo`` averages over ``B``
    seeded random orderings, standardizing with the analytic mean and
    variance. ``auto`` is exact for n <= 9 and analytic otherwise.
    """
    n = g.n
    if n < 4:
        raise GraphError("third moments need n >= 4")
    ts = np.arange(1, n) if ts is None else np.unique(np.asarray(ts, dtype=np.int64))
    if ts.size and (ts.min() < 1 or ts.max() > n - 1):
        raise GraphError("t must lie in [1, n-1]")
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "analytic"
    m = g.edge_count
    all_t = np.arange(n + 1)
    mom = moment_arrays(n, g.edge_count, g.sum_sq_degrees, all_t)
    gw = np.full(n + 1, np.nan)
    gd = np.full(n + 1, np.nan)

    if method == "exact":
        if n > EXACT_MAX_N:
            raise GraphError(f"exact third moments are limited to n <= {EXACT_MAX_N}; use analytic or monte-carlo")
        masks = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
        size = masks.sum(axis=1)
        u, v = g.edges[:, 0], g.edges[:, 1]
        r1 = (masks[:, u] & masks[:, v]).sum(axis=1).astype(np.float64)
        r2 = (~masks[:, u] & ~masks[:, v]).sum(axis=1).astype(np.float64)
        for t in ts:
            sel = size == t
            mt = {k: (val[t] if np.ndim(val) else val) for k, val in mom.items()}
            zw, zd = _standardized(r1[sel], r2[sel], n, mt, float(t))
            gw[t] = np.mean(zw**3) if positive_variance(mt["VarRw"], m) else np.nan
            gd[t] = np.mean(zd**3) if positive_variance(mt["VarRdiff"], m) else np.nan
        return ThirdMoments(n, gw, gd, "exact")

    if method == "analytic":
        e111, e112, e122, e222 = _raw_third(g, ts)
        mt = {k: (val[ts] if np.ndim(val) else val) for k, val in mom.items()}
        q = (n - ts - 1) / (n - 2.0)
        p = (ts - 1) / (n - 2.0)
        erw3 = q**3 * e111 + 3 * q * q * p * e112 + 3 * q * p * p * e122 + p**3 * e222
        erd3 = e111 - 3 * e112 + 3 * e122 - e222
        vw = np.broadcast_to(mt["VarRw"], ts.shape)
        vd = np.broadcast_to(mt["VarRdiff"], ts.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            cw = (erw3 - 3 * mt["ERw"] * vw - mt["ERw"] ** 3) / vw**1.5
            cd = (erd3 - 3 * mt["ERdiff"] * vd - mt["ERdiff"] ** 3) / vd**1.5
        gw[ts] = np.where(positive_variance(vw, m), cw, np.nan)
        gd[ts] = np.where(positive_variance(vd, m), cd, np.nan)
        return ThirdMoments(n, gw, gd, "analytic")

    if method != "monte-carlo":
        raise ValueError(f"unknown third-moment method {method!r}")
    if B < 200:
        raise ValueError("monte-carlo third moments need B >= 200")
    indptr, indices = g.csr
    tt = np.arange(1, n)
    mt = {k: (val[1:n] if np.ndim(val) else val) for k, val in mom.items()}
    bounds = [(s, min(s + CHUNK, B)) for s in range(0, B, CHUNK)]

    def run(bound):
        orders = replicate_orders(n, seed, bound[0], bound[1], stream=STREAM_THIRD_MOMENTS)
        r1, r2 = kernels.single_counts_batch(indptr, indices, orders)
        zw, zd = _standardized(r1[:, 1:n].astype(float), r2[:, 1:n].astype(float), n, mt, tt)
        return (zw**3).sum(0), (zd**3).sum(0), (zw**6).sum(0), (zd**6).sum(0)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    s3w, s3d, s6w, s6d = (np.sum([p[i] for p in parts], axis=0) for i in range(4))
    m3w, m3d = s3w / B, s3d / B
    sew = np.sqrt(np.maximum(s6w / B - m3w**2, 0) / B)
    sed = np.sqrt(np.maximum(s6d / B - m3d**2, 0) / B)
    keep_w = np.isin(tt, ts) & positive_variance(mt["VarRw"], m)
    keep_d = np.isin(tt, ts) & positive_variance(mt["VarRdiff"], m)
    gw[1:n] = np.where(keep_w, m3w, np.nan)
    gd[1:n] = np.where(keep_d, m3d, np.nan)
    sw = np.full(n + 1, np.nan)
    sd = np.full(n + 1, np.nan)
    sw[1:n] = np.where(keep_w, sew, np.nan)
    sd[1:n] = np.where(keep_d, sed, np.nan)
    return ThirdMoments(n, gw, gd, "monte-carlo", B, seed, sw, sd)


@dataclass(frozen=True)
class TailQuery:
    statistic: str
    alternative: str
    b: float
    n: int
    window: tuple
    skew_corrected: bool = False
    third: ThirdMoments | None = None

    def __post_init__(self):
        if self.statistic not in TAIL_STATISTICS:
            raise ValueError(f"statistic must be one of {TAIL_STATISTICS}, got {self.statistic!r}")
        if self.alternative not in ("single", "interval"):
            raise ValueError(f"unknown alternative {self.alternative!r}")
        lo, hi = self.window
        if self.alternative == "single" and not 0 < lo < hi < self.n:
            raise ValueError(f"need 0 < n0 < n1 < n, got {self.window} with n={self.n}")
        if self.alternative == "interval" and not 0 < lo <= hi < self.n:
            raise ValueError(f"need 0 < l0 <= l1 < n, got {self.window} with n={self.n}")
        if not math.isfinite(self.b):
            raise ValueError("threshold b must be finite")
        if self.skew_corrected:
            if self.statistic == "S":
                raise ValueError("skewness correction is not available for S")
            if self.third is None:
                raise ValueError("skewness correction needs ThirdMoments")
            if self.third.n != self.n:
                raise ValueError("ThirdMoments were computed for a different n")


@dataclass
class PValueReport:
    p: float
    method: str
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _quad(f, a, b, diag, label):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info, *rest = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-8,
                                               limit=200, full_output=1)
    diag[label] = {"nodes": int(info["neval"]), "abs_error": float(err), "converged": not rest}
    return val


# the prefactor b^k phi(b) (or b^k e^{-b/2}) peaks here; below, the tail is held flat
_B_FLOOR = {("single", "gauss"): 1.0, ("interval", "gauss"): math.sqrt(3.0),
            ("single", "chi2"): 2.0, ("interval", "chi2"): 4.0}


def _gauss_tail(b, n, lo, hi, alternative, hfun, two_sided, diag, label):
    if alternative == "single":
        f = lambda x: hfun(x) * nu(b * math.sqrt(2.0 * hfun(x) / n))
        return (2 if two_sided else 1) * b * _phi(b) * _quad(f, lo / n, hi / n, diag, label)
    f = lambda x: (hfun(x) * nu(b * math.sqrt(2.0 * hfun(x) / n))) ** 2 * (1 - x)
    return (2 if two_sided else 1) * b**3 * _phi(b) * _quad(f, lo / n, hi / n, diag, label)


def _s_tail(b, n, lo, hi, alternative, diag, n_omega=N_OMEGA):
    omega = 2 * np.pi * np.arange(n_omega) / n_omega
    sin2, cos2 = np.sin(omega) ** 2, np.cos(omega) ** 2

    def inner(x):
        u = h_w(n, x) * sin2 + h_diff(x) * cos2
        val = u * nu(np.sqrt(2.0 * b * u / n))
        if alternative == "interval":
            val = val * val * (1 - x)
        return 2 * np.pi * val.mean()

    integral = _quad(inner, lo / n, hi / n, diag, "S")
    diag["S"]["omega_nodes"] = n_omega
    if alternative == "single":
        return b * math.exp(-b / 2) / (2 * math.pi) * integral
    return b * b * math.exp(-b / 2) / math.pi * integral


def _fill_linear(t, values, bad, n, k=EXTRAPOLATION_POINTS):
    """Replace ``values[bad]`` by a line fitted to the nearest ``k`` good
    points in the same half of the sequence."""
    out = values.copy()
    good = ~bad
    left = t <= n / 2
    for side in (left, ~left):
        targets = np.flatnonzero(bad & side)
        if not targets.size:
            continue
        pool = np.flatnonzero(good & side)
        if not pool.size:
            pool = np.flatnonzero(good)
        if not pool.size:
            out[targets] = np.nan
            continue
        for i in targets:
            near = pool[np.argsort(np.abs(t[pool] - t[i]), kind="stable")[:k]]
            if near.size >= 2:
                slope, icpt = np.polyfit(t[near].astype(float), values[near], 1)
                out[i] = slope * t[i] + icpt
            else:
                out[i] = values[near[0]]
    return out


def _skew_factor(gamma, b, t, n):
    """K(t) multipliers with extrapolation where the tilt is undefined."""
    theta = theta_b(gamma, b)
    theta = np.atleast_1d(theta).astype(float)
    bad = ~np.isfinite(theta)
    theta = _fill_linear(t, theta, bad, n) if bad.any() else theta
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        one = 1.0 + gamma * theta
        logk = 0.5 * (b - theta) ** 2 + gamma * theta**3 / 6.0 - 0.5 * np.log(one)
    bad_k = ~np.isfinite(logk)
    if bad_k.any():
        logk = _fill_linear(t, logk, bad_k, n)
    extrap = bad | bad_k
    return logk, theta, extrap


def _skew_tail(b, n, lo, hi, alternative, gamma, hfun, diag, label):
    """One-sided skew-corrected tail summed on the integer grid of t."""
    t = np.arange(lo, hi + 1)
    x = t / n
    g = gamma[t]
    missing = ~np.isfinite(g)
    if missing.all():
        raise ValueError(f"no third moments available in window {lo}..{hi}")
    if missing.any():
        g = _fill_linear(t, g, missing, n)
    logk, theta, extrap = _skew_factor(g, b, t, n)
    h = hfun(x)
    base = h * nu(b * np.sqrt(2.0 * h / n))
    # the prefactor is folded in on the log scale so that large b cannot overflow
    log_phi = -0.5 * b * b - 0.5 * math.log(2 * math.pi)
    if alternative == "single":
        integrand = np.exp(logk + math.log(b) + log_phi) * base
    else:
        integrand = np.exp(logk + 3 * math.log(b) + log_phi) * base**2 * (1 - x)
    integral = integrate.trapezoid(integrand, x) if len(t) > 1 else integrand[0] / n
    diag[label] = {
        "nodes": int(len(t)),
        "gamma": g.tolist(),
        "theta": theta.tolist(),
        "extrapolated_t": t[extrap].tolist(),
    }
    return float(integral)


def _interval_gamma(third: ThirdMoments, which: str) -> np.ndarray:
    # Z_w is symmetric in the two groups; Z_diff flips sign, and the interval
    # version has outside (size n - m) as group 1
    n = third.n
    if which == "w":
        return third.gamma_w
    out = np.full(n + 1, np.nan)
    out[1:n] = third.gamma_diff[n - np.arange(1, n)]
    return out


def tail_report(q: TailQuery) -> PValueReport:
    n, (lo, hi), alt = q.n, q.window, q.alternative
    diag: dict = {}
    gauss_b = max(q.b, _B_FLOOR[(alt, "gauss")])
    hw = lambda x: h_w(n, x)

    def p_w():
        if q.skew_corrected:
            gamma = q.third.gamma_w if alt == "single" else _interval_gamma(q.third, "w")
            return _skew_tail(gauss_b, n, lo, hi, alt, gamma, hw, diag, "Zw")
        return _gauss_tail(gauss_b, n, lo, hi, alt, hw, False, diag, "Zw")

    def p_diff():
        if q.skew_corrected:
            gamma = q.third.gamma_diff if alt == "single" else _interval_gamma(q.third, "diff")
            up = _skew_tail(gauss_b, n, lo, hi, alt, gamma, h_diff, diag, "Zdiff+")
            down = _skew_tail(gauss_b, n, lo, hi, alt, -gamma, h_diff, diag, "Zdiff-")
            return up + down
        return _gauss_tail(gauss_b, n, lo, hi, alt, h_diff, True, diag, "Zdiff")

    clamp = lambda p: float(min(1.0, max(0.0, p)))
    if q.statistic == "S":
        p = clamp(_s_tail(max(q.b, _B_FLOOR[(alt, "chi2")]), n, lo, hi, alt, diag))
    elif q.statistic == "Zw":
        p = clamp(p_w())
    elif q.statistic == "Zdiff":
        p = clamp(p_diff())
    else:
        p = clamp(1.0 - (1.0 - clamp(p_diff())) * (1.0 - clamp(p_w())))
    method = "skew-corrected" if q.skew_corrected else "asymptotic"
    msgs = [f"quadrature for {k} did not converge" for k, d in diag.items()
            if not d.get("converged", True)]
    extrap = sorted({t for d in diag.values() for t in d.get("extrapolated_t", [])})
    if extrap:
        msgs.append(f"tilt extrapolated at {len(extrap)} candidate(s) (t={extrap[0]}..{extrap[-1]})")
    if q.skew_corrected:
        diag["third_moments"] = q.third.provenance()
    return PValueReport(p, method, diag, msgs)


def tail_single(q: TailQuery) -> PValueReport:
    if q.alternative != "single":
        raise ValueError("tail_single needs a single change-point query")
    return tail_report(q)


def tail_interval(q: TailQuery) -> PValueReport:
    if q.alternative != "interval":
        raise ValueError("tail_interval needs a changed-interval query")
    return tail_report(q)


def tail_probability(statistic: str, b: float, n: int, window: tuple, alternative: str = "single",
                     third: ThirdMoments | None = None) -> float:
    """Convenience wrapper returning the approximate p-value only."""
    q = TailQuery(statistic, alternative, float(b), n, tuple(window), third is not None, third)
    return tail_report(q).p


def critical_value(statistic: str, alpha: float, n: int, window: tuple, alternative: str = "single",
                   third: ThirdMoments | None = None, xtol: float = 1e-4) -> float:
    """Threshold ``b`` in [0, 50] with approximate tail probability ``alpha``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    f = lambda b: tail_probability(statistic, b, n, window, alternative, third) - alpha
    lo, hi = 0.0, 50.0
    if f(lo) < 0 or f(hi) > 0:
        raise ValueError(f"alpha={alpha} is outside the achievable range of the approximation")
    return float(optimize.brentq(f, lo, hi, xtol=xtol))

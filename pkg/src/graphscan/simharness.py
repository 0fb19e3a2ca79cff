"""Simulated sequences with a change and power/accuracy tallies.

Each trial draws its data and its permutation seed from streams keyed by
``(seed, trial)``, so a run is reproducible and trials can run in any order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .graph import build_kmst, compute_distances
from .permutation import PermutationPlan, observed_maxima, perm_test_multi, replicate_orders
from .pvalue import TAIL_STATISTICS, tail_probability, third_moments
from .scanstats import ScanResult, _canonical, scan_values

FAMILIES = ("gaussian", "student-t5", "lognormal")
GRAPH_STATISTICS = ("Z", "Zw", "Zdiff", "S", "M")
BASELINES = ("HT", "GLR")
STREAM_DATA = 2
STREAM_TRIAL_SEED = 3
ACCURACY_RADIUS = 20


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    """Change-point design.

    The post-change law shifts every coordinate by ``delta / sqrt(d)`` and
    multiplies the spread of the first ``scale_dims`` coordinates by
    ``sigma``; ``scale_dims=None`` means ``floor(d / 5)``. With ``tau2`` set,
    only observations ``tau+1..tau2`` follow the post-change law.
    """

    n: int = 200
    d: int = 10
    tau: int = 100
    tau2: int | None = None
    family: str = "gaussian"
    delta: float = 0.0
    sigma: float = 1.0
    scale_dims: int | None = None
    k: int = 5
    metric: str = "euclidean"
    trials: int = 100
    seed: int = 0
    n0: int = 20

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise ScenarioError("invalid scenario: " + "; ".join(errs))

    def problems(self) -> list[str]:
        errs = []
        if self.n < 6:
            errs.append(f"n={self.n} must be at least 6")
        if self.d < 1:
            errs.append(f"d={self.d} must be positive")
        if not 0 < self.tau < self.n:
            errs.append(f"tau={self.tau} must satisfy 0 < tau < n")
        if self.tau2 is not None and not self.tau < self.tau2 <= self.n:
            errs.append(f"tau2={self.tau2} must satisfy tau < tau2 <= n")
        if self.family not in FAMILIES:
            errs.append(f"family={self.family!r} not in {FAMILIES}")
        if not self.delta >= 0:
            errs.append(f"delta={self.delta} must be nonnegative")
        if not self.sigma > 0:
            errs.append(f"sigma={self.sigma} must be positive")
        if self.scale_dims is not None and not 0 <= self.scale_dims <= self.d:
            errs.append(f"scale_dims={self.scale_dims} must lie in [0, d]")
        if self.k < 1:
            errs.append(f"k={self.k} must be positive")
        if self.metric not in ("euclidean", "l1"):
            errs.append(f"metric={self.metric!r} must be 'euclidean' or 'l1'")
        if self.trials < 1:
            errs.append(f"trials={self.trials} must be positive")
        if not 1 <= self.n0 < self.n / 2:
            errs.append(f"n0={self.n0} must satisfy 1 <= n0 < n/2")
        return errs

    @property
    def n_scaled(self) -> int:
        return self.d // 5 if self.scale_dims is None else self.scale_dims

    @property
    def alternative(self) -> str:
        return "single" if self.tau2 is None else "interval"

    @property
    def window(self) -> tuple:
        """(n0, n - n0); for an interval these are the length bounds."""
        return (self.n0, self.n - self.n0)


def _base_draw(family: str, rng: np.random.Generator, shape) -> np.ndarray:
    if family == "gaussian":
        return rng.standard_normal(shape)
    if family == "student-t5":
        return rng.standard_t(5, shape)
    return np.exp(rng.standard_normal(shape))


def trial_rng(sc: Scenario, trial: int, stream: int = STREAM_DATA) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(sc.seed), spawn_key=(stream, int(trial))))


def trial_seed(sc: Scenario, trial: int) -> int:
    ss = np.random.SeedSequence(entropy=int(sc.seed), spawn_key=(STREAM_TRIAL_SEED, int(trial)))
    return int(ss.generate_state(1, np.uint64)[0])


def generate(sc: Scenario, trial: int) -> np.ndarray:
    """``n x d`` observations for one trial."""
    y = _base_draw(sc.family, trial_rng(sc, trial), (sc.n, sc.d))
    if sc.alternative == "single":
        after = slice(sc.tau, sc.n)
    else:
        after = slice(sc.tau, sc.tau2)
    if sc.n_scaled:
        y[after, :sc.n_scaled] *= sc.sigma
    if sc.delta:
        y[after] += sc.delta / math.sqrt(sc.d)
    return y


def _prefix_scatter(y: np.ndarray):
    # cumulative sums and uncentered cross-products for prefixes 0..n
    n, d = y.shape
    s1 = np.zeros((n + 1, d))
    np.cumsum(y, axis=0, out=s1[1:])
    s2 = np.zeros((n + 1, d, d))
    np.cumsum(y[:, :, None] * y[:, None, :], axis=0, out=s2[1:])
    return s1, s2


def hotelling_profile(obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """HT(t) for t = 1..n-1 with the pooled within-group covariance (divisor
    n-2), and a validity mask."""
    y = np.asarray(obs, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    n, d = y.shape
    t = np.arange(1, n)
    if d >= n - 2:
        return np.full(n - 1, np.nan), np.zeros(n - 1, dtype=bool)
    yc = y - y.mean(axis=0)
    total = yc.T @ yc
    s1 = np.cumsum(yc, axis=0)[:-1]
    # mean difference of the two groups, using centered data
    delta = s1 / t[:, None] + s1 / (n - t)[:, None]
    try:
        chol = np.linalg.cholesky(total)
    except np.linalg.LinAlgError:
        return np.full(n - 1, np.nan), np.zeros(n - 1, dtype=bool)
    half = np.linalg.solve(chol, delta.T)
    quad = np.einsum("ij,ij->j", half, half)
    c = t * (n - t) / n
    a = c * quad
    # pooled scatter equals total - c * delta delta^T; positive definite iff a < 1
    valid = 1 - a > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        ht = np.where(valid, (n - 2) * a / (1 - a), np.nan)
    return ht, valid


def glr_profile(obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """GLR(t) = n log|S_n| - t log|S_t| - (n-t) log|S*_t| with maximum-likelihood
    covariances; valid where both sides have more than d points and full rank."""
    y = np.asarray(obs, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    n, d = y.shape
    y = y - y.mean(axis=0)
    s1, s2 = _prefix_scatter(y)
    t = np.arange(1, n)
    left = s2[t] - s1[t][:, :, None] * s1[t][:, None, :] / t[:, None, None]
    rs1 = s1[n] - s1[t]
    rs2 = s2[n] - s2[t]
    right = rs2 - rs1[:, :, None] * rs1[:, None, :] / (n - t)[:, None, None]
    sign_l, ld_l = np.linalg.slogdet(left / t[:, None, None])
    sign_r, ld_r = np.linalg.slogdet(right / (n - t)[:, None, None])
    sign_n, ld_n = np.linalg.slogdet(s2[n] / n)
    valid = (t > d) & (n - t > d) & (sign_l > 0) & (sign_r > 0) & (sign_n > 0)
    valid &= np.isfinite(ld_l) & np.isfinite(ld_r)
    glr = np.where(valid, n * ld_n - t * ld_l - (n - t) * ld_r, np.nan)
    return glr, valid


_BASELINE_PROFILES = {"HT": hotelling_profile, "GLR": glr_profile}


def _baseline_scan(which: str, obs, window) -> ScanResult:
    values, valid = _BASELINE_PROFILES[which](obs)
    n = len(values) + 1
    return scan_values("single", np.arange(1, n), values, valid, window, which)


def hotelling_scan(obs, window) -> ScanResult:
    return _baseline_scan("HT", obs, window)


def glr_scan(obs, window) -> ScanResult:
    return _baseline_scan("GLR", obs, window)


def _baseline_window_max(which: str, obs, window) -> float:
    values, valid = _BASELINE_PROFILES[which](obs)
    t = np.arange(1, len(values) + 1)
    ok = valid & (t >= window[0]) & (t <= window[1])
    return float(values[ok].max()) if ok.any() else -np.inf


@dataclass
class TrialOutcome:
    p: dict
    location: dict


@dataclass
class PowerRow:
    """Per statistic: rejections at ``alpha`` and how many of those also
    located the change within ``ACCURACY_RADIUS``."""

    scenario: Scenario
    statistics: tuple
    rejections: dict
    accurate: dict
    trials: int
    alpha: float = 0.05
    method: str = "perm"
    B: int = 200

    def to_tsv(self) -> str:
        sc = asdict(self.scenario)
        head = " ".join(f"{k}={v}" for k, v in sc.items())
        lines = [f"# {head} alpha={self.alpha} pvalue={self.method} B={self.B}",
                 "statistic\trejections\taccurate\ttrials"]
        for s in self.statistics:
            lines.append(f"{s}\t{self.rejections[s]}\t{self.accurate[s]}\t{self.trials}")
        return "\n".join(lines) + "\n"

    def write_tsv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_tsv())


def _close(sc: Scenario, loc) -> bool:
    if loc is None or loc == ():
        return False
    if sc.alternative == "single":
        return abs(int(loc[0]) - sc.tau) <= ACCURACY_RADIUS
    return abs(int(loc[0]) - sc.tau) <= ACCURACY_RADIUS and abs(int(loc[1]) - sc.tau2) <= ACCURACY_RADIUS


def _baseline_perm_p(which: str, obs, window, B: int, seed: int) -> tuple[float, tuple]:
    res = _baseline_scan(which, obs, window)
    orders = replicate_orders(len(obs), seed, 0, B)
    maxima = np.array([_baseline_window_max(which, obs[o], window) for o in orders])
    tol = 1e-9 * max(1.0, abs(res.value))
    return (1 + int(np.sum(maxima >= res.value - tol))) / (B + 1), res.location


def run_trial(sc: Scenario, trial: int, statistics, method: str = "perm", B: int = 200) -> TrialOutcome:
    obs = generate(sc, trial)
    window = sc.window
    seed = trial_seed(sc, trial)
    graph_stats = [s for s in statistics if s in GRAPH_STATISTICS]
    p, loc = {}, {}
    if graph_stats:
        g = build_kmst(compute_distances(obs, sc.metric), sc.k)
        analytic = [s for s in graph_stats if method != "perm" and s in TAIL_STATISTICS]
        permuted = [s for s in graph_stats if s not in analytic]
        plan = PermutationPlan(B=B, seed=seed, alternative=sc.alternative, window=window)
        if permuted:
            for s, res in perm_test_multi(g, plan, permuted).items():
                p[s], loc[s] = res.p, res.location
        if analytic:
            obs_max = observed_maxima(g, analytic, sc.alternative, window)
            third = third_moments(g) if method == "skew" else None
            for s in analytic:
                value, where = obs_max[_canonical(s)]
                use = third if s != "S" else None
                p[s] = tail_probability(s, value, sc.n, window, sc.alternative, use)
                loc[s] = where
    for s in statistics:
        if s in BASELINES:
            if sc.alternative != "single":
                raise ScenarioError(f"{s} is only defined for a single change-point")
            try:
                p[s], loc[s] = _baseline_perm_p(s, obs, window, B, seed)
            except ValueError:
                # no valid candidate, as for d >= n - 2
                p[s], loc[s] = float("nan"), None
    return TrialOutcome(p, loc)


def run_power(sc: Scenario, statistics=("Z", "Zw", "S", "M"), pvalue_method: str = "perm",
              B: int = 200, alpha: float = 0.05, threads: int = 1) -> PowerRow:
    """Rejection and accurate-location counts over ``sc.trials`` trials."""
    statistics = tuple(statistics)
    for s in statistics:
        if s not in GRAPH_STATISTICS + BASELINES:
            raise ScenarioError(f"unknown statistic {s!r}")
    if pvalue_method not in ("perm", "asymptotic", "skew"):
        raise ScenarioError(f"unknown p-value method {pvalue_method!r}")
    job = lambda i: run_trial(sc, i, statistics, pvalue_method, B)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(job, range(sc.trials)))
    else:
        outcomes = [job(i) for i in range(sc.trials)]
    rej = {s: 0 for s in statistics}
    acc = {s: 0 for s in statistics}
    for out in outcomes:
        for s in statistics:
            if out.p[s] <= alpha:
                rej[s] += 1
                acc[s] += _close(sc, out.location[s])
    return PowerRow(sc, statistics, rej, acc, sc.trials, alpha, pvalue_method, B)


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(Scenario)}
    if name not in types:
        raise ScenarioError(f"unknown scenario field {name!r}")
    kind = types[name]
    if raw.lower() in ("none", "") and "None" in str(kind):
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ScenarioError(f"field {name}: cannot parse {raw!r}") from None
    return raw


def parse_scenario(text: str, **overrides) -> Scenario:
    """Scenario from ``key=value`` lines; ``#`` starts a comment."""
    vals = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        vals[key] = _coerce(key, raw)
    vals.update({k: v for k, v in overrides.items() if v is not None})
    return Scenario(**vals)


def load_scenario(path, **overrides) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read(), **overrides)

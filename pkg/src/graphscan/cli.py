"""Command-line front end: ``graphscan detect | critical | simulate``.

Exit codes: 0 report produced, 2 usage error, 3 malformed input file,
4 infeasible window, 5 conflicting options, 6 analysis failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io
from .graph import GraphError, build_kmst, compute_distances, graph_diagnostics
from .permutation import PermutationPlan, perm_test
from .pvalue import TailQuery, critical_value, tail_report, third_moments
from .scanstats import interval_profile, scan, single_profile
from .simharness import Scenario, ScenarioError, load_scenario, run_power

EXIT_OK, EXIT_USAGE, EXIT_FILE, EXIT_WINDOW, EXIT_CONFLICT, EXIT_ANALYSIS = 0, 2, 3, 4, 5, 6
STAT_NAMES = {"z": "Z", "zw": "Zw", "s": "S", "m": "M"}
DEFAULT_N0 = 20


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class DetectionReport:
    input: dict
    graph: dict
    statistic: str
    alternative: str
    window: list
    max_value: float
    location: list
    pvalues: dict
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DetectionReport":
        return cls.from_dict(json.loads(text))


def default_n0(n: int) -> int:
    """20, or n // 4 when the sequence is too short for a 20-point margin."""
    return DEFAULT_N0 if n >= 4 * DEFAULT_N0 else max(1, n // 4)


def _load_graph(args):
    """Graph and input descriptor from exactly one of the three input flags."""
    if args.edges is not None:
        if args.n is None:
            raise CliError("--edges requires --n", EXIT_USAGE)
        if args.metric is not None or args.k is not None:
            raise CliError("--metric/--k apply to --input and --distances, not --edges", EXIT_CONFLICT)
        g = io.read_edges(args.edges, args.n)
        return g, {"source": str(args.edges), "kind": "edges", "n": g.n, "d": None}
    if args.n is not None:
        raise CliError("--n is only used with --edges", EXIT_CONFLICT)
    k = 5 if args.k is None else args.k
    if args.distances is not None:
        if args.metric is not None:
            raise CliError("--metric does not apply to a precomputed distance matrix", EXIT_CONFLICT)
        dist = io.read_distances(args.distances)
        desc = {"source": str(args.distances), "kind": "distances", "n": dist.n, "d": None}
    else:
        obs, _ = io.read_observations(args.input)
        dist = compute_distances(obs, args.metric or "euclidean")
        desc = {"source": str(args.input), "kind": "observations", "n": obs.shape[0], "d": obs.shape[1]}
    try:
        g = build_kmst(dist, k)
    except GraphError as exc:
        raise CliError(str(exc), EXIT_CONFLICT) from None
    return g, desc


def _window(args, n: int) -> tuple:
    if args.alt == "single":
        if args.l0 is not None or args.l1 is not None:
            raise CliError("--l0/--l1 apply to --alt interval", EXIT_CONFLICT)
        lo = default_n0(n) if args.n0 is None else args.n0
        hi = n - lo if args.n1 is None else args.n1
        if not 1 <= lo < hi <= n - 1:
            raise CliError(f"infeasible window n0={lo}, n1={hi} for n={n}", EXIT_WINDOW)
    else:
        if args.n0 is not None or args.n1 is not None:
            raise CliError("--n0/--n1 apply to --alt single", EXIT_CONFLICT)
        lo = default_n0(n) if args.l0 is None else args.l0
        hi = n - lo if args.l1 is None else args.l1
        if not 1 <= lo <= hi <= n - 1:
            raise CliError(f"infeasible window l0={lo}, l1={hi} for n={n}", EXIT_WINDOW)
    return (lo, hi)


def run_detect(args) -> tuple[DetectionReport, object]:
    stat = STAT_NAMES[args.stat]
    want_analytic = args.pvalue in ("asymptotic", "skew", "all")
    perms = args.perms
    if perms is None:
        perms = 1000 if args.pvalue in ("perm", "all") else 0
    if args.pvalue == "perm" and perms == 0:
        raise CliError("--pvalue perm needs --perms > 0", EXIT_CONFLICT)
    if stat == "Z" and perms == 0:
        raise CliError("statistic z has no analytic p-value; use --pvalue perm or --perms > 0",
                       EXIT_CONFLICT)
    if perms < 0 or (args.block is not None and args.block < 1):
        raise CliError("--perms must be >= 0 and --block >= 1", EXIT_USAGE)

    g, desc = _load_graph(args)
    n = g.n
    window = _window(args, n)
    stats = graph_diagnostics(g)
    warnings = list(stats.warnings())
    if args.alt == "single":
        prof = single_profile(g)
    else:
        prof = interval_profile(g, window[0], window[1])
    warnings += prof.warnings
    try:
        res = scan(prof, stat, window)
    except GraphError as exc:
        raise CliError(str(exc), EXIT_ANALYSIS) from None
    n_invalid = int(np.sum(~np.asarray(prof.valid)))
    if n_invalid:
        warnings.append(f"{n_invalid} candidate(s) flagged invalid (singular covariance)")

    pvals = {"asymptotic": None, "skew_corrected": None, "permutation": None}
    if want_analytic and stat == "Z":
        warnings.append("no analytic approximation for Z; only the permutation p-value is reported")
    elif want_analytic:
        if args.alt == "single" and not window[0] < window[1]:
            raise CliError("analytic p-values need n0 < n1", EXIT_WINDOW)
        q = TailQuery(stat, args.alt, float(res.value), n, window)
        rep = tail_report(q)
        warnings += rep.warnings
        pvals["asymptotic"] = rep.p
        if args.pvalue in ("skew", "all"):
            if stat == "S":
                warnings.append("skewness correction is not defined for S; skew_corrected is null")
            else:
                third = third_moments(g, threads=args.threads)
                qs = TailQuery(stat, args.alt, float(res.value), n, window, True, third)
                rs = tail_report(qs)
                warnings += rs.warnings
                pvals["skew_corrected"] = rs.p
                pvals["third_moments"] = third.provenance()
    if perms > 0:
        plan = PermutationPlan(B=perms, seed=args.seed, block_size=args.block or 1, statistic=stat,
                               alternative=args.alt, window=window, threads=args.threads)
        try:
            pr = perm_test(g, plan)
        except GraphError as exc:
            raise CliError(str(exc), EXIT_ANALYSIS) from None
        pvals["permutation"] = {"p": pr.p, "B": pr.B, "seed": pr.seed, "block_size": pr.block_size}
    deg = g.degrees
    graph = {"type": g.kind, "k": g.k, "edges": g.edge_count, "sum_sq_degrees": g.sum_sq_degrees,
             "max_degree": int(deg.max()) if len(deg) else 0}
    report = DetectionReport(desc, graph, stat, args.alt, list(window), float(res.value),
                             [int(x) for x in res.location], pvals, warnings)
    return report, prof


def cmd_detect(args) -> int:
    report, prof = run_detect(args)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.profile:
        prof.to_tsv(args.profile)
    return EXIT_OK


def critical_table(stat: str, alphas, n: int, n0s, alternative: str = "single", g=None,
                   threads: int = 1) -> str:
    """Critical values laid out as rows A1 (and A2 with a graph) by n0 column."""
    third = third_moments(g, threads=threads) if g is not None and stat != "S" else None
    lines = ["alpha\trow\t" + "\t".join(f"n0={v}" for v in n0s)]
    for a in alphas:
        rows = [("A1", None)] + ([("A2", third)] if third is not None else [])
        for label, th in rows:
            vals = []
            for n0 in n0s:
                win = (n0, n - n0)
                vals.append(f"{critical_value(stat, a, n, win, alternative, th):.3f}")
            lines.append(f"{a:g}\t{label}\t" + "\t".join(vals))
    return "\n".join(lines) + "\n"


def cmd_critical(args) -> int:
    stat = STAT_NAMES[args.stat]
    if stat == "Z":
        raise CliError("no analytic critical values for z", EXIT_CONFLICT)
    g = None
    if args.input or args.distances or args.edges:
        if args.edges is not None and args.n is None:
            raise CliError("--edges requires --n", EXIT_USAGE)
        n_given = args.n
        if args.edges is None:
            args.n = None
        g, _ = _load_graph(args)
        if n_given is not None and n_given != g.n:
            raise CliError(f"--n {n_given} disagrees with the graph's n={g.n}", EXIT_CONFLICT)
        n = g.n
        if stat == "S":
            print("# skewness correction is not defined for S; only A1 is shown", file=sys.stderr)
    else:
        if args.n is None:
            raise CliError("critical needs --n or a graph input", EXIT_USAGE)
        if args.metric is not None or args.k is not None:
            raise CliError("--metric/--k need a graph input", EXIT_CONFLICT)
        n = args.n
    n0s = args.n0 or [default_n0(n)]
    for n0 in n0s:
        if args.alt == "single" and not 1 <= n0 < n - n0:
            raise CliError(f"infeasible window n0={n0} for n={n}", EXIT_WINDOW)
        if args.alt == "interval" and not 1 <= n0 <= n - n0:
            raise CliError(f"infeasible window l0={n0} for n={n}", EXIT_WINDOW)
    for a in args.alpha:
        if not 0 < a < 1:
            raise CliError(f"alpha={a} must lie in (0, 1)", EXIT_USAGE)
    try:
        text = critical_table(stat, args.alpha, n, n0s, args.alt, g, args.threads)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_ANALYSIS) from None
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    inline = {k: getattr(args, k) for k in ("n", "d", "tau", "tau2", "family", "delta", "sigma",
                                           "scale_dims", "k", "metric", "trials", "seed", "n0")}
    try:
        if args.scenario:
            sc = load_scenario(args.scenario, **inline)
        else:
            sc = Scenario(**{k: v for k, v in inline.items() if v is not None})
    except ScenarioError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    except OSError as exc:
        raise CliError(f"cannot read scenario: {exc}", EXIT_FILE) from None
    stats = []
    for s in args.stats.split(","):
        key = {"z": "Z", "zw": "Zw", "zdiff": "Zdiff", "s": "S", "m": "M",
               "ht": "HT", "glr": "GLR"}.get(s.strip().lower())
        if key is None:
            raise CliError(f"unknown statistic {s!r} in --stats", EXIT_USAGE)
        stats.append(key)
    try:
        row = run_power(sc, stats, args.pvalue, B=args.perms, alpha=args.alpha, threads=args.threads)
    except ScenarioError as exc:
        raise CliError(str(exc), EXIT_CONFLICT) from None
    text = row.to_tsv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_graph_inputs(p, required: bool):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--input", help="observation CSV, one row per observation")
    src.add_argument("--distances", help="n x n distance CSV")
    src.add_argument("--edges", help="edge-list TSV with 1-based node ids")
    p.add_argument("--n", type=int, help="node count (required with --edges)")
    p.add_argument("--metric", choices=("euclidean", "l1"), default=None)
    p.add_argument("--k", type=int, default=None, help="k for the k-MST (default 5)")


def build_parser() -> argparse.ArgumentParser:
    cores = os.cpu_count() or 1
    ap = argparse.ArgumentParser(prog="graphscan", description="Graph-based change-point scans.")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="scan a sequence for a change-point or changed interval")
    _add_graph_inputs(d, required=True)
    d.add_argument("--stat", choices=tuple(STAT_NAMES), default="m")
    d.add_argument("--alt", choices=("single", "interval"), default="single")
    for flag in ("--n0", "--n1", "--l0", "--l1"):
        d.add_argument(flag, type=int, default=None)
    d.add_argument("--pvalue", choices=("asymptotic", "skew", "perm", "all"), default="skew")
    d.add_argument("--perms", type=int, default=None, help="permutation replicates (0 = none)")
    d.add_argument("--block", type=int, default=None, help="block length for block permutation")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--out", help="report JSON path (default stdout)")
    d.add_argument("--profile", help="write the scan profile TSV here")
    d.add_argument("--threads", type=int, default=cores)
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("critical", help="analytic critical values")
    _add_graph_inputs(c, required=False)
    c.add_argument("--stat", choices=tuple(STAT_NAMES), default="m")
    c.add_argument("--alt", choices=("single", "interval"), default="single")
    c.add_argument("--n0", type=int, nargs="+", default=None, help="window margins (or l0 values)")
    c.add_argument("--alpha", type=float, nargs="+", default=[0.05])
    c.add_argument("--out")
    c.add_argument("--threads", type=int, default=cores)
    c.set_defaults(func=cmd_critical)

    s = sub.add_parser("simulate", help="power and location-accuracy study")
    s.add_argument("--scenario", help="key=value scenario file; flags below override it")
    for name, typ in (("n", int), ("d", int), ("tau", int), ("tau2", int), ("delta", float),
                      ("sigma", float), ("scale-dims", int), ("k", int), ("trials", int),
                      ("seed", int), ("n0", int)):
        s.add_argument(f"--{name}", type=typ, default=None)
    s.add_argument("--family", choices=("gaussian", "student-t5", "lognormal"), default=None)
    s.add_argument("--metric", choices=("euclidean", "l1"), default=None)
    s.add_argument("--stats", default="z,zw,s,m", help="comma list from z,zw,zdiff,s,m,ht,glr")
    s.add_argument("--pvalue", choices=("asymptotic", "skew", "perm"), default="perm")
    s.add_argument("--perms", type=int, default=200)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out")
    s.add_argument("--threads", type=int, default=cores)
    s.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", 1) < 1:
        print("graphscan: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"graphscan: error: {exc}", file=sys.stderr)
        return exc.code
    except io.InputFormatError as exc:
        print(f"graphscan: error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except OSError as exc:
        print(f"graphscan: error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except GraphError as exc:
        print(f"graphscan: error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())

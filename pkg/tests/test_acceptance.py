"""End-to-end acceptance checks, one test per criterion, each printing a
PASS/FAIL line. Fixtures (seeds, sizes) are fixed."""

import time

import numpy as np
import pytest

from graphscan.graph import build_kmst, compute_distances, graph_from_edges
from graphscan.permutation import PermutationPlan, perm_critical_value
from graphscan.pvalue import critical_value, h_w, nu, third_moments
from graphscan.scanstats import moments_interval, moments_single, scan, single_profile
from graphscan.simharness import Scenario, generate, run_power

from conftest import gaussian_mst, record
from oracles import permutation_moments, random_graph

N0S = (100, 75, 50, 25)
A1 = {
    "S": (13.10, 13.38, 13.70, 14.11),
    "Zw": (2.98, 3.02, 3.08, 3.14),
    "M": (3.23, 3.27, 3.32, 3.38),
}


def test_criterion_1_a1_critical_values():
    t0 = time.perf_counter()
    worst = 0.0
    got = {}
    for stat, want in A1.items():
        got[stat] = [critical_value(stat, 0.05, 1000, (n0, 1000 - n0)) for n0 in N0S]
        worst = max(worst, max(abs(a - b) for a, b in zip(got[stat], want)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and elapsed < 10
    shown = "; ".join(f"{s} " + "/".join(f"{v:.3f}" for v in vals) for s, vals in got.items())
    assert record(1, ok, f"{shown}; max |err| {worst:.4f}, {elapsed:.1f}s")


def _rel_ok(got, want, rtol=1e-10):
    want = float(want)
    return abs(got - want) <= rtol * max(1.0, abs(want))


def test_criterion_2_exhaustive_moments():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    bad, checked = [], 0
    for i in range(20):
        n = (5, 6, 7)[i % 3]
        edges = random_graph(rng, n)
        g = graph_from_edges(n, np.array(edges) + 1)
        third = third_moments(g, method="exact")
        for t in range(1, n):
            ref = permutation_moments(n, edges, t)
            ms = moments_single(g, t)
            pairs = [("ER1", ms.ER1), ("ER2", ms.ER2), ("S11", ms.Sigma[0, 0]),
                     ("S22", ms.Sigma[1, 1]), ("S12", ms.Sigma[0, 1]), ("ERw", ms.ERw),
                     ("VarRw", ms.VarRw), ("ERdiff", ms.ERdiff), ("VarRdiff", ms.VarRdiff)]
            for key, got in pairs:
                checked += 1
                if not _rel_ok(got, ref[key]):
                    bad.append((i, t, key))
            for key, got in (("gamma_w", third.gamma_w[t]), ("gamma_diff", third.gamma_diff[t])):
                checked += 1
                if ref[key] is None:
                    if not np.isnan(got):
                        bad.append((i, t, key))
                elif not _rel_ok(got, ref[key]):
                    bad.append((i, t, key))
        # interval moments, including the outside-group convention for R_diff
        for t1, t2 in ((0, 2), (1, n - 2), (2, n)):
            ref = permutation_moments(n, edges, None, interval=(t1, t2))
            ms = moments_interval(g, t1, t2)
            for key, got in (("ER1", ms.ER1), ("ER2", ms.ER2), ("S11", ms.Sigma[0, 0]),
                             ("S22", ms.Sigma[1, 1]), ("S12", ms.Sigma[0, 1]),
                             ("ERdiff", ms.ERdiff), ("VarRdiff", ms.VarRdiff)):
                checked += 1
                if not _rel_ok(got, ref[key]):
                    bad.append((i, (t1, t2), key))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    assert record(2, ok, f"{checked} moments checked, {len(bad)} mismatches, {elapsed:.1f}s"), bad[:5]


def test_criterion_3_quadratic_form_identity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        obs = rng.standard_normal((200, 5))
        g = build_kmst(compute_distances(obs), 5)
        prof = single_profile(g, rng.permutation(200))
        v = prof.valid
        s = prof.S[v]
        dev = np.abs(s - (prof.Zw[v] ** 2 + prof.Zdiff[v] ** 2)) / np.maximum(1, s)
        worst = max(worst, float(dev.max()))
    assert record(3, worst <= 1e-8, f"max |S - Zw^2 - Zdiff^2| / max(1, S) = {worst:.2e}")


def test_criterion_4_skew_direction():
    t0 = time.perf_counter()
    n, window = 300, (15, 285)
    _, g = gaussian_mst(n, 10, 0)
    plain = critical_value("Zw", 0.05, n, window)
    skew = critical_value("Zw", 0.05, n, window, third=third_moments(g))
    perm = perm_critical_value(g, PermutationPlan(B=5000, seed=0, statistic="Zw", window=window,
                                                  threads=8), 0.05)
    elapsed = time.perf_counter() - t0
    ok = skew > plain and abs(skew - perm) <= 0.08 and elapsed < 120
    detail = (f"uncorrected {plain:.3f}, skew-corrected {skew:.3f}, permutation {perm:.3f}, "
              f"|skew - perm| = {abs(skew - perm):.3f} (tolerance 0.08), {elapsed:.1f}s")
    assert record(4, ok, detail)


def _accurate_counts(n):
    sc = Scenario(n=n, d=100, tau=250, delta=1.4, k=5, trials=50, seed=2024)
    row = run_power(sc, ("Z", "Zw"), pvalue_method="perm", B=200, threads=8)
    return row.accurate


def test_criterion_5_location_accuracy_direction():
    t0 = time.perf_counter()
    a500, a750 = _accurate_counts(500), _accurate_counts(750)
    drop_z = (a500["Z"] - a750["Z"]) / 50 * 100
    drop_w = (a500["Zw"] - a750["Zw"]) / 50 * 100
    elapsed = time.perf_counter() - t0
    ok = drop_z >= 30 and drop_w <= 15 and elapsed < 1800
    detail = (f"Z accurate {a500['Z']} -> {a750['Z']} (drop {drop_z:.0f} pp), "
              f"Zw {a500['Zw']} -> {a750['Zw']} (drop {drop_w:.0f} pp), {elapsed:.1f}s")
    assert record(5, ok, detail)


def test_criterion_6_scale_bias():
    sc = Scenario(n=500, d=100, tau=250, delta=1.4, sigma=1.2, scale_dims=100, k=5, trials=30, seed=7)
    err_s, err_z = [], []
    for trial in range(sc.trials):
        g = build_kmst(compute_distances(generate(sc, trial)), sc.k)
        prof = single_profile(g)
        err_s.append(abs(scan(prof, "S", sc.window).location[0] - 250))
        err_z.append(abs(scan(prof, "Z", sc.window).location[0] - 250))
    ms, mz = float(np.median(err_s)), float(np.median(err_z))
    assert record(6, ms < mz, f"median |argmax S - 250| = {ms}, median |argmax Z - 250| = {mz}")


def test_criterion_7_null_validity():
    sc = Scenario(n=100, d=10, tau=50, trials=500, seed=0)
    row = run_power(sc, ("Zw", "S", "M"), pvalue_method="perm", B=200, threads=8)
    rates = {s: row.rejections[s] / sc.trials for s in row.statistics}
    ok = all(0.03 <= r <= 0.07 for r in rates.values())
    assert record(7, ok, ", ".join(f"{s} {r:.3f}" for s, r in rates.items()))


def test_criterion_8_unit_values():
    small = nu(1e-4)
    two = nu(2.0)
    hw = h_w(10, 0.5)
    ok = abs(small - 1) <= 1e-3 and abs(two - 0.3151) <= 5e-4 and hw == 4.5
    assert record(8, ok, f"nu(1e-4) = {small:.6f}, nu(2) = {two:.5f}, h_w(10, 0.5) = {float(hw)!r}")

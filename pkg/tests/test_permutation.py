import numpy as np
import pytest

from graphscan.graph import GraphError, graph_from_edges
from graphscan.permutation import (
    PermutationPlan,
    nearest_rank_quantile,
    perm_critical_value,
    perm_test,
    perm_test_multi,
    replicate_maxima,
    replicate_orders,
)

from conftest import gaussian_mst
from oracles import _all_positions, counts_at, permutation_moments

EDGES6 = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5), (1, 5)]


def oracle_zw_max(edges, n, lo, hi):
    mom = {t: permutation_moments(n, edges, t) for t in range(lo, hi + 1)}

    def zmax(pos):
        best = -np.inf
        for t in range(lo, hi + 1):
            _, r1, r2 = counts_at(edges, pos, t)
            rw = ((n - t - 1) * r1 + (t - 1) * r2) / (n - 2)
            z = (rw - float(mom[t]["ERw"])) / float(mom[t]["VarRw"]) ** 0.5
            best = max(best, z)
        return best

    return zmax


def test_exhaustive_matches_tail_mass():
    n, lo, hi = 6, 2, 4
    g = graph_from_edges(n, np.array(EDGES6) + 1)
    zmax = oracle_zw_max(EDGES6, n, lo, hi)
    observed = zmax(list(range(n)))
    null = np.array([zmax(pos) for pos in _all_positions(n)])
    want = np.mean(null >= observed - 1e-9)
    res = perm_test(g, PermutationPlan(statistic="Zw", window=(lo, hi), exhaustive=True))
    assert res.B == 720
    assert res.observed == pytest.approx(observed, rel=1e-12)
    assert res.p == pytest.approx(want, abs=1e-12)
    assert np.allclose(np.sort(res.maxima), np.sort(null))


def test_determinism_and_threads():
    _, g = gaussian_mst(60, 3, 1, k=2)
    plan = PermutationPlan(B=700, seed=9, statistic="M", window=(10, 50))
    a = replicate_maxima(g, plan, ["M", "S"])
    b = replicate_maxima(g, plan, ["M", "S"])
    c = replicate_maxima(g, PermutationPlan(B=700, seed=9, statistic="M", window=(10, 50), threads=4),
                         ["M", "S"])
    for k in ("M", "S"):
        assert np.array_equal(a[k], b[k]) and np.array_equal(a[k], c[k])
    other = replicate_maxima(g, PermutationPlan(B=700, seed=10, window=(10, 50)), ["M"])
    assert not np.array_equal(a["M"], other["M"])


def test_multi_shares_replicates():
    _, g = gaussian_mst(50, 3, 2)
    plan = PermutationPlan(B=300, seed=4, window=(8, 42))
    multi = perm_test_multi(g, plan, ["Zw", "S"])
    single = perm_test(g, PermutationPlan(B=300, seed=4, window=(8, 42), statistic="S"))
    assert np.array_equal(multi["S"].maxima, single.maxima)
    assert multi["S"].p == single.p
    assert 0 < single.p <= 1


def test_block_size_n_only_rotations():
    n = 20
    orders = replicate_orders(n, 3, 0, 50, block_size=n)
    for row in orders:
        assert np.array_equal(row, (row[0] + np.arange(n)) % n)
    blocks = replicate_orders(n, 3, 0, 50, block_size=5)
    for row in blocks:
        assert sorted(row.tolist()) == list(range(n))
        # each block of five is a run of consecutive (circular) positions
        for b in row.reshape(4, 5):
            assert np.all(np.diff(b) % n == 1)


def test_block_rotation_null_on_stationary_data():
    _, g = gaussian_mst(40, 3, 5)
    res = perm_test(g, PermutationPlan(B=400, seed=1, block_size=40, statistic="Zw", window=(5, 35)))
    assert len(np.unique(np.round(res.maxima, 12))) <= 40
    assert res.p > 0.05


def test_quantile_rules():
    m = np.arange(1.0, 12.0)
    assert nearest_rank_quantile(m, 0.5) == 6.0
    assert nearest_rank_quantile(m, 0.1) == 10.0
    with pytest.raises(ValueError):
        nearest_rank_quantile(np.arange(10.0), 0.05)


def test_critical_value_monotone_in_alpha():
    _, g = gaussian_mst(50, 3, 6)
    plan = PermutationPlan(B=400, seed=2, statistic="Zw", window=(5, 45))
    cvs = [perm_critical_value(g, plan, a) for a in (0.2, 0.1, 0.05, 0.01)]
    assert np.all(np.diff(cvs) >= 0)
    with pytest.raises(ValueError):
        perm_critical_value(g, PermutationPlan(B=10, statistic="Zw", window=(5, 45)), 0.05)


def test_work_budget_refusal():
    _, g = gaussian_mst(50, 3, 6)
    with pytest.raises(GraphError, match="budget"):
        replicate_maxima(g, PermutationPlan(B=10**6, window=(5, 45), max_work=1e6), ["M"])


def test_plan_validation():
    with pytest.raises(ValueError):
        PermutationPlan(B=0)
    with pytest.raises(ValueError):
        PermutationPlan(block_size=0)
    _, g = gaussian_mst(30, 2, 0)
    with pytest.raises(GraphError):
        replicate_maxima(g, PermutationPlan(B=10, window=(20, 10)), ["M"])


def test_exhaustive_moments_match_analytic():
    from graphscan.scanstats import moments_single
    g = graph_from_edges(6, np.array(EDGES6) + 1)
    orders = np.array([p for p in _all_positions(6)])
    from graphscan._backend import kernels
    indptr, indices = g.csr
    r1, _ = kernels.single_counts_batch(indptr, indices, orders)
    for t in range(1, 6):
        ms = moments_single(g, t)
        assert r1[:, t].mean() == pytest.approx(ms.ER1, rel=1e-12)
        assert r1[:, t].var() == pytest.approx(ms.Sigma[0, 0], rel=1e-10)


def test_interval_permutation_runs():
    _, g = gaussian_mst(30, 2, 3)
    res = perm_test(g, PermutationPlan(B=60, seed=0, alternative="interval", statistic="M", window=(3, 20)))
    assert 0 < res.p <= 1 and len(res.location) == 2


def test_zw_critical_value_n1000():
    _, g = gaussian_mst(1000, 10, 5)
    plan = PermutationPlan(B=2000, seed=0, statistic="Zw", window=(100, 900), threads=8)
    cv = perm_critical_value(g, plan, 0.05)
    assert 3.02 - 0.06 <= cv <= 3.05 + 0.06

import numpy as np
import pytest

from graphscan.simharness import (
    Scenario,
    ScenarioError,
    generate,
    glr_profile,
    glr_scan,
    hotelling_profile,
    hotelling_scan,
    parse_scenario,
    run_power,
)

from oracles import glr_direct, hotelling_direct


def test_null_has_no_change():
    sc = Scenario(n=400, d=3, tau=200, seed=1)
    y = generate(sc, 0)
    assert abs(y[:200].mean() - y[200:].mean()) < 0.2


def test_shift_per_coordinate():
    sc = Scenario(n=200, d=100, tau=100, delta=1.4, seed=2)
    base = generate(Scenario(n=200, d=100, tau=100, seed=2), 0)
    y = generate(sc, 0)
    assert np.allclose(y[:100], base[:100])
    assert np.allclose(y[100:] - base[100:], 0.14)


def test_scale_first_dims():
    sc = Scenario(n=200, d=10, tau=100, sigma=3.0, seed=3)
    base = generate(Scenario(n=200, d=10, tau=100, seed=3), 0)
    y = generate(sc, 0)
    assert np.allclose(y[100:, :2], 3 * base[100:, :2])
    assert np.allclose(y[100:, 2:], base[100:, 2:])


def test_interval_scenario_window():
    sc = Scenario(n=100, d=2, tau=30, tau2=60, delta=2.0, seed=0)
    base = generate(Scenario(n=100, d=2, tau=30, seed=0), 0)
    y = generate(sc, 0)
    assert sc.alternative == "interval"
    assert np.allclose(y[60:], base[60:]) and not np.allclose(y[30:60], base[30:60])


def test_lognormal_medians():
    y = generate(Scenario(n=10_000, d=10, tau=5000, family="lognormal", seed=4), 0)
    assert np.all(y > 0)
    assert np.allclose(np.median(y, axis=0), 1.0, atol=0.05)


def test_generation_deterministic():
    sc = Scenario(n=50, d=4, tau=25, family="student-t5", seed=7)
    assert np.array_equal(generate(sc, 3), generate(sc, 3))
    assert not np.array_equal(generate(sc, 3), generate(sc, 4))


def test_hotelling_matches_direct(rng):
    y = rng.standard_normal((40, 3))
    ht, valid = hotelling_profile(y)
    for t in (2, 10, 20, 38):
        assert valid[t - 1]
        assert ht[t - 1] == pytest.approx(hotelling_direct(y, t), rel=1e-9)


def test_hotelling_one_dim_is_squared_t(rng):
    y = rng.standard_normal((30, 1))
    ht, _ = hotelling_profile(y)
    for t in (5, 15):
        a, b = y[:t, 0], y[t:, 0]
        sp = ((t - 1) * a.var(ddof=1) + (30 - t - 1) * b.var(ddof=1)) / 28
        tstat = (a.mean() - b.mean()) / np.sqrt(sp * (1 / t + 1 / (30 - t)))
        assert ht[t - 1] == pytest.approx(tstat**2, rel=1e-9)


def test_hotelling_large_shift_argmax():
    sc = Scenario(n=100, d=2, tau=50, delta=10.0, seed=5)
    res = hotelling_scan(generate(sc, 0), (10, 90))
    assert res.location == (50,)


def test_hotelling_invalid_when_d_large(rng):
    _, valid = hotelling_profile(rng.standard_normal((20, 18)))
    assert not valid.any()


def test_glr_matches_direct(rng):
    y = rng.standard_normal((60, 2))
    glr, valid = glr_profile(y)
    for t in (5, 30, 55):
        assert valid[t - 1]
        assert glr[t - 1] == pytest.approx(glr_direct(y, t), rel=1e-8)
    assert np.all(glr[valid] >= -1e-9)


def test_glr_scale_peak():
    sc = Scenario(n=200, d=1, tau=100, sigma=3.0, scale_dims=1, seed=6)
    res = glr_scan(generate(sc, 0), (10, 190))
    assert abs(res.location[0] - 100) <= 10


def test_glr_invalid_when_d_large(rng):
    _, valid = glr_profile(rng.standard_normal((200, 100)))
    assert not valid.any()


def test_power_row_invariants_and_determinism():
    sc = Scenario(n=60, d=3, tau=30, delta=2.0, trials=6, seed=8, n0=8)
    a = run_power(sc, ("Z", "Zw", "M", "HT", "GLR"), B=100)
    b = run_power(sc, ("Z", "Zw", "M", "HT", "GLR"), B=100)
    assert a.to_tsv() == b.to_tsv()
    for s in a.statistics:
        assert 0 <= a.accurate[s] <= a.rejections[s] <= a.trials


def test_power_analytic_method():
    sc = Scenario(n=80, d=3, tau=40, delta=3.0, trials=4, seed=1, n0=10)
    row = run_power(sc, ("Zw", "S", "M"), pvalue_method="skew")
    assert row.rejections["Zw"] == 4


def test_scenario_errors_enumerated():
    with pytest.raises(ScenarioError) as exc:
        Scenario(n=50, tau=60, sigma=0.0, family="cauchy")
    msg = str(exc.value)
    for key in ("tau=60", "sigma=0.0", "family='cauchy'"):
        assert key in msg


def test_parse_scenario():
    sc = parse_scenario("# design\nn = 300\nd=5\ntau=150\ndelta=1.5\nfamily=lognormal\n", trials=3)
    assert (sc.n, sc.d, sc.tau, sc.delta, sc.family, sc.trials) == (300, 5, 150, 1.5, "lognormal", 3)
    with pytest.raises(ScenarioError):
        parse_scenario("bogus=1")
    with pytest.raises(ScenarioError):
        parse_scenario("n=abc")
    with pytest.raises(ScenarioError):
        parse_scenario("n 300")

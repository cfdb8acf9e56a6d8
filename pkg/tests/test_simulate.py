import math

import numpy as np
import pytest

from envindex import econometrics as E
from envindex import nig, simulate
from envindex.nig import NigParams, from_shape
from envindex.transform import fit_exponential_map, log_returns
from envindex.index import IndexSeries


def _indep(n, L, seed):
    p = NigParams(1.5, 0.3, 1.0, -0.2)
    return np.column_stack([nig.sample_nig(p, n, seed, stream=j) for j in range(L)])


def test_independent_columns_identity_correlation():
    spec = simulate.fit_mvnig(_indep(10_000, 3, 1), ["A", "B", "C"])
    off = spec.correlation[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off)) < 0.05
    assert not spec.projected


def test_duplicated_column_flagged():
    x = _indep(2000, 2, 2)
    spec = simulate.fit_mvnig(np.column_stack([x, x[:, 0]]))
    assert spec.correlation[0, 2] == pytest.approx(1.0, abs=1e-6)
    assert spec.projected
    assert np.linalg.eigvalsh(spec.correlation).min() > -1e-10


def test_single_column_reduces_to_fit_nig():
    x = _indep(5000, 1, 3)
    spec = simulate.fit_mvnig(x)
    assert spec.marginals[0] == nig.fit_nig(x[:, 0])


def test_nearest_correlation_fixes_indefinite():
    a = np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1.0]])
    c = simulate.nearest_correlation(a)
    assert np.linalg.eigvalsh(c).min() > -1e-12
    np.testing.assert_allclose(np.diag(c), 1.0)


def _models(seed=0):
    out = {}
    for j, c in enumerate("AB"):
        r = E.simulate_model("GARCH11", {"alpha0": 0.05, "alpha1": 0.1, "beta1": 0.8}, 800, seed + j)
        out[c] = E.fit_model(r + 0.02 * j, "GARCH11")
    return out


def test_scenarios_match_conditional_moments_and_determinism():
    models = _models()
    spec = simulate.MvNigSpec(("A", "B"), (from_shape(1.4, 0.3), from_shape(1.4, -0.2, 0.1, 2.0)), 1.4,
                              np.array([[1.0, 0.5], [0.5, 1.0]]))
    with pytest.raises(ValueError, match="shared"):
        simulate.MvNigSpec(("A", "B"), (from_shape(2.0, 0.3), spec.marginals[1]), 1.4, spec.correlation)
    sc = simulate.sample_scenarios(spec, models, S=10_000, seed=5)
    for j, c in enumerate("AB"):
        m, v = simulate.conditional_moments(models[c], spec.marginals[j])
        col = sc.returns[:, j]
        assert abs(col.mean() - m) < 3 * math.sqrt(v / col.size)
        # variance standard error from the fourth moment
        se_v = math.sqrt((np.mean((col - col.mean()) ** 4) - col.var() ** 2) / col.size)
        assert abs(col.var() - v) < 3 * se_v
    again = simulate.sample_scenarios(spec, models, S=10_000, seed=5, workers=3)
    assert np.array_equal(sc.returns, again.returns)
    assert sc.measure == "real-world" and sc.S == 10_000


def test_implied_correlation_and_tails():
    spec = simulate.MvNigSpec(("A", "B"), (from_shape(1.5, 0.4), from_shape(1.5, -0.3)), 1.5,
                              np.array([[1.0, 0.6], [0.6, 1.0]]))
    eps = simulate.sample_innovations(spec, 100_000, seed=9)
    emp = np.corrcoef(eps, rowvar=False)
    assert np.linalg.norm(emp - spec.implied_correlation()) < 0.05
    k = np.mean(((eps - eps.mean(0)) / eps.std(0)) ** 4, axis=0) - 3
    assert np.all(k > 0)
    zero_skew = simulate.MvNigSpec(("A", "B"), (from_shape(1.5, 0.0), from_shape(1.5, 0.0)), 1.5,
                                   spec.correlation)
    np.testing.assert_allclose(zero_skew.implied_correlation(), spec.correlation, atol=1e-12)


def test_forward_levels():
    p = fit_exponential_map([100.0, 200.0])
    last = np.array([150.0, 120.0])
    zero = np.zeros((4, 2))
    np.testing.assert_allclose(simulate.forward_levels(last, zero, p), np.tile(last, (4, 1)), rtol=1e-14)
    up = simulate.forward_levels(last, np.full((1, 2), math.log(2)), p)
    np.testing.assert_allclose(p(up), 2 * p(last)[None, :], rtol=1e-12)
    R = np.random.default_rng(0).normal(0, 0.3, (50, 2))
    lv = simulate.forward_levels(last, R, p)
    for s in range(50):
        for j in range(2):
            back = log_returns(IndexSeries("x", (0, 1), [last[j], lv[s, j]]), p).values[0]
            assert back == pytest.approx(R[s, j], abs=1e-10)


def test_scenario_csv_and_summary():
    sc = simulate.ScenarioMatrix(("A", "B"), np.array([[0.1, -0.2], [0.3, 0.4]]), seed=3)
    lines = sc.to_csv().splitlines()
    assert lines[0] == "scenario,country,return" and lines[1] == "0,A,0.1"
    s = sc.summary()
    assert s["seed"] == 3 and s["S"] == 2

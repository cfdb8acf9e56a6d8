import math

import numpy as np
import pytest

from envindex import transform
from envindex.index import IndexSeries


def test_hand_solved_example():
    p = transform.fit_exponential_map([1000.0, 3500.0, 6000.0], 1e-3)
    assert p.b == pytest.approx(math.log(1000) / 5000, rel=1e-14)
    assert p.b == pytest.approx(1.38155e-3, rel=1e-5)
    assert p.a == pytest.approx(2.5119e-4, rel=1e-4)
    assert abs(transform.apply_transform(p, 6000.0) - 1.0) <= 1e-12
    assert abs(transform.apply_transform(p, 1000.0) - 1e-3) <= 1e-12
    assert transform.apply_transform(p, 3500.0) == pytest.approx(math.sqrt(1e-3), rel=1e-12)
    # the returned a agrees with a * exp(b x)
    assert p.a * math.exp(p.b * 2000) == pytest.approx(transform.apply_transform(p, 2000.0), rel=1e-12)


@pytest.mark.parametrize("eps", [1.0, 0.0, 1.5])
def test_eps_min_outside_unit_interval_rejected(eps):
    with pytest.raises(ValueError):
        transform.fit_exponential_map([1.0, 2.0], eps)


def test_degenerate_range():
    with pytest.raises(ValueError, match="degenerate"):
        transform.fit_exponential_map([5.0, 5.0])


def test_log_return_examples():
    p = transform.fit_exponential_map([0.0, 10.0])
    s = IndexSeries("X", (1, 2, 3), [4.0, 4.0, 4.0])
    assert np.all(transform.log_returns(s, p).values == 0)
    # f values 0.5 -> 0.55
    x0 = transform.inverse_transform(p, 0.5)
    x1 = transform.inverse_transform(p, 0.55)
    r = transform.log_returns(IndexSeries("X", (1, 2), [x0, x1]), p).values
    assert r[0] == pytest.approx(math.log(1.1), abs=1e-12)
    with pytest.raises(ValueError, match="short"):
        transform.log_returns(IndexSeries("X", (1,), [1.0]), p)


def test_monotone(rng):
    p = transform.fit_exponential_map(rng.uniform(100, 5000, 50))
    x = np.sort(rng.uniform(0, 6000, 200))
    assert np.all(np.diff(transform.apply_transform(p, x)) > 0)


def test_us_order_of_magnitude_anchor():
    # US-like DEI magnitudes (USD) under per-country scope
    x = np.linspace(20000.0, 75000.0, 15)
    p = transform.fit_exponential_map(x, 1e-3, "per-country")
    assert 1e-5 <= p.b <= 1e-3  # slope of order 1e-4 for this level range
    assert p.a > 0


def test_scopes():
    s = {"A": IndexSeries("A", (1, 2), [1.0, 2.0]), "B": IndexSeries("B", (1, 2), [3.0, 9.0])}
    pooled = transform.fit_transforms(s)
    assert pooled["A"] is pooled["B"] and pooled["A"].lo == 1.0 and pooled["A"].hi == 9.0
    per = transform.fit_transforms(s, scope="per-country")
    assert per["A"].hi == 2.0 and per["B"].lo == 3.0
    with pytest.raises(ValueError):
        transform.fit_transforms(s, scope="bogus")

import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import bisect

from islandctl import fixtures
from islandctl.forecast import (
    ErrorStats, ForecastError, conservative_bounds, fit_error_stats, forecast_series,
    inverse_normal_cdf, lower_load_bound, same_as_yesterday, scenario_bounds,
    upper_generation_bound,
)
from islandctl.grid import Profile

T0 = datetime(2024, 1, 1)
DAY = 96


def _cdf(x):
    pdf = lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    return 0.5 + quad(pdf, 0.0, x)[0]


def _quantile_oracle(gamma):
    return bisect(lambda x: _cdf(x) - gamma, -10, 10, xtol=1e-12)


def test_same_as_yesterday_two_samples_per_day():
    hist = Profile("h", T0, 43200, [1, 2, 7, 9])
    fc = same_as_yesterday(hist, 1)
    assert list(fc.values) == [1, 2]
    assert fc.start == T0 + timedelta(days=1)


def test_same_as_yesterday_year_long_history():
    values = np.repeat(np.arange(365, dtype=float), DAY)
    hist = Profile("h", T0, 900, values)
    fc = same_as_yesterday(hist, 214)
    assert np.all(fc.values == 213)
    assert fc.start == T0 + timedelta(days=214)


def test_day_zero_has_no_forecast():
    with pytest.raises(ForecastError):
        same_as_yesterday(Profile("h", T0, 900, np.ones(DAY)), 0)


def test_forecast_series_is_shifted_history():
    vals = np.arange(3 * DAY, dtype=float)
    fc = forecast_series(Profile("h", T0, 900, vals))
    assert fc.start == T0 + timedelta(days=1)
    assert np.array_equal(fc.values, vals[:2 * DAY])


def test_perfect_forecast_has_zero_error():
    p = Profile("h", T0, 900, np.random.default_rng(1).random(3 * DAY))
    stats = fit_error_stats(p, p)
    assert np.all(stats.mu == 0) and np.all(stats.sigma == 0)


def test_plus_minus_one_errors():
    actual = np.zeros(2 * DAY)
    predicted = actual.copy()
    predicted[5] = 1.0
    predicted[DAY + 5] = -1.0
    stats = fit_error_stats(Profile("a", T0, 900, actual), Profile("f", T0, 900, predicted))
    assert stats.mu[5] == 0.0
    assert stats.sigma[5] == pytest.approx(math.sqrt(2))
    assert stats.sigma[6] == 0.0


def test_constant_bias():
    actual = np.random.default_rng(2).random(4 * DAY)
    stats = fit_error_stats(Profile("a", T0, 900, actual), Profile("f", T0, 900, actual + 2))
    assert np.allclose(stats.mu, 2.0)
    assert np.allclose(stats.sigma, 0.0, atol=1e-12)


def test_error_stats_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    stats = ErrorStats(rng.normal(size=DAY), rng.random(DAY), 900)
    stats.to_csv(tmp_path / "e.csv")
    back = ErrorStats.from_csv(tmp_path / "e.csv")
    assert np.array_equal(back.mu, stats.mu) and np.array_equal(back.sigma, stats.sigma)


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.95, 0.99, 0.001])
def test_quantile_against_integrated_cdf(gamma):
    assert inverse_normal_cdf(gamma) == pytest.approx(_quantile_oracle(gamma), abs=1e-8)


def test_quantile_known_values():
    assert inverse_normal_cdf(0.5) == 0.0
    assert inverse_normal_cdf(0.95) == pytest.approx(1.6449, abs=1e-4)
    assert inverse_normal_cdf(0.99) == pytest.approx(2.3263, abs=1e-4)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            inverse_normal_cdf(bad)


def test_median_bounds_equal_forecast():
    fc = np.array([3.0, 4.0])
    z = np.zeros(2)
    assert np.array_equal(upper_generation_bound(fc, z, np.ones(2), 0.5), fc)
    assert np.array_equal(lower_load_bound(fc, z, np.ones(2), 0.5), fc)


def test_generation_bound_example():
    g = upper_generation_bound(np.array([10.0]), 0.0, 2.0, 0.95)
    assert g[0] == pytest.approx(10 - 2 * _quantile_oracle(0.95), abs=1e-8)
    assert g[0] == pytest.approx(6.71, abs=0.01)
    assert upper_generation_bound(np.array([1.0]), 0.0, 2.0, 0.99)[0] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 50), st.floats(-5, 5), st.floats(0, 5),
       st.floats(0.5, 0.999), st.floats(0.5, 0.999))
def test_bounds_monotone_in_confidence(fc, mu, sigma, g1, g2):
    lo, hi = sorted((g1, g2))
    f = np.array([fc])
    assert upper_generation_bound(f, mu, sigma, hi)[0] <= upper_generation_bound(f, mu, sigma, lo)[0] + 1e-12
    assert lower_load_bound(f, mu, sigma, hi)[0] >= lower_load_bound(f, mu, sigma, lo)[0] - 1e-12
    assert upper_generation_bound(f, mu, sigma, hi)[0] >= 0


def test_conservative_bounds_split_by_kind():
    stats = {k: ErrorStats.zero(900) for k in ("pv", "house")}
    b = conservative_bounds({"pv": [2.0], "house": [1.0]}, stats, 0.9, generators=["pv"],
                            start=T0, resolution_s=900)
    assert set(b.generation) == {"pv"} and set(b.load) == {"house"}
    with pytest.raises(ForecastError):
        conservative_bounds({"x": [1.0]}, {}, 0.9, start=T0, resolution_s=900)


def test_scenario_bounds_cover_horizon():
    sc = fixtures.thirteen_bus()
    raw = scenario_bounds(sc, None)
    assert raw.length() == 96
    # both sides carry the bias correction, only the margin differs
    median = scenario_bounds(sc, 0.5)
    safe = scenario_bounds(sc, 0.95)
    for a in sc.generators:
        assert np.all(safe.generation[a.id] <= median.generation[a.id] + 1e-12)
    for a in sc.loads:
        assert np.all(safe.load[a.id] >= median.load[a.id] - 1e-12)


def test_exact_fixture_forecast_matches_actuals():
    sc = fixtures.undersupply_exact()
    b = scenario_bounds(sc, None)
    for a in sc.generators:
        assert np.allclose(b.generation[a.id], sc.profile(a.profile).window(sc.start, 96))

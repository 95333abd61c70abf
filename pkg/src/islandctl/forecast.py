"""Same-as-yesterday forecasts, per-interval error statistics and the Gaussian
quantile bounds that turn the chance constraints into deterministic limits.

Forecast error is defined as ``forecast - actual``. Subtracting the mean error
from a generation forecast therefore corrects a systematically optimistic
forecast, and adding it to a load forecast corrects a pessimistic one.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .grid import Generator, Load, Profile, Scenario, samples_per_day

log = logging.getLogger(__name__)


class ForecastError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ErrorStats:
    """Mean and sample standard deviation of the forecast error per interval of day."""

    mu: np.ndarray
    sigma: np.ndarray
    resolution_s: int

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.shape != sigma.shape or mu.ndim != 1:
            raise ForecastError("mu and sigma must be 1-D arrays of equal length")
        if len(mu) != samples_per_day(self.resolution_s):
            raise ForecastError("error stats need one (mu, sigma) pair per interval of day")
        if np.any(sigma < 0):
            raise ForecastError("sigma must be non-negative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def zero(cls, resolution_s: int) -> "ErrorStats":
        n = samples_per_day(resolution_s)
        return cls(np.zeros(n), np.zeros(n), resolution_s)

    def at(self, start: datetime, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Statistics for ``count`` consecutive intervals starting at ``start``."""
        per_day = len(self.mu)
        midnight = start.replace(hour=0, minute=0, second=0, microsecond=0)
        first = int((start - midnight).total_seconds() // self.resolution_s)
        idx = (first + np.arange(count)) % per_day
        return self.mu[idx], self.sigma[idx]

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["interval_of_day", "mu_kw", "sigma_kw"])
            for i, (m, s) in enumerate(zip(self.mu, self.sigma)):
                w.writerow([i, repr(float(m)), repr(float(s))])

    @classmethod
    def from_csv(cls, path: str | Path, resolution_s: int | None = None) -> "ErrorStats":
        rows = []
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                rows.append((int(row["interval_of_day"]), float(row["mu_kw"]), float(row["sigma_kw"])))
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ForecastError(f"{path}: interval_of_day must enumerate 0..n-1")
        if resolution_s is None:
            resolution_s = 86400 // len(rows)
        return cls(np.array([r[1] for r in rows]), np.array([r[2] for r in rows]), resolution_s)


@dataclass(frozen=True)
class ConservativeBounds:
    """Deterministic limits per asset id over consecutive scheduling intervals.

    ``generation`` holds upper limits for generators, ``load`` lower limits of
    the intrinsic load, both in kW starting at ``start``.
    """

    generation: dict
    load: dict
    confidence: float
    start: datetime
    resolution_s: int

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ForecastError("confidence must lie in (0, 1)")

    def length(self) -> int:
        arrays = [*self.generation.values(), *self.load.values()]
        return min((len(a) for a in arrays), default=0)


def _day_start(p: Profile, day: int) -> int:
    return day * samples_per_day(p.resolution_s)


def same_as_yesterday(history: Profile, day: int) -> Profile:
    """Forecast day ``day`` (counted from the history start) with day ``day - 1``."""
    if day < 1:
        raise ForecastError("no previous day available for day index < 1")
    per_day = samples_per_day(history.resolution_s)
    lo = _day_start(history, day - 1)
    if lo + per_day > len(history.values):
        raise ForecastError(
            f"history of {len(history.values)} samples does not contain day {day - 1}"
        )
    return Profile(
        history.id,
        history.start + timedelta(days=day),
        history.resolution_s,
        history.values[lo:lo + per_day],
    )


def forecast_series(history: Profile) -> Profile:
    """Rolling same-as-yesterday forecast for every day after the first."""
    per_day = samples_per_day(history.resolution_s)
    days = len(history.values) // per_day
    if days < 2:
        raise ForecastError("need at least two days of history")
    return Profile(
        history.id,
        history.start + timedelta(days=1),
        history.resolution_s,
        history.values[:(days - 1) * per_day],
    )


def fit_error_stats(history: Profile, forecasts: Profile) -> ErrorStats:
    """Fit (mu, sigma) per interval of day from the overlap of the two series."""
    if history.resolution_s != forecasts.resolution_s:
        raise ForecastError("series resolutions differ")
    res = history.resolution_s
    per_day = samples_per_day(res)
    lo = max(history.start, forecasts.start)
    hi = min(history.end, forecasts.end)
    if (lo - history.start).total_seconds() % res or (lo - forecasts.start).total_seconds() % res:
        raise ForecastError("series are misaligned")
    midnight = lo.replace(hour=0, minute=0, second=0, microsecond=0)
    if lo != midnight:
        raise ForecastError("overlap must start at midnight")
    n = int((hi - lo).total_seconds() // res)
    days = n // per_day
    if days < 2:
        raise ForecastError("need at least two aligned days to fit error statistics")
    count = days * per_day
    actual = history.window(lo, count)
    predicted = forecasts.window(lo, count)
    err = (predicted - actual).reshape(days, per_day)
    return ErrorStats(err.mean(axis=0), err.std(axis=0, ddof=1), res)


def inverse_normal_cdf(gamma: float) -> float:
    """Standard normal quantile."""
    if not 0 < gamma < 1:
        raise ValueError("probability must lie strictly between 0 and 1")
    return float(ndtri(gamma))


def upper_generation_bound(forecast, mu, sigma, gamma: float) -> np.ndarray:
    z = inverse_normal_cdf(gamma)
    return np.maximum(0.0, np.asarray(forecast) - mu - sigma * z)


def lower_load_bound(forecast, mu, sigma, gamma: float) -> np.ndarray:
    z = inverse_normal_cdf(gamma)
    return np.maximum(0.0, np.asarray(forecast) + mu + sigma * z)


def conservative_bounds(forecasts: dict, stats: dict, gamma: float, *, generators=(),
                        start: datetime, resolution_s: int) -> ConservativeBounds:
    """Apply the Gaussian quantile margin to every forecast.

    ``forecasts`` and ``stats`` map asset id to a forecast array and an
    :class:`ErrorStats`; ids in ``generators`` get upper bounds, all others
    get load lower bounds.
    """
    gens, loads = {}, {}
    generators = set(generators)
    for aid, fc in forecasts.items():
        if aid not in stats:
            raise ForecastError(f"missing error statistics for asset {aid!r}")
        fc = np.asarray(fc, dtype=float)
        mu, sigma = stats[aid].at(start, len(fc))
        if aid in generators:
            gens[aid] = upper_generation_bound(fc, mu, sigma, gamma)
        else:
            loads[aid] = lower_load_bound(fc, mu, sigma, gamma)
    return ConservativeBounds(gens, loads, gamma, start, resolution_s)


def _asset_forecast(scenario: Scenario, asset, start: datetime, count: int) -> tuple[np.ndarray, ErrorStats]:
    res = scenario.params.delta_tau_s
    actual = scenario.profile(asset.profile)
    if actual.resolution_s != res:
        raise ForecastError(
            f"profile {actual.id!r} has resolution {actual.resolution_s}s, scheduling uses {res}s"
        )
    # stats from every complete day before the scheduling start
    per_day = samples_per_day(res)
    hist_days = int((start - actual.start).total_seconds() // 86400)
    stats = ErrorStats.zero(res)
    if hist_days >= 3:
        past = Profile(actual.id, actual.start, res, actual.values[:hist_days * per_day])
        stats = fit_error_stats(past, forecast_series(past))
    elif hist_days >= 0:
        log.warning("asset %s: fewer than 3 days of history, using zero error statistics", asset.id)

    if asset.forecast_profile is not None:
        fc = scenario.profile(asset.forecast_profile).window(start, count)
    else:
        # same-as-yesterday, repeated for horizons beyond one day
        offs = int((start - actual.start).total_seconds() // res)
        if offs < per_day:
            raise ForecastError(f"asset {asset.id!r}: no history before {start.isoformat()}")
        base = actual.values[offs - per_day:offs]
        fc = np.resize(base, count)
    return np.asarray(fc, dtype=float), stats


def scenario_bounds(scenario: Scenario, gamma: float | None, start: datetime | None = None,
                    count: int | None = None) -> ConservativeBounds:
    """Conservative generation and load bounds for the scheduling horizon.

    ``gamma=None`` applies the raw forecasts without any safety margin.
    """
    start = scenario.start if start is None else start
    count = scenario.params.horizon_intervals if count is None else count
    forecasts, stats, gens = {}, {}, []
    for a in scenario.assets:
        if isinstance(a, (Load, Generator)):
            forecasts[a.id], stats[a.id] = _asset_forecast(scenario, a, start, count)
            if isinstance(a, Generator):
                gens.append(a.id)
    if gamma is None:
        stats = {k: ErrorStats.zero(scenario.params.delta_tau_s) for k in stats}
        gamma = 0.5
    return conservative_bounds(forecasts, stats, gamma, generators=gens, start=start,
                               resolution_s=scenario.params.delta_tau_s)

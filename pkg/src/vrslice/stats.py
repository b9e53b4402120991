"""Descriptive statistics for frame-size traces.

Conventions, fixed across the whole package:

* Quantiles use linear interpolation between order statistics with
  ``h = (n - 1) * p`` (the "type 7" rule used by numpy's default).
* Autocorrelation uses the biased (divide-by-L) sample estimator, which
  guarantees values in [-1, 1].
* Rolling windows that would run past the end of the series are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstantSeriesError,
    EmptyDistributionError,
    LagTooLargeError,
)
from .traces import FrameTrace, moving_average_rate


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Uniformly weighted sample set, stored sorted ascending."""

    sorted_samples: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalDistribution":
        arr = np.sort(np.asarray(samples, dtype=float))
        if arr.size == 0:
            raise EmptyDistributionError("no samples")
        return cls(sorted_samples=arr)

    def quantile(self, p: float) -> float:
        return empirical_quantile(self, p)

    def mean(self) -> float:
        return float(self.sorted_samples.mean())

    def std(self) -> float:
        return float(self.sorted_samples.std())


def empirical_quantile(dist: EmpiricalDistribution, p: float) -> float:
    """Linear-interpolation sample quantile, h = (n-1)p."""
    s = dist.sorted_samples
    if s.size == 0:
        raise EmptyDistributionError("no samples")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    h = (s.size - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, s.size - 1)
    return float(s[lo] + (h - lo) * (s[hi] - s[lo]))


def overflow_rate(trace: FrameTrace, window: int, target_rate_bps: float) -> EmpiricalDistribution:
    """Distribution of (moving-average rate - target rate) over all windows."""
    rates = moving_average_rate(trace, window)
    return EmpiricalDistribution.from_samples(rates - target_rate_bps)


@dataclass(frozen=True)
class AutocorrResult:
    """Sample autocorrelation at lags 0..K."""

    lags: np.ndarray
    values: np.ndarray


def autocorrelation(series, max_lag: int) -> AutocorrResult:
    """Biased sample autocorrelation rho(k), k = 0..max_lag.

    rho(k) = sum_t (x_t - xbar)(x_{t+k} - xbar) / sum_t (x_t - xbar)^2.
    Raises :class:`ConstantSeriesError` on zero-variance input and
    :class:`LagTooLargeError` if the series is not longer than max_lag.
    """
    x = np.asarray(series, dtype=float)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if x.size <= max_lag:
        raise LagTooLargeError(f"series length {x.size} must exceed max_lag {max_lag}")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        raise ConstantSeriesError("autocorrelation of a constant series is undefined")
    values = np.empty(max_lag + 1)
    values[0] = 1.0
    for k in range(1, max_lag + 1):
        values[k] = float(np.dot(xc[:-k], xc[k:])) / denom
    return AutocorrResult(lags=np.arange(max_lag + 1), values=values)


@dataclass(frozen=True)
class RollingAutocorr:
    """One autocorrelation row per window offset.

    Windows where the series is constant are flagged in ``defined`` (their
    rows are NaN) instead of poisoning the whole result.
    """

    offsets: np.ndarray
    lags: np.ndarray
    values: np.ndarray  # shape (n_windows, max_lag + 1)
    defined: np.ndarray = field(repr=False)


def rolling_autocorrelation(series, window: int, step: int, max_lag: int) -> RollingAutocorr:
    """Autocorrelation over windows at offsets 0, step, 2*step, ...

    Only windows fully inside the series are evaluated, so the number of
    rows is floor((L - window) / step) + 1.
    """
    x = np.asarray(series, dtype=float)
    if window <= max_lag:
        raise LagTooLargeError(f"window {window} must exceed max_lag {max_lag}")
    if step < 1:
        raise ValueError("step must be >= 1")
    if x.size < window:
        raise LagTooLargeError(f"series length {x.size} shorter than window {window}")
    offsets = np.arange(0, x.size - window + 1, step)
    values = np.full((offsets.size, max_lag + 1), np.nan)
    defined = np.zeros(offsets.size, dtype=bool)
    for i, off in enumerate(offsets):
        chunk = x[off : off + window]
        try:
            values[i] = autocorrelation(chunk, max_lag).values
            defined[i] = True
        except ConstantSeriesError:
            pass
    return RollingAutocorr(
        offsets=offsets, lags=np.arange(max_lag + 1), values=values, defined=defined
    )

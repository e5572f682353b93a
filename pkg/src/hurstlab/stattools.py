"""Small statistical helpers shared by the analysis modules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KS_COEFF_5PCT = 1.358


@dataclass(frozen=True)
class Estimate:
    """A point estimate and its standard error."""

    value: float
    se: float

    def __iter__(self):
        yield self.value
        yield self.se

    def z(self, target: float = 0.0) -> float:
        """Distance from ``target`` in units of the standard error."""
        if self.se == 0:
            return 0.0 if self.value == target else float("inf")
        return abs(self.value - target) / self.se


def mean_estimate(samples) -> Estimate:
    x = np.asarray(samples, dtype=np.float64)
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return Estimate(float(np.mean(x)), se)


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two nonempty samples")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_one_sample(samples, cdf) -> float:
    """Distance between the empirical CDF of ``samples`` and a callable CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    f = cdf(x)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def ks_critical(n: int, m: int | None = None, coeff: float = KS_COEFF_5PCT) -> float:
    """Asymptotic critical value; one-sample when ``m`` is None."""
    if m is None:
        return coeff / np.sqrt(n)
    return coeff * np.sqrt((n + m) / (n * m))

"""One-point statistics: ensemble averages, Hurst fits, densities, data collapse.

Everything in here looks at a single time slice at once (or at a sequence of
slices independently). Two processes with the same one-point law are
therefore indistinguishable to every function in this module.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .process import Ensemble
from .stattools import Estimate

__all__ = [
    "Observable",
    "HurstFit",
    "VarianceCurve",
    "DensityEstimate",
    "CollapseReport",
    "ensemble_average",
    "variance_curve",
    "fit_hurst_variance",
    "fit_power_law",
    "moment_scaling",
    "one_point_density",
    "binned_tolerance",
    "data_collapse",
    "curve_cdf",
    "curve_ks_distance",
    "gaussian_density",
]


@dataclass(frozen=True)
class Observable:
    """A function A(x, t) to be averaged over the ensemble."""

    identifier: str
    evaluator: Callable[[np.ndarray, float], np.ndarray] = field(compare=False)
    order: Optional[float] = None

    @classmethod
    def power(cls, n: int) -> "Observable":
        return cls(f"power({n})", lambda x, t: x**n, n)

    @classmethod
    def absolute_power(cls, q: float) -> "Observable":
        return cls(f"absolute_power({q:g})", lambda x, t: np.abs(x) ** q, q)

    @classmethod
    def custom(cls, fn, name: str = "custom") -> "Observable":
        return cls(name, fn)

    def __call__(self, x, t):
        return np.broadcast_to(np.asarray(self.evaluator(x, t), dtype=np.float64), np.shape(x))


def ensemble_average(e: Ensemble, a: Observable, t: float) -> Estimate:
    """Sample mean of A(x_i(t), t) over paths, with its standard error."""
    vals = a(e.at(t), t)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"observable {a.identifier} is not finite on the ensemble at t={t}")
    n = vals.size
    return Estimate(float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(n)))


@dataclass(frozen=True, eq=False)
class VarianceCurve:
    """Per-time variance estimates; iterates as (t, variance) pairs.

    ``cov`` is the estimated covariance matrix of the variance estimates
    across times (they come from the same paths, so they are correlated).
    """

    times: np.ndarray
    values: np.ndarray
    cov: Optional[np.ndarray] = None

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.values.tolist()))

    def __len__(self):
        return self.times.size

    def select(self, mask) -> "VarianceCurve":
        mask = np.asarray(mask)
        cov = None if self.cov is None else self.cov[np.ix_(mask, mask)]
        return VarianceCurve(self.times[mask], self.values[mask], cov)

    def positive(self) -> "VarianceCurve":
        """Drop points that cannot enter a log-log fit (t = 0 or zero variance)."""
        return self.select((self.times > 0) & (self.values > 0))


def _moment_cov(samples: np.ndarray) -> np.ndarray:
    # covariance of column means of ``samples`` (paths x times)
    n = samples.shape[0]
    centered = samples - samples.mean(axis=0)
    return centered.T @ centered / (n - 1) / n


def variance_curve(e: Ensemble) -> VarianceCurve:
    """Unbiased sample variance at every grid time."""
    if e.n_paths < 2:
        raise ValueError("variance needs at least 2 paths")
    x = e.values
    var = np.var(x, axis=0, ddof=1)
    sq = (x - x.mean(axis=0)) ** 2
    return VarianceCurve(e.grid.times.copy(), var, _moment_cov(sq))


@dataclass(frozen=True, eq=False)
class HurstFit:
    """Log-log fit of a moment curve: log m(t) = log c + order * H * log t."""

    h_hat: float
    c_hat: float
    h_se: float
    c_se: float
    per_point_log_residuals: np.ndarray
    times_used: np.ndarray
    moment_order: float

    @property
    def slope(self) -> float:
        return self.moment_order * self.h_hat

    def as_dict(self) -> dict:
        return {
            "h_hat": self.h_hat,
            "h_se": self.h_se,
            "c_hat": self.c_hat,
            "c_se": self.c_se,
            "moment_order": self.moment_order,
            "times_used": self.times_used.tolist(),
            "per_point_log_residuals": self.per_point_log_residuals.tolist(),
        }


def fit_power_law(times, values, order: float, cov=None) -> HurstFit:
    """Unweighted least squares of log(values) on log(times).

    Standard errors come from propagating ``cov`` (the covariance of the
    values) through the log transform and the linear fit. Without ``cov``
    the usual residual-based OLS errors are reported.
    """
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size != v.size:
        raise ValueError("times and values differ in length")
    if t.size < 3:
        raise ValueError(f"a Hurst fit needs >= 3 points, got {t.size}")
    if np.any(t <= 0) or np.any(v <= 0):
        raise ValueError("log-log fit needs strictly positive times and values")
    lx, ly = np.log(t), np.log(v)
    dx = lx - lx.mean()
    sxx = float(dx @ dx)
    if sxx <= 0 or np.ptp(t) == 0:
        raise ValueError("degenerate fit: all times are equal")
    w = dx / sxx
    slope = float(w @ ly)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    if cov is not None:
        cov_log = np.asarray(cov) / np.outer(v, v)
        u = 1.0 / t.size - lx.mean() * w
        var_slope = float(w @ cov_log @ w)
        var_icept = float(u @ cov_log @ u)
    else:
        s2 = float(resid @ resid) / max(t.size - 2, 1)
        var_slope = s2 / sxx
        var_icept = s2 * (1.0 / t.size + lx.mean() ** 2 / sxx)
    c_hat = float(np.exp(intercept))
    return HurstFit(
        h_hat=slope / order,
        c_hat=c_hat,
        h_se=float(np.sqrt(max(var_slope, 0.0))) / order,
        c_se=c_hat * float(np.sqrt(max(var_icept, 0.0))),
        per_point_log_residuals=resid,
        times_used=t,
        moment_order=order,
    )


CurveLike = Union[VarianceCurve, Sequence[tuple]]


def fit_hurst_variance(curve: CurveLike) -> HurstFit:
    """Fit sigma^2(t) = c t^(2H); H is half the log-log slope.

    >>> t = [1.0, 2.0, 4.0, 8.0]
    >>> fit = fit_hurst_variance([(s, 3.0 * s) for s in t])
    >>> round(fit.h_hat, 12), round(fit.c_hat, 12)
    (0.5, 3.0)
    """
    if isinstance(curve, VarianceCurve):
        return fit_power_law(curve.times, curve.values, 2, curve.cov)
    pairs = np.asarray(list(curve), dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("curve must be a sequence of (t, variance) pairs")
    return fit_power_law(pairs[:, 0], pairs[:, 1], 2)


def moment_scaling(e: Ensemble, n: float, times=None) -> HurstFit:
    """Fit <|x|^n(t)> = c_n t^(nH) across the positive grid times.

    Absolute moments avoid sign cancellation for odd ``n``. The second
    moment is taken as the unbiased sample variance, so ``n=2`` is the same
    fit as :func:`fit_hurst_variance` on :func:`variance_curve`.
    """
    if n < 1:
        raise ValueError("moment order must be >= 1")
    if times is None:
        mask = e.grid.times > 0
    else:
        mask = np.zeros(len(e.grid), dtype=bool)
        mask[[e.grid.index(t) for t in times]] = True
    if n == 2:
        curve = variance_curve(e).select(mask)
        return fit_power_law(curve.times, curve.values, 2, curve.cov)
    x0 = e.spec.x0 if e.spec is not None else 0.0
    m = np.abs(e.values[:, mask] - x0) ** n
    return fit_power_law(e.grid.times[mask], m.mean(axis=0), n, _moment_cov(m))


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    """Histogram density of x at time ``t``."""

    t: float
    bin_edges: np.ndarray
    density: np.ndarray
    n_samples: int
    binning: str = "fd"

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * self.widths))

    def mean(self) -> float:
        return float(np.sum(self.centers * self.density * self.widths))

    def variance(self) -> float:
        """Variance of the piecewise-constant density (bin spread included)."""
        a, b = self.bin_edges[:-1], self.bin_edges[1:]
        m2 = np.sum(self.density * (b**3 - a**3) / 3.0)
        return float(m2 - self.mean() ** 2)

    def cdf(self, x):
        """CDF of the piecewise-constant density."""
        cum = np.concatenate([[0.0], np.cumsum(self.density * self.widths)])
        return np.interp(x, self.bin_edges, cum, left=0.0, right=cum[-1])

    def __call__(self, x):
        k = np.searchsorted(self.bin_edges, x, side="right") - 1
        inside = (k >= 0) & (k < self.density.size)
        return np.where(inside, self.density[np.clip(k, 0, self.density.size - 1)], 0.0)


def _binning_name(binning) -> str:
    if isinstance(binning, str):
        return binning
    if np.ndim(binning) == 0:
        return f"bins={int(binning)}"
    return "edges"


def one_point_density(e: Ensemble, t: float, binning="fd") -> DensityEstimate:
    """Normalized histogram of x(t) - x0.

    ``binning`` is anything :func:`numpy.histogram_bin_edges` accepts;
    the default is the Freedman-Diaconis rule.
    """
    x = e.at(t)
    if isinstance(binning, str) and binning == "fd" and x.size < 100:
        raise ValueError("Freedman-Diaconis binning needs at least 100 samples")
    x0 = e.spec.x0 if e.spec is not None else 0.0
    return _histogram(x - x0, t, binning)


def _histogram(x, t, binning) -> DensityEstimate:
    edges = np.histogram_bin_edges(x, bins=binning)
    counts, edges = np.histogram(x, bins=edges)
    dens = counts / (x.size * np.diff(edges))
    return DensityEstimate(float(t), edges, dens, int(x.size), _binning_name(binning))


def binned_tolerance(f: float, n: int, width: float, curvature: float = 0.0) -> float:
    """Tolerance for a histogram density value ``f`` at a bin of ``width``.

    Three binomial standard errors plus the worst-case bias from averaging
    (and linearly interpolating) a density of the given second derivative
    over one bin.
    """
    return 3.0 * np.sqrt(f / (n * width)) + width**2 * abs(curvature) / 8.0


def gaussian_density(x, var: float):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x / var) / np.sqrt(2.0 * np.pi * var)


def curve_cdf(u, f) -> np.ndarray:
    """Cumulative trapezoid of a density curve, normalized to end at 1."""
    u = np.asarray(u, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(u))])
    if cum[-1] <= 0:
        raise ValueError("curve has no mass")
    return cum / cum[-1]


def curve_ks_distance(u1, f1, u2=None, f2=None) -> float:
    """Kolmogorov distance between two density curves.

    Each curve is normalized over its own support; when the supports differ
    both CDFs are compared on the merged abscissae.
    """
    if u2 is None:
        u2 = u1
    u1, u2 = np.asarray(u1, float), np.asarray(u2, float)
    c1, c2 = curve_cdf(u1, f1), curve_cdf(u2, f2)
    grid = np.union1d(u1, u2)
    a = np.interp(grid, u1, c1, left=0.0, right=1.0)
    b = np.interp(grid, u2, c2, left=0.0, right=1.0)
    return float(np.max(np.abs(a - b)))


@dataclass(frozen=True, eq=False)
class CollapseReport:
    """Rescaled densities F(u) = t^h f(x, t) on a shared grid u = x t^-h.

    ``collapse_error`` is the u-averaged spread (standard deviation across
    times) of the rescaled curves, relative to the peak of their mean.
    ``reference_gaussian_error`` is the Kolmogorov distance between the
    mean curve and the Gaussian of variance ``c_ref`` on the same grid.
    """

    h: float
    u_grid: np.ndarray
    rescaled_curves: dict
    collapse_error: float
    reference_gaussian_error: float
    c_ref: float
    n_samples: int

    @property
    def mean_curve(self) -> np.ndarray:
        return np.mean(np.stack(list(self.rescaled_curves.values())), axis=0)

    def summary(self) -> dict:
        return {
            "h": self.h,
            "times": [float(t) for t in self.rescaled_curves],
            "collapse_error": self.collapse_error,
            "reference_gaussian_error": self.reference_gaussian_error,
            "c_ref": self.c_ref,
            "n_samples": self.n_samples,
            "u_grid": self.u_grid.tolist(),
            "mean_curve": self.mean_curve.tolist(),
        }


U_GRID_POINTS = 101
U_GRID_COVERAGE = 0.99


def data_collapse(e: Ensemble, h: float, times: Sequence[float], binning="fd", c=None) -> CollapseReport:
    """Rescale the one-point densities at ``times`` with exponent ``h``.

    ``c`` sets the reference Gaussian; it defaults to the ensemble's process
    constant, or to the pooled second moment of the rescaled samples when
    the ensemble has no process attached.
    """
    times = [float(t) for t in times]
    if not times:
        raise ValueError("data collapse needs at least one time")
    if len(times) < 2:
        raise ValueError("data collapse needs at least two times")
    if any(t <= 0 for t in times):
        raise ValueError("collapse times must be positive")
    x0 = e.spec.x0 if e.spec is not None else 0.0
    pooled = np.concatenate([(e.at(t) - x0) * t**-h for t in times])
    tail = (1.0 - U_GRID_COVERAGE) / 2.0
    lo, hi = np.quantile(pooled, [tail, 1.0 - tail])
    u_grid = np.linspace(lo, hi, U_GRID_POINTS)
    curves = {}
    for t in times:
        d = _histogram(e.at(t) - x0, t, binning)
        u = d.centers * t**-h
        curves[t] = np.interp(u_grid, u, d.density * t**h, left=0.0, right=0.0)
    stack = np.stack(list(curves.values()))
    mean = stack.mean(axis=0)
    peak = float(mean.max())
    err = float(np.mean(stack.std(axis=0)) / peak) if peak > 0 else float("inf")
    if c is None:
        c = e.spec.c if e.spec is not None else float(np.mean(pooled**2))
    ref = curve_ks_distance(u_grid, mean, u_grid, gaussian_density(u_grid, c))
    return CollapseReport(float(h), u_grid, curves, err, ref, float(c), e.n_paths)

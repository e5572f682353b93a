"""Increment-level discriminators between fBm and scaling Markov processes.

These are the measurements that *can* tell the two apart: whether
increments are stationary, whether increments over disjoint intervals are
correlated, whether the process is a martingale. Also the Gaussian
transition kernel with density propagation and a Chapman-Kolmogorov check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .process import Ensemble
from .scaling import DensityEstimate
from .stattools import Estimate, ks_critical, ks_statistic, mean_estimate

__all__ = [
    "IncrementSet",
    "StationarityResult",
    "MartingaleResult",
    "TransitionKernel",
    "TwoPointDensity",
    "StructureReport",
    "OverlapError",
    "increments",
    "stationarity_test",
    "increment_autocorrelation",
    "process_autocorrelation",
    "martingale_residual",
    "kernel_density",
    "propagate_density",
    "ck_residual",
    "two_point_density",
]


class OverlapError(ValueError):
    """Increment intervals share interior points."""


@dataclass(frozen=True, eq=False)
class IncrementSet:
    t: float
    lag: float
    samples: np.ndarray

    @property
    def mean(self) -> Estimate:
        return mean_estimate(self.samples)

    @property
    def variance(self) -> float:
        return float(np.var(self.samples, ddof=1))


def _origin(e: Ensemble) -> float:
    return e.spec.x0 if e.spec is not None else 0.0


def _cols(e: Ensemble, *times):
    try:
        return [e.values[:, e.grid.index(t)] for t in times]
    except KeyError as exc:
        raise ValueError(f"{exc.args[0]}; grid spans [{e.grid.start}, {e.grid.end}]") from None


def increments(e: Ensemble, t: float, lag: float) -> IncrementSet:
    """x(t + lag) - x(t) for every path."""
    if lag <= 0:
        raise ValueError(f"lag must be positive, got {lag!r}")
    a, b = _cols(e, t, t + lag)
    return IncrementSet(float(t), float(lag), b - a)


@dataclass(frozen=True)
class StationarityResult:
    t: float
    lag: float
    statistic: float
    critical_value: float
    increment_variance: float
    reference_variance: float

    @property
    def stationary(self) -> bool:
        return self.statistic < self.critical_value

    @property
    def verdict(self) -> str:
        return "stationary-consistent" if self.stationary else "reject"

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "lag": self.lag,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "increment_variance": self.increment_variance,
            "reference_variance": self.reference_variance,
            "verdict": self.verdict,
        }


def stationarity_test(e: Ensemble, t: float, lag: float) -> StationarityResult:
    """Two-sample KS between x(t + lag) - x(t) and x(lag) - x0.

    Stationary increments make the two samples equal in distribution, so
    the verdict is "stationary-consistent" when the statistic stays below
    the asymptotic 5% critical value.
    """
    if lag not in e.grid:
        raise ValueError(f"grid lacks time T={lag!r} needed for the reference sample x(T)")
    inc = increments(e, t, lag).samples
    (ref,) = _cols(e, lag)
    ref = ref - _origin(e)
    return StationarityResult(
        float(t),
        float(lag),
        ks_statistic(inc, ref),
        float(ks_critical(inc.size, ref.size)),
        float(np.var(inc, ddof=1)),
        float(np.var(ref, ddof=1)),
    )


def _check_disjoint(t1, lag1, t2, lag2):
    a = (t1 - lag1, t1)
    b = (t2, t2 + lag2)
    # closed intervals may touch at an endpoint; interiors must be disjoint
    if not (a[1] <= b[0] or b[1] <= a[0]):
        raise OverlapError(
            f"increment intervals [{a[0]}, {a[1]}] and [{b[0]}, {b[1]}] overlap; "
            "correlations are only defined for non-overlapping intervals"
        )


def increment_autocorrelation(
    e: Ensemble, t1: float, lag1: float, t2: float, lag2: float
) -> Estimate:
    """Correlation of x(t1) - x(t1 - lag1) with x(t2 + lag2) - x(t2).

    The two intervals must not overlap (touching endpoints is allowed).
    The standard error is the asymptotic 1/sqrt(N).
    """
    if lag1 <= 0 or lag2 <= 0:
        raise ValueError("lags must be positive")
    _check_disjoint(t1, lag1, t2, lag2)
    a0, a1, b0, b1 = _cols(e, t1 - lag1, t1, t2, t2 + lag2)
    da, db = a1 - a0, b1 - b0
    r = float(np.corrcoef(da, db)[0, 1])
    return Estimate(r, float(1.0 / np.sqrt(e.n_paths)))


def process_autocorrelation(e: Ensemble, t: float, lag: float) -> Estimate:
    """Sample mean of x(t) x(t + lag), measured from x0."""
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    x0 = _origin(e)
    a, b = _cols(e, t, t + lag)
    return mean_estimate((a - x0) * (b - x0))


@dataclass(frozen=True, eq=False)
class MartingaleResult:
    """<x(t) x(t+T)> - <x^2(t)> plus a binned conditional-mean check.

    ``bin_x`` holds the mean of x(t) inside each equal-count bin and
    ``bin_next`` the mean of x(t+T) over the same paths; for a martingale
    they coincide up to ``bin_se``.
    """

    residual: Estimate
    bin_x: np.ndarray
    bin_next: np.ndarray
    bin_se: np.ndarray

    @property
    def max_bin_z(self) -> float:
        return float(np.max(np.abs(self.bin_next - self.bin_x) / self.bin_se))

    def as_dict(self) -> dict:
        return {
            "value": self.residual.value,
            "se": self.residual.se,
            "max_conditional_mean_z": self.max_bin_z,
            "n_bins": int(self.bin_x.size),
        }


def martingale_residual(e: Ensemble, t: float, lag: float, n_bins: int = 20) -> MartingaleResult:
    """Measure how far x(t) x(t+T) falls short of reducing to x^2(t)."""
    if lag <= 0:
        raise ValueError("lag must be positive")
    x0 = _origin(e)
    a, b = _cols(e, t, t + lag)
    a, b = a - x0, b - x0
    # <x(t)x(t+T)> - <x^2(t)> = <x(t)(x(t+T) - x(t))>
    residual = mean_estimate(a * (b - a))
    order = np.argsort(a, kind="stable")
    groups = np.array_split(order, n_bins)
    bin_x = np.array([a[g].mean() for g in groups])
    bin_next = np.array([b[g].mean() for g in groups])
    bin_se = np.array([np.std(b[g] - a[g], ddof=1) / np.sqrt(g.size) for g in groups])
    return MartingaleResult(residual, bin_x, bin_next, bin_se)


@dataclass(frozen=True)
class TransitionKernel:
    """Gaussian transition density with variance c (t^e - t0^e), e = 2H.

    ``exponent`` overrides e; it exists to build deliberately inconsistent
    kernels for checking :func:`ck_residual`.
    """

    H: float
    c: float = 1.0
    exponent: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.H < 1:
            raise ValueError(f"H must lie in (0, 1), got {self.H!r}")
        if not self.c > 0:
            raise ValueError("c must be positive")

    def variance(self, t0: float, t: float) -> float:
        e = 2.0 * self.H if self.exponent is None else self.exponent
        return self.c * (t**e - t0**e)

    def mean(self, x0):
        return x0

    def __call__(self, x, t, x0, t0):
        return kernel_density(self, x, t, x0, t0)


def kernel_density(k: TransitionKernel, x, t: float, x0, t0: float):
    """g(x, t; x0, t0)."""
    if not t > t0 >= 0:
        raise ValueError(f"need t > t0 >= 0, got t={t!r}, t0={t0!r}")
    v = k.variance(t0, t)
    d = np.asarray(x, dtype=np.float64) - k.mean(np.asarray(x0, dtype=np.float64))
    out = np.exp(-0.5 * d * d / v) / np.sqrt(2.0 * np.pi * v)
    return float(out) if out.ndim == 0 else out


def propagate_density(
    k: TransitionKernel, f: DensityEstimate, t_target: float, width: Optional[float] = None
) -> DensityEstimate:
    """Push a histogram density forward: f(x, T) = integral g(x, T; y, t) f(y) dy.

    Each input bin is integrated exactly against the Gaussian kernel (the
    input is piecewise constant), and the result is sampled at the centers of
    uniform output bins of ``width`` (default: the narrowest input bin)
    covering the input support widened by 8 kernel standard deviations.
    """
    if not t_target > f.t:
        raise ValueError(f"t_target={t_target!r} must exceed the density time {f.t!r}")
    if abs(f.mass - 1.0) > 1e-6:
        raise ValueError(f"input density is not normalized (mass {f.mass!r})")
    s = np.sqrt(k.variance(f.t, t_target))
    if width is None:
        width = float(np.min(f.widths))
    lo = f.bin_edges[0] - 8.0 * s
    hi = f.bin_edges[-1] + 8.0 * s
    n_out = int(np.ceil((hi - lo) / width))
    edges = lo + width * np.arange(n_out + 1)
    x = 0.5 * (edges[1:] + edges[:-1])
    a, b = f.bin_edges[:-1], f.bin_edges[1:]
    live = f.density > 0
    a, b, dens = a[live], b[live], f.density[live]
    out = np.empty_like(x)
    for i in range(0, x.size, 2048):
        xc = x[i : i + 2048, None]
        # integral over [a, b] of the Gaussian in y centred on x
        out[i : i + 2048] = (ndtr((xc - a) / s) - ndtr((xc - b) / s)) @ dens
    mass = float(np.sum(out) * width)
    return DensityEstimate(float(t_target), edges, out / mass, f.n_samples, f"propagated:{f.binning}")


def ck_residual(
    k: TransitionKernel,
    t0: float,
    t_mid: float,
    t: float,
    x_grid,
    inner: Optional[TransitionKernel] = None,
    n_starts: int = 9,
) -> float:
    """Sup-norm gap between g(x,t;x0,t0) and its composition through t_mid.

    The composition integrates g(x,t;x',t_mid) g(x',t_mid;x0,t0) over x' by
    the trapezoid rule on ``x_grid``. ``inner`` replaces the kernel of the
    first leg. Starting points x0 are ``n_starts`` grid points within one
    standard deviation of the grid centre; x ranges over the whole grid.
    """
    if not t0 < t_mid < t:
        raise ValueError(f"need t0 < t_mid < t, got {t0!r}, {t_mid!r}, {t!r}")
    x = np.asarray(x_grid, dtype=np.float64)
    if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
        raise ValueError("x_grid must be an increasing 1-D grid")
    inner = k if inner is None else inner
    sd = np.sqrt(max(k.variance(t0, t), k.variance(t_mid, t), inner.variance(t0, t_mid)))
    if x[-1] - x[0] < 8.0 * sd:
        raise ValueError(
            f"x_grid spans {x[-1] - x[0]:g} < 8 standard deviations ({8 * sd:g}) "
            "of the widest kernel"
        )
    centre = 0.5 * (x[0] + x[-1])
    starts = x[np.abs(x - centre) <= sd]
    starts = starts[np.linspace(0, starts.size - 1, min(n_starts, starts.size)).astype(int)]
    w = np.gradient(x)
    w[[0, -1]] = 0.5 * np.diff(x)[[0, -1]]
    direct = kernel_density(k, x[:, None], t, starts[None, :], t0)
    outer = kernel_density(k, x[:, None], t, x[None, :], t_mid)
    first = kernel_density(inner, x[:, None], t_mid, starts[None, :], t0)
    composed = outer @ (w[:, None] * first)
    return float(np.max(np.abs(direct - composed)))


@dataclass(frozen=True, eq=False)
class TwoPointDensity:
    """Joint histogram of (x(t1), x(t2)).

    ``dilation_distance`` compares the histogram at (lam t1, lam t2) with
    this one after rescaling x by lam^h, as a Kolmogorov distance between
    the two joint CDFs on the shared grid; ``nan`` when not computed.
    """

    times: tuple
    edges1: np.ndarray
    edges2: np.ndarray
    density: np.ndarray
    n_samples: int
    conditional_slope: float
    dilation_distance: float = float("nan")
    dilation: Optional[float] = None

    @property
    def areas(self) -> np.ndarray:
        return np.outer(np.diff(self.edges1), np.diff(self.edges2))

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * self.areas))

    def marginal(self, axis: int) -> np.ndarray:
        """Marginal density along time ``axis`` (0 for t1, 1 for t2)."""
        if axis == 0:
            return np.sum(self.density * np.diff(self.edges2)[None, :], axis=1)
        return np.sum(self.density * np.diff(self.edges1)[:, None], axis=0)

    def conditional_mean(self) -> tuple[np.ndarray, np.ndarray]:
        """Bin centres of x(t1) and the mean of x(t2) in each occupied column."""
        c1 = 0.5 * (self.edges1[1:] + self.edges1[:-1])
        c2 = 0.5 * (self.edges2[1:] + self.edges2[:-1])
        w = self.density * np.diff(self.edges2)[None, :]
        row = w.sum(axis=1)
        ok = row > 0
        return c1[ok], (w[ok] @ c2) / row[ok]

    def conditional(self, i: int) -> np.ndarray:
        """Density of x(t2) given x(t1) in bin ``i``, i.e. f2 / f1."""
        m = self.marginal(0)[i]
        if m <= 0:
            raise ValueError(f"bin {i} of x(t1) is empty")
        return self.density[i] / m


def _hist2d(a, b, binning):
    e1 = np.histogram_bin_edges(a, bins=binning)
    e2 = np.histogram_bin_edges(b, bins=binning)
    counts, e1, e2 = np.histogram2d(a, b, bins=[e1, e2])
    dens = counts / (a.size * np.outer(np.diff(e1), np.diff(e2)))
    return e1, e2, dens


def _joint_cdf(a, b, g1, g2):
    # fraction of points with a <= g1[i] and b <= g2[j]
    ia = np.searchsorted(g1, a, side="left")
    ib = np.searchsorted(g2, b, side="left")
    keep = (ia < g1.size) & (ib < g2.size)
    h = np.zeros((g1.size, g2.size))
    np.add.at(h, (ia[keep], ib[keep]), 1.0)
    return h.cumsum(0).cumsum(1) / a.size


def two_point_density(
    e: Ensemble, t1: float, t2: float, binning="fd", dilation: Optional[float] = None, h=None
) -> TwoPointDensity:
    """Joint density f2 of (x(t1), x(t2)) with its marginals as in
    :func:`one_point_density`.

    ``conditional_slope`` is the regression coefficient of x(t2) on x(t1)
    read off the per-column conditional means: 1 for a martingale,
    C(t1, t2) / C(t1, t1) for a Gaussian process with covariance C.

    With ``dilation`` (a factor lam such that lam*t1 and lam*t2 are on the
    grid) the joint law at the dilated times is rescaled by lam^-h (``h``
    defaults to the ensemble's Hurst parameter) and compared with the law
    at (t1, t2).
    """
    if not t1 < t2:
        raise ValueError(f"need t1 < t2, got {t1!r}, {t2!r}")
    x0 = _origin(e)
    a, b = (v - x0 for v in _cols(e, t1, t2))
    e1, e2, dens = _hist2d(a, b, binning)
    tp = TwoPointDensity((float(t1), float(t2)), e1, e2, dens, e.n_paths, float("nan"))
    cx, cm = tp.conditional_mean()
    wt = tp.marginal(0)[tp.marginal(0) > 0] * np.diff(e1)[tp.marginal(0) > 0]
    xm = np.sum(wt * cx)
    slope = float(np.sum(wt * (cx - xm) * cm) / np.sum(wt * (cx - xm) ** 2))
    dist = float("nan")
    if dilation is not None:
        if h is None:
            if e.spec is None:
                raise ValueError("dilation check needs h when the ensemble has no process")
            h = e.spec.hurst
        la, lb = (v - x0 for v in _cols(e, dilation * t1, dilation * t2))
        scale = dilation**-h
        g1 = np.quantile(a, np.linspace(0.01, 0.99, 50))
        g2 = np.quantile(b, np.linspace(0.01, 0.99, 50))
        dist = float(np.max(np.abs(_joint_cdf(a, b, g1, g2) - _joint_cdf(la * scale, lb * scale, g1, g2))))
    return TwoPointDensity(tp.times, e1, e2, dens, e.n_paths, slope, dist, dilation)


@dataclass(frozen=True, eq=False)
class StructureReport:
    increment_corr: Estimate
    stationarity: StationarityResult
    martingale: MartingaleResult
    ck_residual: float
    settings: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "settings": self.settings,
            "increment_corr": {"value": self.increment_corr.value, "se": self.increment_corr.se},
            "stationarity": self.stationarity.as_dict(),
            "martingale_residual": self.martingale.as_dict(),
            "ck_residual": self.ck_residual,
        }

"""Core containers: time grids, sample paths, ensembles and process parameters.

Everything here is immutable once built. Arrays are stored read-only so an
ensemble can be handed to several workers without copying.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

__all__ = [
    "TimeGrid",
    "SamplePath",
    "Ensemble",
    "ProcessKind",
    "ProcessSpec",
    "DriftSpec",
    "make_grid",
    "apply_drift",
    "remove_drift",
]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing, nonnegative observation times."""

    times: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(t)):
            raise ValueError("time grid contains non-finite values")
        if t[0] < 0:
            raise ValueError(f"time grid starts at {t[0]!r} < 0")
        steps = np.diff(t)
        if np.any(steps <= 0):
            k = int(np.argmax(steps <= 0))
            raise ValueError(
                f"time grid is not strictly increasing at index {k + 1} "
                f"({t[k]!r} -> {t[k + 1]!r})"
            )
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self) -> Iterator[float]:
        return iter(self.times.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.times.shape == other.times.shape and bool(
            np.array_equal(self.times, other.times)
        )

    def __hash__(self) -> int:
        return hash(self.times.tobytes())

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def index(self, t: float) -> int:
        """Position of ``t`` on the grid; raises KeyError when absent.

        Matching is exact up to a relative tolerance of 1e-12 so values
        parsed back from text still resolve.
        """
        k = int(np.searchsorted(self.times, t))
        for j in (k - 1, k):
            if 0 <= j < self.times.size and np.isclose(
                self.times[j], t, rtol=1e-12, atol=1e-300
            ):
                return j
        raise KeyError(f"time {t!r} is not on the grid")

    def __contains__(self, t) -> bool:
        try:
            self.index(float(t))
        except KeyError:
            return False
        return True


def make_grid(kind: str, t_start: float, t_end: float, n: int) -> TimeGrid:
    """Build a uniform or geometric grid with ``n`` points on [t_start, t_end].

    >>> list(make_grid("uniform", 0, 4, 5))
    [0.0, 1.0, 2.0, 3.0, 4.0]
    >>> list(make_grid("geometric", 1, 8, 4))
    [1.0, 2.0, 4.0, 8.0]
    """
    if n < 2:
        raise ValueError("grid needs n >= 2 points")
    if not t_start < t_end:
        raise ValueError(f"t_start={t_start!r} must be below t_end={t_end!r}")
    if t_start < 0:
        raise ValueError("grid times must be nonnegative")
    if kind == "uniform":
        times = np.linspace(t_start, t_end, n)
    elif kind == "geometric":
        if t_start <= 0:
            raise ValueError("geometric grid needs t_start > 0 (ratio undefined at 0)")
        # log2 spacing keeps power-of-two ratios exact
        k = np.arange(n) / (n - 1)
        times = t_start * np.exp2(np.log2(t_end / t_start) * k)
    else:
        raise ValueError(f"unknown grid kind {kind!r}")
    times[0], times[-1] = t_start, t_end
    return TimeGrid(times)


@dataclass(frozen=True)
class DriftSpec:
    """Deterministic drift rate R(t).

    Either ``rate`` (a constant) or the pair ``times``/``rates`` (a table,
    linearly interpolated) must be given.
    """

    rate: Optional[float] = None
    times: tuple = ()
    rates: tuple = ()

    def __post_init__(self):
        if self.rate is not None:
            if self.times or self.rates:
                raise ValueError("give either a constant rate or a table, not both")
            object.__setattr__(self, "rate", float(self.rate))
            return
        times = tuple(float(t) for t in self.times)
        rates = tuple(float(r) for r in self.rates)
        if len(times) < 2 or len(times) != len(rates):
            raise ValueError("tabulated drift needs >= 2 (time, rate) pairs")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("tabulated drift times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def constant(cls, rate: float) -> "DriftSpec":
        return cls(rate=rate)

    @classmethod
    def tabulated(cls, times: Sequence[float], rates: Sequence[float]) -> "DriftSpec":
        return cls(times=tuple(times), rates=tuple(rates))

    @property
    def is_constant(self) -> bool:
        return self.rate is not None

    def __call__(self, t):
        if self.is_constant:
            return np.full(np.shape(t), self.rate)
        return np.interp(t, self.times, self.rates)

    def integral(self, grid: TimeGrid) -> np.ndarray:
        """Cumulative integral of R from the first grid time to every grid time.

        Constant rates are integrated exactly; tables use the trapezoid rule
        on the union of grid and table knots, which is exact for the
        piecewise-linear interpolant.
        """
        t = grid.times
        if self.is_constant:
            return self.rate * (t - t[0])
        if t[0] < self.times[0] or t[-1] > self.times[-1]:
            raise ValueError(
                f"drift table covers [{self.times[0]}, {self.times[-1]}] but the "
                f"grid spans [{t[0]}, {t[-1]}]"
            )
        knots = np.union1d(t, [s for s in self.times if t[0] < s < t[-1]])
        r = np.interp(knots, self.times, self.rates)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (r[1:] + r[:-1]) * np.diff(knots))])
        return cum[np.searchsorted(knots, t)]


class ProcessKind(str, enum.Enum):
    FBM = "fbm"
    MARKOV_EXACT = "markov-exact"
    MARKOV_SDE = "markov-sde"


@dataclass(frozen=True)
class ProcessSpec:
    """Parameters of a generatable process.

    ``diffusion_shape`` is the scaling function D(u) of the Markov SDE; when
    omitted the constant ``2*hurst*c`` is used, which makes the Ito variance
    equal ``c * t**(2*hurst)`` exactly.
    """

    kind: ProcessKind
    hurst: float
    c: float = 1.0
    diffusion_shape: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )
    drift: Optional[DriftSpec] = None
    x0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ProcessKind(self.kind))
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (0, 1), got {self.hurst!r}")
        if not self.c > 0.0:
            raise ValueError(f"c must be positive, got {self.c!r}")
        object.__setattr__(self, "hurst", float(self.hurst))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "x0", float(self.x0))

    def diffusion(self, u):
        """D(u), broadcasting over arrays."""
        if self.diffusion_shape is None:
            return np.full(np.shape(u), 2.0 * self.hurst * self.c)
        return np.asarray(self.diffusion_shape(u), dtype=np.float64)


# An undo record: the drift that was applied and the values before it.
_History = tuple


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray
    detrended: bool = True
    _history: _History = field(default=(), repr=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (len(self.grid),):
            raise ValueError(
                f"path has {v.size} values for a grid of {len(self.grid)} times"
            )
        object.__setattr__(self, "values", v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SamplePath):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.detrended == other.detrended
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class Ensemble:
    """N sample paths on one grid, stored as an (N, len(grid)) array.

    ``diagnostics`` carries generator side outputs keyed by name, e.g. the
    Ito variance accumulated by the SDE integrator.
    """

    grid: TimeGrid
    values: np.ndarray
    master_seed: Optional[int] = None
    spec: Optional[ProcessSpec] = None
    detrended: bool = True
    diagnostics: dict = field(default_factory=dict, repr=False)
    _history: _History = field(default=(), repr=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[1] != len(self.grid):
            raise ValueError(
                f"ensemble values of shape {v.shape} do not match a grid of "
                f"{len(self.grid)} times"
            )
        object.__setattr__(self, "values", v)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.n_paths

    @property
    def paths(self) -> list[SamplePath]:
        return [SamplePath(self.grid, row, self.detrended) for row in self.values]

    def at(self, t: float) -> np.ndarray:
        """Cross-section x_i(t) over all paths."""
        return self.values[:, self.grid.index(t)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ensemble):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.detrended == other.detrended
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_paths(cls, paths: Sequence[SamplePath], **kw) -> "Ensemble":
        if not paths:
            raise ValueError("no paths given")
        grid = paths[0].grid
        for i, p in enumerate(paths):
            if p.grid != grid:
                raise ValueError(f"path {i} does not share the ensemble grid")
        return cls(grid, np.stack([p.values for p in paths]), **kw)


Drifted = Union[SamplePath, Ensemble]


def apply_drift(obj: Drifted, drift: DriftSpec) -> Drifted:
    """Add the integrated drift to a path or to every path of an ensemble.

    The value at grid time t_k gains the integral of R from t_0 to t_k.
    """
    gain = drift.integral(obj.grid)
    values = obj.values + gain
    history = obj._history + ((drift, obj.values, obj.detrended),)
    return _replace(obj, values, detrended=False, history=history)


def remove_drift(obj: Drifted, drift: DriftSpec) -> Drifted:
    """Subtract the integrated drift, leaving the martingale part.

    Undoing the most recent :func:`apply_drift` of the same drift restores
    the earlier path bit for bit (flag included); otherwise the integral is
    subtracted and the result is flagged detrended.
    """
    gain = drift.integral(obj.grid)
    if obj._history and obj._history[-1][0] == drift:
        _, previous, was_detrended = obj._history[-1]
        return _replace(obj, previous, was_detrended, obj._history[:-1])
    return _replace(obj, obj.values - gain, detrended=True, history=obj._history)


def _replace(obj, values, detrended, history):
    if isinstance(obj, SamplePath):
        return SamplePath(obj.grid, values, detrended, history)
    return Ensemble(
        obj.grid,
        values,
        master_seed=obj.master_seed,
        spec=obj.spec,
        detrended=detrended,
        diagnostics=obj.diagnostics,
        _history=history,
    )

"""Ensemble generators for fBm and the scaling Gaussian Markov process.

Every path draws its Gaussian noise from its own counter-based stream whose
key is derived from ``(master_seed, path_index)``. Paths are produced in
fixed blocks of :data:`BLOCK_SIZE`, so the output is bit-identical whatever
the number of workers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .process import Ensemble, ProcessKind, ProcessSpec, TimeGrid

__all__ = [
    "NoiseStream",
    "CovarianceMatrix",
    "FactorizationError",
    "DiffusionError",
    "fbm_covariance",
    "covariance_matrix",
    "gen_fbm",
    "gen_scaling_markov_exact",
    "gen_scaling_markov_sde",
    "generate",
    "BLOCK_SIZE",
]

log = logging.getLogger(__name__)

BLOCK_SIZE = 256
JITTER_START = 1e-12
JITTER_MAX = 1e-8


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, pivot: int, jitter: float):
        super().__init__(
            f"covariance factorization failed at pivot {pivot} even with "
            f"diagonal jitter {jitter:g}"
        )
        self.pivot = pivot
        self.jitter = jitter


class DiffusionError(ValueError):
    """Raised when D(x, t) is not strictly positive and finite."""


def substream_seed(master_seed: int, index: int) -> int:
    """64-bit key for path ``index``, split off ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class NoiseStream:
    """I.i.d. standard Gaussian variates from a keyed Philox stream."""

    substream_seed: int
    counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._gen = np.random.Generator(np.random.Philox(key=self.substream_seed))

    @classmethod
    def for_path(cls, master_seed: int, index: int) -> "NoiseStream":
        return cls(substream_seed(master_seed, index))

    def normal(self, size: int) -> np.ndarray:
        z = self._gen.standard_normal(size)
        self.counter += size
        return z


def _noise_block(master_seed: int, start: int, stop: int, size: int) -> np.ndarray:
    return np.stack(
        [NoiseStream.for_path(master_seed, i).normal(size) for i in range(start, stop)]
    )


def _check_paths(n_paths: int):
    if n_paths < 2:
        raise ValueError(f"an ensemble needs at least 2 paths, got {n_paths}")


def _blocks(n_paths: int, size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]


def _map_blocks(fn, blocks, workers: int) -> list:
    if workers <= 1 or len(blocks) == 1:
        return [fn(s, e) for s, e in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))


def _run_blocks(fn, n_paths: int, workers: int) -> np.ndarray:
    return np.concatenate(_map_blocks(fn, _blocks(n_paths), workers), axis=0)


def fbm_covariance(s, t, H: float, c: float = 1.0):
    """Covariance of fBm, (c/2) (s^2H + t^2H - |t - s|^2H).

    Broadcasts over array arguments.
    """
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("times must be nonnegative")
    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H!r}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c!r}")
    h2 = 2.0 * H
    out = 0.5 * c * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    grid: TimeGrid
    entries: np.ndarray

    def cholesky(self) -> tuple[np.ndarray, float]:
        """Lower factor of the entries restricted to positive times.

        Returns the factor and the diagonal jitter that was needed. Jitter
        starts at 1e-12 (relative to the largest variance) and grows tenfold
        up to 1e-8 before giving up.
        """
        pos = self.grid.times > 0
        a = self.entries[np.ix_(pos, pos)]
        scale = float(np.max(np.diag(a))) if a.size else 1.0
        jitter = 0.0
        while True:
            factor, info = lapack.dpotrf(a + jitter * scale * np.eye(len(a)), lower=1)
            if info == 0:
                if jitter:
                    log.info("covariance factorized with jitter %g", jitter)
                return np.tril(factor), jitter
            if info < 0:
                raise ValueError(f"dpotrf rejected argument {-info}")
            if jitter >= JITTER_MAX:
                raise FactorizationError(pivot=int(info), jitter=jitter)
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0


def covariance_matrix(grid: TimeGrid, H: float, c: float = 1.0) -> CovarianceMatrix:
    t = grid.times
    return CovarianceMatrix(grid, fbm_covariance(t[:, None], t[None, :], H, c))


def _ensemble(spec, grid, values, seed, **diagnostics) -> Ensemble:
    return Ensemble(grid, values, master_seed=int(seed), spec=spec, diagnostics=diagnostics)


def _finish(ens: Ensemble) -> Ensemble:
    if ens.spec.drift is not None:
        from .process import apply_drift

        return apply_drift(ens, ens.spec.drift)
    return ens


def gen_fbm(spec: ProcessSpec, grid: TimeGrid, n_paths: int, seed: int, workers: int = 1) -> Ensemble:
    """Exact fBm sampled on ``grid`` by Cholesky factorization.

    The process starts from ``spec.x0`` at time zero; a grid time of zero
    therefore holds ``x0`` exactly.
    """
    _check_paths(n_paths)
    pos = grid.times > 0
    factor, jitter = covariance_matrix(grid, spec.hurst, spec.c).cholesky()
    n = len(grid)

    def block(start, stop):
        z = _noise_block(seed, start, stop, n)
        out = np.full((stop - start, n), spec.x0)
        out[:, pos] += z[:, pos] @ factor.T
        return out

    values = _run_blocks(block, n_paths, workers)
    return _finish(_ensemble(spec, grid, values, seed, jitter=jitter))


def gen_scaling_markov_exact(
    spec: ProcessSpec, grid: TimeGrid, n_paths: int, seed: int, workers: int = 1
) -> Ensemble:
    """Scaling Gaussian Markov process with constant D(u) = 2Hc, sampled exactly.

    This is a Wiener process run on the clock tau = c t^2H, so increments
    between grid times are independent with variance
    c (t_{k+1}^2H - t_k^2H). The origin is t = 0 with value ``x0``.
    """
    _check_paths(n_paths)
    clock = spec.c * grid.times ** (2.0 * spec.hurst)
    scale = np.sqrt(np.diff(clock, prepend=0.0))
    n = len(grid)

    def block(start, stop):
        z = _noise_block(seed, start, stop, n)
        return spec.x0 + np.cumsum(z * scale, axis=1)

    values = _run_blocks(block, n_paths, workers)
    return _finish(_ensemble(spec, grid, values, seed))


def gen_scaling_markov_sde(
    spec: ProcessSpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    substeps: int = 64,
    workers: int = 1,
) -> Ensemble:
    """Euler-Maruyama for dx = sqrt(D(x, t)) dB with D(x, t) = t^(2H-1) D(u).

    Integration starts at the first grid time with x = ``x0`` and uses
    ``substeps`` equal steps per grid interval, evaluating D at the left end
    of each step. The ensemble diagnostic ``ito_variance`` holds the
    ensemble mean of the accumulated sum of D dt at every grid time.
    """
    _check_paths(n_paths)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    H = spec.hurst
    t = grid.times
    if H < 0.5 and t[0] <= 0:
        raise ValueError(
            "for H < 1/2 the diffusion t^(2H-1) D(u) diverges at t = 0; "
            "start the grid at t > 0"
        )
    n = len(grid)
    n_steps = (n - 1) * substeps
    # left endpoints of every Euler step
    fine = np.concatenate(
        [np.linspace(a, b, substeps, endpoint=False) for a, b in zip(t[:-1], t[1:])]
    )
    dt = np.repeat(np.diff(t) / substeps, substeps)
    time_factor = np.where(fine > 0, fine, 1.0) ** (2.0 * H - 1.0)
    if H > 0.5:
        time_factor = np.where(fine > 0, time_factor, 0.0)
    inv_scale = np.where(fine > 0, fine, np.inf) ** (-H)

    def block(start, stop):
        z = _noise_block(seed, start, stop, n_steps)
        x = np.full(stop - start, spec.x0)
        out = np.empty((stop - start, n))
        ito = np.zeros(n)
        acc = 0.0
        out[:, 0] = x
        for k in range(n_steps):
            u = (x - spec.x0) * inv_scale[k]
            d = time_factor[k] * spec.diffusion(u)
            if time_factor[k] > 0 and not np.all(np.isfinite(d) & (d > 0)):
                bad = int(np.argmin(np.isfinite(d) & (d > 0)))
                raise DiffusionError(
                    f"diffusion D(x, t) = {d[bad]!r} at t = {fine[k]!r} on path "
                    f"{start + bad} (x = {x[bad]!r}, u = {u[bad]!r})"
                )
            acc += float(np.sum(d)) * dt[k]
            x = x + np.sqrt(d * dt[k]) * z[:, k]
            if (k + 1) % substeps == 0:
                j = (k + 1) // substeps
                out[:, j] = x
                ito[j] = acc
        return np.concatenate([out, ito[None, :]], axis=0)

    # wide blocks amortize the per-step loop; capped at ~2**22 noise values
    size = int(np.clip(2**22 // n_steps, BLOCK_SIZE, 16 * BLOCK_SIZE))
    parts = _map_blocks(block, _blocks(n_paths, size), workers)
    values = np.concatenate([p[:-1] for p in parts], axis=0)
    ito_variance = np.sum([p[-1] for p in parts], axis=0) / n_paths
    return _finish(_ensemble(spec, grid, values, seed, ito_variance=ito_variance))


def generate(
    spec: ProcessSpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    substeps: int = 64,
    workers: int = 1,
) -> Ensemble:
    """Dispatch on ``spec.kind``."""
    if spec.kind is ProcessKind.FBM:
        return gen_fbm(spec, grid, n_paths, seed, workers=workers)
    if spec.kind is ProcessKind.MARKOV_EXACT:
        return gen_scaling_markov_exact(spec, grid, n_paths, seed, workers=workers)
    return gen_scaling_markov_sde(spec, grid, n_paths, seed, substeps=substeps, workers=workers)

"""Generate -> analyze -> report orchestration and report comparison."""
from __future__ import annotations

import contextlib
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .generators import generate
from .increments import (
    StructureReport,
    TransitionKernel,
    ck_residual,
    increment_autocorrelation,
    martingale_residual,
    stationarity_test,
)
from .io import dumps, export_series, import_series, write_csv
from .process import Ensemble, ProcessKind, ProcessSpec, TimeGrid, make_grid
from .scaling import curve_ks_distance, data_collapse, fit_hurst_variance, moment_scaling, variance_curve
from .stattools import ks_critical

__all__ = [
    "RunConfig",
    "Report",
    "PipelineError",
    "parse_grid",
    "run",
    "compare",
    "demo_configs",
    "run_demo",
    "ANALYSES",
]

ANALYSES = ("paths", "estimate", "collapse", "structure", "ck")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, error: Exception):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except (ValueError, KeyError, ArithmeticError, OSError, np.linalg.LinAlgError) as exc:
        raise PipelineError(name, exc) from exc


def parse_grid(text: str) -> TimeGrid:
    """Parse ``kind:t_start:t_end:n`` segments joined by ``+``.

    >>> list(parse_grid("uniform:0:2:3+geometric:2:8:3"))
    [0.0, 1.0, 2.0, 4.0, 8.0]
    """
    pieces = []
    for seg in text.split("+"):
        parts = seg.strip().split(":")
        if len(parts) != 4:
            raise ValueError(f"grid segment {seg!r} is not kind:t_start:t_end:n")
        kind, a, b, n = parts
        pieces.append(make_grid(kind, float(a), float(b), int(n)).times)
    return TimeGrid(np.unique(np.concatenate(pieces)))


@dataclass
class RunConfig:
    """Everything one run needs; round-trips through JSON.

    Worker count and output directory are deliberately not part of the
    config: neither may influence the report.
    """

    process: str = "fbm"
    hurst: float = 0.7
    c: float = 1.0
    x0: float = 0.0
    grid: str = "uniform:0:16:17+geometric:16:1024:7"
    paths: int = 4096
    seed: int = 1
    substeps: int = 64
    analyses: list = field(default_factory=lambda: ["estimate", "collapse", "structure", "ck"])
    input: Optional[str] = None
    layout: str = "path_id_t_x"
    moment_orders: list = field(default_factory=lambda: [1, 2, 4])
    collapse_times: Optional[list] = None
    collapse_h: Optional[float] = None
    increment_pair: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    stationarity_point: list = field(default_factory=lambda: [8.0, 1.0])
    martingale_point: list = field(default_factory=lambda: [1.0, 1.0])
    ck_times: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    ck_points: int = 2048

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**d)

    def dumps(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def spec(self) -> ProcessSpec:
        return ProcessSpec(ProcessKind(self.process), self.hurst, self.c, x0=self.x0)

    def time_grid(self) -> TimeGrid:
        return parse_grid(self.grid)

    def validate(self) -> None:
        """Check every precondition the selected stages rely on."""
        with stage("config"):
            unknown = set(self.analyses) - set(ANALYSES)
            if unknown:
                raise ValueError(f"unknown analyses {sorted(unknown)}")
            spec = self.spec()
            if self.input is None:
                grid = self.time_grid()
                if self.paths < 2:
                    raise ValueError("paths must be >= 2")
                if self.substeps < 1:
                    raise ValueError("substeps must be >= 1")
                if spec.kind is ProcessKind.MARKOV_SDE and spec.hurst < 0.5 and grid.start <= 0:
                    raise ValueError("markov-sde with H < 1/2 needs a grid starting at t > 0")
                self._check_times(grid)
            if "ck" in self.analyses:
                t0, tm, t = self.ck_times
                if not 0 <= t0 < tm < t:
                    raise ValueError("ck_times must satisfy 0 <= t0 < t_mid < t")

    def _check_times(self, grid: TimeGrid) -> None:
        need = []
        if "structure" in self.analyses:
            t1, l1, t2, l2 = self.increment_pair
            t, lag = self.stationarity_point
            tm, lm = self.martingale_point
            need += [t1 - l1, t1, t2, t2 + l2, t, t + lag, lag, tm, tm + lm]
        if "collapse" in self.analyses and self.collapse_times:
            need += list(self.collapse_times)
        missing = [v for v in need if v not in grid]
        if missing:
            raise ValueError(f"times {missing} are not on the grid {self.grid!r}")


@dataclass
class Report:
    body: dict

    def dumps(self) -> str:
        return dumps(self.body)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Report":
        with open(path) as fh:
            return cls(json.load(fh))


def _default_collapse_times(grid: TimeGrid) -> list[float]:
    pos = grid.times[grid.times > 0]
    if pos.size <= 8:
        return pos.tolist()
    idx = np.unique(np.linspace(0, pos.size - 1, 5).round().astype(int))
    return pos[idx].tolist()


def build_ensemble(config: RunConfig, workers: int = 1) -> Ensemble:
    if config.input is not None:
        return import_series(config.input, config.layout)
    return generate(
        config.spec(), config.time_grid(), config.paths, config.seed,
        substeps=config.substeps, workers=workers,
    )


def run(config: RunConfig, out=None, workers: int = 1) -> Report:
    """Run the configured stages and, with ``out``, write the artifacts.

    Artifacts: ``report.json``; ``variance.csv`` (t, variance); ``collapse.csv``
    (u and one rescaled density column per time); ``paths.csv`` when the
    "paths" stage is selected.
    """
    config.validate()
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    body: dict = {
        "tool": "hurstlab",
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
    }
    needs_data = any(a in config.analyses for a in ("paths", "estimate", "collapse", "structure"))
    ens = None
    if needs_data:
        with stage("generate"):
            ens = build_ensemble(config, workers)
        body["grid"] = ens.grid.times.tolist()
        body["n_paths"] = ens.n_paths
        if "ito_variance" in ens.diagnostics:
            body["ito_variance"] = ens.diagnostics["ito_variance"].tolist()
        if out is not None and "paths" in config.analyses:
            export_series(ens, out / "paths.csv")

    h_for_collapse = config.collapse_h
    if "estimate" in config.analyses:
        with stage("estimate"):
            curve = variance_curve(ens)
            fit = fit_hurst_variance(curve.positive())
            body["variance_fit"] = fit.as_dict()
            body["moment_fits"] = {
                str(n): moment_scaling(ens, n).as_dict() for n in config.moment_orders
            }
            if h_for_collapse is None:
                h_for_collapse = fit.h_hat
            if out is not None:
                write_csv(out / "variance.csv", ["t", "variance"], list(curve))

    if "collapse" in config.analyses:
        with stage("collapse"):
            h = config.hurst if h_for_collapse is None else h_for_collapse
            times = config.collapse_times or _default_collapse_times(ens.grid)
            rep = data_collapse(ens, h, times, c=config.c if config.input is None else None)
            body["collapse"] = rep.summary()
            if out is not None:
                ts = list(rep.rescaled_curves)
                rows = [
                    [u] + [rep.rescaled_curves[t][i] for t in ts] for i, u in enumerate(rep.u_grid)
                ]
                write_csv(out / "collapse.csv", ["u"] + [f"F_t={t:.17g}" for t in ts], rows)

    ck_value = None
    if "ck" in config.analyses:
        with stage("ck"):
            ck_value = _ck(config)
            body["ck_residual"] = ck_value

    if "structure" in config.analyses:
        with stage("structure"):
            t1, l1, t2, l2 = config.increment_pair
            st, sl = config.stationarity_point
            mt, ml = config.martingale_point
            report = StructureReport(
                increment_autocorrelation(ens, t1, l1, t2, l2),
                stationarity_test(ens, st, sl),
                martingale_residual(ens, mt, ml),
                ck_value if ck_value is not None else float("nan"),
                settings={
                    "increment_pair": [t1, l1, t2, l2],
                    "stationarity_point": [st, sl],
                    "martingale_point": [mt, ml],
                },
            )
            body["structure"] = report.as_dict()

    result = Report(body)
    if out is not None:
        result.save(out / "report.json")
    return result


def _ck(config: RunConfig) -> float:
    k = TransitionKernel(config.hurst, config.c)
    t0, tm, t = config.ck_times
    sd = np.sqrt(k.variance(t0, t))
    x = np.linspace(-10.0 * sd, 10.0 * sd, config.ck_points)
    return ck_residual(k, t0, tm, t, x)


def compare(a, b) -> dict:
    """Side-by-side differences between two reports.

    Both reports need the same grid and the same estimation settings.
    """
    a = a.body if isinstance(a, Report) else a
    b = b.body if isinstance(b, Report) else b
    if a.get("grid") != b.get("grid"):
        raise ValueError("reports were produced on different grids")
    keys = ("moment_orders", "collapse_times", "increment_pair", "stationarity_point", "martingale_point")
    for k in keys:
        if a["config"].get(k) != b["config"].get(k):
            raise ValueError(f"reports differ in estimation setting {k!r}")
    out: dict = {}
    if "variance_fit" in a and "variance_fit" in b:
        fa, fb = a["variance_fit"], b["variance_fit"]
        diff = fa["h_hat"] - fb["h_hat"]
        se = float(np.hypot(fa["h_se"], fb["h_se"]))
        out["hurst"] = {
            "a": fa["h_hat"],
            "b": fb["h_hat"],
            "difference": diff,
            "combined_se": se,
            "indistinguishable": bool(abs(diff) < 3.0 * se) if se > 0 else diff == 0,
        }
    if "collapse" in a and "collapse" in b:
        ca, cb = a["collapse"], b["collapse"]
        dist = curve_ks_distance(ca["u_grid"], ca["mean_curve"], cb["u_grid"], cb["mean_curve"])
        crit = float(ks_critical(ca["n_samples"], cb["n_samples"]))
        out["collapse"] = {
            "collapse_error_a": ca["collapse_error"],
            "collapse_error_b": cb["collapse_error"],
            "mean_curve_ks": dist,
            "critical_value": crit,
            "curves_match": bool(dist < crit),
        }
    if "structure" in a and "structure" in b:
        sa, sb = a["structure"], b["structure"]
        ia, ib = sa["increment_corr"], sb["increment_corr"]
        ma, mb = sa["martingale_residual"], sb["martingale_residual"]
        va, vb = sa["stationarity"]["verdict"], sb["stationarity"]["verdict"]
        out["increments"] = {
            "increment_corr_difference": ia["value"] - ib["value"],
            "increment_corr_combined_se": float(np.hypot(ia["se"], ib["se"])),
            "martingale_residual_difference": ma["value"] - mb["value"],
            "martingale_residual_combined_se": float(np.hypot(ma["se"], mb["se"])),
            "stationarity_verdict_a": va,
            "stationarity_verdict_b": vb,
            "verdicts_differ": va != vb,
        }
    return out


def demo_configs(seed: int = 1, paths: int = 4096) -> tuple[RunConfig, RunConfig]:
    """fBm and exact scaling Markov runs at H = 0.7 on the same grid.

    The Markov run uses ``seed + 1`` so the two ensembles are independent.
    """
    fbm = RunConfig(process="fbm", hurst=0.7, paths=paths, seed=seed)
    markov = RunConfig(process="markov-exact", hurst=0.7, paths=paths, seed=seed + 1)
    return fbm, markov


def run_demo(out, seed: int = 1, paths: int = 4096, workers: int = 1) -> dict:
    out = Path(out)
    cf, cm = demo_configs(seed, paths)
    ra = run(cf, out / "fbm", workers)
    rb = run(cm, out / "markov", workers)
    summary = compare(ra, rb)
    (out / "compare.json").write_text(dumps(summary))
    return summary

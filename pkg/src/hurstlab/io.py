"""CSV ingestion/export and deterministic JSON rendering."""
from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .process import Ensemble, TimeGrid

__all__ = ["import_series", "export_series", "write_csv", "dumps", "fmt"]

LAYOUTS = ("single_column", "path_id_t_x")


class SeriesFormatError(ValueError):
    pass


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with fixed key order and 17-digit floats.

    Non-finite floats become ``null``. Numpy scalars and arrays are
    converted on the way.
    """
    return _render(obj, indent, 0) + "\n"


def _render(obj, indent, level) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (np.bool_,)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_render(str(k), indent, 0)}: {_render(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_render(v, indent, 0) for v in obj) + "]"
        items = [pad + _render(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot render {type(obj).__name__} as JSON")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def export_series(e: Ensemble, path) -> None:
    """Write an ensemble as ``path_id,t,x`` rows."""
    t = e.grid.times
    rows = (
        (i, t[k], e.values[i, k]) for i in range(e.n_paths) for k in range(t.size)
    )
    write_csv(path, ["path_id", "t", "x"], rows)


def _number(cell: str, lineno: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise SeriesFormatError(f"line {lineno}: non-numeric {column} value {cell!r}") from None


def import_series(path, layout: str = "path_id_t_x") -> Ensemble:
    """Read a CSV of observations into an ensemble.

    ``single_column`` holds one series, taken at unit-spaced times starting
    at 1. ``path_id_t_x`` holds any number of paths, which must all share
    the same set of times.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; choose from {LAYOUTS}")
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SeriesFormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if layout == "single_column":
        if len(header) != 1:
            raise SeriesFormatError(f"{path}: expected one column, header has {len(header)}")
        x = [_number(r[0], i + 2, header[0]) for i, r in enumerate(body) if r]
        if len(x) < 2:
            raise SeriesFormatError(f"{path}: need at least 2 values")
        grid = TimeGrid(np.arange(1, len(x) + 1, dtype=np.float64))
        return Ensemble(grid, np.array([x]), detrended=False)

    cols = [h.strip() for h in header]
    if cols != ["path_id", "t", "x"]:
        raise SeriesFormatError(f"{path}: header must be path_id,t,x, got {','.join(header)}")
    series: "OrderedDict[str, list]" = OrderedDict()
    for i, r in enumerate(body, start=2):
        if not r:
            continue
        if len(r) != 3:
            raise SeriesFormatError(f"line {i}: expected 3 cells, got {len(r)}")
        pid = r[0].strip()
        series.setdefault(pid, []).append((_number(r[1], i, "t"), _number(r[2], i, "x")))
    if not series:
        raise SeriesFormatError(f"{path}: no data rows")
    ids = list(series)
    first = sorted(series[ids[0]])
    times = [t for t, _ in first]
    values = []
    for pid in ids:
        obs = sorted(series[pid])
        if [t for t, _ in obs] != times:
            raise SeriesFormatError(
                f"path_id {pid!r} is observed at different times than path_id {ids[0]!r}"
            )
        values.append([x for _, x in obs])
    return Ensemble(TimeGrid(times), np.array(values), detrended=False)

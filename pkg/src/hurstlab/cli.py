"""Command-line front end.

Every subcommand accepts ``--config FILE`` (JSON, same fields as
:class:`~hurstlab.pipeline.RunConfig`); flags given on the command line
override values from the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .io import dumps
from .pipeline import PipelineError, Report, RunConfig, compare, run, run_demo

STAGES = {
    "generate": ["paths"],
    "estimate": ["estimate"],
    "collapse": ["estimate", "collapse"],
    "discriminate": ["structure", "ck"],
    "ck-check": ["ck"],
    "run": ["estimate", "collapse", "structure", "ck"],
}

# flag -> RunConfig field
FLAG_FIELDS = {
    "process": "process",
    "hurst": "hurst",
    "c": "c",
    "x0": "x0",
    "grid": "grid",
    "paths": "paths",
    "seed": "seed",
    "substeps": "substeps",
    "input": "input",
    "layout": "layout",
    "collapse_h": "collapse_h",
}


def _run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--process", choices=["fbm", "markov-exact", "markov-sde"])
    p.add_argument("--hurst", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--grid", help="kind:t_start:t_end:n, segments joined by '+'")
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--substeps", type=int)
    p.add_argument("--input", help="CSV of observed series instead of generating")
    p.add_argument("--layout", choices=["single_column", "path_id_t_x"])
    p.add_argument("--collapse-h", dest="collapse_h", type=float)
    p.add_argument("--collapse-times", type=float, nargs="+")
    p.add_argument("--ck-times", type=float, nargs=3, metavar=("T0", "T_MID", "T"))
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hurstlab",
        description="fBm vs scaling Markov processes: Hurst estimation, data collapse "
        "and increment diagnostics.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        _run_flags(sub.add_parser(name))
    p = sub.add_parser("compare", help="compare two report.json files")
    p.add_argument("report_a", type=Path)
    p.add_argument("report_b", type=Path)
    p.add_argument("--out", type=Path)
    p = sub.add_parser("demo", help="fBm vs Markov at H=0.7")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--paths", type=int, default=4096)
    p.add_argument("--out", type=Path, default=Path("demo"))
    p.add_argument("--workers", type=int, default=1)
    return parser


def config_from_args(args) -> RunConfig:
    values = {}
    if args.config is not None:
        with open(args.config) as fh:
            values.update(json.load(fh))
    for flag, fld in FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[fld] = v
    if args.collapse_times is not None:
        values["collapse_times"] = args.collapse_times
    if args.ck_times is not None:
        values["ck_times"] = args.ck_times
    values["analyses"] = STAGES[args.command]
    return RunConfig.from_dict(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "compare":
            summary = compare(Report.load(args.report_a), Report.load(args.report_b))
            text = dumps(summary)
            if args.out is not None:
                args.out.parent.mkdir(parents=True, exist_ok=True)
                args.out.write_text(text)
            sys.stdout.write(text)
            return 0
        if args.command == "demo":
            summary = run_demo(args.out, args.seed, args.paths, args.workers)
            sys.stdout.write(dumps(summary))
            return 0
        config = config_from_args(args)
        report = run(config, args.out, workers=args.workers)
        sys.stdout.write(f"wrote {args.out / 'report.json'}\n")
        if args.verbose:
            sys.stdout.write(report.dumps())
        return 0
    except PipelineError as exc:
        print(f"hurstlab: stage '{exc.stage}' failed: {exc.error}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"hurstlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

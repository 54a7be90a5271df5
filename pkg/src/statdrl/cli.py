"""Command line entry point.

    statdrl run CONFIG [--out DIR] [--seeds 1,2,3] [--workers N] [--overwrite]
    statdrl reproduce {fig2,fig5,fig6,fig7,fig8,appendixD} [...]
    statdrl check {bounds,closedness,all} [...]
    statdrl plotdata AGGREGATE_CSV [--out DIR]

Exit status is 0 on success, 1 when a cell fails or a check is violated and
2 for configuration or usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, build_config, defaults_for, load_config
from .experiments import RunDirectoryError, SchemaError, emit_plotdata, run_experiment

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
FIGURES = ("fig2", "fig5", "fig6", "fig7", "fig8", "appendixD")

logger = logging.getLogger("statdrl")


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statdrl", description="Tabular distributional RL experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every cell")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--out", help="output directory (default: runs/<kind>)")
        p.add_argument("--seeds", type=_seed_list, help="comma-separated seeds, replacing the configured ones")
        p.add_argument("--workers", type=_positive, help="worker processes (default: available CPUs)")
        p.add_argument("--overwrite", action="store_true", help="replace an existing run directory")

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config", help="YAML config file")
    run_flags(p)
    p = sub.add_parser("reproduce", help="run a named experiment with its built-in defaults")
    p.add_argument("figure", choices=FIGURES)
    run_flags(p)
    p = sub.add_parser("check", help="numeric checks of the approximation results")
    p.add_argument("which", choices=("bounds", "closedness", "all"))
    run_flags(p)
    p = sub.add_parser("plotdata", help="per-panel data files from an aggregate CSV")
    p.add_argument("aggregate", help="aggregate.csv written by a run")
    p.add_argument("--out", help="output directory (default: plotdata/ next to the aggregate)")
    return parser


def _execute(cfg, args, out) -> int:
    if args.seeds:
        cfg = cfg.with_overrides(seeds=args.seeds)
    manifest = run_experiment(cfg, out, workers=args.workers, overwrite=args.overwrite)
    failed = manifest["failed"]
    print(f"{cfg.kind}: {len(manifest['cells']) - failed}/{len(manifest['cells'])} cells ok -> {out}")
    return EXIT_FAILED if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plotdata":
            for path in emit_plotdata(args.aggregate, args.out):
                print(path)
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config)
            return _execute(cfg, args, args.out or cfg.out or f"runs/{cfg.kind}")
        if args.command == "reproduce":
            cfg = build_config(defaults_for(args.figure))
            return _execute(cfg, args, args.out or f"runs/{args.figure}")
        kinds = ("bounds", "closedness") if args.which == "all" else (args.which,)
        base = Path(args.out or "runs")
        status = EXIT_OK
        for kind in kinds:
            cfg = build_config(defaults_for(kind))
            out = base / kind if (args.which == "all" or not args.out) else base
            status = max(status, _execute(cfg, args, out))
        return status
    except (ConfigError, SchemaError, RunDirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if args.command == "plotdata" else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

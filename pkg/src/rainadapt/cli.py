"""``rainadapt`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ExperimentConfig, load_config
from .errors import DataError, NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here.
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--force", action="store_true", help="refetch sites even when cached")
    common.add_argument("--synthetic", action="store_true",
                        help="use the seeded synthetic source/target pair instead of cached weather data")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="rainadapt", description="Rainfall regression with cross-city adaptation.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("fetch", parents=[common], help="download and cache every configured site")
    sub.add_parser("train-source", parents=[common], help="train the network and baselines on the source city")
    p = sub.add_parser("adapt", parents=[common], help="adapt the source network to one target city")
    p.add_argument("--city", required=True)
    p = sub.add_parser("evaluate", parents=[common], help="score source-trained models on target test splits")
    p.add_argument("--city", action="append", help="restrict to a city (repeatable)")
    sub.add_parser("report", parents=[common], help="write comparison.csv, improvement.csv and report.txt")
    p = sub.add_parser("synth-demo", parents=[common], help="run the whole pipeline offline on synthetic data")
    p.add_argument("--out", type=Path, help="output directory for this run")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        cfg = cfg.with_overrides(seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = cfg.with_overrides(output_dir=str(args.out))
    return cfg


def _run(args) -> None:
    cfg = _config(args)
    cmd = args.command
    if cmd == "fetch":
        if args.synthetic:
            raise UsageError("fetch has nothing to do in --synthetic mode")
        for path in pipeline.cmd_fetch(cfg, force=args.force):
            print(path)
    elif cmd == "train-source":
        from .metrics import render_source_table

        print(render_source_table(pipeline.cmd_train_source(cfg, args.synthetic))[0], end="")
    elif cmd == "adapt":
        try:
            cfg.target(args.city)
        except KeyError as e:
            raise UsageError(e.args[0]) from None
        row = pipeline.cmd_adapt(cfg, args.city, args.synthetic)
        print(f"{row.city}: MAPE {row.before_mape:.4f} -> {row.after_mape:.4f} "
              f"({row.relative_drop:.2f}% relative drop)")
    elif cmd == "evaluate":
        try:
            reports = pipeline.cmd_evaluate(cfg, args.synthetic, args.city)
        except KeyError as e:
            raise UsageError(e.args[0]) from None
        for r in reports:
            print(f"{r.city:<14} {r.method:<5} MAPE {r.mape:9.4f}  MSE {r.mse:9.4f}  MAE {r.mae:8.4f}")
    elif cmd == "report":
        print(pipeline.cmd_report(cfg, args.synthetic), end="")
    elif cmd == "synth-demo":
        print(pipeline.run_all(cfg, synthetic=True), end="")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"rainadapt: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except UsageError as e:
        print(f"rainadapt: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"rainadapt: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"rainadapt: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as e:
        # Invalid config files and unreadable paths are the caller's to fix.
        print(f"rainadapt: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

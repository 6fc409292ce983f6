"""Command-line experiment runner.

Verbs:
    run CONFIG             execute a config and write its artifacts
    validate CONFIG        schema + invariant validation, no execution
    list-experiments CONFIG  show the experiment units a config declares

Exit codes: 0 success, 2 invalid config / artifact conflict, 3 divergence.
The default output directory is --out, else the config's output_dir, else
$GMDISTILL_OUT, else ./out.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config, validate_config_file
from .runner import run_config

__all__ = ["main"]

ENV_OUT = "GMDISTILL_OUT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmdistill",
        description="Run score-distillation experiments on analytic Gaussian-mixture targets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a config and write artifacts")
    run_p.add_argument("config", help="path to a JSON experiment config")
    run_p.add_argument("--out", help=f"output directory (default: config, then ${ENV_OUT}, then ./out)")
    run_p.add_argument("--seed-override", type=int, default=None,
                       help="replace the config's seed list with this single seed")
    run_p.add_argument("--overwrite", action="store_true",
                       help="allow replacing existing artifact files")
    run_p.add_argument("--quiet", action="store_true", help="suppress the summary table")

    val_p = sub.add_parser("validate", help="validate a config without running it")
    val_p.add_argument("config")

    list_p = sub.add_parser("list-experiments", help="list the experiment units in a config")
    list_p.add_argument("config")
    return parser


def _resolve_out(args_out, config) -> str:
    if args_out:
        return args_out
    if config.output_dir:
        return config.output_dir
    return os.environ.get(ENV_OUT, "out")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "validate":
        violations = validate_config_file(args.config)
        if violations:
            for v in violations:
                print(f"INVALID {v}", file=sys.stderr)
            return 2
        print("ok")
        return 0

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"INVALID {v}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"INVALID config: {exc}", file=sys.stderr)
        return 2

    if args.command == "list-experiments":
        print(f"config {config.name}: {len(config.experiments)} unit(s), seeds {config.seeds}")
        for unit in config.experiments:
            extra = f" estimator={unit.estimator['kind']}" if unit.kind in (
                "trajectory", "trap_escape") else ""
            print(f"  {unit.label:<20} kind={unit.kind}{extra}")
        return 0

    try:
        report = run_config(
            config,
            _resolve_out(args.out, config),
            overwrite=args.overwrite,
            quiet=args.quiet,
            seed_override=args.seed_override,
        )
    except FileExistsError as exc:
        print(f"INVALID {exc}", file=sys.stderr)
        return 2
    return 3 if report.diverged else 0


if __name__ == "__main__":
    sys.exit(main())

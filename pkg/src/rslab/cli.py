"""Command-line entry point: rslab <command> --config path [options]."""
from __future__ import annotations

import argparse
import sys

from .config import COMMANDS, ConfigError, load_config
from .runner import EXIT_CONFIG, EXIT_IO, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rslab",
        description=(
            "Numerical laboratory for random Schrodinger operators on finite "
            "graphs: resolvent diagnostics, resonance statistics, decay-rate "
            "estimation, and theorem verification."
        ),
    )
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument(
        "--workers", type=int, default=None, help="parallel worker count"
    )
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which this tool reserves for
        # integrity failures; fold usage problems into the config code
        return 0 if exc.code in (0, None) else EXIT_CONFIG
    if args.workers is not None and args.workers < 1:
        print("usage error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"I/O error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.command != args.command:
        print(
            f"config error: CLI command '{args.command}' does not match "
            f"config command '{cfg.command}'",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    code, _ = run(cfg, out_dir=args.out, seed=args.seed, workers=args.workers)
    return code


if __name__ == "__main__":
    sys.exit(main())

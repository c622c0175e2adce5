"""jmgt-lab <subcommand> --config PATH [--out DIR] [--workers N]

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .config import EXPERIMENT_KINDS, parse_config
from .errors import ConfigError, JMGTError
from .experiments import run_experiment
from .output import emit_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jmgt-lab", description="JMGT-Westervelt spectral experiments")
    parser.add_argument("subcommand", choices=EXPERIMENT_KINDS)
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument("--out", default="jmgt-out", help="output directory (default: jmgt-out)")
    parser.add_argument("--workers", type=int, default=None, help="concurrent sweep members")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text, kind=args.subcommand)
        workers = args.workers if args.workers is not None else cfg["experiment.workers"]
        if workers < 1:
            raise ConfigError("--workers: must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        results = run_experiment(cfg, workers=workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (JMGTError, ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        emit_outputs(args.out, cfg, results, timings={"total_s": time.perf_counter() - t0})
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    failed = [r for r in results if r.failed]
    for r in failed:
        print(f"numerical failure: {r.message}", file=sys.stderr)
    return EXIT_NUMERICAL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

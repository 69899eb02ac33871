"""Command line entry point: ``stochtransport <experiment> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, NumericsError
from .config import EXPERIMENTS, load_config
from .runners import run_experiment

log = logging.getLogger("stochtransport")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="stochtransport", description="Run a stochastic transport experiment.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat TOML file of settings")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--samples", type=int, help="Monte Carlo sample count")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker threads")
        p.add_argument("--zero-noise", action="store_true", default=None, help="replace the Brownian paths by zero")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.experiment, seed=args.seed, samples=args.samples, out=args.out,
                          workers=args.workers, zero_noise=args.zero_noise)
        log.info("config: %s", cfg.echo_text())
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    paths = report.write(cfg.out)
    print(report.summary())
    for p in paths:
        log.info("wrote %s", p)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())

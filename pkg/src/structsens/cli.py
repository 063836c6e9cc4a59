"""Command-line entry point.

Usage::

    structsens <fit|intersect|simulate|bifurcate|hopf|report> --config run.cfg
        [--seed N] [--out DIR] [--threads N]

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .config import EXPERIMENTS, ConfigError, parse_config
from .pipeline import ExperimentError, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

log = logging.getLogger("structsens")


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--seed", type=_nonneg_int, default=None,
                        help="override the configured seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=_pos_int, default=None,
                        help="worker threads for sweeps (default: $STRUCTSENS_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="structsens", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"structsens {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True)
    helps = {
        "fit": "fit a response family to another response or to data",
        "intersect": "intersection points of the configured responses",
        "simulate": "one trajectory at fixed K",
        "bifurcate": "bifurcation diagram over the K grid",
        "hopf": "locate Hopf bifurcations",
        "report": "compare diagrams of original, fitted and piecewise responses",
    }
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _threads(arg: Optional[int]) -> Optional[int]:
    if arg is not None:
        return arg
    env = os.environ.get("STRUCTSENS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"STRUCTSENS_THREADS must be an integer, got {env!r}") from None
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, args.experiment)
        cfg = cfg.with_overrides(seed=args.seed, out=args.out)
        bundle = run(cfg, _threads(args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in bundle.files:
        print(path)
    log.info("%d deterministic and %d stochastic integrations",
             bundle.deterministic_runs, bundle.stochastic_runs)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

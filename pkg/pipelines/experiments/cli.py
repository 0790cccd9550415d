"""
Console entry point:

    smallball-lab <experiment> [--config FILE] [--seed N] [--out DIR] [--n-samples N]
                  [--n-workers N] [--profile dev|prod] [--log-level LEVEL]

Exit code 0 when every check passes, 1 when a check fails, 2 on a configuration or
domain error.
"""
import argparse
import sys
from typing import get_args

from common.logging_config import setup_logging
from smallball_lab.errors import SmallBallLabError

from .config import MISSING, ExperimentKind, ExperimentParams, ParamsProfile, load_config_file
from .lab import run_experiment

import logging
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smallball-lab",
        description="Small-ball and entropy experiments for Gaussian processes.",
    )
    parser.add_argument("experiment", choices=get_args(ExperimentKind))
    parser.add_argument("--config", default=MISSING, help="JSON file overriding the profile defaults")
    parser.add_argument("--seed", type=int, default=MISSING)
    parser.add_argument("--out", default=MISSING, help="output directory")
    parser.add_argument("--n-samples", dest="n_samples", type=int, default=MISSING)
    parser.add_argument("--n-workers", dest="n_workers", type=int, default=MISSING)
    parser.add_argument("--profile", choices=get_args(ParamsProfile), default="prod")
    parser.add_argument("--log-level", dest="log_level", choices=LOG_LEVELS, default="INFO")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(getattr(logging, args.log_level))

    try:
        config = load_config_file(args.config) if args.config is not MISSING else None
        params = ExperimentParams(args.experiment, args.profile).get_params(
            config,
            seed=args.seed,
            out=args.out,
            n_samples=args.n_samples,
            n_workers=args.n_workers,
        )
        report = run_experiment(params)
    except SmallBallLabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR

    if not report.passed:
        logger.warning(f"Failed checks: {report.failed_checks()}")
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

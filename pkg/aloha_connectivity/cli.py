#!/usr/bin/env python3
"""
Command line entry point: run experiment files and print closed forms.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from tabulate import tabulate

from aloha_connectivity import __version__, analytics
from aloha_connectivity.exceptions import ConfigError, ConnectivityError
from aloha_connectivity.experiments import (
    DEFAULTS_HELP,
    ExperimentKind,
    labelled,
    parse_config,
    run_experiment,
    to_jsonable,
    verify,
)
from aloha_connectivity.pointprocess import check_network_field

LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)8s] %(message)s (%(filename)s:%(lineno)s)"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _float(text: str) -> float:
    """argparse type accepting 'inf'."""
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    cmd_parser = argparse.ArgumentParser(
        prog="aloha-connectivity",
        description="Monte Carlo connectivity and delay experiments for slotted ALOHA Poisson networks.",
        epilog=DEFAULTS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    cmd_parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    cmd_parser.add_argument("-v", "--verbose", action="store_true", help="Log per-replication detail (DEBUG level).")
    commands = cmd_parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run",
        help="Run an experiment file.",
        description="Run an experiment file and write raw, summary and manifest artifacts.",
        epilog=DEFAULTS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    run.add_argument("config", type=Path, help="Experiment file (INI style, see below).")
    run.add_argument("--seed", type=int, help="Override the master seed of the file.")
    run.add_argument("--jobs", type=int, default=1, help="Worker processes, default 1 (serial).")
    run.add_argument("--out", type=Path, help="Directory for the artifacts, default next to the output prefix.")
    run.add_argument(
        "--verify",
        action="store_true",
        help="Compare the summaries with the closed forms and exit 1 on any 3 standard error violation.",
    )

    formulas = commands.add_parser("formulas", help="Print every closed form for one parameter point as JSON.")
    formulas.add_argument("--lambda", dest="lam", type=_float, required=True, help="Node density.")
    formulas.add_argument("--p", type=_float, required=True, help="ALOHA transmit probability in (0, 1).")
    formulas.add_argument("--beta", type=_float, required=True, help="Guard factor, greater than 0.")
    formulas.add_argument("--eta", type=_float, default=math.inf, help="Maximum link distance, default inf.")
    return cmd_parser


def run_command(args) -> int:
    try:
        spec = parse_config(args.config.read_text())
    except OSError as err:
        raise ConfigError(f"Cannot read {args.config}: {err.strerror}") from None
    if args.seed is not None:
        try:
            spec = spec.with_seed(check_network_field("seed", args.seed))
        except ValueError as err:
            raise ConfigError(str(err)) from None
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")

    result = run_experiment(spec, jobs=args.jobs, out_dir=args.out)
    print(tabulate(labelled(spec, result.summary), headers="keys", tablefmt="github", showindex=False, floatfmt=".4g"))
    for name, path in result.files.items():
        LOGGER.info(f"Wrote {name}: {path}")

    if not args.verify:
        return 0
    if spec.kind is ExperimentKind.PERCOLATION_SCAN:
        LOGGER.warning("percolation_scan has no closed forms to verify against")
        return 0
    checks = verify(spec, result.summary, result.fits)
    print(tabulate(checks, headers="keys", tablefmt="github", showindex=False, floatfmt=".4g"))
    failed = checks[~checks["passed"]]
    if not failed.empty:
        LOGGER.error(f"{len(failed)} of {len(checks)} checks failed")
        return EXIT_FAILURE
    LOGGER.info(f"All {len(checks)} checks passed")
    return 0


def formulas_command(args) -> int:
    try:
        lam = check_network_field("lam", args.lam)
        p = check_network_field("p", args.p)
        beta = check_network_field("beta", args.beta)
        eta = check_network_field("eta", args.eta)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    print(json.dumps(to_jsonable(analytics.closed_forms(lam, p, beta, eta)), indent=2))
    return 0


def main(argv=None) -> int:
    """
    Function invoked when run from command line.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
    )
    command = run_command if args.command == "run" else formulas_command
    try:
        return command(args)
    except ConfigError as err:
        LOGGER.error(f"Configuration error: {err}")
        return EXIT_CONFIG
    except ConnectivityError as err:
        LOGGER.error(str(err))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

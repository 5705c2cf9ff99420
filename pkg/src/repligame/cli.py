"""Command-line interface for repligame."""

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigParseError, ConfigValidationError
from .experiments import EXIT_ERROR, run_experiment

logger = logging.getLogger(__name__)


def _get_thread_count() -> int | None:
    value = os.environ.get("REPLIGAME_THREADS")
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        threads = 0
    if threads < 1:
        logger.warning("Ignoring invalid REPLIGAME_THREADS=%r; expected a positive integer", value)
        return None
    return threads


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repligame",
        description="Generalized replicator dynamics and their discounted mean field game counterpart.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log fixed-point residuals (DEBUG)")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    run_parser = subparsers.add_parser("run", help="Run the experiment described by a scenario file")
    run_parser.add_argument(
        "config",
        type=Path,
        help="Scenario file (key = value lines, [section] headers)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command != "run":
        parser.print_help()
        return EXIT_ERROR

    _configure_logging(args.verbose, args.quiet)
    return run_cli(args.config)


def run_cli(config_path: Path) -> int:
    """Load a scenario file, run it and print the summary."""
    if not config_path.exists():
        print(f"Error: File not found: {config_path}", file=sys.stderr)
        return EXIT_ERROR

    try:
        config = load_config(config_path)
    except (ConfigParseError, ConfigValidationError) as e:
        print(f"Error: {config_path}: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"Error: cannot read {config_path}: {e.strerror or e}", file=sys.stderr)
        return EXIT_ERROR

    print(f"Running {config.experiment}: {config.rate.to_spec().describe()}, kernel {config.kernel.kind}")
    try:
        outcome = run_experiment(config, threads=_get_thread_count())
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR

    for line in outcome.summary:
        print(f"  {line}")
    if outcome.files:
        print(f"\nDone! Wrote {len(outcome.files)} file(s) to {config.output_path}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())

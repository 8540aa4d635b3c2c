"""
Argument parsing and command dispatch.
"""
import argparse
import logging
import sys
from typing import List, Optional

from palmbar import __version__
from palmbar.cli.commands import run, validate
from palmbar.core.config import settings
from palmbar.core.errors import PalmBarError
from palmbar.core.logging import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2


def create_parser() -> argparse.ArgumentParser:
    """Top-level parser with one subcommand per module in ``palmbar.cli.commands``."""
    common = argparse.ArgumentParser(add_help=False)
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO")
    noise.add_argument("-q", "--quiet", action="store_true", help="log errors only")

    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Palm-calculus and adjoint-relationship experiments on queueing networks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include command parsers
    run.register(subparsers, common)
    validate.register(subparsers, common)
    return parser


def _log_level(args: argparse.Namespace) -> str:
    if getattr(args, "verbose", False):
        return "INFO"
    if getattr(args, "quiet", False):
        return "ERROR"
    return settings.LOG_LEVEL


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which is the verdict code here
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    configure_logging(_log_level(args))
    try:
        code: int = args.handler(args)
    except PalmBarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code

"""
FCMF - Command Line Entry Point
Multimodal aspect-category sentiment analysis: synthetic data, training, evaluation, diagnostics
"""

import argparse
import logging
import sys
from collections.abc import Sequence

from fcmf import __version__
from fcmf.commands import COMMANDS
from fcmf.exceptions import RuntimeFailure, UsageError, ValidationFailure
from fcmf.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting with status 2"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="fcmf", description="Fine-grained cross-modal fusion for aspect-category sentiment")
    parser.add_argument("--version", action="version", version=f"fcmf {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    subparsers.required = True
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse, dispatch, and map errors to exit codes (0 ok, 1 validation, 2 runtime)"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"fcmf: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)

    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except ValidationFailure as e:
        logger.error(str(e))
        print(f"fcmf {args.command}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeFailure as e:
        logger.error(str(e))
        print(f"fcmf {args.command}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unexpected failure in '{args.command}': {e}", exc_info=True)
        return EXIT_RUNTIME


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())

#!/usr/bin/env python3
"""Program's entry point."""
import sys

from loguru import logger

from .argparse_wrapper import get_parsed_args
from .general_utils import HcrError


def main(argv=None):
    """Program's main routine."""
    args = get_parsed_args(argv=argv)
    try:
        args.run_command(args=args)
    except HcrError as error:
        logger.error("{} error: {}", error.category, error)
        sys.exit(error.exit_code)


if __name__ == "__main__":
    main()

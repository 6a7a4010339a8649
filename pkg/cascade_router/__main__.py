"""Command line handling for cascade-router."""
import logging
import sys

from cascade_router import argument_parser
from cascade_router import run
from cascade_router import __version__


def main(argv=None):
    """Build and parse command line."""
    parser = argument_parser(version=__version__)
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        # argparse exits with 2 on usage errors
        return 1 if err.code == 2 else err.code

    if args.debug:
        log_level = logging.DEBUG
    elif args.verbose:
        log_level = logging.INFO
    else:
        log_level = logging.WARNING

    logging.basicConfig(format='%(levelname)s: %(message)s', level=log_level)

    return run(args)


if __name__ == '__main__':
    sys.exit(main())

"""Development entrypoint."""

import logging
import sys

import numpy
import pydantic
import scipy
from rich.logging import RichHandler


def debug_main(argv=None) -> int:
    """Workaround to use a different logger for debug: DEBUG level, library frames hidden."""
    logging.basicConfig(
        format=None,
        handlers=[
            RichHandler(
                rich_tracebacks=True, tracebacks_suppress=[numpy, scipy, pydantic]
            )
        ],
    )

    from src.app import main

    # main() installs its own handlers; --verbose forces DEBUG on the app tree.
    return main(_with_verbose(sys.argv[1:] if argv is None else argv))


def _with_verbose(argv):
    """Insert --verbose after the subcommand."""
    if not argv or argv[0].startswith("-") or argv[0] == "schema":
        return list(argv)
    return [argv[0], "--verbose", *argv[1:]]


if __name__ == "__main__":
    sys.exit(debug_main())

"""Package exports."""

__version__ = "0.1.0"

from .app import *  # noqa: E402

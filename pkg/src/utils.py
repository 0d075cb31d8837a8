"""Utility functions for the workbench: logging, CSV series and SVG charts."""

import logging
from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from rich.logging import RichHandler  # noqa: E402

__all__ = ["read_series", "render_chart", "setup_logging", "write_series"]

log = logging.getLogger("app.utils")

LOG_FORMAT = "%(asctime)s|%(levelname)s: %(message)s"
LOG_DATEFMT = "%H:%M:%S"
# 17 significant digits round-trip every double exactly.
CSV_FORMAT = "%.17g"

# Fixed salt so repeated renders produce identical SVG element ids.
matplotlib.rcParams["svg.hashsalt"] = "plap-workbench"


def setup_logging(log_path: Union[str, Path, None] = None, level: Union[int, str] = logging.INFO):
    """Setup logging.

    Installs a rich console handler and, when `log_path` is given, a file handler
    on the `app` logger. Repeated calls replace the previous handlers.
    """
    logger = logging.getLogger("app")
    logger.setLevel(level)
    # Handled here; the root logger only sees third-party records.
    logger.propagate = False
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if log_path is not None:
        fh = logging.FileHandler(log_path, encoding="utf-8")
        fh.setLevel(level)
        fh.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
        logger.addHandler(fh)

    ch = RichHandler(rich_tracebacks=True, show_path=False)
    ch.setLevel(level)
    logger.addHandler(ch)
    return logger


def write_series(path: Union[str, Path], columns: Dict[str, Sequence[float]]):
    """Write equal-length columns as CSV with a header row."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt=CSV_FORMAT)
    log.debug(f"Wrote {data.shape[0]} rows to {path}.")


def read_series(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read a CSV written by `write_series` back into named columns."""
    with open(path, encoding="utf-8") as f:
        names = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(names)}


def render_chart(
    csv_path: Union[str, Path],
    svg_path: Union[str, Path],
    x: str,
    ys: Sequence[str],
    title: str = "",
    logx: bool = False,
):
    """Line chart of columns `ys` against `x`, read from a CSV series."""
    series = read_series(csv_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    try:
        for name in ys:
            ax.plot(series[x], series[name], label=name, linewidth=1.2)
        if logx:
            ax.set_xscale("log")
        ax.axhline(0.0, color="0.6", linewidth=0.6)
        ax.set_xlabel(x)
        ax.set_title(title)
        if len(ys) > 1:
            ax.legend()
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    log.debug(f"Rendered {svg_path}.")

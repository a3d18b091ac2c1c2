"""Logging setup and small helpers shared by the engine and the CLI."""

import logging
import os
import sys
import time
from contextlib import contextmanager
from typing import Iterator, Mapping, Optional

LOG_LEVEL_ENV = "HAAR_AVERAGER_LOG_LEVEL"


def setup_logging(
    level: Optional[str] = None,
    log_file: Optional[str] = None,
    format_str: str = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
) -> None:
    """
    Configures centralized logging for the tool.

    Results (JSON reports, CSV grids) are printed on stdout, so log records
    go to stderr.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
               Defaults to the HAAR_AVERAGER_LOG_LEVEL env var or INFO.
        log_file: Optional path to a log file, written in addition to stderr.
        format_str: Format string for log messages.
    """
    if level is None:
        level = os.environ.get(LOG_LEVEL_ENV, "INFO").upper()

    numeric_level = getattr(logging, level, logging.INFO)

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]

    if log_file:
        try:
            log_dir = os.path.dirname(log_file)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            handlers.append(logging.FileHandler(log_file))
        except OSError as e:
            print(
                f"WARNING: Failed to setup file logging at {log_file}: {e}. "
                "Falling back to console-only logging.",
                file=sys.stderr,
            )

    logging.basicConfig(
        level=numeric_level,
        format=format_str,
        handlers=handlers,
        force=True
    )

    logging.getLogger("haar_averager").debug(f"Logging initialized at level {level}")


def format_params(params: Mapping[str, float]) -> str:
    """Render a parameter point as ``name=value`` pairs for log lines."""
    return " ".join(f"{name}={value:.8g}" for name, value in params.items())


@contextmanager
def timed(logger: logging.Logger, label: str, level: int = logging.INFO) -> Iterator[None]:
    """Log how long the wrapped block took."""
    start = time.perf_counter()
    try:
        yield
    finally:
        logger.log(level, f"{label} finished in {time.perf_counter() - start:.2f}s")

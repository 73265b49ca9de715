"""Logging configuration for mctk."""

import logging
import sys


def setup_logging(debug: bool = False) -> None:
    """Configure logging for mctk.

    Standard output carries the JSON result line, so every handler writes
    to stderr.

    Args:
        debug: Enable debug-level logging
    """
    level = logging.DEBUG if debug else logging.WARNING

    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)
    handler.setLevel(level)

    root_logger = logging.getLogger("mctk")
    root_logger.setLevel(level)
    # Repeated in-process invocations (tests) must not stack handlers
    for old in list(root_logger.handlers):
        root_logger.removeHandler(old)
    root_logger.addHandler(handler)

    # Pillow logs every plugin it tries at DEBUG
    logging.getLogger("PIL").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance.

    Args:
        name: Logger name

    Returns:
        Logger under the ``mctk`` hierarchy
    """
    return logging.getLogger(f"mctk.{name}")

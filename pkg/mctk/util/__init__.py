"""Utility package for mctk."""

from mctk.util.formatting import file_digest, format_result
from mctk.util.logging import get_logger, setup_logging

__all__ = [
    "file_digest",
    "format_result",
    "get_logger",
    "setup_logging",
]

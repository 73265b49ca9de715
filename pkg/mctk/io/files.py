"""Atomic file replacement: write to a sibling temp file, then rename."""

import os
import tempfile
from pathlib import Path
from typing import Union

from mctk.domain.exceptions import UsageError
from mctk.util import get_logger

logger = get_logger("io.files")

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write ``data`` to ``path`` so readers never see a partial file."""
    target = Path(path)
    directory = target.parent if str(target.parent) else Path(".")
    if not directory.is_dir():
        raise UsageError(f"output directory does not exist: {directory}")
    fd, tmp_name = tempfile.mkstemp(
        dir=directory, prefix=f".{target.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.remove(tmp_name)
        except OSError:
            pass
        raise
    logger.debug("wrote %d bytes to %s", len(data), target)
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def read_bytes(path: PathLike) -> bytes:
    """Read a whole input file, reporting a missing file as a usage error."""
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise UsageError(f"input file not found: {path}") from None
    except IsADirectoryError:
        raise UsageError(f"expected a file, got a directory: {path}") from None

"""Utility functions for rendering command results."""

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays into JSON-native values."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


def format_result(**fields: Any) -> str:
    """Render a command result as one line of JSON with sorted keys.

    Args:
        **fields: Result fields

    Returns:
        Single-line JSON text
    """
    return json.dumps(_plain(fields), sort_keys=True, separators=(", ", ": "))


def file_digest(path: Path) -> str:
    """SHA-256 hex digest of a file's bytes.

    Args:
        path: File to hash

    Returns:
        Hex digest
    """
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()

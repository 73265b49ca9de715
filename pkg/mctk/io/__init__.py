"""File formats for mctk: tensor container, pixmaps and JSON documents."""

from mctk.io.container import TensorContainer, read_container, write_container
from mctk.io.images import read_pixmap, write_pixmap

__all__ = [
    "TensorContainer",
    "read_container",
    "read_pixmap",
    "write_container",
    "write_pixmap",
]

"""Binary portable pixmaps: P6 for RGB, P5 for single-channel images."""

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from mctk.domain.exceptions import FormatError, ShapeError, UsageError
from mctk.domain.models import Tensor
from mctk.io.files import PathLike, atomic_write_bytes, read_bytes

IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm")


def quantize(pixels: Tensor) -> Tensor:
    """Map [0, 1] to bytes with round-half-up: v ↦ ⌊255·v + ½⌋."""
    v = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def encode_pixmap(pixels: Tensor) -> bytes:
    """P6 bytes for H×W×3 input, P5 bytes for H×W input."""
    data = quantize(pixels)
    if not (data.ndim == 2 or (data.ndim == 3 and data.shape[2] == 3)):
        raise ShapeError(f"cannot write a pixmap from shape {data.shape}")
    image = Image.fromarray(data)
    buffer = io.BytesIO()
    image.save(buffer, format="PPM")
    return buffer.getvalue()


def write_pixmap(path: PathLike, pixels: Tensor) -> None:
    atomic_write_bytes(path, encode_pixmap(pixels))


def decode_pixmap(data: bytes, source: str = "<bytes>") -> Tensor:
    """Raw 8-bit samples: H×W×3 for P6, H×W for P5."""
    try:
        with Image.open(io.BytesIO(data), formats=["PPM"]) as image:
            image.load()
            if image.mode not in ("RGB", "L"):
                raise FormatError(
                    f"{source}: unsupported pixmap mode {image.mode}"
                )
            return np.asarray(image, dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise FormatError(f"{source}: not a valid P5/P6 pixmap ({e})") from e


def read_pixmap(path: PathLike) -> Tensor:
    """Pixels scaled back to [0, 1] as float32."""
    raw = decode_pixmap(read_bytes(path), str(path))
    return (raw.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def list_frames(directory: PathLike) -> list[Path]:
    """Pixmap files of a frame directory in name order."""
    root = Path(directory)
    if not root.is_dir():
        raise UsageError(f"frame directory not found: {directory}")
    frames = sorted(
        p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not frames:
        raise UsageError(f"no pixmap frames in {directory}")
    return frames


def read_frame_dir(directory: PathLike) -> Tensor:
    """All RGB frames of a directory as a T×3×H×W float32 clip."""
    clip = []
    for path in list_frames(directory):
        pixels = read_pixmap(path)
        if pixels.ndim == 2:
            pixels = np.repeat(pixels[..., None], 3, axis=2)
        clip.append(pixels.transpose(2, 0, 1))
    shapes = {c.shape for c in clip}
    if len(shapes) > 1:
        raise FormatError(f"frames in {directory} differ in size: {shapes}")
    return np.stack(clip)

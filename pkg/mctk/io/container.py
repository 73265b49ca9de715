"""MCTK tensor container.

Layout, all integers little-endian::

    "MCTK"  version:u8=1  dtype:u8  count:u32
    per record: name_len:u16  name:utf-8  ndim:u8  dims:u64 × ndim  payload

dtype codes: 0 = f32, 1 = f64, 2 = u32, shared by every record. Payloads are
row-major.
"""

import math
import struct
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import numpy.typing as npt

from mctk.domain.exceptions import (
    ContainerFormatError,
    SchemaError,
    ShapeError,
)
from mctk.domain.models import HeadAsset, Tensor
from mctk.io.files import PathLike, atomic_write_bytes, read_bytes
from mctk.util import get_logger

logger = get_logger("io.container")

MAGIC = b"MCTK"
VERSION = 1
HEADER = struct.Struct("<4sBBI")
NAME_LEN = struct.Struct("<H")
NDIM = struct.Struct("<B")
DIM = struct.Struct("<Q")

DTYPE_CODES: dict[int, np.dtype] = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<u4"),
}

ASSET_RECORDS = (
    "template",
    "faces",
    "shape_basis",
    "exp_basis",
    "jaw_weights",
    "jaw_pivot",
)


def dtype_code(dtype: npt.DTypeLike) -> int:
    """Container code for ``dtype``; unsupported dtypes raise ShapeError."""
    wanted = np.dtype(dtype).newbyteorder("<")
    for code, dt in DTYPE_CODES.items():
        if dt == wanted:
            return code
    raise ShapeError(f"dtype {np.dtype(dtype)} cannot be stored in MCTK")


@dataclass(frozen=True, slots=True, eq=False)
class TensorContainer:
    """Ordered, uniquely named tensors sharing one element type."""

    records: tuple[tuple[str, Tensor], ...] = ()
    dtype: np.dtype = np.dtype(np.float32)

    def __post_init__(self) -> None:
        dtype_code(self.dtype)
        seen: set[str] = set()
        for name, _ in self.records:
            if not name:
                raise SchemaError("record names must be non-empty")
            if name in seen:
                raise SchemaError(f"duplicate record name {name!r}")
            seen.add(name)

    @classmethod
    def of(
        cls, dtype: npt.DTypeLike = np.float32, **tensors: Tensor
    ) -> "TensorContainer":
        """Build from keyword tensors, casting each to ``dtype``."""
        dt = np.dtype(dtype)
        records = tuple(
            (name, np.asarray(t).astype(dt)) for name, t in tensors.items()
        )
        return cls(records=records, dtype=dt)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.records)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.records)

    def get(self, name: str) -> Optional[Tensor]:
        for key, value in self.records:
            if key == name:
                return value
        return None

    def require(self, name: str) -> Tensor:
        """Tensor called ``name``; a missing record is a schema violation."""
        value = self.get(name)
        if value is None:
            raise SchemaError("record is missing", field=name)
        return value

    def only(self, preferred: str = "features") -> Tensor:
        """``preferred`` if present, else the single record of the file."""
        value = self.get(preferred)
        if value is not None:
            return value
        if len(self.records) != 1:
            raise SchemaError(
                f"expected one record or one named {preferred!r}, "
                f"found {list(self.names)}"
            )
        return self.records[0][1]


def encode(container: TensorContainer) -> bytes:
    """Serialise a container to bytes."""
    code = dtype_code(container.dtype)
    dt = DTYPE_CODES[code]
    parts = [HEADER.pack(MAGIC, VERSION, code, len(container.records))]
    for name, tensor in container.records:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise SchemaError("record name longer than 65535 bytes", name)
        array = np.ascontiguousarray(tensor, dtype=dt)
        if array.ndim > 0xFF:
            raise ShapeError(f"record {name!r} has too many dimensions")
        parts.append(NAME_LEN.pack(len(raw)))
        parts.append(raw)
        parts.append(NDIM.pack(array.ndim))
        parts.extend(DIM.pack(d) for d in array.shape)
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerFormatError(f"truncated {what}", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> tuple:
        return fmt.unpack(self.take(fmt.size, what))


def decode(data: bytes) -> TensorContainer:
    """Parse container bytes; any defect reports its byte offset."""
    reader = _Reader(data)
    magic, version, code, count = reader.unpack(HEADER, "header")
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ContainerFormatError(f"unsupported version {version}", 4)
    if code not in DTYPE_CODES:
        raise ContainerFormatError(f"unknown dtype code {code}", 5)
    dt = DTYPE_CODES[code]
    records = []
    seen: set[str] = set()
    for index in range(count):
        start = reader.pos
        (name_len,) = reader.unpack(NAME_LEN, f"record {index} name length")
        raw = reader.take(name_len, f"record {index} name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ContainerFormatError(
                f"record {index} name is not UTF-8", start + NAME_LEN.size
            ) from None
        if not name or name in seen:
            raise ContainerFormatError(
                f"record {index} name {name!r} is empty or repeated", start
            )
        seen.add(name)
        (ndim,) = reader.unpack(NDIM, f"record {name!r} rank")
        dims = tuple(
            reader.unpack(DIM, f"record {name!r} dims")[0] for _ in range(ndim)
        )
        size = math.prod(dims)
        payload = reader.take(size * dt.itemsize, f"record {name!r} payload")
        array = np.frombuffer(payload, dtype=dt).reshape(dims)
        records.append((name, array.astype(dt.newbyteorder("="))))
    if reader.pos != len(data):
        raise ContainerFormatError(
            f"{len(data) - reader.pos} trailing bytes", reader.pos
        )
    return TensorContainer(
        records=tuple(records), dtype=dt.newbyteorder("=")
    )


def write_container(path: PathLike, container: TensorContainer) -> None:
    atomic_write_bytes(path, encode(container))
    logger.debug("wrote %d records to %s", len(container), path)


def read_container(path: PathLike) -> TensorContainer:
    return decode(read_bytes(path))


def read_tensor(path: PathLike, preferred: str = "features") -> Tensor:
    """Single tensor of a container file, see :meth:`TensorContainer.only`."""
    return read_container(path).only(preferred)


def asset_to_container(asset: HeadAsset) -> TensorContainer:
    """Asset records in f32; face indices are exact below 2²⁴ vertices."""
    return TensorContainer.of(
        np.float32, **{name: getattr(asset, name) for name in ASSET_RECORDS}
    )


def asset_from_container(container: TensorContainer) -> HeadAsset:
    values = {name: container.require(name) for name in ASSET_RECORDS}
    faces = values["faces"]
    if not np.array_equal(faces, np.round(faces)):
        raise SchemaError("face indices must be integers", field="faces")
    values["faces"] = faces.astype(np.int64)
    return HeadAsset(**values)


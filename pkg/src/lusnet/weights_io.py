"""WeightStore and the LUSW portable weight file format.

LUSW layout, all integers little-endian::

    magic   4 bytes   b"LUSW"
    version u32       1
    count   u32       number of tensors
    tensor  repeated  name_len u16, name bytes (UTF-8), ndim u8,
                      ndim x u32 extents, float32 payload (row-major, LE)
    crc     u32       CRC32 (IEEE) over all preceding bytes

Integrity is verified before anything else: any single-byte corruption
anywhere in the file, header included, is reported as a checksum error.
Magic and version are checked next, then tensors are reconstructed.
Freeze flags are a runtime training policy and are never serialized.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .tensor import Tensor

MAGIC = b"LUSW"
VERSION = 1


class WeightStore:
    """Ordered collection of named float32 tensors with runtime freeze flags."""

    def __init__(self):
        self._tensors: dict[str, np.ndarray] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, value: Tensor) -> None:
        if not name:
            raise ShapeError("tensor name must be nonempty")
        if name in self._tensors:
            raise ShapeError(f"duplicate tensor name {name!r}")
        self._tensors[name] = np.ascontiguousarray(value, dtype=np.float32)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self._tensors:
            raise KeyError(name)
        self._tensors[name] = np.ascontiguousarray(value, dtype=np.float32)

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def copy(self) -> "WeightStore":
        out = WeightStore()
        for name, value in self._tensors.items():
            out.add(name, value.copy())
        out.frozen = set(self.frozen)
        return out

    def same_bits(self, other: "WeightStore") -> bool:
        """Bitwise equality of names, order, dims and payloads."""
        if self.names() != other.names():
            return False
        return all(
            a.shape == other[name].shape
            and a.tobytes() == other[name].tobytes()
            for name, a in self.items()
        )


def to_bytes(store: WeightStore) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(store))
    for name, value in store.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ShapeError(f"tensor name too long: {len(encoded)} bytes")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", value.ndim)
        out += struct.pack(f"<{value.ndim}I", *value.shape)
        out += np.ascontiguousarray(value, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def from_bytes(data: bytes) -> WeightStore:
    if len(data) < 16:
        raise TruncatedFileError(f"file too short: {len(data)} bytes")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    (count,) = struct.unpack("<I", data[8:12])
    body = data[12:-4]
    store = WeightStore()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise TruncatedFileError("tensor table overruns file")
        chunk = body[pos : pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n_values = int(np.prod(dims)) if ndim else 1
        payload = take(4 * n_values)
        value = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        store.add(name, value)
    if pos != len(body):
        raise TruncatedFileError(f"{len(body) - pos} trailing bytes after tensor table")
    return store


def save(store: WeightStore, path: str | Path) -> int:
    """Write the store; returns the byte count written."""
    data = to_bytes(store)
    Path(path).write_bytes(data)
    return len(data)


def load(path: str | Path) -> WeightStore:
    return from_bytes(Path(path).read_bytes())

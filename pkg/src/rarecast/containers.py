"""Flat binary container for named numpy arrays plus a JSON header.

Layout (little-endian):

    bytes 0..3    magic ``b"RCTC"``
    bytes 4..7    format version (uint32)
    bytes 8..15   header length in bytes (uint64)
    header        UTF-8 JSON: ``{"meta": {...}, "tensors": [...]}`` where each
                  tensor entry carries name, dtype, shape and byte offset into
                  the data section
    data          raw C-order array bytes, concatenated in listed order

The byte stream is a pure function of (meta, arrays): no timestamps, no
compression, keys sorted. Identical inputs produce identical files, which is
what the determinism checks compare.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RCTC"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Raised when a container file is malformed or unsupported."""


def write_container(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays and a JSON-serializable metadata dict to ``path``."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        blob = arr.tobytes(order="C")
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,  # includes byte order, e.g. "<f8"
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"meta": meta or {}, "tensors": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container written by :func:`write_container`.

    Returns ``(arrays, meta)``. Arrays are fresh copies owned by the caller.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ContainerError(f"{path}: bad magic {magic!r}, not a tensor container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ContainerError(f"{path}: unsupported container version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        data = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start = entry["offset"]
        stop = start + entry["nbytes"]
        buf = data[start:stop]
        if len(buf) != entry["nbytes"]:
            raise ContainerError(f"{path}: truncated data for tensor {entry['name']!r}")
        arr = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return arrays, header["meta"]

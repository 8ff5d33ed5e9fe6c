"""TFCKPT parameter checkpoint format.

Layout: 6-byte magic ``TFCKPT`` | uint32 LE header length | UTF-8 JSON header
| concatenated raw little-endian buffers in header order. The header records
names, shapes, the dtype, and an optional free-form ``meta`` dict.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..fileio import atomic_write_bytes

__all__ = ["save_checkpoint", "load_checkpoint"]

MAGIC = b"TFCKPT"


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    arrays = {k: np.asarray(v) for k, v in params.items()}
    dtypes = {a.dtype for a in arrays.values()}
    if len(dtypes) > 1:
        raise ValueError(f"checkpoint requires a single dtype, got {dtypes}")
    dtype = arrays[next(iter(arrays))].dtype if arrays else np.dtype(np.float32)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported checkpoint dtype {dtype}")
    header = {
        "names": list(arrays.keys()),
        "shapes": [list(a.shape) for a in arrays.values()],
        "dtype": np.dtype(dtype).name,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(hbytes))
    blob += hbytes
    for a in arrays.values():
        blob += a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    (hlen,) = struct.unpack("<I", raw[6:10])
    header = json.loads(raw[10:10 + hlen].decode("utf-8"))
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    offset = 10 + hlen
    out: dict[str, np.ndarray] = {}
    for name, shape in zip(header["names"], header["shapes"]):
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        out[name] = arr.reshape(shape).astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return out, header.get("meta", {})

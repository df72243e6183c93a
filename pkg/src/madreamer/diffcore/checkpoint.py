"""Checkpoint format: JSON manifest + flat little-endian value blob.

Layout: 8-byte magic, uint64 manifest length, UTF-8 JSON manifest (list of
{name, shape, dtype, offset} in offset order), then the raw values.  Values
round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"MDCKPT01"

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def save_params(path, arrays: dict[str, np.ndarray]) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        shape = list(arr.shape)
        dt = arr.dtype.newbyteorder("<")
        raw = np.ascontiguousarray(arr).astype(dt, copy=False).tobytes()
        manifest.append({"name": name, "shape": shape, "dtype": dt.str, "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(manifest).encode("utf-8")
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)
    os.replace(tmp, path)


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(hlen).decode("utf-8"))
        blob = f.read()
    out = {}
    for entry in manifest:
        dt = _DTYPES.get(entry["dtype"], np.dtype(entry["dtype"]))
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=start).reshape(shape)
        out[entry["name"]] = arr.copy()
    return out

"""Flat binary parameter checkpoints.

Layout (all integers little-endian uint32, floats little-endian float32):

    magic "MFCKPT1" (7 bytes)
    count
    per parameter: name_len, name (utf-8), rank, extents..., payload

Writes are atomic: a temp file in the target directory is renamed over the
destination once fully written.
"""

from __future__ import annotations

import os
import struct
import tempfile
from typing import Dict

import numpy as np

from .errors import ContractError

MAGIC = b"MFCKPT1"


def save_checkpoint(params: Dict[str, np.ndarray], path: str) -> None:
    """Write named float32 arrays to ``path`` in MFCKPT1 format."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(params)))
            for name, arr in params.items():
                arr = np.ascontiguousarray(arr, dtype="<f4")
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
                fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """Read an MFCKPT1 file back into an ordered name -> float32 array dict."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ContractError(f"{path}: bad checkpoint magic {magic!r}")
        (count,) = struct.unpack("<I", fh.read(4))
        params: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            n = int(np.prod(shape)) if shape else 1
            payload = fh.read(4 * n)
            if len(payload) != 4 * n:
                raise ContractError(f"{path}: truncated payload for parameter {name!r}")
            params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return params

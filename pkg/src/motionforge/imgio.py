"""File formats: 8-bit RGB PNG, little-endian PFM depth maps, pose text files."""

from __future__ import annotations

from typing import List

import numpy as np
from PIL import Image

from .errors import ContractError
from .geometry import CameraPose, poses_from_matrix, poses_to_matrix


def write_png(image: np.ndarray, path: str) -> None:
    """Save a float image in [0, 1] (H, W, 3) as 8-bit RGB."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.asarray(arr, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_png(path: str) -> np.ndarray:
    """Load an 8-bit RGB PNG as float32 in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def write_pfm(depth: np.ndarray, path: str) -> None:
    """Write a single-channel little-endian PFM (rows stored bottom-to-top)."""
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise ContractError(f"pfm: expected a 2-D depth map, got shape {depth.shape}")
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(depth[::-1].astype("<f4").tobytes())


def read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise ContractError(f"{path}: unsupported PFM header {header!r}")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(4 * w * h), dtype=dtype).reshape(h, w)
    return data[::-1].astype(np.float32)


def write_poses_txt(poses: List[CameraPose], path: str) -> None:
    """One camera-to-world pose per line: r11..r33 tx ty tz."""
    rows = poses_to_matrix(poses)
    with open(path, "w") as fh:
        for row in rows:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_poses_txt(path: str) -> List[CameraPose]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [float(x) for x in line.split()]
            if len(vals) != 12:
                raise ContractError(f"{path}: pose lines need 12 values, got {len(vals)}")
            rows.append(vals)
    return poses_from_matrix(np.asarray(rows))

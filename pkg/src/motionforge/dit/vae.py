"""Toy latent codec: fixed pooling encoder, learned temporal-upsampling decoder.

The encoder keeps every ``stride``-th frame and average-pools 2x2 spatially;
it has no parameters. The decoder maps each output frame from its nearest
kept frame through a small learned per-phase MLP that also undoes the spatial
pooling. Nearest-anchor selection (instead of blending two anchors) keeps
decoded colors saturated rather than ghosted, which the color-threshold
evaluation depends on.
"""

from __future__ import annotations

from typing import List

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ContractError, ShapeError
from .layers import Linear, Module

SPATIAL_POOL = 2
LATENT_CHANNELS = 3


def encode_pixels(video: np.ndarray, stride: int = 4,
                  pool: int = SPATIAL_POOL) -> np.ndarray:
    """(N, H, W, 3) video in [0,1] -> (N~, H/pool, W/pool, 3) latent in [0,1]."""
    video = np.asarray(video, dtype=np.float32)
    n, h, w, c = video.shape
    if (n - 1) % stride:
        raise ContractError(f"encode: frame count {n} not ≡ 1 (mod {stride})")
    if h % pool or w % pool:
        raise ShapeError(f"encode: extents {(h, w)} not divisible by pool {pool}")
    kept = video[::stride]
    f = kept.shape[0]
    pooled = kept.reshape(f, h // pool, pool, w // pool, pool, c).mean(axis=(2, 4))
    return pooled.astype(np.float32)


def normalize_latent(z: np.ndarray) -> np.ndarray:
    """[0,1] pooled pixels -> roughly zero-centered flow data."""
    return (2.0 * z - 1.0).astype(np.float32)


def denormalize_latent(z: np.ndarray) -> np.ndarray:
    return ((z + 1.0) / 2.0).astype(np.float32)


def anchor_index(frame: int, stride: int, n_latent: int) -> int:
    """Nearest kept frame for an output frame index."""
    return min(int(np.floor(frame / stride + 0.5)), n_latent - 1)


def patchify(latent: Tensor, patch: int) -> Tensor:
    """(B, F, h, w, C) -> (B, F*gh*gw, patch*patch*C) tokens."""
    b, f, h, w, c = latent.shape
    if h % patch or w % patch:
        raise ShapeError(f"patchify: extents {(h, w)} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    x = ad.reshape(latent, (b, f, gh, patch, gw, patch, c))
    x = ad.transpose(x, (0, 1, 2, 4, 3, 5, 6))
    return ad.reshape(x, (b, f * gh * gw, patch * patch * c))


def unpatchify(tokens: Tensor, f: int, h: int, w: int, c: int, patch: int) -> Tensor:
    b = tokens.shape[0]
    gh, gw = h // patch, w // patch
    x = ad.reshape(tokens, (b, f, gh, gw, patch, patch, c))
    x = ad.transpose(x, (0, 1, 2, 4, 3, 5, 6))
    return ad.reshape(x, (b, f, h, w, c))


def patchify_np(latent: np.ndarray, patch: int) -> np.ndarray:
    """NumPy twin of :func:`patchify` for conditioning paths without gradients."""
    b, f, h, w, c = latent.shape
    gh, gw = h // patch, w // patch
    x = latent.reshape(b, f, gh, patch, gw, patch, c).transpose(0, 1, 2, 4, 3, 5, 6)
    return np.ascontiguousarray(x.reshape(b, f * gh * gw, patch * patch * c))


def pool_frames_np(frames: np.ndarray, pool: int = SPATIAL_POOL) -> np.ndarray:
    """(B, F, H, W, C) -> 2x2 average pooled."""
    b, f, h, w, c = frames.shape
    return frames.reshape(b, f, h // pool, pool, w // pool, pool, c).mean(axis=(3, 5)).astype(np.float32)


def _shift2d(z: Tensor, dy: int, dx: int) -> Tensor:
    """Zero-padded spatial shift of (B, F, h, w, C) along h (axis 2) and w (axis 3)."""
    b, f, h, w, c = z.shape

    def shift_axis(x: Tensor, axis: int, delta: int, size: int) -> Tensor:
        if delta == 0:
            return x
        keep = size - abs(delta)
        body = ad.narrow(x, axis, 0 if delta > 0 else abs(delta), keep)
        pad_shape = list(x.shape)
        pad_shape[axis] = abs(delta)
        pad = Tensor(np.zeros(pad_shape, dtype=x.dtype))
        return ad.concat([pad, body] if delta > 0 else [body, pad], axis=axis)

    return shift_axis(shift_axis(z, 2, dy, h), 3, dx, w)


class PixelDecoder(Module):
    """Learned per-phase decoder from normalized latents to full video.

    Each output 2x2 pixel block is predicted from the 3x3 latent neighborhood
    of its anchor frame, so object edges blurred by the pooling encoder can be
    re-sharpened from local gradients.
    """

    def __init__(self, n_frames: int, stride: int, height: int, width: int,
                 rng: np.random.Generator, pool: int = SPATIAL_POOL, hidden: int = 48):
        super().__init__()
        self.n_frames = n_frames
        self.stride = stride
        self.height = height
        self.width = width
        self.pool = pool
        self.in_dim = 9 * LATENT_CHANNELS
        self.out_dim = pool * pool * 3
        self.fc1 = [Linear(self.in_dim, hidden, rng) for _ in range(stride)]
        self.fc2 = [Linear(hidden, self.out_dim, rng) for _ in range(stride)]

    def __call__(self, z: Tensor) -> Tensor:
        """(B, F, h, w, C) normalized latent -> (B, N, H, W, 3) video tensor."""
        b, f, h, w, _ = z.shape
        neigh = ad.concat([_shift2d(z, dy, dx) for dy in (-1, 0, 1)
                           for dx in (-1, 0, 1)], axis=4)  # (B, F, h, w, 9C)
        frames: List[Tensor] = []
        for j in range(self.n_frames):
            phase = j % self.stride
            k = anchor_index(j, self.stride, f)
            zk = ad.narrow(neigh, 1, k, 1)  # (B, 1, h, w, 9C)
            hdn = ad.gelu(self.fc1[phase](zk))
            block = self.fc2[phase](hdn)  # (B, 1, h, w, pool*pool*3)
            block = ad.reshape(block, (b, 1, h, w, self.pool, self.pool, 3))
            block = ad.transpose(block, (0, 1, 2, 4, 3, 5, 6))
            frames.append(ad.reshape(block, (b, 1, h * self.pool, w * self.pool, 3)))
        return ad.concat(frames, axis=1)

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Inference helper: normalized latent array -> clipped [0,1] video."""
        out = self(Tensor(z[None] if z.ndim == 4 else z))
        video = out.data[0] if z.ndim == 4 else out.data
        return np.clip(video, 0.0, 1.0).astype(np.float32)

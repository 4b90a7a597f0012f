"""Desk-scale flow-matching diffusion transformer with two control branches.

The base DiT predicts velocity over spatio-temporal latent patches,
conditioned on caption tokens and reference-frame tokens through
cross-attention. Two injection mechanisms ride on top:

  - a camera branch: guidance-render tokens are channel-concatenated with the
    noisy latent tokens, fused, offset by encoded Plücker tokens, run through
    its own transformer blocks, and fed back into the first base blocks
    through zero-initialized residual projections (ControlNet-style);
  - an object branch: downsampled 3D trajectory tokens plus entity label
    embeddings become cross-attention keys/values in every base block, with a
    zero-initialized output projection.

Zero initialization makes enabling either branch a bitwise no-op until it is
trained. A timestep-gated skip from input patches to output patches lets the
velocity's own z_t passthrough term bypass the narrow token width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..conditioning import ControlPackage
from ..errors import ContractError, ShapeError
from .. import vocab
from .layers import (Embedding, Linear, MLP, Module, MultiHeadAttention, modulate,
                     timestep_embedding)
from .vae import (LATENT_CHANNELS, SPATIAL_POOL, PixelDecoder, patchify, patchify_np,
                  pool_frames_np, unpatchify)


@dataclass(frozen=True)
class ModelConfig:
    n_frames: int = 17
    height: int = 64
    width: int = 64
    patch: int = 8
    stride: int = 4
    dim: int = 64
    heads: int = 4
    blocks: int = 4
    vcm_blocks: int = 2
    vocab_size: int = vocab.VOCAB_SIZE
    n_points: int = 9
    seed: int = 0

    def __post_init__(self):
        if (self.n_frames - 1) % self.stride:
            raise ContractError(f"config: n_frames {self.n_frames} not ≡ 1 (mod stride)")
        if (self.height // SPATIAL_POOL) % self.patch or (self.width // SPATIAL_POOL) % self.patch:
            raise ContractError("config: pooled extents not divisible by patch size")
        if not (1 <= self.vcm_blocks <= self.blocks):
            raise ContractError("config: need 1 <= vcm_blocks <= blocks")

    @property
    def n_latent(self) -> int:
        return (self.n_frames - 1) // self.stride + 1

    @property
    def latent_h(self) -> int:
        return self.height // SPATIAL_POOL

    @property
    def latent_w(self) -> int:
        return self.width // SPATIAL_POOL

    @property
    def tokens_per_frame(self) -> int:
        return (self.latent_h // self.patch) * (self.latent_w // self.patch)

    @property
    def n_tokens(self) -> int:
        return self.n_latent * self.tokens_per_frame

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * LATENT_CHANNELS

    @property
    def latent_shape(self):
        return (self.n_latent, self.latent_h, self.latent_w, LATENT_CHANNELS)


CONFIG_KEYS = ("n_frames", "height", "width", "patch", "stride", "dim", "heads",
               "blocks", "vcm_blocks", "vocab_size", "n_points", "seed")


def config_to_arrays(config: ModelConfig) -> Dict[str, np.ndarray]:
    return {f"_cfg/{k}": np.asarray([float(getattr(config, k))], dtype=np.float32)
            for k in CONFIG_KEYS}


def config_from_arrays(arrays: Dict[str, np.ndarray]) -> ModelConfig:
    kwargs = {}
    for k in CONFIG_KEYS:
        key = f"_cfg/{k}"
        if key not in arrays:
            raise ContractError(f"checkpoint lacks config entry {key}")
        kwargs[k] = int(arrays[key][0])
    return ModelConfig(**kwargs)


@dataclass
class RawBatch:
    """Pure-array conditioning and targets for a batch of clips."""

    latents: np.ndarray        # (B, F, h, w, C) in [0, 1] (pre-normalization)
    videos: Optional[np.ndarray]  # (B, N, H, W, 3) in [0, 1]; None outside stage 0
    pcd_patch: np.ndarray      # (B, T, patch_dim) guidance tokens (raw)
    cam_patch: np.ndarray      # (B, T, patch*patch*6) Plücker tokens (raw)
    ref_patch: np.ndarray      # (B, T_f, patch_dim)
    captions: np.ndarray       # (B, L) int64
    caption_valid: np.ndarray  # (B, L) bool
    traj: np.ndarray           # (B, M, N~, 3*n_points) float32
    entities: np.ndarray       # (B, M) int64
    obj_valid: np.ndarray      # (B, M) bool

    @property
    def batch_size(self) -> int:
        return self.latents.shape[0]


@dataclass
class ConditioningBundle:
    """Encoded conditioning tensors (widths all equal the model dim)."""

    ctx: Tensor
    ctx_valid: np.ndarray
    c_obj: Optional[Tensor] = None
    obj_valid: Optional[np.ndarray] = None
    pcd_tokens: Optional[Tensor] = None
    cam_tokens: Optional[Tensor] = None


def _patch_tokens(frames: np.ndarray, stride: int, patch: int) -> np.ndarray:
    """(B, N, H, W, C) -> kept-frame pooled patches (B, T, patch*patch*C)."""
    kept = np.ascontiguousarray(frames[:, ::stride])
    pooled = pool_frames_np(kept)
    return patchify_np(pooled, patch)


def build_raw_batch(packages: Sequence[ControlPackage], ref_images: np.ndarray,
                    config: ModelConfig, use_guidance: bool = True,
                    latents: Optional[np.ndarray] = None,
                    videos: Optional[np.ndarray] = None) -> RawBatch:
    """Assemble padded conditioning arrays from control packages.

    ``use_guidance=False`` zeroes the guidance tokens (the w/o-renders
    ablation: Plücker only).
    """
    if not packages:
        raise ContractError("build_raw_batch: empty batch")
    b = len(packages)
    guidance = np.stack([p.guidance.frames for p in packages])
    pcd_patch = _patch_tokens(guidance, config.stride, config.patch)
    if not use_guidance:
        pcd_patch = np.zeros_like(pcd_patch)
    plucker = np.stack([p.plucker for p in packages])          # (B, N, 6, H, W)
    plucker = np.ascontiguousarray(plucker.transpose(0, 1, 3, 4, 2), dtype=np.float32)
    cam_patch = _patch_tokens(plucker, config.stride, config.patch)
    ref_patch = _patch_tokens(np.asarray(ref_images, dtype=np.float32)[:, None],
                              stride=1, patch=config.patch)

    max_len = max(1, max(p.caption_tokens.shape[0] for p in packages))
    captions = np.zeros((b, max_len), dtype=np.int64)
    caption_valid = np.zeros((b, max_len), dtype=bool)
    max_m = max(p.traj_tokens.shape[0] for p in packages)
    traj = np.zeros((b, max_m, config.n_latent, 3 * config.n_points), dtype=np.float32)
    entities = np.zeros((b, max_m), dtype=np.int64)
    obj_valid = np.zeros((b, max_m), dtype=bool)
    for i, p in enumerate(packages):
        k = p.caption_tokens.shape[0]
        captions[i, :k] = p.caption_tokens
        caption_valid[i, :k] = True
        m = p.traj_tokens.shape[0]
        if m:
            if p.traj_tokens.shape[1] != config.n_latent:
                raise ShapeError(f"package {i}: {p.traj_tokens.shape[1]} trajectory tokens, "
                                 f"model expects {config.n_latent}")
            traj[i, :m] = p.traj_tokens
            entities[i, :m] = p.entity_indices
            obj_valid[i, :m] = True

    if latents is None:
        latents = np.zeros((b,) + tuple(config.latent_shape), dtype=np.float32)
    return RawBatch(latents, videos, pcd_patch, cam_patch, ref_patch,
                    captions, caption_valid, traj, entities, obj_valid)


class DiTBlock(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.mod = Linear(dim, 4 * dim, rng)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.cross = MultiHeadAttention(dim, heads, rng)
        self.obj_cross = MultiHeadAttention(dim, heads, rng, zero_out=True)
        self.mlp = MLP(dim, 4 * dim, rng)

    def __call__(self, x: Tensor, t_act: Tensor, ctx: Tensor, ctx_valid: np.ndarray,
                 c_obj: Optional[Tensor], obj_valid: Optional[np.ndarray]) -> Tensor:
        d = self.dim
        m = self.mod(t_act)
        h = modulate(ad.layer_norm(x), ad.narrow(m, 1, 0, d), ad.narrow(m, 1, d, d))
        x = ad.add(x, self.attn(h, h))
        x = ad.add(x, self.cross(ad.layer_norm(x), ctx, ctx_valid))
        if c_obj is not None:
            x = ad.add(x, self.obj_cross(ad.layer_norm(x), c_obj, obj_valid))
        h = modulate(ad.layer_norm(x), ad.narrow(m, 1, 2 * d, d), ad.narrow(m, 1, 3 * d, d))
        return ad.add(x, self.mlp(h))


class VCMBlock(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.mod = Linear(dim, 4 * dim, rng)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.mlp = MLP(dim, 4 * dim, rng)

    def __call__(self, x: Tensor, t_act: Tensor) -> Tensor:
        d = self.dim
        m = self.mod(t_act)
        h = modulate(ad.layer_norm(x), ad.narrow(m, 1, 0, d), ad.narrow(m, 1, d, d))
        x = ad.add(x, self.attn(h, h))
        h = modulate(ad.layer_norm(x), ad.narrow(m, 1, 2 * d, d), ad.narrow(m, 1, 3 * d, d))
        return ad.add(x, self.mlp(h))


class MotionDiT(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(np.random.PCG64(config.seed))
        d = config.dim

        # base
        self.input_proj = Linear(config.patch_dim, d, rng)
        self.pos_emb = ad.Tensor(rng.normal(0, 0.02, (config.n_tokens, d)).astype(np.float32),
                                 requires_grad=True)
        self.t_fc1 = Linear(d, d, rng)
        self.t_fc2 = Linear(d, d, rng)
        self.label_emb = Embedding(config.vocab_size, d, rng)
        self.ref_proj = Linear(config.patch_dim, d, rng)
        self.ref_pos = ad.Tensor(rng.normal(0, 0.02, (config.tokens_per_frame, d)).astype(np.float32),
                                 requires_grad=True)
        self.blocks = [DiTBlock(d, config.heads, rng) for _ in range(config.blocks)]
        self.final_mod = Linear(d, 2 * d, rng)
        self.head = Linear(d, config.patch_dim, rng)
        self.skip_gate = Linear(d, config.patch_dim, rng, zero_init=True)

        # camera branch
        self.vcm_pcd_proj = Linear(config.patch_dim, d, rng)
        self.vcm_cam_proj = Linear(config.patch * config.patch * 6, d, rng)
        self.vcm_fuse = Linear(2 * d, d, rng)
        self.vcm_pos = ad.Tensor(rng.normal(0, 0.02, (config.n_tokens, d)).astype(np.float32),
                                 requires_grad=True)
        self.vcm_blocks = [VCMBlock(d, config.heads, rng) for _ in range(config.vcm_blocks)]
        self.vcm_out = [Linear(d, d, rng, zero_init=True) for _ in range(config.vcm_blocks)]

        # object branch (label embedding is shared with the base text path)
        self.omm_traj_proj = Linear(3 * config.n_points, d, rng)

        # latent decoder
        self.decoder = PixelDecoder(config.n_frames, config.stride, config.height,
                                    config.width, rng)

    # -- conditioning ---------------------------------------------------------

    def encode_bundle(self, raw: RawBatch, use_vcm: bool = True,
                      use_omm: bool = True) -> ConditioningBundle:
        cfg = self.config
        b = raw.batch_size
        dtype = self.head.weight.dtype

        c_txt = self.label_emb(raw.captions)
        c_ref = ad.add(self.ref_proj(Tensor(raw.ref_patch.astype(dtype))), self.ref_pos)
        ctx = ad.concat([c_txt, c_ref], axis=1)
        ctx_valid = np.concatenate(
            [raw.caption_valid, np.ones((b, c_ref.shape[1]), dtype=bool)], axis=1)

        c_obj = obj_valid = None
        if use_omm:
            m = raw.traj.shape[1]
            tokens = []
            if m:
                proj = self.omm_traj_proj(Tensor(raw.traj.astype(dtype)))  # (B, M, N~, d)
                lab = self.label_emb(raw.entities)                          # (B, M, d)
                lab = ad.expand(ad.reshape(lab, (b, m, 1, cfg.dim)),
                                (b, m, cfg.n_latent, cfg.dim))
                tokens.append(ad.reshape(ad.add(proj, lab), (b, m * cfg.n_latent, cfg.dim)))
            # constant null token keeps softmax defined for object-free samples
            null = Tensor(np.zeros((b, 1, cfg.dim), dtype=dtype))
            c_obj = ad.concat([null] + tokens, axis=1) if tokens else null
            valid = np.repeat(raw.obj_valid, cfg.n_latent, axis=1) if m else \
                np.zeros((b, 0), dtype=bool)
            obj_valid = np.concatenate([np.ones((b, 1), dtype=bool), valid], axis=1)

        pcd_tokens = cam_tokens = None
        if use_vcm:
            pcd_tokens = self.vcm_pcd_proj(Tensor(raw.pcd_patch.astype(dtype)))
            cam_tokens = self.vcm_cam_proj(Tensor(raw.cam_patch.astype(dtype)))
        return ConditioningBundle(ctx, ctx_valid, c_obj, obj_valid, pcd_tokens, cam_tokens)

    # -- velocity prediction --------------------------------------------------

    def forward(self, z_t, t: np.ndarray, bundle: ConditioningBundle,
                use_vcm: bool = True, use_omm: bool = True) -> Tensor:
        cfg = self.config
        dtype = self.head.weight.dtype
        zt = z_t if isinstance(z_t, Tensor) else Tensor(np.asarray(z_t, dtype=dtype))
        if zt.shape[1:] != tuple(cfg.latent_shape):
            raise ShapeError(f"forward: latent {zt.shape[1:]} vs config {cfg.latent_shape}")
        b = zt.shape[0]

        x_patches = patchify(zt, cfg.patch)                     # (B, T, P)
        x = self.input_proj(x_patches)
        t_sin = timestep_embedding(t, cfg.dim, dtype)
        t_act = ad.gelu(self.t_fc2(ad.gelu(self.t_fc1(t_sin))))  # (B, d)

        residuals: List[Tensor] = []
        if use_vcm:
            if bundle.pcd_tokens is None or bundle.cam_tokens is None:
                raise ContractError("forward: VCM enabled but bundle lacks camera tokens")
            vx = self.vcm_fuse(ad.concat([bundle.pcd_tokens, x], axis=2))
            vx = ad.add(ad.add(vx, bundle.cam_tokens), self.vcm_pos)
            for vblock, vout in zip(self.vcm_blocks, self.vcm_out):
                vx = vblock(vx, t_act)
                residuals.append(vout(vx))

        x = ad.add(x, self.pos_emb)
        c_obj = bundle.c_obj if use_omm else None
        for i, block in enumerate(self.blocks):
            x = block(x, t_act, bundle.ctx, bundle.ctx_valid, c_obj, bundle.obj_valid)
            if i < len(residuals):
                x = ad.add(x, residuals[i])

        m = self.final_mod(t_act)
        h = modulate(ad.layer_norm(x), ad.narrow(m, 1, 0, cfg.dim),
                     ad.narrow(m, 1, cfg.dim, cfg.dim))
        out = self.head(h)
        gate = ad.expand(ad.reshape(self.skip_gate(t_act), (b, 1, cfg.patch_dim)),
                         (b, cfg.n_tokens, cfg.patch_dim))
        out = ad.add(out, ad.mul(gate, x_patches))
        return unpatchify(out, cfg.n_latent, cfg.latent_h, cfg.latent_w,
                          LATENT_CHANNELS, cfg.patch)

    # -- stage routing ---------------------------------------------------------

    @staticmethod
    def param_stage(name: str) -> int:
        """0 = base warmup (incl. decoder), 1 = camera branch, 2 = object branch."""
        if name.startswith("vcm_"):
            return 1
        if name.startswith("omm_") or "/obj_cross/" in name:
            return 2
        return 0

    def stage_parameters(self, stage: int):
        return [(n, p) for n, p in self.named_parameters() if self.param_stage(n) == stage]

    def set_stage(self, stage: Optional[int]) -> None:
        """Freeze everything except the given stage's parameters (None = all)."""
        for name, p in self.named_parameters():
            p.requires_grad = stage is None or self.param_stage(name) == stage

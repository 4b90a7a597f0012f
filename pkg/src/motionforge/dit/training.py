"""Staged training: base warmup, then camera control, then object control.

Stage 0 trains the unconditional base DiT plus the latent decoder (the
pretrained backbone substitute). Stage 1 trains only the camera branch with
the base frozen; stage 2 freezes that too and trains only the object branch.
The optimizer is Adam with decoupled weight decay, with a linear in-stage
warmup followed by a constant rate.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor, backward
from ..checkpoint import load_checkpoint, save_checkpoint
from ..conditioning import ControlPackage, build_control_package
from ..errors import ContractError, NumericError
from ..imgio import read_png
from ..synth import load_clip_frames, spec_from_clip
from .flow import flow_interpolate, sample_timestep
from .model import ConditioningBundle, ModelConfig, MotionDiT, RawBatch, build_raw_batch, \
    config_from_arrays, config_to_arrays
from .vae import encode_pixels, normalize_latent

STAGE_NAMES = {0: "base-warmup", 1: "camera-control", 2: "object-control"}


@dataclass
class TrainSettings:
    batch_size: int = 4
    lr: float = 2e-3
    warmup_steps: int = 100
    weight_decay: float = 0.01
    stage_steps: Tuple[int, int, int] = (800, 1100, 1100)
    seed: int = 0
    recon_weight: float = 1.0
    use_guidance: bool = True  # False: w/o guidance renders (Plücker only)

    @property
    def total_steps(self) -> int:
        return sum(self.stage_steps)


class AdamW:
    """Adam with decoupled weight decay over an ordered parameter list."""

    def __init__(self, params: Sequence[Tuple[str, Tensor]], betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = list(params)
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def step(self, lr: float) -> None:
        self.t += 1
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            v = self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * (g * g)
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            update = mhat / (np.sqrt(vhat) + self.eps)
            if self.weight_decay and p.data.ndim >= 2:
                update = update + self.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        out = {"_opt/t": np.asarray([float(self.t)], dtype=np.float32)}
        for name, _ in self.params:
            out[f"_opt/m/{name}"] = self.m[name]
            out[f"_opt/v/{name}"] = self.v[name]
        return out

    def load_state(self, arrays: Dict[str, np.ndarray]) -> None:
        if "_opt/t" in arrays:
            self.t = int(arrays["_opt/t"][0])
        for name, _ in self.params:
            if f"_opt/m/{name}" in arrays:
                self.m[name] = arrays[f"_opt/m/{name}"].copy()
                self.v[name] = arrays[f"_opt/v/{name}"].copy()


def lr_at(step_in_stage: int, settings: TrainSettings) -> float:
    warm = max(1, settings.warmup_steps)
    return settings.lr * min(1.0, (step_in_stage + 1) / warm)


class ClipDataset:
    """Clip directories -> cached latents, videos, and control packages."""

    def __init__(self, dataset_dir: str, config: ModelConfig,
                 clip_ids: Optional[List[str]] = None, use_guidance: bool = True,
                 progress: bool = False):
        index_path = os.path.join(dataset_dir, "index.json")
        if clip_ids is None:
            if not os.path.exists(index_path):
                raise ContractError(f"dataset index not found: {index_path}")
            with open(index_path) as fh:
                clip_ids = [c["id"] for c in json.load(fh)["clips"]]
        if not clip_ids:
            raise ContractError("dataset is empty")
        self.config = config
        self.use_guidance = use_guidance
        self.latents: List[np.ndarray] = []
        self.videos: List[np.ndarray] = []
        self.packages: List[ControlPackage] = []
        self.refs: List[np.ndarray] = []
        for i, clip_id in enumerate(clip_ids):
            clip_dir = os.path.join(dataset_dir, clip_id)
            frames = load_clip_frames(clip_dir, config.n_frames)
            spec = spec_from_clip(clip_dir)
            pkg = build_control_package(spec, stride=config.stride, n_p=config.n_points)
            self.latents.append(encode_pixels(frames, config.stride))
            self.videos.append((frames * 255.0 + 0.5).astype(np.uint8))
            self.packages.append(pkg)
            self.refs.append(frames[0])
            if progress and (i + 1) % 64 == 0:
                print(f"  cached {i + 1}/{len(clip_ids)} clips")

    def __len__(self) -> int:
        return len(self.packages)

    def batch(self, indices: Sequence[int], with_videos: bool) -> RawBatch:
        packages = [self.packages[i] for i in indices]
        refs = np.stack([self.refs[i] for i in indices])
        latents = np.stack([self.latents[i] for i in indices])
        videos = None
        if with_videos:
            videos = np.stack([self.videos[i] for i in indices]).astype(np.float32) / 255.0
        return build_raw_batch(packages, refs, self.config, self.use_guidance,
                               latents=latents, videos=videos)


def training_step(model: MotionDiT, batch: RawBatch, stage: int,
                  rng: np.random.Generator,
                  settings: TrainSettings) -> Tuple[Tensor, ConditioningBundle]:
    """One flow-matching loss evaluation (plus decoder reconstruction in stage 0)."""
    if batch.batch_size == 0:
        raise ContractError("training_step: empty batch")
    if stage not in (0, 1, 2):
        raise ContractError(f"training_step: unknown stage {stage}")
    use_vcm = stage >= 1
    use_omm = stage >= 2

    z0 = normalize_latent(batch.latents)
    t = sample_timestep(rng, batch.batch_size)
    z1 = rng.standard_normal(z0.shape).astype(np.float32)
    z_t, v_t = flow_interpolate(z0, z1, t)

    bundle = model.encode_bundle(batch, use_vcm=use_vcm, use_omm=use_omm)
    v_pred = model.forward(z_t, t, bundle, use_vcm=use_vcm, use_omm=use_omm)
    loss = ad.mse(v_pred, Tensor(v_t))
    if stage == 0 and batch.videos is not None and settings.recon_weight:
        recon = model.decoder(Tensor(z0))
        loss = ad.add(loss, ad.scale(ad.mse(recon, Tensor(batch.videos)),
                                     settings.recon_weight))
    return loss, bundle


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    final_loss: float
    steps: int


def save_model_checkpoint(model: MotionDiT, path: str, step: int, stage: int,
                          optimizer: Optional[AdamW] = None) -> None:
    arrays = dict(model.state_arrays())
    arrays.update(config_to_arrays(model.config))
    arrays["_meta/step"] = np.asarray([float(step)], dtype=np.float32)
    arrays["_meta/stage"] = np.asarray([float(stage)], dtype=np.float32)
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    save_checkpoint(arrays, path)


def load_model(path: str) -> Tuple[MotionDiT, ModelConfig, Dict[str, np.ndarray]]:
    arrays = load_checkpoint(path)
    config = config_from_arrays(arrays)
    model = MotionDiT(config)
    model.load_state({k: v for k, v in arrays.items() if not k.startswith("_")})
    return model, config, arrays


def train(dataset_dir: str, config: ModelConfig, settings: TrainSettings,
          checkpoint_path: str, log_path: Optional[str] = None,
          resume_from: Optional[str] = None, stages: Sequence[int] = (0, 1, 2),
          dataset: Optional[ClipDataset] = None, progress: bool = False) -> TrainResult:
    """Run the staged procedure and write checkpoint plus a CSV loss log.

    ``stages`` restricts which stages run (e.g. (1,) continues camera training
    from a resumed base checkpoint); the step counter continues across runs.
    """
    if dataset is None:
        dataset = ClipDataset(dataset_dir, config, use_guidance=settings.use_guidance,
                              progress=progress)
    log_path = log_path or checkpoint_path + ".log.csv"

    step = 0
    if resume_from:
        model, config, arrays = load_model(resume_from)
        step = int(arrays.get("_meta/step", np.zeros(1))[0])
    else:
        model = MotionDiT(config)

    log_rows: List[str] = ["step,stage,loss,lr"]
    if resume_from and os.path.exists(log_path):
        with open(log_path) as fh:
            log_rows = fh.read().strip().split("\n")

    loss_value = float("nan")
    for stage in stages:
        n_steps = settings.stage_steps[stage]
        if n_steps <= 0:
            continue
        model.set_stage(stage)
        params = model.stage_parameters(stage)
        if stage == 0:
            # the decoder trains alongside the base in the warmup
            params = [(n, p) for n, p in params]
        opt = AdamW(params, weight_decay=settings.weight_decay)
        rng = np.random.default_rng(np.random.PCG64(settings.seed * 9973 + stage + 1))
        for k in range(n_steps):
            indices = rng.integers(0, len(dataset), size=settings.batch_size)
            batch = dataset.batch(indices.tolist(), with_videos=(stage == 0))
            loss, _ = training_step(model, batch, stage, rng, settings)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise NumericError(f"training diverged: loss={loss_value} at "
                                   f"step {step} (stage {stage}, in-stage {k})")
            backward(loss)
            rate = lr_at(k, settings)
            opt.step(rate)
            opt.zero_grad()
            step += 1
            log_rows.append(f"{step},{stage},{loss_value!r},{rate!r}")
            if progress and (k + 1) % 100 == 0:
                print(f"  stage {stage} [{STAGE_NAMES[stage]}] step {k + 1}/{n_steps} "
                      f"loss {loss_value:.5f}")
        save_model_checkpoint(model, checkpoint_path, step, stage, opt)
        # stage snapshots support the paper-style ablations (e.g. the stage-1
        # model is exactly "trained without 3D trajectory conditioning")
        save_model_checkpoint(model, f"{checkpoint_path}.stage{stage}", step, stage)
        with open(log_path, "w") as fh:
            fh.write("\n".join(log_rows) + "\n")

    return TrainResult(checkpoint_path, log_path, loss_value, step)

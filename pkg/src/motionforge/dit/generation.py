"""Spec-to-video generation through the Euler ODE sampler."""

from __future__ import annotations

import os
import shutil
import subprocess
from typing import Callable, Optional, Union

import numpy as np

from ..conditioning import ControlSpec, build_control_package
from ..errors import ContractError
from ..imgio import read_png, write_png
from .flow import euler_integrate
from .model import ModelConfig, MotionDiT, build_raw_batch
from .training import load_model
from .vae import denormalize_latent, normalize_latent


def generate(spec: ControlSpec, steps: int = 20,
             checkpoint: Union[str, MotionDiT, None] = None,
             out_dir: Optional[str] = None,
             use_vcm: bool = True, use_omm: bool = True, use_guidance: bool = True,
             velocity_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
             write_mp4: bool = False,
             progress_cb: Optional[Callable[[float], None]] = None) -> np.ndarray:
    """Generate N RGB frames in [0, 1] following the spec's motion commands.

    Integrates dz/dt = velocity from noise (t=1) to data (t=0) with uniform
    Euler steps and decodes the latent. Deterministic for a fixed spec seed.
    ``velocity_fn`` overrides the model (used by the exact-velocity oracle
    tests); a model or checkpoint path is required otherwise.
    """
    if steps < 1:
        raise ContractError("generate: steps must be >= 1")
    if isinstance(checkpoint, str):
        if not os.path.exists(checkpoint):
            raise ContractError(f"generate: missing checkpoint {checkpoint}")
        model, config, _ = load_model(checkpoint)
    elif isinstance(checkpoint, MotionDiT):
        model, config = checkpoint, checkpoint.config
    elif velocity_fn is None:
        raise ContractError("generate: needs a checkpoint, a model, or a velocity_fn")
    else:
        model, config = None, ModelConfig()

    if spec.num_frames != config.n_frames:
        raise ContractError(f"generate: spec has {spec.num_frames} frames, model expects "
                            f"{config.n_frames}")

    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    z1 = rng.standard_normal((1,) + tuple(config.latent_shape)).astype(np.float32)

    if velocity_fn is None:
        package = build_control_package(spec, stride=config.stride, n_p=config.n_points)
        reference = read_png(spec.reference_image)
        raw = build_raw_batch([package], reference[None], config, use_guidance)
        bundle = model.encode_bundle(raw, use_vcm=use_vcm, use_omm=use_omm)
        total = steps

        def velocity_fn(z, t, _state=[0]):
            v = model.forward(z, t, bundle, use_vcm=use_vcm, use_omm=use_omm).data
            _state[0] += 1
            if progress_cb:
                progress_cb(min(1.0, _state[0] / total))
            return v

    z0_hat = euler_integrate(velocity_fn, z1, steps)

    if model is not None:
        video = model.decoder.decode(z0_hat[0])
    else:
        # oracle path: no decoder, return denormalized latent frames as-is
        video = np.clip(denormalize_latent(z0_hat[0]), 0.0, 1.0)

    if out_dir:
        frames_dir = os.path.join(out_dir, "frames")
        os.makedirs(frames_dir, exist_ok=True)
        for j in range(video.shape[0]):
            write_png(video[j], os.path.join(frames_dir, f"{j:03d}.png"))
        if write_mp4:
            encode_mp4(frames_dir, os.path.join(out_dir, "video.mp4"))
    return video


def encode_mp4(frames_dir: str, out_path: str, fps: int = 8) -> bool:
    """Delegate to ffmpeg when available; absence is not an error."""
    ffmpeg = shutil.which("ffmpeg")
    if ffmpeg is None:
        return False
    cmd = [ffmpeg, "-y", "-loglevel", "error", "-framerate", str(fps),
           "-i", os.path.join(frames_dir, "%03d.png"),
           "-pix_fmt", "yuv420p", out_path]
    return subprocess.run(cmd, check=False).returncode == 0


def oracle_velocity(z0: np.ndarray, z1_unused=None) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Ground-truth constant velocity field for a known clean latent.

    Along the straight path z_t = t*z1 + (1-t)*z0 the true velocity is
    (z_t - z0) / t, independent of which z1 produced z_t.
    """
    def v_fn(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        tb = t.reshape((-1,) + (1,) * (z.ndim - 1)).astype(np.float32)
        return (z - z0) / tb

    return v_fn

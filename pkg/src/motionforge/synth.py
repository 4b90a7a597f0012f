"""Deterministic synthetic scenes with exact motion annotations.

Each clip is a textured background plane plus up to three solid-color cuboids
following a configured motion family, viewed through a configured camera
path. Rendering is analytic ray intersection with a z-buffer, so every
annotation (poses, depth, 3D point tracks, masks, 2D boxes) is exact and the
whole clip is a pure function of its seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import vocab
from .conditioning import (Box3D, ControlObject, ControlSpec, EntityPrompt,
                           ObjectTrajectory3D)
from .errors import ContractError, SpecValidationError
from .geometry import (CameraIntrinsics, CameraPose, CameraTrajectory, poses_from_matrix,
                       poses_to_matrix, rot_x, rot_y)
from .imgio import read_pfm, read_png, write_pfm, write_png

MANIFEST_VERSION = "rc-1"
CAMERA_FAMILIES = ("static", "pan", "dolly", "orbit", "random-smooth")
OBJECT_FAMILIES = ("static", "linear", "circular", "random-smooth")
N_POINTS = 9  # center + 8 corners
MIN_MASK_AREA = 4


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_frames: int = 17
    width: int = 64
    height: int = 64
    camera_family: str = "pan"
    object_count: int = 1
    object_family: str = "linear"
    depth_range: Tuple[float, float] = (2.5, 5.0)

    def __post_init__(self):
        if self.camera_family not in CAMERA_FAMILIES:
            raise ContractError(f"unknown camera family {self.camera_family!r}")
        if self.object_family not in OBJECT_FAMILIES:
            raise ContractError(f"unknown object family {self.object_family!r}")
        if not (0 <= self.object_count <= 3):
            raise ContractError("object_count must be in [0, 3]")
        if self.n_frames < 2:
            raise ContractError("n_frames must be >= 2")

    def to_dict(self) -> dict:
        return {"seed": self.seed, "n_frames": self.n_frames, "width": self.width,
                "height": self.height, "camera_family": self.camera_family,
                "object_count": self.object_count, "object_family": self.object_family,
                "depth_range": list(self.depth_range)}

    @staticmethod
    def from_dict(d: dict) -> "SceneConfig":
        return SceneConfig(seed=int(d["seed"]), n_frames=int(d["n_frames"]),
                           width=int(d["width"]), height=int(d["height"]),
                           camera_family=str(d["camera_family"]),
                           object_count=int(d["object_count"]),
                           object_family=str(d["object_family"]),
                           depth_range=tuple(d["depth_range"]))


@dataclass
class AnnotatedObject:
    object_id: int
    label: str
    points: np.ndarray      # (N, N_p, 3) reference-camera coordinates
    boxes: np.ndarray       # (N, 4) mask-derived pixel boxes
    visibility: np.ndarray  # (N,) bool
    masks: np.ndarray       # (N, H, W) bool


@dataclass
class SceneAnnotation:
    caption: str
    poses: List[CameraPose]
    intrinsics: CameraIntrinsics
    objects: List[AnnotatedObject]
    depth0: np.ndarray
    camera_family: str
    object_family: str
    seed: int
    extra: Dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.poses)


def default_intrinsics(width: int, height: int) -> CameraIntrinsics:
    f = 1.1 * width
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


# -- motion sampling -----------------------------------------------------------


def _sin_profile(rng: np.random.Generator, n: int, amp: float, k_max: int = 3) -> np.ndarray:
    """Smooth profile that is exactly zero at frame 0."""
    t = np.linspace(0.0, 1.0, n)
    out = np.zeros(n)
    for k in range(1, k_max + 1):
        out += rng.uniform(-1, 1) * np.sin(np.pi * k * t) / k
    peak = np.abs(out).max()
    if peak > 1e-9:
        out *= amp * rng.uniform(0.5, 1.0) / peak
    return out


def _camera_poses(cfg: SceneConfig, rng: np.random.Generator) -> List[CameraPose]:
    n = cfg.n_frames
    t = np.linspace(0.0, 1.0, n)
    z_mid = 0.5 * (cfg.depth_range[0] + cfg.depth_range[1])
    if cfg.camera_family == "static":
        return [CameraPose.identity() for _ in range(n)]
    if cfg.camera_family == "pan":
        total = rng.uniform(0.25, 0.6) * rng.choice([-1.0, 1.0])
        return [CameraPose(np.eye(3), np.array([total * tt, 0.0, 0.0])) for tt in t]
    if cfg.camera_family == "dolly":
        total = rng.uniform(0.3, 0.8) * rng.choice([-1.0, 1.0])
        return [CameraPose(np.eye(3), np.array([0.0, 0.0, total * tt])) for tt in t]
    if cfg.camera_family == "orbit":
        total = np.deg2rad(rng.uniform(6.0, 14.0)) * rng.choice([-1.0, 1.0])
        anchor = np.array([0.0, 0.0, z_mid])
        poses = []
        for tt in t:
            r = rot_y(total * tt)
            poses.append(CameraPose(r, anchor + r @ (-anchor)))
        return poses
    # random-smooth
    tx = _sin_profile(rng, n, 0.3)
    ty = _sin_profile(rng, n, 0.15)
    tz = _sin_profile(rng, n, 0.3)
    yaw = _sin_profile(rng, n, np.deg2rad(5.0))
    pitch = _sin_profile(rng, n, np.deg2rad(3.0))
    return [CameraPose(rot_y(yaw[j]) @ rot_x(pitch[j]), np.array([tx[j], ty[j], tz[j]]))
            for j in range(n)]


def _object_centers(cfg: SceneConfig, rng: np.random.Generator, start: np.ndarray) -> np.ndarray:
    n = cfg.n_frames
    t = np.linspace(0.0, 1.0, n)
    if cfg.object_family == "static":
        return np.tile(start, (n, 1))
    if cfg.object_family == "linear":
        direction = np.array([rng.normal(), rng.normal(), 0.35 * rng.normal()])
        direction /= np.linalg.norm(direction) + 1e-12
        total = rng.uniform(0.3, 0.55)
        return start[None, :] + total * t[:, None] * direction[None, :]
    if cfg.object_family == "circular":
        radius = rng.uniform(0.12, 0.28)
        sweep = rng.uniform(0.5, 0.85) * 2 * np.pi * rng.choice([-1.0, 1.0])
        theta = sweep * t
        offsets = np.stack([radius * (np.cos(theta) - 1.0), radius * np.sin(theta),
                            np.zeros(n)], axis=1)
        return start[None, :] + offsets
    # random-smooth
    return start[None, :] + np.stack([_sin_profile(rng, n, 0.28),
                                      _sin_profile(rng, n, 0.24),
                                      _sin_profile(rng, n, 0.18)], axis=1)


# -- analytic rendering ---------------------------------------------------------


class _Background:
    """Tilted textured plane; texture is near-gray so object palette colors
    stay recoverable by color thresholding."""

    def __init__(self, rng: np.random.Generator, depth: float):
        self.point = np.array([0.0, 0.0, depth])
        normal = np.array([rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12), -1.0])
        self.normal = normal / np.linalg.norm(normal)
        self.lum = rng.uniform(0.38, 0.6)
        self.tint = rng.uniform(-0.05, 0.05, size=3)
        self.freq = rng.uniform(1.5, 7.0, size=(3, 2))
        self.phase = rng.uniform(0, 2 * np.pi, size=3)
        self.amp = rng.uniform(0.03, 0.055, size=3)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        denom = dirs @ self.normal
        num = (self.point - origins) @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = num / denom
        tau = np.where((denom != 0) & (tau > 1e-4), tau, np.inf)
        return tau

    def color(self, hits: np.ndarray) -> np.ndarray:
        tex = np.zeros(hits.shape[:-1])
        for k in range(3):
            tex += self.amp[k] * np.sin(self.freq[k, 0] * hits[..., 0]
                                        + self.freq[k, 1] * hits[..., 1] + self.phase[k])
        base = self.lum + self.tint
        return np.clip(base[None, :] + tex[..., None], 0.05, 0.95)


def _aabb_intersect(origins: np.ndarray, dirs: np.ndarray, lo: np.ndarray,
                    hi: np.ndarray) -> np.ndarray:
    """Slab-method entry depth; inf where the ray misses."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origins) / dirs
        t2 = (hi - origins) / dirs
    tmin = np.minimum(t1, t2).max(axis=-1)
    tmax = np.maximum(t1, t2).min(axis=-1)
    hit = (tmax >= tmin) & (tmin > 1e-4)
    return np.where(hit, tmin, np.inf)


def _ray_grid(intr: CameraIntrinsics) -> np.ndarray:
    uu, vv = np.meshgrid(np.arange(intr.width, dtype=np.float64),
                         np.arange(intr.height, dtype=np.float64))
    return np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy,
                     np.ones_like(uu)], axis=-1)


def _render_frame(pose: CameraPose, intr: CameraIntrinsics, background: _Background,
                  boxes: List[Tuple[np.ndarray, np.ndarray]], colors: List[np.ndarray],
                  rays_cam: np.ndarray):
    """Returns (image, depth, winner). Depth is the camera-frame Z (ray param,
    since rays are normalized to unit z); winner is -1 for background."""
    dirs = rays_cam @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape)

    best = background.intersect(origins, dirs)
    winner = np.full(best.shape, -1, dtype=np.int32)
    for i, (lo, hi) in enumerate(boxes):
        tau = _aabb_intersect(origins, dirs, lo, hi)
        closer = tau < best
        best = np.where(closer, tau, best)
        winner[closer] = i

    image = np.empty(best.shape + (3,), dtype=np.float32)
    bg_mask = winner == -1
    hits = origins + best[..., None] * dirs
    image[bg_mask] = background.color(hits[bg_mask]).astype(np.float32)
    for i, color in enumerate(colors):
        image[winner == i] = color.astype(np.float32)
    # rays missing everything (plane edge-on) get a dark fallback and no depth
    missed = ~np.isfinite(best)
    image[missed] = 0.1
    depth = np.where(missed, 0.0, best)
    return image, depth, winner


def generate_scene(config: SceneConfig) -> Tuple[np.ndarray, SceneAnnotation]:
    """Render a clip and its exact annotation; bit-deterministic per seed."""
    last_err: Optional[str] = None
    for attempt in range(8):
        seed = config.seed if attempt == 0 else config.seed + 7919 * attempt
        result = _try_generate(config, seed)
        if result is not None:
            return result
        last_err = f"attempt {attempt} with seed {seed} was infeasible"
    raise ContractError(f"generate_scene: could not place objects ({last_err})")


def _try_generate(config: SceneConfig, seed: int):
    rng = np.random.default_rng(np.random.PCG64(seed))
    intr = default_intrinsics(config.width, config.height)
    poses = _camera_poses(config, rng)
    n = config.n_frames
    z_lo, z_hi = config.depth_range
    background = _Background(rng, z_hi)

    # place objects with a per-object feasibility check
    centers_all: List[np.ndarray] = []
    half_all: List[np.ndarray] = []
    labels: List[int] = []
    color_order = rng.permutation(len(vocab.OBJECT_LABELS))
    for i in range(config.object_count):
        placed = False
        for _ in range(80):
            half = np.array([rng.uniform(0.26, 0.5), rng.uniform(0.26, 0.5),
                             rng.uniform(0.2, 0.38)])
            start = np.array([rng.uniform(-0.95, 0.95), rng.uniform(-0.75, 0.75),
                              rng.uniform(z_lo + 0.5, z_hi - 0.8)])
            centers = _object_centers(config, rng, start)
            if not _feasible(centers, half, poses, intr):
                continue
            if any(np.linalg.norm(centers[0][:2] - c[0][:2]) < 0.85 for c in centers_all):
                continue
            centers_all.append(centers)
            half_all.append(half)
            labels.append(int(color_order[i]))
            placed = True
            break
        if not placed:
            return None

    rays = _ray_grid(intr)
    colors = [np.asarray(vocab.OBJECT_PALETTE[k], dtype=np.float32) for k in labels]
    frames = np.empty((n, intr.height, intr.width, 3), dtype=np.float32)
    winners = np.empty((n, intr.height, intr.width), dtype=np.int32)
    depth0 = None
    for j in range(n):
        boxes = [(centers_all[i][j] - half_all[i], centers_all[i][j] + half_all[i])
                 for i in range(len(centers_all))]
        image, depth, winner = _render_frame(poses[j], intr, background, boxes, colors, rays)
        frames[j] = image
        winners[j] = winner
        if j == 0:
            depth0 = depth.astype(np.float32)

    objects = []
    corner_signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                            dtype=np.float64)
    for i in range(len(centers_all)):
        offsets = np.vstack([np.zeros((1, 3)), corner_signs * half_all[i]])
        points = centers_all[i][:, None, :] + offsets[None, :, :]
        masks = winners == i
        boxes2d = np.zeros((n, 4))
        vis = np.zeros(n, dtype=bool)
        for j in range(n):
            ys, xs = np.nonzero(masks[j])
            if xs.size >= MIN_MASK_AREA:
                boxes2d[j] = (xs.min(), ys.min(), xs.max(), ys.max())
                vis[j] = True
        label = vocab.OBJECT_LABELS[labels[i]]
        objects.append(AnnotatedObject(i, label, points, boxes2d, vis, masks))

    caption = _caption(config, objects, centers_all, poses)
    ann = SceneAnnotation(caption, poses, intr, objects, depth0, config.camera_family,
                          config.object_family, config.seed)
    return frames, ann


def _feasible(centers: np.ndarray, half: np.ndarray, poses: List[CameraPose],
              intr: CameraIntrinsics) -> bool:
    corner_signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    for j, pose in enumerate(poses):
        pts = centers[j] + np.vstack([np.zeros((1, 3)), corner_signs * half])
        cam = pose.inverse_transform(pts)
        if (cam[:, 2] < 0.6).any():
            return False
        u = intr.fx * cam[:, 0] / cam[:, 2] + intr.cx
        v = intr.fy * cam[:, 1] / cam[:, 2] + intr.cy
        margin = max(1.0, intr.width / 32.0)
        if (u.min() < margin or u.max() > intr.width - 1 - margin
                or v.min() < margin or v.max() > intr.height - 1 - margin):
            return False
        width_px = u.max() - u.min()
        if not (0.09 * intr.width <= width_px <= 0.69 * intr.width):
            return False
    return True


def _caption(config: SceneConfig, objects: List[AnnotatedObject],
             centers_all: List[np.ndarray], poses: List[CameraPose]) -> str:
    cam_word = {
        "static": "the camera holds still",
        "pan": "the camera pans",
        "dolly": "the camera dollies",
        "orbit": "the camera orbits",
        "random-smooth": "the camera drifts",
    }[config.camera_family]
    if config.camera_family == "pan":
        cam_word += " right" if poses[-1].translation[0] > 0 else " left"
    elif config.camera_family == "dolly":
        cam_word += " forward" if poses[-1].translation[2] > 0 else " backward"

    if not objects:
        return f"a static scene while {cam_word}"
    parts = []
    for i, obj in enumerate(objects):
        delta = centers_all[i][-1] - centers_all[i][0]
        if config.object_family == "static" or np.linalg.norm(delta) < 1e-6:
            parts.append(f"a {obj.label} holds still")
        elif config.object_family == "circular":
            parts.append(f"a {obj.label} circles")
        elif config.object_family == "random-smooth":
            parts.append(f"a {obj.label} drifts")
        else:
            axis = int(np.argmax(np.abs(delta)))
            positive = bool(delta[axis] > 0)
            word = [["left", "right"], ["up", "down"], ["backward", "forward"]][axis][int(positive)]
            parts.append(f"a {obj.label} moves {word}")
    return " and ".join(parts) + f" while {cam_word}"


# -- manifests -------------------------------------------------------------------


def _rle_encode(mask: np.ndarray) -> List[int]:
    """COCO-style counts: alternating zero/one run lengths, zeros first."""
    flat = mask.reshape(-1).astype(np.int8)
    if flat.size == 0:
        return []
    change = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return [int(r) for r in runs]


def _rle_decode(counts: List[int], shape: Tuple[int, int]) -> np.ndarray:
    total = shape[0] * shape[1]
    flat = np.zeros(total, dtype=bool)
    pos = 0
    val = False
    for run in counts:
        if val:
            flat[pos:pos + run] = True
        pos += run
        val = not val
    if pos != total:
        raise SpecValidationError("masks.rle", f"run lengths sum to {pos}, expected {total}")
    return flat.reshape(shape)


def annotation_to_dict(ann: SceneAnnotation, depth_name: str = "depth0.pfm") -> dict:
    h, w = ann.intrinsics.height, ann.intrinsics.width
    objects = []
    for obj in ann.objects:
        objects.append({
            "id": obj.object_id,
            "label": obj.label,
            "points": obj.points.tolist(),
            "boxes": obj.boxes.tolist(),
            "visibility": obj.visibility.tolist(),
            "masks": {"size": [h, w],
                      "rle": [_rle_encode(obj.masks[j]) for j in range(obj.masks.shape[0])]},
        })
    data = {
        "version": MANIFEST_VERSION,
        "caption": ann.caption,
        "intrinsics": ann.intrinsics.to_dict(),
        "poses": poses_to_matrix(ann.poses).tolist(),
        "depth_map": depth_name,
        "num_frames": ann.n_frames,
        "camera_family": ann.camera_family,
        "object_family": ann.object_family,
        "seed": ann.seed,
        "objects": objects,
    }
    data.update(ann.extra)
    return data


_KNOWN_KEYS = {"version", "caption", "intrinsics", "poses", "depth_map", "num_frames",
               "camera_family", "object_family", "seed", "objects"}


def annotation_from_dict(data: dict, depth0: Optional[np.ndarray]) -> SceneAnnotation:
    version = data.get("version")
    if version != MANIFEST_VERSION:
        raise SpecValidationError("version", f"unknown version {version!r}; expected "
                                             f"{MANIFEST_VERSION!r}")
    for key in ("caption", "intrinsics", "poses", "depth_map", "objects", "num_frames"):
        if key not in data:
            raise SpecValidationError(key, "missing required field")
    intr = CameraIntrinsics.from_dict(data["intrinsics"])
    poses = poses_from_matrix(np.asarray(data["poses"], dtype=np.float64))
    if len(poses) != int(data["num_frames"]):
        raise SpecValidationError("poses", f"{len(poses)} poses but num_frames="
                                           f"{data['num_frames']}")
    objects = []
    for k, entry in enumerate(data["objects"]):
        for key in ("id", "label", "points", "boxes", "visibility", "masks"):
            if key not in entry:
                raise SpecValidationError(f"objects[{k}].{key}", "missing required field")
        size = tuple(entry["masks"]["size"])
        masks = np.stack([_rle_decode(counts, size) for counts in entry["masks"]["rle"]])
        objects.append(AnnotatedObject(
            int(entry["id"]), str(entry["label"]),
            np.asarray(entry["points"], dtype=np.float64),
            np.asarray(entry["boxes"], dtype=np.float64),
            np.asarray(entry["visibility"], dtype=bool),
            masks,
        ))
    extra = {k: v for k, v in data.items() if k not in _KNOWN_KEYS}
    if depth0 is None:
        depth0 = np.zeros((intr.height, intr.width), dtype=np.float32)
    return SceneAnnotation(str(data["caption"]), poses, intr, objects, depth0,
                           str(data.get("camera_family", "static")),
                           str(data.get("object_family", "static")),
                           int(data.get("seed", 0)), extra)


def write_manifest(ann: SceneAnnotation, path: str) -> None:
    """Write annotation.json plus the frame-1 depth PFM next to it."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    write_pfm(ann.depth0, os.path.join(directory, "depth0.pfm"))
    with open(path, "w") as fh:
        json.dump(annotation_to_dict(ann), fh, sort_keys=True)


def read_manifest(path: str) -> SceneAnnotation:
    with open(path) as fh:
        data = json.load(fh)
    depth_path = os.path.join(os.path.dirname(os.path.abspath(path)),
                              str(data.get("depth_map", "depth0.pfm")))
    depth0 = read_pfm(depth_path) if os.path.exists(depth_path) else None
    return annotation_from_dict(data, depth0)


# -- datasets --------------------------------------------------------------------


def _clip_config(base_seed: int, index: int, n_frames: int, size: int) -> SceneConfig:
    rng = np.random.default_rng(np.random.PCG64(base_seed * 1_000_003 + index))
    camera_family = CAMERA_FAMILIES[index % len(CAMERA_FAMILIES)]
    object_count = int(rng.integers(0, 4)) if index % 4 else max(1, int(rng.integers(1, 4)))
    object_family = OBJECT_FAMILIES[int(rng.integers(0, len(OBJECT_FAMILIES)))]
    return SceneConfig(seed=int(rng.integers(0, 2**31 - 1)), n_frames=n_frames,
                       width=size, height=size, camera_family=camera_family,
                       object_count=object_count, object_family=object_family)


def clip_dir_name(index: int) -> str:
    return f"clip_{index:05d}"


def _clip_complete(clip_dir: str, n_frames: int) -> bool:
    ann = os.path.join(clip_dir, "annotation.json")
    if not os.path.exists(ann):
        return False
    frames = [os.path.join(clip_dir, "frames", f"{j:03d}.png") for j in range(n_frames)]
    return all(os.path.exists(f) for f in frames)


def write_clip(frames: np.ndarray, ann: SceneAnnotation, clip_dir: str) -> None:
    frames_dir = os.path.join(clip_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    for j in range(frames.shape[0]):
        write_png(frames[j], os.path.join(frames_dir, f"{j:03d}.png"))
    with open(os.path.join(clip_dir, "caption.txt"), "w") as fh:
        fh.write(ann.caption + "\n")
    write_manifest(ann, os.path.join(clip_dir, "annotation.json"))


def make_dataset(count: int, base_seed: int, out_dir: str, n_frames: int = 17,
                 size: int = 64, progress: bool = False) -> List[dict]:
    """Generate ``count`` clips and an index; reruns skip complete clips."""
    if count < 1:
        raise ContractError("make_dataset: count must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    index = []
    for i in range(count):
        cfg = _clip_config(base_seed, i, n_frames, size)
        clip_id = clip_dir_name(i)
        clip_dir = os.path.join(out_dir, clip_id)
        if not _clip_complete(clip_dir, n_frames):
            try:
                frames, ann = generate_scene(cfg)
            except OSError as exc:
                raise OSError(f"{clip_id}: {exc}") from exc
            write_clip(frames, ann, clip_dir)
        index.append({"id": clip_id, "config": cfg.to_dict()})
        if progress and (i + 1) % 32 == 0:
            print(f"  {i + 1}/{count} clips")
    with open(os.path.join(out_dir, "index.json"), "w") as fh:
        json.dump({"version": MANIFEST_VERSION, "clips": index}, fh, indent=2, sort_keys=True)
    return index


def load_clip_frames(clip_dir: str, n_frames: int) -> np.ndarray:
    return np.stack([read_png(os.path.join(clip_dir, "frames", f"{j:03d}.png"))
                     for j in range(n_frames)])


def spec_from_clip(clip_dir: str) -> ControlSpec:
    """Turn a generated clip into the ControlSpec that commands its motion."""
    ann = read_manifest(os.path.join(clip_dir, "annotation.json"))
    objects = []
    for obj in ann.objects:
        prompt = EntityPrompt(obj.object_id, obj.label, vocab.label_index(obj.label))
        objects.append(ControlObject(prompt, trajectory=ObjectTrajectory3D(
            obj.object_id, obj.points)))
    return ControlSpec(
        reference_image=os.path.join(clip_dir, "frames", "000.png"),
        depth_map=os.path.join(clip_dir, "depth0.pfm"),
        intrinsics=ann.intrinsics,
        num_frames=ann.n_frames,
        camera=ann.poses,
        objects=objects,
        caption=ann.caption,
        seed=ann.seed,
    )

"""Motion specifications and the conditioning inputs built from them.

Turns a control spec (reference image + depth, camera trajectory, object
trajectories or draggable 3D boxes) into the model's raw conditioning: Plücker
maps, guidance renders with box overlays, and downsampled trajectory tokens.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import vocab
from .errors import ContractError, ShapeError, SpecValidationError
from .geometry import (CameraIntrinsics, CameraPose, CameraTrajectory, GuidanceFrames,
                       canonicalize, plucker_for_trajectory, project_points,
                       render_trajectory, unproject_depth)
from .imgio import read_pfm, read_png, write_png

SPEC_VERSION = "mf-1"
DEFAULT_STRIDE = 4
DEFAULT_N_P = 9
DEFAULT_PADDING_PX = 1.0


@dataclass(frozen=True)
class EntityPrompt:
    object_id: int
    label: str
    label_index: int


@dataclass
class ObjectTrajectory3D:
    """Per-object point paths in reference-camera coordinates, (N, N_p, 3)."""

    object_id: int
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ShapeError(f"object trajectory: expected (N, N_p, 3), got {self.points.shape}")
        if self.points.shape[1] < 1:
            raise ContractError("object trajectory: N_p must be >= 1")
        if not np.isfinite(self.points).all():
            raise ContractError("object trajectory: non-finite coordinates")

    @property
    def n_frames(self) -> int:
        return self.points.shape[0]

    @property
    def n_points(self) -> int:
        return self.points.shape[1]


@dataclass
class BoxSequence2D:
    object_id: int
    boxes: np.ndarray       # (N, 4) as x0, y0, x1, y1 in pixels
    visibility: np.ndarray  # (N,) bool

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.visibility = np.asarray(self.visibility, dtype=bool).reshape(-1)


@dataclass
class Box3D:
    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if (self.half_extents <= 0).any():
            raise ContractError(f"box3d: half extents must be positive, got {self.half_extents}")

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=np.float64)
        return self.center + signs * self.half_extents


@dataclass
class ControlObject:
    prompt: EntityPrompt
    trajectory: Optional[ObjectTrajectory3D] = None
    box: Optional[Box3D] = None
    keyframes: Optional[List[Tuple[int, np.ndarray]]] = None


@dataclass
class ControlSpec:
    reference_image: str
    depth_map: str
    intrinsics: CameraIntrinsics
    num_frames: int
    camera: List[CameraPose]
    objects: List[ControlObject] = field(default_factory=list)
    caption: str = ""
    seed: int = 0


@dataclass
class ControlPackage:
    """Assembled raw conditioning for one clip."""

    plucker: np.ndarray            # (N, 6, H, W) float32
    guidance: GuidanceFrames       # overlays already drawn
    boxes: List[BoxSequence2D]
    traj_tokens: np.ndarray        # (M, N~, 3 * N_p) float32
    entity_indices: np.ndarray     # (M,) int64
    caption_tokens: np.ndarray     # (T,) int64
    n_frames: int
    n_downsampled: int
    seed: int


# -- trajectory construction ---------------------------------------------------


def transform_to_reference(points_world: np.ndarray, reference_pose: CameraPose,
                           object_id: int = 0) -> ObjectTrajectory3D:
    """Express world-frame object points in the reference camera's frame."""
    points_world = np.asarray(points_world, dtype=np.float64)
    if points_world.ndim != 3 or points_world.shape[2] != 3:
        raise ShapeError(f"transform_to_reference: expected (N, N_p, 3), got {points_world.shape}")
    flat = points_world.reshape(-1, 3)
    out = reference_pose.inverse_transform(flat).reshape(points_world.shape)
    return ObjectTrajectory3D(object_id, out)


def _halton(index: int, base: int) -> float:
    f, r = 1.0, 0.0
    i = index
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def sample_object_points(box: Box3D, n_p: int) -> np.ndarray:
    """Deterministic point pattern: center, 8 corners, then Halton interior."""
    if n_p < 1:
        raise ContractError("sample_object_points: N_p must be >= 1")
    pts = [box.center]
    pts.extend(box.corners())
    i = 1
    while len(pts) < n_p:
        u = np.array([_halton(i, 2), _halton(i, 3), _halton(i, 5)])
        pts.append(box.center + (2.0 * u - 1.0) * box.half_extents)
        i += 1
    return np.asarray(pts[:n_p], dtype=np.float64)


def box_keyframes_to_trajectory(box: Box3D, keyframes: Sequence[Tuple[int, Sequence[float]]],
                                n_frames: int, n_p: int = DEFAULT_N_P,
                                object_id: int = 0) -> ObjectTrajectory3D:
    """Piecewise-linear center interpolation; sampled points follow rigidly."""
    if not keyframes:
        raise ContractError("box keyframes: at least one keyframe required")
    frames = [int(k[0]) for k in keyframes]
    if frames[0] != 1:
        raise ContractError("box keyframes: first keyframe must be at frame 1")
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise ContractError(f"box keyframes: frame indices must be strictly increasing, got {frames}")
    if frames[-1] > n_frames or frames[0] < 1:
        raise ContractError(f"box keyframes: frame index out of [1, {n_frames}]")

    centers = np.asarray([np.asarray(k[1], dtype=np.float64).reshape(3) for k in keyframes])
    per_frame = np.empty((n_frames, 3), dtype=np.float64)
    xs = np.asarray(frames, dtype=np.float64)
    ts = np.arange(1, n_frames + 1, dtype=np.float64)
    for axis in range(3):
        per_frame[:, axis] = np.interp(ts, xs, centers[:, axis])

    base = sample_object_points(box, n_p)
    offsets = per_frame - box.center
    points = base[None, :, :] + offsets[:, None, :]
    return ObjectTrajectory3D(object_id, points)


# -- projection and 2D boxes ---------------------------------------------------


def project_trajectory(traj: ObjectTrajectory3D,
                       trajectory: CameraTrajectory) -> Tuple[np.ndarray, np.ndarray]:
    """Project every frame's points through that frame's camera pose.

    Returns (uv (N, N_p, 2), valid (N, N_p)).
    """
    if traj.n_frames != trajectory.n_frames:
        raise ShapeError(f"project_trajectory: object has {traj.n_frames} frames, "
                         f"camera has {trajectory.n_frames}")
    n, n_p = traj.n_frames, traj.n_points
    uv = np.empty((n, n_p, 2), dtype=np.float64)
    valid = np.empty((n, n_p), dtype=bool)
    for j in range(n):
        uv_j, _, valid_j = project_points(traj.points[j], trajectory.intrinsics,
                                          trajectory.poses[j])
        uv[j] = uv_j
        valid[j] = valid_j
    return uv, valid


def fit_boxes(uv: np.ndarray, valid: np.ndarray, intrinsics: CameraIntrinsics,
              padding_px: float = DEFAULT_PADDING_PX, object_id: int = 0) -> BoxSequence2D:
    """Axis-aligned boxes over valid projected points, padded and clamped.

    A frame is invisible when fewer than 2 points are valid.
    """
    if padding_px < 0:
        raise ContractError("fit_boxes: padding must be >= 0")
    n = uv.shape[0]
    boxes = np.zeros((n, 4), dtype=np.float64)
    visibility = np.zeros(n, dtype=bool)
    for j in range(n):
        pts = uv[j][valid[j]]
        if pts.shape[0] < 2:
            continue
        x0, y0 = pts.min(axis=0)
        x1, y1 = pts.max(axis=0)
        x0, x1 = x0 - padding_px, x1 + padding_px
        y0, y1 = y0 - padding_px, y1 + padding_px
        x0 = np.clip(x0, 0, intrinsics.width - 1)
        x1 = np.clip(x1, 0, intrinsics.width - 1)
        y0 = np.clip(y0, 0, intrinsics.height - 1)
        y1 = np.clip(y1, 0, intrinsics.height - 1)
        boxes[j] = (x0, y0, x1, y1)
        visibility[j] = x1 > x0 and y1 > y0
    return BoxSequence2D(object_id, boxes, visibility)


def overlay_boxes(guidance: GuidanceFrames, box_seqs: Sequence[BoxSequence2D]) -> GuidanceFrames:
    """Draw 2-px box outlines on visible frames; interiors stay untouched.

    Boxes are drawn in ascending object id so later ids end up on top.
    """
    frames = guidance.frames.copy()
    h, w = frames.shape[1:3]
    for seq in sorted(box_seqs, key=lambda s: s.object_id):
        color = np.asarray(vocab.overlay_color(seq.object_id), dtype=np.float32)
        for j in range(frames.shape[0]):
            if j >= seq.boxes.shape[0] or not seq.visibility[j]:
                continue
            x0, y0, x1, y1 = seq.boxes[j]
            x0 = int(np.clip(np.floor(x0 + 0.5), 0, w - 1))
            x1 = int(np.clip(np.floor(x1 + 0.5), 0, w - 1))
            y0 = int(np.clip(np.floor(y0 + 0.5), 0, h - 1))
            y1 = int(np.clip(np.floor(y1 + 0.5), 0, h - 1))
            ring = np.zeros((h, w), dtype=bool)
            ring[y0:y1 + 1, x0:x1 + 1] = True
            ix0, iy0 = x0 + 2, y0 + 2
            ix1, iy1 = x1 - 2, y1 - 2
            if ix1 >= ix0 and iy1 >= iy0:
                ring[iy0:iy1 + 1, ix0:ix1 + 1] = False
            frames[j][ring] = color
    return GuidanceFrames(frames, guidance.validity.copy())


def temporal_downsample(points: np.ndarray, stride: int) -> np.ndarray:
    """Keep frames 0, stride, 2*stride, ... along the first axis."""
    if stride < 1:
        raise ContractError("temporal_downsample: stride must be >= 1")
    return np.ascontiguousarray(points[::stride])


def downsampled_count(n_frames: int, stride: int) -> int:
    return (n_frames - 1) // stride + 1


# -- package assembly ----------------------------------------------------------


def resolve_object_trajectory(obj: ControlObject, n_frames: int,
                              n_p: int = DEFAULT_N_P) -> ObjectTrajectory3D:
    """Explicit points win; otherwise expand box + keyframes."""
    if obj.trajectory is not None:
        return obj.trajectory
    if obj.box is None:
        raise ContractError(f"object {obj.prompt.object_id}: needs points or a 3D box")
    keyframes = obj.keyframes or [(1, obj.box.center)]
    return box_keyframes_to_trajectory(obj.box, keyframes, n_frames, n_p,
                                       object_id=obj.prompt.object_id)


def build_control_package(spec: ControlSpec, stride: int = DEFAULT_STRIDE,
                          n_p: int = DEFAULT_N_P,
                          padding_px: float = DEFAULT_PADDING_PX,
                          point_radius_px: int = 1) -> ControlPackage:
    """Assemble all conditioning inputs for one spec.

    Deterministic for a fixed spec: unprojects depth, canonicalizes the
    trajectory, renders guidance frames, projects object trajectories, fits
    and overlays boxes, and downsamples trajectories to N~ tokens.
    """
    if not os.path.exists(spec.reference_image):
        raise ContractError(f"missing reference image: {spec.reference_image}")
    if not os.path.exists(spec.depth_map):
        raise ContractError(f"missing depth map: {spec.depth_map}")
    image = read_png(spec.reference_image)
    depth = read_pfm(spec.depth_map)
    intr = spec.intrinsics
    if image.shape != (intr.height, intr.width, 3):
        raise ShapeError(f"reference image {image.shape} disagrees with intrinsics "
                         f"{(intr.height, intr.width)}")
    if depth.shape != (intr.height, intr.width):
        raise ShapeError(f"depth map {depth.shape} disagrees with intrinsics "
                         f"{(intr.height, intr.width)}")

    trajectory = canonicalize(CameraTrajectory(spec.camera, intr))
    cloud = unproject_depth(depth, intr, trajectory.poses[0], image)
    guidance = render_trajectory(cloud, trajectory, image, point_radius_px)
    plucker = plucker_for_trajectory(trajectory)

    boxes: List[BoxSequence2D] = []
    tokens: List[np.ndarray] = []
    entities: List[int] = []
    for obj in spec.objects:
        traj = resolve_object_trajectory(obj, spec.num_frames, n_p)
        if traj.n_frames != spec.num_frames:
            raise ShapeError(f"object {obj.prompt.object_id}: trajectory frames "
                             f"{traj.n_frames} != num_frames {spec.num_frames}")
        uv, valid = project_trajectory(traj, trajectory)
        boxes.append(fit_boxes(uv, valid, intr, padding_px, obj.prompt.object_id))
        down = temporal_downsample(traj.points, stride)
        tokens.append(down.reshape(down.shape[0], -1).astype(np.float32))
        entities.append(obj.prompt.label_index)

    guidance = overlay_boxes(guidance, boxes) if boxes else guidance
    n_down = downsampled_count(spec.num_frames, stride)
    traj_tokens = (np.stack(tokens) if tokens
                   else np.zeros((0, n_down, 3 * n_p), dtype=np.float32))
    return ControlPackage(
        plucker=plucker,
        guidance=guidance,
        boxes=boxes,
        traj_tokens=traj_tokens,
        entity_indices=np.asarray(entities, dtype=np.int64),
        caption_tokens=np.asarray(vocab.tokenize_caption(spec.caption), dtype=np.int64),
        n_frames=spec.num_frames,
        n_downsampled=n_down,
        seed=spec.seed,
    )


def save_package(pkg: ControlPackage, out_dir: str) -> None:
    """Write package arrays plus per-frame guidance PNGs."""
    os.makedirs(out_dir, exist_ok=True)
    np.save(os.path.join(out_dir, "plucker.npy"), pkg.plucker)
    np.save(os.path.join(out_dir, "guidance.npy"), pkg.guidance.frames)
    np.save(os.path.join(out_dir, "validity.npy"), pkg.guidance.validity)
    np.save(os.path.join(out_dir, "traj_tokens.npy"), pkg.traj_tokens)
    np.save(os.path.join(out_dir, "entity_indices.npy"), pkg.entity_indices)
    frames_dir = os.path.join(out_dir, "guidance")
    os.makedirs(frames_dir, exist_ok=True)
    for j in range(pkg.guidance.frames.shape[0]):
        write_png(pkg.guidance.frames[j], os.path.join(frames_dir, f"{j:03d}.png"))
    meta = {
        "n_frames": pkg.n_frames,
        "n_downsampled": pkg.n_downsampled,
        "seed": pkg.seed,
        "caption_tokens": pkg.caption_tokens.tolist(),
        "boxes": [{"object_id": b.object_id,
                   "boxes": b.boxes.tolist(),
                   "visibility": b.visibility.tolist()} for b in pkg.boxes],
    }
    with open(os.path.join(out_dir, "package.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


# -- spec JSON I/O --------------------------------------------------------------


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SpecValidationError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _floats(value, count: int, path: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.size != count:
        raise SpecValidationError(path, f"expected {count} numbers, got {arr.size}")
    return arr


def spec_to_dict(spec: ControlSpec) -> dict:
    objects = []
    for obj in spec.objects:
        entry: dict = {"id": obj.prompt.object_id, "label": obj.prompt.label}
        if obj.trajectory is not None:
            entry["points"] = obj.trajectory.points.tolist()
        else:
            entry["box"] = {"center": obj.box.center.tolist(),
                            "half_extents": obj.box.half_extents.tolist()}
            entry["keyframes"] = [[int(f), np.asarray(c, dtype=np.float64).tolist()]
                                  for f, c in (obj.keyframes or [(1, obj.box.center)])]
        objects.append(entry)
    return {
        "version": SPEC_VERSION,
        "reference_image": spec.reference_image,
        "depth_map": spec.depth_map,
        "intrinsics": spec.intrinsics.to_dict(),
        "num_frames": spec.num_frames,
        "camera": [{"rotation": p.rotation.reshape(-1).tolist(),
                    "translation": p.translation.tolist()} for p in spec.camera],
        "objects": objects,
        "caption": spec.caption,
        "seed": spec.seed,
    }


def spec_from_dict(data: dict) -> ControlSpec:
    version = _require(data, "version", "")
    if version != SPEC_VERSION:
        raise SpecValidationError("version", f"unknown version {version!r}; "
                                             f"this build reads {SPEC_VERSION!r} — upgrade the spec")
    intr_raw = _require(data, "intrinsics", "")
    for key in ("fx", "fy", "cx", "cy", "width", "height"):
        _require(intr_raw, key, "intrinsics")
    try:
        intr = CameraIntrinsics.from_dict(intr_raw)
    except ContractError as exc:
        raise SpecValidationError("intrinsics", str(exc)) from None

    n = int(_require(data, "num_frames", ""))
    if n < 1:
        raise SpecValidationError("num_frames", "must be >= 1")
    cam_raw = _require(data, "camera", "")
    if len(cam_raw) != n:
        raise SpecValidationError("camera", f"{len(cam_raw)} poses but num_frames={n}")
    poses = []
    for j, entry in enumerate(cam_raw):
        rot = _floats(_require(entry, "rotation", f"camera[{j}]"), 9, f"camera[{j}].rotation")
        tr = _floats(_require(entry, "translation", f"camera[{j}]"), 3, f"camera[{j}].translation")
        try:
            poses.append(CameraPose(rot.reshape(3, 3), tr))
        except ContractError as exc:
            raise SpecValidationError(f"camera[{j}]", str(exc)) from None

    objects: List[ControlObject] = []
    seen_ids = set()
    for k, entry in enumerate(data.get("objects", [])):
        oid = int(_require(entry, "id", f"objects[{k}]"))
        if oid in seen_ids:
            raise SpecValidationError(f"objects[{k}].id", f"duplicate object id {oid}")
        seen_ids.add(oid)
        label = str(_require(entry, "label", f"objects[{k}]"))
        prompt = EntityPrompt(oid, label, vocab.label_index(label))
        if "points" in entry:
            pts = np.asarray(entry["points"], dtype=np.float64)
            if pts.ndim != 3 or pts.shape[2] != 3:
                raise SpecValidationError(f"objects[{k}].points",
                                          f"expected N x N_p x 3, got shape {pts.shape}")
            if pts.shape[0] != n:
                raise SpecValidationError(f"objects[{k}].points",
                                          f"{pts.shape[0]} frames but num_frames={n}")
            try:
                objects.append(ControlObject(prompt, trajectory=ObjectTrajectory3D(oid, pts)))
            except (ContractError, ShapeError) as exc:
                raise SpecValidationError(f"objects[{k}].points", str(exc)) from None
        elif "box" in entry:
            box_raw = entry["box"]
            center = _floats(_require(box_raw, "center", f"objects[{k}].box"), 3,
                             f"objects[{k}].box.center")
            half = _floats(_require(box_raw, "half_extents", f"objects[{k}].box"), 3,
                           f"objects[{k}].box.half_extents")
            try:
                box = Box3D(center, half)
            except ContractError as exc:
                raise SpecValidationError(f"objects[{k}].box", str(exc)) from None
            keyframes = []
            for m, kf in enumerate(entry.get("keyframes", [[1, center.tolist()]])):
                if len(kf) != 2:
                    raise SpecValidationError(f"objects[{k}].keyframes[{m}]",
                                              "expected [frame, center]")
                keyframes.append((int(kf[0]),
                                  _floats(kf[1], 3, f"objects[{k}].keyframes[{m}]")))
            frames = [f for f, _ in keyframes]
            if frames != sorted(set(frames)) or (frames and frames[0] != 1):
                raise SpecValidationError(f"objects[{k}].keyframes",
                                          "must be sorted, unique, and start at frame 1")
            if frames and frames[-1] > n:
                raise SpecValidationError(f"objects[{k}].keyframes",
                                          f"frame index beyond num_frames={n}")
            objects.append(ControlObject(prompt, box=box, keyframes=keyframes))
        else:
            raise SpecValidationError(f"objects[{k}]", "needs either 'points' or 'box'")

    return ControlSpec(
        reference_image=str(_require(data, "reference_image", "")),
        depth_map=str(_require(data, "depth_map", "")),
        intrinsics=intr,
        num_frames=n,
        camera=poses,
        objects=objects,
        caption=str(data.get("caption", "")),
        seed=int(data.get("seed", 0)),
    )


def write_spec(spec: ControlSpec, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)


def read_spec(path: str) -> ControlSpec:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecValidationError("<document>", f"invalid JSON: {exc}") from None
    return spec_from_dict(data)

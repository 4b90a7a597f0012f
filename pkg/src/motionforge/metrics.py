"""Motion-control metrics: camera trajectory errors and Box-IoU.

Camera errors follow ATE-style practice: a least-squares similarity aligns
estimated camera centers to the reference before averaging center distances,
and rotation error is the mean geodesic angle between first-frame-relative
rotations. Box-IoU compares boxes recovered from frames by palette-color
thresholding against commanded boxes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import vocab
from .conditioning import (BoxSequence2D, ControlSpec, fit_boxes, project_trajectory,
                           resolve_object_trajectory)
from .errors import ContractError, ShapeError
from .geometry import CameraTrajectory, canonicalize, rotation_angle
from .synth import SceneAnnotation

COLOR_TOLERANCE = 60.0 / 255.0
MIN_BOX_AREA_PX = 4


@dataclass
class TrajectoryPair:
    estimated: CameraTrajectory
    reference: CameraTrajectory

    def __post_init__(self):
        if self.estimated.n_frames != self.reference.n_frames:
            raise ShapeError(f"trajectory pair: {self.estimated.n_frames} vs "
                             f"{self.reference.n_frames} frames")
        self.estimated = canonicalize(self.estimated)
        self.reference = canonicalize(self.reference)


@dataclass
class Similarity:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    degenerate: bool = False

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points @ self.rotation.T + self.translation


@dataclass
class MetricsReport:
    clip_id: str
    cam_trans_err: Optional[float]
    cam_rot_err: Optional[float]
    box_iou: Optional[float]
    per_object_iou: Dict[int, float]

    def to_dict(self) -> dict:
        # fid/fvd/clipsim reserved for format parity; always null here
        return {"clip_id": self.clip_id,
                "cam_trans_err": self.cam_trans_err,
                "cam_rot_err": self.cam_rot_err,
                "box_iou": self.box_iou,
                "fid": None, "fvd": None, "clipsim": None}


def umeyama_align(est_centers: np.ndarray, ref_centers: np.ndarray) -> Similarity:
    """Least-squares similarity s, R, t minimizing Σ‖ref − (s·R·est + t)‖²."""
    est = np.asarray(est_centers, dtype=np.float64).reshape(-1, 3)
    ref = np.asarray(ref_centers, dtype=np.float64).reshape(-1, 3)
    if est.shape != ref.shape:
        raise ShapeError(f"umeyama: {est.shape} vs {ref.shape}")
    n = est.shape[0]
    mu_e = est.mean(axis=0)
    mu_r = ref.mean(axis=0)
    x = est - mu_e
    y = ref - mu_r
    var_e = (x * x).sum() / n
    if n < 3 or var_e < 1e-12:
        return Similarity(1.0, np.eye(3), mu_r - mu_e, degenerate=True)
    cov = y.T @ x / n
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2, 2] = -1.0
    rotation = u @ s_fix @ vt
    if np.linalg.matrix_rank(cov, tol=1e-10) < 2:
        return Similarity(1.0, np.eye(3), mu_r - mu_e, degenerate=True)
    scale = float(np.trace(np.diag(d) @ s_fix) / var_e)
    translation = mu_r - scale * rotation @ mu_e
    return Similarity(scale, rotation, translation)


def cam_trans_err(pair: TrajectoryPair) -> float:
    """Mean camera-center distance after similarity alignment."""
    est = np.stack([p.translation for p in pair.estimated.poses])
    ref = np.stack([p.translation for p in pair.reference.poses])
    sim = umeyama_align(est, ref)
    return float(np.linalg.norm(sim.apply(est) - ref, axis=1).mean())


def cam_rot_err(pair: TrajectoryPair) -> float:
    """Mean geodesic angle between first-frame-relative rotations.

    Frame 1 is identical by canonicalization and excluded from the mean;
    single-frame trajectories score 0 by convention.
    """
    n = pair.estimated.n_frames
    if n == 1:
        return 0.0
    angles = [rotation_angle(pair.estimated.poses[j].rotation,
                             pair.reference.poses[j].rotation)
              for j in range(1, n)]
    return float(np.mean(angles))


# -- box recovery and IoU --------------------------------------------------------


def recover_boxes(video: np.ndarray, object_colors: Sequence[Tuple[float, float, float]],
                  tolerance: float = COLOR_TOLERANCE) -> List[BoxSequence2D]:
    """Color-threshold object masks per frame, then tight pixel boxes.

    Frames whose mask covers fewer than 4 pixels are invisible. Box
    coordinates are pixel-center min/max of the mask.
    """
    video = np.asarray(video, dtype=np.float32)
    n = video.shape[0]
    out = []
    for oid, color in enumerate(object_colors):
        target = np.asarray(color, dtype=np.float32)
        boxes = np.zeros((n, 4))
        vis = np.zeros(n, dtype=bool)
        for j in range(n):
            dist = np.linalg.norm(video[j] - target, axis=-1)
            ys, xs = np.nonzero(dist <= tolerance)
            if xs.size >= MIN_BOX_AREA_PX:
                boxes[j] = (xs.min(), ys.min(), xs.max(), ys.max())
                vis[j] = True
        out.append(BoxSequence2D(oid, boxes, vis))
    return out


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return float(inter / union) if union > 0 else 0.0


def box_iou_sequence(pred: BoxSequence2D, gt: BoxSequence2D) -> float:
    """Mean IoU over frames visible in the ground truth.

    Frames visible in gt but not in pred score 0; frames invisible in gt are
    skipped entirely.
    """
    if pred.boxes.shape[0] != gt.boxes.shape[0]:
        raise ShapeError(f"box_iou_sequence: {pred.boxes.shape[0]} vs "
                         f"{gt.boxes.shape[0]} frames")
    scores = []
    for j in range(gt.boxes.shape[0]):
        if not gt.visibility[j]:
            continue
        scores.append(box_iou(pred.boxes[j], gt.boxes[j]) if pred.visibility[j] else 0.0)
    return float(np.mean(scores)) if scores else 0.0


def snap_box_to_pixels(box: Sequence[float]) -> Optional[Tuple[float, float, float, float]]:
    """Pixel centers covered by a continuous box; None if none are."""
    x0, y0, x1, y1 = box
    sx0, sy0 = math.ceil(x0), math.ceil(y0)
    sx1, sy1 = math.floor(x1), math.floor(y1)
    if sx1 <= sx0 or sy1 <= sy0:
        return None
    return float(sx0), float(sy0), float(sx1), float(sy1)


def commanded_boxes(spec: ControlSpec, snap: bool = True) -> List[BoxSequence2D]:
    """Tight projected boxes of the spec's object trajectories.

    Recovered boxes are pixel-quantized by rasterization, so commanded boxes
    are snapped to the covered pixel-center grid before comparison.
    """
    trajectory = canonicalize(CameraTrajectory(spec.camera, spec.intrinsics))
    out = []
    for obj in spec.objects:
        traj = resolve_object_trajectory(obj, spec.num_frames)
        uv, valid = project_trajectory(traj, trajectory)
        seq = fit_boxes(uv, valid, spec.intrinsics, padding_px=0.0,
                        object_id=obj.prompt.object_id)
        if snap:
            for j in range(seq.boxes.shape[0]):
                if not seq.visibility[j]:
                    continue
                snapped = snap_box_to_pixels(seq.boxes[j])
                if snapped is None:
                    seq.visibility[j] = False
                else:
                    seq.boxes[j] = snapped
        out.append(seq)
    return out


def evaluate(spec: ControlSpec, video: np.ndarray,
             annotation: Optional[SceneAnnotation] = None,
             clip_id: str = "clip") -> MetricsReport:
    """Score one generated (or ground-truth) video against its spec.

    Box-IoU: boxes recovered by palette color vs commanded (snapped) boxes.
    Camera errors are only computable against an annotation's ground-truth
    poses (conditioning-pipeline evaluation); with no annotation they are
    reported as not applicable (None) since no pose estimator is in scope.
    """
    if video.shape[0] != spec.num_frames:
        raise ShapeError(f"evaluate: video has {video.shape[0]} frames, spec has "
                         f"{spec.num_frames}")
    per_object: Dict[int, float] = {}
    box_score: Optional[float] = None
    if spec.objects:
        colors = [vocab.object_color(obj.prompt.label_index) for obj in spec.objects]
        recovered = recover_boxes(video, colors)
        cmd = commanded_boxes(spec)
        for obj, rec, c in zip(spec.objects, recovered, cmd):
            per_object[obj.prompt.object_id] = box_iou_sequence(rec, c)
        box_score = float(np.mean(list(per_object.values())))

    trans = rot = None
    if annotation is not None:
        pair = TrajectoryPair(CameraTrajectory(spec.camera, spec.intrinsics),
                              CameraTrajectory(annotation.poses, annotation.intrinsics))
        trans = cam_trans_err(pair)
        rot = cam_rot_err(pair)
    return MetricsReport(clip_id, trans, rot, box_score, per_object)


# -- background-shift probe (camera-adherence without a pose estimator) ----------


def estimate_shift(frame: np.ndarray, reference: np.ndarray,
                   max_shift: int = 12) -> Tuple[int, int]:
    """Integer-pixel shift of ``frame`` relative to ``reference``.

    Exhaustive zero-mean cross-correlation over (dx, dy) in
    [-max_shift, max_shift]^2; ties resolve to the smallest |shift|.
    """
    a = np.asarray(frame, dtype=np.float64).mean(axis=-1)
    b = np.asarray(reference, dtype=np.float64).mean(axis=-1)
    h, w = a.shape
    best = (-np.inf, 0, (0, 0))
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            y0a, y1a = max(0, dy), min(h, h + dy)
            x0a, x1a = max(0, dx), min(w, w + dx)
            pa = a[y0a:y1a, x0a:x1a]
            pb = b[y0a - dy:y1a - dy, x0a - dx:x1a - dx]
            pa = pa - pa.mean()
            pb = pb - pb.mean()
            denom = np.sqrt((pa * pa).sum() * (pb * pb).sum())
            if denom < 1e-12:
                continue
            score = float((pa * pb).sum() / denom)
            key = (score, -(abs(dx) + abs(dy)), (dx, dy))
            if key[:2] > best[:2]:
                best = key
    return best[2]


def commanded_shifts(depth: np.ndarray, trajectory: CameraTrajectory) -> np.ndarray:
    """Median per-frame background pixel displacement implied by the geometry.

    Unprojects the reference depth and projects it through every pose; the
    commanded shift of frame j is the median (du, dv) over points valid in
    both views, rounded to integers.
    """
    from .geometry import project_points, unproject_depth  # local to avoid cycle noise

    trajectory = canonicalize(trajectory)
    cloud = unproject_depth(depth, trajectory.intrinsics, trajectory.poses[0])
    uv0, _, valid0 = project_points(cloud.points, trajectory.intrinsics, trajectory.poses[0])
    shifts = np.zeros((trajectory.n_frames, 2), dtype=np.int64)
    for j in range(1, trajectory.n_frames):
        uvj, _, validj = project_points(cloud.points, trajectory.intrinsics,
                                        trajectory.poses[j])
        both = valid0 & validj
        if not both.any():
            continue
        delta = np.median(uvj[both] - uv0[both], axis=0)
        shifts[j] = np.round(delta).astype(np.int64)
    return shifts


def background_shift_error(video: np.ndarray, reference: np.ndarray,
                           commanded: np.ndarray, max_shift: int = 12) -> float:
    """Mean |realized − commanded| shift over frames 2..N (L2 per frame)."""
    errs = []
    for j in range(1, video.shape[0]):
        dx, dy = estimate_shift(video[j], reference, max_shift)
        errs.append(float(np.hypot(dx - commanded[j, 0], dy - commanded[j, 1])))
    return float(np.mean(errs)) if errs else 0.0


# -- report output ----------------------------------------------------------------


def write_reports(reports: List[MetricsReport], out_dir: str) -> dict:
    """Per-clip JSON reports plus an aggregate CSV with a mean row."""
    os.makedirs(out_dir, exist_ok=True)
    for rep in reports:
        with open(os.path.join(out_dir, f"{rep.clip_id}.json"), "w") as fh:
            json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)

    def _mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    aggregate = {
        "cam_trans_err": _mean([r.cam_trans_err for r in reports]),
        "cam_rot_err": _mean([r.cam_rot_err for r in reports]),
        "box_iou": _mean([r.box_iou for r in reports]),
    }
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "cam_trans_err", "cam_rot_err", "box_iou",
                         "fid", "fvd", "clipsim"])
        for rep in reports:
            writer.writerow([rep.clip_id, rep.cam_trans_err, rep.cam_rot_err,
                             rep.box_iou, "", "", ""])
        writer.writerow(["mean", aggregate["cam_trans_err"], aggregate["cam_rot_err"],
                         aggregate["box_iou"], "", "", ""])
    return aggregate

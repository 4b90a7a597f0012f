"""Camera models, pose algebra, Plücker embeddings and point-cloud splatting.

Conventions (fixed and asserted by the test suite):
  - poses are camera-to-world: world = R @ p_cam + t, camera center = t
  - pixel axes x-right / y-down, z forward; pixel (u, v) casts the camera ray
    ((u - cx) / fx, (v - cy) / fy, 1)
  - the reference camera defines the world frame (identity after
    canonicalization)
  - a point splats a (2r+1)^2 square centred at (floor(u+0.5), floor(v+0.5));
    the z-buffer keeps the smallest depth and breaks exact ties by lowest
    point index
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, ShapeError

Z_NEAR = 1e-4
ORTHO_TOL = 1e-5


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ContractError(f"intrinsics: focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ContractError("intrinsics: principal point outside image bounds")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]),
                                float(d["cy"]), int(d["width"]), int(d["height"]))


@dataclass
class CameraPose:
    """Camera-to-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        validate_rotation(self.rotation)

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(np.eye(3), np.zeros(3))

    def inverse(self) -> "CameraPose":
        rt = self.rotation.T
        return CameraPose(rt, -rt @ self.translation)

    def compose(self, other: "CameraPose") -> "CameraPose":
        """self ∘ other: apply ``other`` first, then ``self``."""
        return CameraPose(self.rotation @ other.rotation,
                          self.rotation @ other.translation + self.translation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map camera-frame points (K, 3) into the world frame."""
        return points @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation


def validate_rotation(r: np.ndarray) -> None:
    if np.abs(r.T @ r - np.eye(3)).max() > ORTHO_TOL:
        raise ContractError("pose: rotation is not orthonormal within 1e-5")
    if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
        raise ContractError("pose: rotation determinant is not +1 within 1e-5")


@dataclass
class CameraTrajectory:
    poses: List[CameraPose]
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        if len(self.poses) < 1:
            raise ContractError("trajectory: needs at least one pose")

    @property
    def n_frames(self) -> int:
        return len(self.poses)


@dataclass
class PointCloud:
    points: np.ndarray  # (K, 3) world coordinates
    colors: np.ndarray  # (K, 3) in [0, 1]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float32).reshape(-1, 3)
        if self.points.shape[0] != self.colors.shape[0]:
            raise ShapeError(f"point cloud: {self.points.shape[0]} points vs "
                             f"{self.colors.shape[0]} colors")
        if self.points.size and not np.isfinite(self.points).all():
            raise ContractError("point cloud: non-finite coordinates")

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass
class GuidanceFrames:
    """Rendered guidance strip; frame 0 is the reference image verbatim."""

    frames: np.ndarray    # (N, H, W, 3) float32 in [0, 1]
    validity: np.ndarray  # (N, H, W) bool, True where a splat landed


def canonicalize(trajectory: CameraTrajectory) -> CameraTrajectory:
    """Re-express all poses relative to the first one.

    poses[j] -> poses[0]^-1 ∘ poses[j]; the first pose becomes the exact
    identity. Idempotent.
    """
    first_inv = trajectory.poses[0].inverse()
    out = [CameraPose.identity()]
    for pose in trajectory.poses[1:]:
        out.append(first_inv.compose(pose))
    return CameraTrajectory(out, trajectory.intrinsics)


def _pixel_grid(intr: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    return np.meshgrid(u, v)


def plucker_map(intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """Per-pixel Plücker ray field (H, W, 6): unit direction, then moment.

    Directions are expressed in the world frame; the moment is
    camera_center × direction with the origin at the reference camera.
    """
    uu, vv = _pixel_grid(intrinsics)
    rays = np.stack([(uu - intrinsics.cx) / intrinsics.fx,
                     (vv - intrinsics.cy) / intrinsics.fy,
                     np.ones_like(uu)], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    d = rays @ pose.rotation.T
    m = np.cross(np.broadcast_to(pose.translation, d.shape), d)
    return np.concatenate([d, m], axis=-1).astype(np.float32)


def plucker_for_trajectory(trajectory: CameraTrajectory) -> np.ndarray:
    """Stacked embeddings for every pose, shaped (N, 6, H, W)."""
    maps = [plucker_map(trajectory.intrinsics, p) for p in trajectory.poses]
    return np.stack([m.transpose(2, 0, 1) for m in maps], axis=0)


def unproject_depth(depth: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose,
                    image: Optional[np.ndarray] = None) -> PointCloud:
    """Lift a metric depth map to a colored world-frame point cloud.

    Pixels with depth <= 0 or non-finite depth are skipped. Colors come from
    ``image`` (H, W, 3 in [0, 1]); mid-gray when no image is given.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise ShapeError(f"unproject: depth {depth.shape} vs intrinsics "
                         f"{(intrinsics.height, intrinsics.width)}")
    valid = np.isfinite(depth) & (depth > 0)
    uu, vv = _pixel_grid(intrinsics)
    z = depth[valid]
    x = (uu[valid] - intrinsics.cx) * z / intrinsics.fx
    y = (vv[valid] - intrinsics.cy) * z / intrinsics.fy
    cam_points = np.stack([x, y, z], axis=-1)
    world = pose.transform(cam_points)
    if image is not None:
        image = np.asarray(image, dtype=np.float32)
        if image.shape[:2] != depth.shape:
            raise ShapeError(f"unproject: image {image.shape} vs depth {depth.shape}")
        colors = image[valid]
    else:
        colors = np.full((world.shape[0], 3), 0.5, dtype=np.float32)
    return PointCloud(world, colors)


def project_points(points: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose,
                   z_near: float = Z_NEAR) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points through a camera.

    Returns (uv (K, 2), depth (K,), valid (K,)); points with camera-frame
    Z <= z_near are flagged invalid and get NaN coordinates.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pose.inverse_transform(points)
    z = cam[:, 2]
    valid = z > z_near
    uv = np.full((points.shape[0], 2), np.nan)
    uv[valid, 0] = intrinsics.fx * cam[valid, 0] / z[valid] + intrinsics.cx
    uv[valid, 1] = intrinsics.fy * cam[valid, 1] / z[valid] + intrinsics.cy
    return uv, z, valid


def splat_render(cloud: PointCloud, intrinsics: CameraIntrinsics, pose: CameraPose,
                 point_radius_px: int = 1,
                 background: Sequence[float] = (0.5, 0.5, 0.5),
                 z_near: float = Z_NEAR) -> Tuple[np.ndarray, np.ndarray]:
    """Z-buffered square-splat rendering.

    Returns (image (H, W, 3) float32, validity (H, W) bool). Untouched pixels
    get the background color and validity False.
    """
    if point_radius_px < 0:
        raise ContractError("splat: point_radius_px must be >= 0")
    h, w = intrinsics.height, intrinsics.width
    image = np.empty((h, w, 3), dtype=np.float32)
    image[:] = np.asarray(background, dtype=np.float32)
    validity = np.zeros((h, w), dtype=bool)
    if cloud.size == 0:
        return image, validity

    uv, depth, valid = project_points(cloud.points, intrinsics, pose, z_near)
    idx = np.nonzero(valid)[0]
    if idx.size == 0:
        return image, validity
    pu = np.floor(uv[idx, 0] + 0.5).astype(np.int64)
    pv = np.floor(uv[idx, 1] + 0.5).astype(np.int64)
    z = depth[idx]

    r = int(point_radius_px)
    offsets = [(du, dv) for dv in range(-r, r + 1) for du in range(-r, r + 1)]
    cand_pix, cand_z, cand_idx = [], [], []
    for du, dv in offsets:
        tu = pu + du
        tv = pv + dv
        inside = (tu >= 0) & (tu < w) & (tv >= 0) & (tv < h)
        cand_pix.append(tv[inside] * w + tu[inside])
        cand_z.append(z[inside])
        cand_idx.append(idx[inside])
    pix = np.concatenate(cand_pix)
    if pix.size == 0:
        return image, validity
    zs = np.concatenate(cand_z)
    pis = np.concatenate(cand_idx)

    order = np.lexsort((pis, zs, pix))
    pix, zs, pis = pix[order], zs[order], pis[order]
    first = np.ones(pix.size, dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    win_pix = pix[first]
    win_idx = pis[first]

    flat = image.reshape(-1, 3)
    flat[win_pix] = cloud.colors[win_idx]
    validity.reshape(-1)[win_pix] = True
    return image, validity


def render_trajectory(cloud: PointCloud, trajectory: CameraTrajectory,
                      reference_image: np.ndarray, point_radius_px: int = 1,
                      background: Sequence[float] = (0.5, 0.5, 0.5)) -> GuidanceFrames:
    """Render the cloud from every pose; frame 0 is the reference image.

    The trajectory must be canonicalized (first pose identity) so that the
    reference view and the first rendered view coincide.
    """
    reference_image = np.asarray(reference_image, dtype=np.float32)
    intr = trajectory.intrinsics
    if reference_image.shape != (intr.height, intr.width, 3):
        raise ShapeError(f"render: reference image {reference_image.shape} vs intrinsics "
                         f"{(intr.height, intr.width, 3)}")
    frames = [reference_image.copy()]
    masks = [np.ones((intr.height, intr.width), dtype=bool)]
    for pose in trajectory.poses[1:]:
        img, mask = splat_render(cloud, intr, pose, point_radius_px, background)
        frames.append(img)
        masks.append(mask)
    return GuidanceFrames(np.stack(frames), np.stack(masks))


def rotation_angle(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, in radians."""
    ra = np.asarray(ra, dtype=np.float64)
    rb = np.asarray(rb, dtype=np.float64)
    validate_rotation(ra)
    validate_rotation(rb)
    cos = (np.trace(ra.T @ rb) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


# -- small rotation constructors (shared by synth scenes and the panel) -------


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def poses_to_matrix(poses: List[CameraPose]) -> np.ndarray:
    """Stack poses as (N, 12) rows: row-major rotation then translation."""
    rows = [np.concatenate([p.rotation.reshape(-1), p.translation]) for p in poses]
    return np.stack(rows)


def poses_from_matrix(rows: np.ndarray) -> List[CameraPose]:
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, 12)
    return [CameraPose(r[:9].reshape(3, 3), r[9:]) for r in rows]

"""Camera-panel parameters -> pose sequences.

The panel exposes distance, elevation, azimuth and spatial offsets. Values
interpolate linearly from their neutral settings over the frame range, so
frame 1 is always exactly the reference pose. The orbit anchor is the
selected object's center when one is selected, the cloud centroid otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ..errors import ContractError
from ..geometry import CameraIntrinsics, CameraPose, CameraTrajectory, rot_x, rot_y

# single source of truth for panel clamps; the UI mirrors these (contract-tested)
PANEL_RANGES: Dict[str, Tuple[float, float]] = {
    "distance": (0.2, 5.0),
    "elevation": (-90.0, 90.0),
    "azimuth": (-180.0, 180.0),
    "offset_x": (-2.0, 2.0),
    "offset_y": (-2.0, 2.0),
    "offset_z": (-2.0, 2.0),
    "n_frames": (2.0, 81.0),
}


@dataclass
class PanelParams:
    distance: float = 1.0   # multiplier on the anchor-to-camera distance
    elevation: float = 0.0  # degrees; positive moves the camera up
    azimuth: float = 0.0    # degrees; positive orbits right
    offset_x: float = 0.0
    offset_y: float = 0.0
    offset_z: float = 0.0

    def validate(self) -> None:
        for key in ("distance", "elevation", "azimuth", "offset_x", "offset_y", "offset_z"):
            lo, hi = PANEL_RANGES[key]
            value = getattr(self, key)
            if not (lo <= value <= hi):
                raise ContractError(f"panel: {key}={value} outside [{lo}, {hi}]")

    def is_neutral(self) -> bool:
        return (self.distance == 1.0 and self.elevation == 0.0 and self.azimuth == 0.0
                and self.offset_x == 0.0 and self.offset_y == 0.0 and self.offset_z == 0.0)


def panel_pose(params: PanelParams, anchor: np.ndarray, fraction: float) -> CameraPose:
    """Pose at interpolation fraction f in [0, 1]; f=0 is exactly the identity."""
    if fraction == 0.0:
        return CameraPose.identity()
    az = np.deg2rad(params.azimuth) * fraction
    el = np.deg2rad(params.elevation) * fraction
    rho = 1.0 + (params.distance - 1.0) * fraction
    offset = fraction * np.array([params.offset_x, params.offset_y, params.offset_z])
    # y is down, so a positive elevation (up) rotates about +x
    rotation = rot_y(az) @ rot_x(el)
    center = anchor + rho * (rotation @ (-anchor)) + offset
    return CameraPose(rotation, center)


def panel_trajectory(params: PanelParams, anchor: np.ndarray, n_frames: int,
                     intrinsics: CameraIntrinsics) -> CameraTrajectory:
    params.validate()
    lo, hi = PANEL_RANGES["n_frames"]
    if not (lo <= n_frames <= hi):
        raise ContractError(f"panel: n_frames={n_frames} outside [{int(lo)}, {int(hi)}]")
    anchor = np.asarray(anchor, dtype=np.float64).reshape(3)
    poses = [panel_pose(params, anchor, j / (n_frames - 1)) for j in range(n_frames)]
    return CameraTrajectory(poses, intrinsics)

"""Independent reference implementations used to check production code.

Everything here is deliberately written the slow, obvious way (per-pixel
scans, repeated formulas) and must not import the code paths it verifies.
"""

from __future__ import annotations

import numpy as np


def splat_oracle(points: np.ndarray, colors: np.ndarray, fx: float, fy: float,
                 cx: float, cy: float, width: int, height: int,
                 rotation: np.ndarray, translation: np.ndarray,
                 radius: int, background, z_near: float = 1e-4):
    """Brute-force splat rendering: for every pixel, scan every point.

    Contract: a point projects to continuous (u, v); its splat covers the
    (2r+1)^2 pixel square centred at (floor(u+0.5), floor(v+0.5)); the
    nearest camera-Z wins, exact ties go to the lowest point index.
    """
    image = np.empty((height, width, 3), dtype=np.float32)
    image[:] = np.asarray(background, dtype=np.float32)
    mask = np.zeros((height, width), dtype=bool)

    cam = (points - translation) @ rotation  # camera frame, row-vector convention
    z = cam[:, 2]
    valid = z > z_near
    pu = np.full(points.shape[0], -(10 ** 9), dtype=np.int64)
    pv = np.full(points.shape[0], -(10 ** 9), dtype=np.int64)
    pu[valid] = np.floor(fx * cam[valid, 0] / z[valid] + cx + 0.5).astype(np.int64)
    pv[valid] = np.floor(fy * cam[valid, 1] / z[valid] + cy + 0.5).astype(np.int64)

    indices = np.arange(points.shape[0])
    for y in range(height):
        for x in range(width):
            covered = valid & (np.abs(x - pu) <= radius) & (np.abs(y - pv) <= radius)
            if not covered.any():
                continue
            zc = z[covered]
            ic = indices[covered]
            zmin = zc.min()
            winner = ic[zc == zmin].min()  # exact ties: lowest point index
            image[y, x] = colors[winner]
            mask[y, x] = True
    return image, mask


def iou_oracle(a, b) -> float:
    """Area arithmetic on float boxes, written independently."""
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def similarity_fit_oracle(est: np.ndarray, ref: np.ndarray):
    """Fit s, R, t minimizing the sum of squared residuals, by direct numeric
    optimization (scipy Levenberg-Marquardt), independent of the closed form.

    Returns (sum_of_squares, mean_center_distance) at the numeric optimum.
    """
    from scipy.optimize import least_squares
    from scipy.spatial.transform import Rotation

    def residuals(theta):
        s = np.exp(theta[0])
        r = Rotation.from_rotvec(theta[1:4]).as_matrix()
        t = theta[4:7]
        return (s * est @ r.T + t - ref).reshape(-1)

    best = None
    for seed in range(6):
        rng = np.random.default_rng(seed)
        x0 = np.concatenate([[rng.normal(0, 0.3)], 0.4 * rng.standard_normal(3),
                             rng.normal(0, 0.5, 3)])
        res = least_squares(residuals, x0, method="lm", xtol=1e-15, ftol=1e-15,
                            max_nfev=20000)
        if best is None or res.cost < best[0]:
            r = residuals(res.x).reshape(-1, 3)
            best = (res.cost, np.linalg.norm(r, axis=1).mean())
    return best

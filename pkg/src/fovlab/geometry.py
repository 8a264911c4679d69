"""BEV preprocessing: projection, filtering, quantization, polar transforms.

All operations are pure functions over immutable inputs and are safe to call
concurrently.
"""

from __future__ import annotations

import numpy as np

from .types import BevImage, FilterSpec, GridSpec, PointCloud, Pose


def rotate_by_quaternion(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Rotate (N, 3) points by quaternion (w,x,y,z). Active rotation."""
    w, x, y, z = q
    R = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    return points @ R.T


def project_to_bev(cloud: PointCloud, translate: bool = False) -> np.ndarray:
    """Project a point cloud into the gravity-aligned BEV frame.

    Rotates every point by the pose quaternion. Translation to the world frame
    is off by default: the BEV grid is sensor-centered. Returns an (N, 3)
    array of gravity-aligned (x, y) plus the retained z.
    """
    q = cloud.pose.quaternion
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise ValueError("pose quaternion is not unit norm")
    out = rotate_by_quaternion(cloud.points, q)
    if translate:
        out = out + cloud.pose.position
    return out


def filter_points(points_xyz: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """Keep points with planar range <= max_range and z within [z_min, z_max]."""
    pts = np.asarray(points_xyz, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        return pts
    planar = np.hypot(pts[:, 0], pts[:, 1])
    keep = (planar <= spec.max_range) & (pts[:, 2] >= spec.z_min) & (pts[:, 2] <= spec.z_max)
    return pts[keep]


def quantize(points_xy: np.ndarray, spec: GridSpec) -> BevImage:
    """Accumulate point counts on the grid; points outside the extent are dropped.

    Cell index along each axis is floor((coord + extent) / cell_size); points
    exactly on the +extent boundary fall at index == resolution and are dropped.
    """
    pts = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2) if np.size(points_xy) else np.zeros((0, 2))
    res = spec.resolution
    counts = np.zeros((res, res), dtype=np.int64)
    if pts.shape[0]:
        idx = np.floor((pts + spec.extent) / spec.cell_size).astype(np.int64)
        keep = np.all((idx >= 0) & (idx < res), axis=1)
        idx = idx[keep]
        np.add.at(counts, (idx[:, 0], idx[:, 1]), 1)
    return BevImage(spec, counts)


def to_polar(points_xy: np.ndarray) -> np.ndarray:
    """Convert (N, 2) points to (azimuth in [0, 2pi), range). Origin points are dropped."""
    pts = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2) if np.size(points_xy) else np.zeros((0, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    keep = r > 0.0
    pts, r = pts[keep], r[keep]
    az = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
    # atan2(-0., x) wraps to 2*pi exactly; fold back into [0, 2pi)
    az[az >= 2.0 * np.pi] = 0.0
    return np.column_stack([az, r])


def from_polar(polar: np.ndarray) -> np.ndarray:
    """Inverse of to_polar: (azimuth, range) -> (x, y)."""
    p = np.asarray(polar, dtype=np.float64).reshape(-1, 2)
    return np.column_stack([p[:, 1] * np.cos(p[:, 0]), p[:, 1] * np.sin(p[:, 0])])


def cloud_to_bev(cloud: PointCloud, grid: GridSpec, filt: FilterSpec) -> BevImage:
    """Standard preprocess chain: project, filter, quantize."""
    return quantize(filter_points(project_to_bev(cloud), filt)[:, :2], grid)


__all__ = [
    "project_to_bev", "filter_points", "quantize", "to_polar", "from_polar",
    "cloud_to_bev", "rotate_by_quaternion", "Pose",
]

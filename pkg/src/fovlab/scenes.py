"""Synthetic 2D scenes: obstacle sampling, LiDAR simulation, exact FOV oracle.

Scenes are planar (returns at z=0 in the world frame): the downstream pipeline
collapses to BEV before estimation, so a planar simulator exercises every
path while keeping the visibility oracle exact.

Each family surrounds the sensor with an enclosing wall ring composed of
convex quads (urban block / room walls), so nearly every beam returns a hit,
plus a sampled number of interior obstacles. Concave structures are composed
from convex pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .types import FovMask, GridSpec, PointCloud, Pose

FAMILY_NAMES = ("outdoor-sparse", "outdoor-dense", "indoor")

_REJECTION_LIMIT = 10_000
_MIN_RANGE = 0.1  # noise clamp floor, meters


@dataclass
class Scene:
    """Obstacle set (convex CCW polygons, world frame) plus sensor pose."""

    obstacles: list  # list of (V, 2) float arrays
    sensor: Pose = field(default_factory=Pose.identity)
    bounds: float = 60.0

    def __post_init__(self):
        polys = []
        for poly in self.obstacles:
            p = np.asarray(poly, dtype=np.float64)
            if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 3:
                raise ValueError("each obstacle needs >= 3 (x, y) vertices")
            if not _is_convex_ccw(p):
                raise ValueError("obstacles must be convex with CCW vertex order")
            polys.append(p)
        self.obstacles = polys
        sensor_xy = self.sensor.position[:2]
        for p in polys:
            if point_in_convex(p, sensor_xy):
                raise ValueError("sensor position lies inside an obstacle")

    def edges(self) -> np.ndarray:
        """All obstacle edges stacked as an (E, 2, 2) array [start, end]."""
        if not self.obstacles:
            return np.zeros((0, 2, 2))
        segs = []
        for p in self.obstacles:
            segs.append(np.stack([p, np.roll(p, -1, axis=0)], axis=1))
        return np.concatenate(segs, axis=0)


@dataclass(frozen=True)
class LidarModel:
    """Planar spinning-LiDAR model: one ray per azimuth, first hit returned."""

    n_beams: int = 720
    max_range: float = 75.0
    range_noise_sigma: float = 0.05
    dropout_prob: float = 0.02

    def __post_init__(self):
        if self.n_beams < 8:
            raise ValueError("n_beams must be >= 8")
        if not self.max_range > 0:
            raise ValueError("max_range must be > 0")
        if self.range_noise_sigma < 0:
            raise ValueError("range_noise_sigma must be >= 0")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")


@dataclass(frozen=True)
class SceneFamily:
    """Sampling recipe for one scene regime (emulates an outdoor/indoor dataset)."""

    name: str
    n_obstacles: tuple = (3, 8)        # inclusive count range for interior obstacles
    obstacle_size: tuple = (2.0, 8.0)  # obstacle diameter range, meters
    bounds: float = 60.0
    placement: tuple = (4.0, 24.0)     # radial annulus for obstacle centers
    enclosure_radius: tuple | None = (28.0, 40.0)
    enclosure_vertices: tuple = (14, 22)
    enclosure_jitter: float = 0.12     # relative radial jitter of ring vertices
    wall_thickness: float = 1.5
    n_clutter: tuple = (6, 16)         # small poles/posts catching 1-2 beams
    clutter_size: tuple = (0.2, 0.7)
    random_yaw: bool = True
    seed: int = 0                      # base seed mixed with the per-scene seed

    def __post_init__(self):
        if self.name not in FAMILY_NAMES:
            raise ValueError(f"unknown family name {self.name!r}")
        for lo, hi in (self.n_obstacles, self.obstacle_size, self.placement,
                       self.n_clutter, self.clutter_size):
            if hi < lo:
                raise ValueError("family ranges must be non-empty")
        if self.enclosure_radius is not None and self.enclosure_radius[1] < self.enclosure_radius[0]:
            raise ValueError("family ranges must be non-empty")

    @staticmethod
    def preset(name: str) -> "SceneFamily":
        if name == "outdoor-sparse":
            return SceneFamily(name)
        if name == "outdoor-dense":
            return SceneFamily(
                name, n_obstacles=(10, 20), obstacle_size=(1.5, 6.0),
                placement=(3.0, 20.0), enclosure_radius=(22.0, 34.0),
                enclosure_jitter=0.15, n_clutter=(10, 24))
        if name == "indoor":
            return SceneFamily(
                name, n_obstacles=(4, 10), obstacle_size=(0.5, 2.5), bounds=12.0,
                placement=(1.5, 6.5), enclosure_radius=(7.0, 10.5),
                enclosure_vertices=(5, 9), enclosure_jitter=0.10,
                wall_thickness=0.4, n_clutter=(3, 10), clutter_size=(0.08, 0.3))
        raise ValueError(f"unknown family name {name!r}")


def default_lidar(family_name: str) -> LidarModel:
    if family_name == "indoor":
        return LidarModel(n_beams=720, max_range=15.0, range_noise_sigma=0.01, dropout_prob=0.01)
    return LidarModel()


def default_grid(family_name: str, resolution: int = 256) -> GridSpec:
    extent = 12.0 if family_name == "indoor" else 75.0
    return GridSpec(extent=extent, resolution=resolution)


def _is_convex_ccw(poly: np.ndarray, tol: float = 1e-12) -> bool:
    a = poly
    b = np.roll(poly, -1, axis=0)
    c = np.roll(poly, -2, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    return bool(np.all(cross > -tol) and np.any(cross > tol))


def point_in_convex(poly: np.ndarray, point) -> bool:
    """True if `point` is inside or on a convex CCW polygon."""
    p = np.asarray(point, dtype=np.float64)
    a = poly
    b = np.roll(poly, -1, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])
    return bool(np.all(cross >= 0.0))


def _convex_blob(rng: np.random.Generator, center: np.ndarray, size: float) -> np.ndarray | None:
    """Random convex polygon of roughly `size` diameter around `center`."""
    n = int(rng.integers(4, 9))
    radii = (size / 2.0) * np.sqrt(rng.uniform(0.3, 1.0, n))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = center + np.column_stack([radii * np.cos(ang), radii * np.sin(ang)])
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return None
    return pts[hull.vertices]  # CCW for 2D qhull


def _enclosure_quads(rng: np.random.Generator, family: SceneFamily) -> list:
    """Closed wall ring as a list of convex quads."""
    lo, hi = family.enclosure_radius
    radius = rng.uniform(lo, hi)
    n = int(rng.integers(family.enclosure_vertices[0], family.enclosure_vertices[1] + 1))
    ang = 2.0 * np.pi * np.arange(n) / n
    r_in = radius * (1.0 + family.enclosure_jitter * rng.uniform(-1.0, 1.0, n))
    inner = np.column_stack([r_in * np.cos(ang), r_in * np.sin(ang)])
    outer = np.column_stack([(r_in + family.wall_thickness) * np.cos(ang),
                             (r_in + family.wall_thickness) * np.sin(ang)])
    quads = []
    for k in range(n):
        k2 = (k + 1) % n
        quads.append(np.array([inner[k], outer[k], outer[k2], inner[k2]]))
    return quads


def generate_scene(family: SceneFamily, seed: int) -> Scene:
    """Sample a scene deterministically from (family, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence((family.seed, seed)))
    sensor_xy = np.zeros(2)
    obstacles = []
    if family.enclosure_radius is not None:
        obstacles.extend(_enclosure_quads(rng, family))

    draws = 0

    def place(count: int, size_range: tuple) -> None:
        nonlocal draws
        placed = 0
        while placed < count:
            draws += 1
            if draws > _REJECTION_LIMIT:
                raise ValueError(
                    f"obstacle rejection sampling failed after {_REJECTION_LIMIT} draws")
            size = rng.uniform(*size_range)
            rad = rng.uniform(*family.placement)
            theta = rng.uniform(0.0, 2.0 * np.pi)
            center = np.array([rad * np.cos(theta), rad * np.sin(theta)])
            if np.max(np.abs(center)) + size / 2.0 > family.bounds:
                continue
            poly = _convex_blob(rng, center, size)
            if poly is None or point_in_convex(poly, sensor_xy):
                continue
            obstacles.append(poly)
            placed += 1

    place(int(rng.integers(family.n_obstacles[0], family.n_obstacles[1] + 1)),
          family.obstacle_size)
    place(int(rng.integers(family.n_clutter[0], family.n_clutter[1] + 1)),
          family.clutter_size)

    yaw = rng.uniform(0.0, 2.0 * np.pi) if family.random_yaw else 0.0
    return Scene(obstacles=obstacles, sensor=Pose.from_yaw(yaw), bounds=family.bounds)


def simulate_lidar(scene: Scene, model: LidarModel, seed: int, frame_id: int = 0) -> PointCloud:
    """Cast one ray per beam azimuth; return first hits with range noise.

    Beams are equally spaced in the sensor frame; returned points are in the
    sensor frame (z from the inverse attitude rotation, 0 for yaw-only poses).
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    n = model.n_beams
    phi = 2.0 * np.pi * np.arange(n) / n
    # noise and dropout are drawn for every beam up front so the stream does
    # not depend on scene content
    noise = rng.normal(0.0, model.range_noise_sigma, n) if model.range_noise_sigma > 0 else np.zeros(n)
    dropped = rng.uniform(size=n) < model.dropout_prob if model.dropout_prob > 0 else np.zeros(n, bool)

    R = scene.sensor.rotation_matrix()
    dirs3 = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(n)]) @ R.T
    d = dirs3[:, :2]
    norms = np.linalg.norm(d, axis=1)
    ok = norms > 1e-12
    d[ok] = d[ok] / norms[ok, None]

    origin = scene.sensor.position[:2]
    edges = scene.edges()
    t_min = np.full(n, np.inf)
    if edges.shape[0]:
        p = edges[:, 0]            # (E, 2)
        e = edges[:, 1] - edges[:, 0]
        po = p - origin            # (E, 2)
        denom = d[:, 0, None] * e[None, :, 1] - d[:, 1, None] * e[None, :, 0]  # (B, E)
        cross_po_e = po[:, 0] * e[:, 1] - po[:, 1] * e[:, 0]                   # (E,)
        cross_po_d = po[None, :, 0] * d[:, 1, None] - po[None, :, 1] * d[:, 0, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = cross_po_e[None, :] / denom
            s = cross_po_d / denom
        valid = (np.abs(denom) > 1e-15) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
        t = np.where(valid, t, np.inf)
        t_min = t.min(axis=1)

    hit = ok & ~dropped & (t_min <= model.max_range)
    ranges = np.maximum(t_min[hit] + noise[hit], _MIN_RANGE)
    world = origin + ranges[:, None] * d[hit]
    world3 = np.column_stack([world, np.zeros(world.shape[0])])
    sensor_pts = (world3 - scene.sensor.position) @ R
    return PointCloud(sensor_pts, scene.sensor, frame_id)


def _segments_blocked(origin: np.ndarray, targets: np.ndarray, edge_p: np.ndarray,
                      edge_q: np.ndarray) -> np.ndarray:
    """For each target, does segment origin->target touch segment edge_p->edge_q?

    Inclusive test: proper crossings and any endpoint/collinear touching count
    as blocked (obstacle boundaries occlude).
    """
    ox, oy = origin
    cx, cy = targets[:, 0], targets[:, 1]
    px, py = edge_p
    qx, qy = edge_q

    # orientation of (a->b, a->c): cross(b-a, c-a)
    d1 = (cx - ox) * (py - oy) - (cy - oy) * (px - ox)   # orient(o, c, p)
    d2 = (cx - ox) * (qy - oy) - (cy - oy) * (qx - ox)   # orient(o, c, q)
    d3 = (qx - px) * (oy - py) - (qy - py) * (ox - px)   # orient(p, q, o)
    d4 = (qx - px) * (cy - py) - (qy - py) * (cx - px)   # orient(p, q, c)

    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_seg(ax, ay, bx, by, xx, xy):
        return ((np.minimum(ax, bx) <= xx) & (xx <= np.maximum(ax, bx))
                & (np.minimum(ay, by) <= xy) & (xy <= np.maximum(ay, by)))

    touch = ((d1 == 0) & on_seg(ox, oy, cx, cy, px, py)) \
        | ((d2 == 0) & on_seg(ox, oy, cx, cy, qx, qy)) \
        | ((d3 == 0) & on_seg(px, py, qx, qy, ox, oy)) \
        | ((d4 == 0) & on_seg(px, py, qx, qy, cx, cy))
    return proper | touch


def ground_truth_fov(scene: Scene, model: LidarModel, spec: GridSpec) -> FovMask:
    """Exact visibility: a cell is visible iff the segment from the sensor to
    its center is within max_range and touches no obstacle interior or boundary.

    Deterministic and independent of sensor noise parameters.
    """
    origin = scene.sensor.position[:2]
    X, Y = spec.cell_centers()
    cx = (origin[0] + X).ravel()
    cy = (origin[1] + Y).ravel()
    targets = np.column_stack([cx, cy])
    visible = np.hypot(X.ravel(), Y.ravel()) <= model.max_range

    edges = scene.edges()
    for k in range(edges.shape[0]):
        active = np.nonzero(visible)[0]
        if active.size == 0:
            break
        blocked = _segments_blocked(origin, targets[active], edges[k, 0], edges[k, 1])
        visible[active[blocked]] = False
    res = spec.resolution
    return FovMask(spec, visible.reshape(res, res))


def visible_fraction(mask: FovMask) -> float:
    return float(np.count_nonzero(mask.mask)) / mask.mask.size


__all__ = [
    "Scene", "LidarModel", "SceneFamily", "FAMILY_NAMES",
    "generate_scene", "simulate_lidar", "ground_truth_fov",
    "default_lidar", "default_grid", "point_in_convex", "visible_fraction",
]

"""Classical FOV estimators: quantized/continuous ray tracing and concave hull.

All estimators consume BEV points (N, 2) in the sensor frame and produce
either a per-azimuth range profile (PolarFov) or a bounding polygon
(FovPolygon), plus rasterizers that turn both into grid masks comparable with
the ground-truth masks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import to_polar
from .types import FovMask, GridSpec

_TWO_PI = 2.0 * np.pi


@dataclass
class PolarFov:
    """Max observed range per azimuth bin; bin i covers [2*pi*i/n, 2*pi*(i+1)/n)."""

    n_bins: int
    max_range_per_bin: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.max_range_per_bin, dtype=np.float64)
        if r.shape != (self.n_bins,):
            raise ValueError(f"expected {self.n_bins} bin ranges, got shape {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("bin ranges must be finite and non-negative")
        self.max_range_per_bin = r


@dataclass
class FovPolygon:
    """Ordered polygon boundary of the estimated visible region (sensor frame)."""

    vertices: np.ndarray  # (V, 2)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs >= 3 (x, y) vertices")
        self.vertices = v

    def area(self) -> float:
        """Shoelace area (positive regardless of orientation)."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def raytrace_quantized(points_xy: np.ndarray, n_bins: int = 360) -> PolarFov:
    """Max range per azimuth bin; bins with no points get range 0 (invisible)."""
    if n_bins < 8:
        raise ValueError("n_bins must be >= 8")
    polar = to_polar(points_xy)
    ranges = np.zeros(n_bins)
    if polar.shape[0]:
        bins = np.minimum((polar[:, 0] / _TWO_PI * n_bins).astype(np.int64), n_bins - 1)
        np.maximum.at(ranges, bins, polar[:, 1])
    return PolarFov(n_bins, ranges)


def raytrace_continuous(points_xy: np.ndarray, tol: float = 1e-9) -> FovPolygon:
    """Connect azimuth-sorted points into a closed FOV boundary polygon.

    Duplicate azimuths (within `tol` radians) keep only the max-range point.
    """
    polar = to_polar(points_xy)
    if polar.shape[0] < 3:
        raise ValueError("degenerate input: need >= 3 points with distinct azimuths")
    order = np.lexsort((-polar[:, 1], polar[:, 0]))
    polar = polar[order]
    # group azimuths closer than tol; first entry of each group has max range
    new_group = np.empty(polar.shape[0], dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(polar[:, 0]) > tol
    polar = polar[new_group]
    if polar.shape[0] < 3:
        raise ValueError("degenerate input: need >= 3 points with distinct azimuths")
    az, r = polar[:, 0], polar[:, 1]
    return FovPolygon(np.column_stack([r * np.cos(az), r * np.sin(az)]))


def _crosses_any(p1, p2, a: np.ndarray, b: np.ndarray) -> bool:
    """Does segment p1->p2 properly intersect any of the segments a[i]->b[i]?

    Shared endpoints and collinear touching do not count (strict test).
    """
    t1 = (p1[0] - p2[0]) * (a[:, 1] - p1[1]) + (p1[1] - p2[1]) * (p1[0] - a[:, 0])
    t2 = (p1[0] - p2[0]) * (b[:, 1] - p1[1]) + (p1[1] - p2[1]) * (p1[0] - b[:, 0])
    t3 = (a[:, 0] - b[:, 0]) * (p1[1] - a[:, 1]) + (a[:, 1] - b[:, 1]) * (a[:, 0] - p1[0])
    t4 = (a[:, 0] - b[:, 0]) * (p2[1] - a[:, 1]) + (a[:, 1] - b[:, 1]) * (a[:, 0] - p2[0])
    return bool(np.any((t1 * t2 < 0) & (t3 * t4 < 0)))


def concave_hull(points_xy: np.ndarray, k: int = 16) -> FovPolygon:
    """k-nearest-neighbor gift wrapping (Moreira-Santos / Park-Oh style).

    Walks the boundary choosing, among the k nearest unused candidates, the
    one with the largest clockwise turn whose edge does not intersect the
    boundary built so far. Retries with k+1 whenever the walk gets stuck or
    some point falls outside the closed hull.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    pts = np.unique(np.asarray(points_xy, dtype=np.float64).reshape(-1, 2), axis=0)
    n = pts.shape[0]
    if n < 3:
        raise ValueError("need >= 3 distinct points")
    d = pts - pts[0]
    cross = d[:, 0] * d[1, 1] - d[:, 1] * d[1, 0]
    scale = max(1.0, float(np.abs(d).max()))
    if np.abs(cross).max() <= 1e-12 * scale * scale:
        raise ValueError("all points are collinear")
    if n == 3:
        return FovPolygon(pts)

    kk = max(3, min(int(k), n - 1))
    while kk < n - 1:
        hull = _try_hull(pts, kk)
        if hull is not None:
            return FovPolygon(hull)
        kk += 1
    # k has grown to cover every point: the boundary-tightness limit is the
    # convex hull, which always closes and contains the whole set
    return FovPolygon(_convex_hull_ccw(pts))


def _convex_hull_ccw(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; CCW vertex order, collinear edge points dropped."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = pts[order]

    def half(points):
        chain = []
        for q in points:
            while len(chain) >= 2:
                a, b = chain[-2], chain[-1]
                if (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]) <= 0:
                    chain.pop()
                else:
                    break
            chain.append(q)
        return chain

    lower = half(p)
    upper = half(p[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _try_hull(pts: np.ndarray, kk: int) -> np.ndarray | None:
    """One boundary walk at neighborhood size kk.

    Depth-first: at each vertex the k nearest unused candidates are tried in
    order of largest clockwise turn, skipping edges that would cross the
    boundary; dead ends backtrack instead of failing the whole attempt. The
    walk may close onto the start once three edges exist, and a closure is
    accepted only if every unused point lies inside or on the polygon.
    """
    n = pts.shape[0]
    first = int(np.lexsort((pts[:, 0], pts[:, 1]))[0])  # lowest y, then lowest x
    used = np.zeros(n, dtype=bool)
    used[first] = True
    hull = np.empty((n + 1, 2))
    hull[0] = pts[first]
    hull_idx = [first]
    budget = 12 * n  # cap on candidate trials before giving up on this kk

    def candidates(current: int, prev_angle: float, m: int) -> np.ndarray:
        avail = np.nonzero(~used)[0]
        if m >= 4 and used[first]:
            avail = np.append(avail, first)  # closing the loop becomes legal
        if avail.size == 0:
            return avail
        d2 = np.sum((pts[avail] - pts[current]) ** 2, axis=1)
        avail = avail[np.argsort(d2, kind="stable")[:kk]]
        v = pts[avail] - pts[current]
        turn = np.mod(np.arctan2(v[:, 1], -v[:, 0]) - prev_angle, _TWO_PI)
        return avail[np.argsort(-turn, kind="stable")]

    stack = [candidates(first, 0.0, 1)]
    pos = [0]
    trials = 0
    while stack:
        m = len(hull_idx)
        cand_list = stack[-1]
        moved = False
        while pos[-1] < len(cand_list):
            idx = int(cand_list[pos[-1]])
            pos[-1] += 1
            trials += 1
            if trials > budget:
                return None
            # the most recent edge (shared endpoint) is skipped; so is the
            # very first edge when closing back onto the start vertex
            lo = 1 if idx == first else 0
            hi = m - 2
            if hi > lo and _crosses_any(pts[hull_idx[-1]], pts[idx],
                                        hull[lo:hi], hull[lo + 1:hi + 1]):
                continue
            if idx == first:
                poly = hull[:m].copy()
                rest = pts[~used]
                if rest.shape[0] == 0 or np.all(points_in_polygon(rest, poly)):
                    return poly
                continue  # closure rejected: some point falls outside
            hull[m] = pts[idx]
            hull_idx.append(idx)
            used[idx] = True
            back = pts[hull_idx[-2]] - pts[idx]
            angle = float(np.arctan2(back[1], -back[0]))
            stack.append(candidates(idx, angle, m + 1))
            pos.append(0)
            moved = True
            break
        if not moved:
            stack.pop()
            pos.pop()
            v = hull_idx.pop()
            if v != first:
                used[v] = False
            if not hull_idx:
                return None
    return None


@lru_cache(maxsize=32)
def _center_polar(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    X, Y = spec.cell_centers()
    r = np.hypot(X, Y)
    az = np.mod(np.arctan2(Y, X), _TWO_PI)
    az[az >= _TWO_PI] = 0.0
    return az, r


def polar_to_mask(pf: PolarFov, spec: GridSpec) -> FovMask:
    """Cell visible iff its center range <= the range of its azimuth bin."""
    az, r = _center_polar(spec)
    bins = np.minimum((az / _TWO_PI * pf.n_bins).astype(np.int64), pf.n_bins - 1)
    return FovMask(spec, r <= pf.max_range_per_bin[bins])


def points_in_polygon(points: np.ndarray, poly: np.ndarray,
                      boundary_tol: float = 1e-9) -> np.ndarray:
    """Even-odd point-in-polygon test; points on the boundary count as inside."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    px, py = pts[:, 0], pts[:, 1]
    inside = np.zeros(pts.shape[0], dtype=bool)
    on_edge = np.zeros(pts.shape[0], dtype=bool)
    v1 = np.asarray(poly, dtype=np.float64)
    v2 = np.roll(v1, -1, axis=0)
    for (x1, y1), (x2, y2) in zip(v1, v2):
        crosses = ((y1 <= py) & (y2 > py)) | ((y2 <= py) & (y1 > py))
        if np.any(crosses):
            x_int = x1 + (py[crosses] - y1) * (x2 - x1) / (y2 - y1)
            hit = np.zeros_like(inside)
            hit[crosses] = px[crosses] < x_int
            inside ^= hit
        ex, ey = x2 - x1, y2 - y1
        elen = np.hypot(ex, ey)
        if elen == 0.0:
            continue
        cross = ex * (py - y1) - ey * (px - x1)
        within = (np.abs(cross) / elen <= boundary_tol) \
            & (px >= min(x1, x2) - boundary_tol) & (px <= max(x1, x2) + boundary_tol) \
            & (py >= min(y1, y2) - boundary_tol) & (py <= max(y1, y2) + boundary_tol)
        on_edge |= within
    return inside | on_edge


def rasterize_polygon(poly: FovPolygon, spec: GridSpec) -> FovMask:
    """Cell visible iff its center is inside the polygon (even-odd rule).

    Scanline fill: per row of cell centers, collect edge crossings and mark
    centers with an odd crossing count to their left. Centers that coincide
    with the boundary are counted visible.
    """
    res = spec.resolution
    centers = spec.cell_centers_1d()
    v1 = poly.vertices
    v2 = np.roll(v1, -1, axis=0)
    inside = np.zeros((res, res), dtype=bool)  # [ix, iy]

    # crossing x per row, half-open in y so vertices are not double counted
    rows_of, xs_of = [], []
    for (x1, y1), (x2, y2) in zip(v1, v2):
        if y1 == y2:
            continue
        ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
        i0 = int(np.searchsorted(centers, ylo, side="left"))
        i1 = int(np.searchsorted(centers, yhi, side="left"))
        if i1 > i0:
            ys = centers[i0:i1]
            rows_of.append(np.arange(i0, i1))
            xs_of.append(x1 + (ys - y1) * (x2 - x1) / (y2 - y1))
    if rows_of:
        rows = np.concatenate(rows_of)
        xs = np.concatenate(xs_of)
        order = np.lexsort((xs, rows))
        rows, xs = rows[order], xs[order]
        starts = np.searchsorted(rows, np.arange(res), side="left")
        ends = np.searchsorted(rows, np.arange(res), side="right")
        for iy in range(res):
            row_xs = xs[starts[iy]:ends[iy]]
            if row_xs.size:
                inside[:, iy] = (np.searchsorted(row_xs, centers, side="left") % 2) == 1

    # boundary-coincident centers are visible; only cells near each edge qualify
    tol = 1e-9
    for (x1, y1), (x2, y2) in zip(v1, v2):
        elen = np.hypot(x2 - x1, y2 - y1)
        if elen == 0.0:
            continue
        ix0 = int(np.searchsorted(centers, min(x1, x2) - tol, side="left"))
        ix1 = int(np.searchsorted(centers, max(x1, x2) + tol, side="right"))
        iy0 = int(np.searchsorted(centers, min(y1, y2) - tol, side="left"))
        iy1 = int(np.searchsorted(centers, max(y1, y2) + tol, side="right"))
        if ix1 <= ix0 or iy1 <= iy0:
            continue
        cx = centers[ix0:ix1][:, None]
        cy = centers[iy0:iy1][None, :]
        cross = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
        inside[ix0:ix1, iy0:iy1] |= np.abs(cross) / elen <= tol
    return FovMask(spec, inside)


__all__ = [
    "PolarFov", "FovPolygon",
    "raytrace_quantized", "raytrace_continuous", "concave_hull",
    "rasterize_polygon", "polar_to_mask", "points_in_polygon",
]

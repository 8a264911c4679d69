"""Bit-exact file formats: FVPC point clouds, CSV clouds, PGM masks, scene JSON.

Formats:
  - FVPC: little-endian binary. Magic "FVPC", u32 version=1, pose as 7 f64
    (px,py,pz,qw,qx,qy,qz), u32 point count, then count x 3 f32.
  - CSV: header ``x,y,z``, one point per row; pose in a ``<stem>.pose.json``
    sidecar next to the file.
  - Mask: binary PGM (P5), maxval 255, visible=255, invisible=0.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .types import FovMask, GridSpec, PointCloud, Pose

FVPC_MAGIC = b"FVPC"
FVPC_VERSION = 1


def save_point_cloud(path, cloud: PointCloud) -> None:
    pts = cloud.points.astype("<f4")
    pose = cloud.pose
    with open(path, "wb") as f:
        f.write(FVPC_MAGIC)
        f.write(struct.pack("<I", FVPC_VERSION))
        f.write(struct.pack("<7d", *pose.position, *pose.quaternion))
        f.write(struct.pack("<I", pts.shape[0]))
        f.write(pts.tobytes(order="C"))


def load_point_cloud(path, frame_id: int = 0) -> PointCloud:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 + 4 + 56 + 4 or data[:4] != FVPC_MAGIC:
        raise DataError(f"{path}: not an FVPC file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FVPC_VERSION:
        raise DataError(f"{path}: unsupported FVPC version {version}")
    vals = struct.unpack_from("<7d", data, 8)
    (count,) = struct.unpack_from("<I", data, 64)
    body = data[68:]
    if len(body) != count * 12:
        raise DataError(f"{path}: truncated FVPC body (expected {count} points)")
    pts = np.frombuffer(body, dtype="<f4").reshape(count, 3).astype(np.float64)
    pose = Pose(np.array(vals[:3]), np.array(vals[3:]))
    return PointCloud(pts, pose, frame_id)


def _pose_sidecar(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".pose.json")


def save_point_cloud_csv(path, cloud: PointCloud) -> None:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "z"])
        for row in cloud.points:
            w.writerow([repr(float(v)) for v in row])
    sidecar = {
        "position": [float(v) for v in cloud.pose.position],
        "quaternion": [float(v) for v in cloud.pose.quaternion],
        "frame_id": cloud.frame_id,
    }
    _pose_sidecar(path).write_text(json.dumps(sidecar, indent=2) + "\n")


def load_point_cloud_csv(path) -> PointCloud:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "z"]:
            raise DataError(f"{path}: expected CSV header 'x,y,z'")
        rows = [[float(v) for v in row] for row in reader if row]
    sidecar_path = _pose_sidecar(path)
    if not sidecar_path.exists():
        raise DataError(f"{path}: missing pose sidecar {sidecar_path.name}")
    meta = json.loads(sidecar_path.read_text())
    pose = Pose(np.array(meta["position"]), np.array(meta["quaternion"]))
    pts = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return PointCloud(pts, pose, int(meta.get("frame_id", 0)))


def save_mask_pgm(path, mask: FovMask) -> None:
    """Write a FovMask as binary PGM; rows run from +y (top) to -y (bottom)."""
    res = mask.spec.resolution
    img = np.where(mask.mask, 255, 0).astype(np.uint8)
    # raster row r, column c  <->  grid cell (ix=c, iy=res-1-r)
    raster = img[:, ::-1].T
    with open(path, "wb") as f:
        f.write(f"P5\n{res} {res}\n255\n".encode("ascii"))
        f.write(raster.tobytes(order="C"))


def load_mask_pgm(path, spec: GridSpec | None = None) -> FovMask:
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":  # comment line
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        tokens.append(data[start:i])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or width != height:
        raise DataError(f"{path}: expected square maxval-255 PGM")
    body = data[i + 1 : i + 1 + width * height]
    if len(body) != width * height:
        raise DataError(f"{path}: truncated PGM body")
    raster = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    grid = raster.T[:, ::-1] > 0
    if spec is None:
        spec = GridSpec(extent=float(width) / 2.0, resolution=width)
    elif spec.resolution != width:
        raise DataError(f"{path}: resolution {width} does not match spec {spec.resolution}")
    return FovMask(spec, grid)


def scene_to_dict(scene) -> dict:
    return {
        "bounds": float(scene.bounds),
        "sensor": {
            "position": [float(v) for v in scene.sensor.position],
            "quaternion": [float(v) for v in scene.sensor.quaternion],
        },
        "obstacles": [[[float(x), float(y)] for x, y in poly] for poly in scene.obstacles],
    }


def save_scene(path, scene) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def load_scene(path):
    from .scenes import Scene  # local import to avoid a cycle

    try:
        doc = json.loads(Path(path).read_text())
        sensor = Pose(np.array(doc["sensor"]["position"]), np.array(doc["sensor"]["quaternion"]))
        obstacles = [np.array(poly, dtype=np.float64) for poly in doc["obstacles"]]
        return Scene(obstacles=obstacles, sensor=sensor, bounds=float(doc["bounds"]))
    except (KeyError, ValueError, TypeError) as e:
        raise DataError(f"{path}: malformed scene JSON ({e})") from e


__all__ = [
    "save_point_cloud", "load_point_cloud",
    "save_point_cloud_csv", "load_point_cloud_csv",
    "save_mask_pgm", "load_mask_pgm",
    "save_scene", "load_scene", "scene_to_dict",
]

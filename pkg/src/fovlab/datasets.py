"""Dataset plumbing: synthesize frame sets, write/read them on disk, attack them.

On-disk layout under a dataset root:

    manifest.json              # grid/lidar/family config + file triples per split
    <split>/frame_NNNNN.fvpc   # point cloud
    <split>/frame_NNNNN.pgm    # ground-truth visibility mask
    <split>/frame_NNNNN.scene.json

The manifest lists, for every split in {train, val, test}, one
{cloud, mask, scene} triple per frame (paths relative to the root).
"""

from __future__ import annotations

import dataclasses
import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as fio
from .attacks import AttackSpec, spoof
from .errors import DataError
from .geometry import cloud_to_bev
from .scenes import (LidarModel, Scene, SceneFamily, generate_scene, ground_truth_fov,
                     simulate_lidar)
from .types import BevImage, FilterSpec, FovMask, GridSpec, PointCloud

SPLITS = ("train", "val", "test")


@dataclass
class Frame:
    cloud: PointCloud
    mask: FovMask
    scene: Scene | None = None


def frame_seed(base_seed: int, split: str, index: int) -> int:
    """Stable per-frame seed; keeps splits disjoint in RNG space."""
    return int(np.random.SeedSequence((base_seed, SPLITS.index(split), index)).generate_state(1)[0])


def synthesize_dataset(out_dir, family: SceneFamily, lidar: LidarModel, grid: GridSpec,
                       filt: FilterSpec, frames_per_split: dict, seed: int = 0,
                       force: bool = False) -> dict:
    """Generate and write a dataset; returns the manifest dict.

    Deterministic per (family, lidar, grid, frames, seed): rerunning with an
    identical config produces byte-identical files.
    """
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise DataError(f"output directory {out} is not empty (use force to overwrite)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)

    manifest = {
        "family": dataclasses.asdict(family),
        "lidar": dataclasses.asdict(lidar),
        "grid": {"extent": grid.extent, "resolution": grid.resolution},
        "filter": dataclasses.asdict(filt),
        "seed": seed,
        "splits": {},
    }
    for split in SPLITS:
        n = int(frames_per_split.get(split, 0))
        rows = []
        split_dir = out / split
        if n:
            split_dir.mkdir(exist_ok=True)
        for i in range(n):
            fseed = frame_seed(seed, split, i)
            scene = generate_scene(family, fseed)
            cloud = simulate_lidar(scene, lidar, fseed, frame_id=i)
            mask = ground_truth_fov(scene, lidar, grid)
            stem = f"frame_{i:05d}"
            fio.save_point_cloud(split_dir / f"{stem}.fvpc", cloud)
            fio.save_mask_pgm(split_dir / f"{stem}.pgm", mask)
            fio.save_scene(split_dir / f"{stem}.scene.json", scene)
            rows.append({
                "cloud": f"{split}/{stem}.fvpc",
                "mask": f"{split}/{stem}.pgm",
                "scene": f"{split}/{stem}.scene.json",
            })
        manifest["splits"][split] = rows
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest.json under {root}")
    manifest = json.loads(path.read_text())
    for key in ("grid", "splits"):
        if key not in manifest:
            raise DataError(f"{path}: manifest missing '{key}'")
    return manifest


def manifest_grid(manifest: dict) -> GridSpec:
    return GridSpec(extent=manifest["grid"]["extent"], resolution=manifest["grid"]["resolution"])


def manifest_filter(manifest: dict) -> FilterSpec:
    f = manifest.get("filter")
    return FilterSpec(**f) if f else FilterSpec()


def manifest_lidar(manifest: dict) -> LidarModel:
    return LidarModel(**manifest["lidar"])


def load_frames(root, split: str, with_scene: bool = False) -> list[Frame]:
    root = Path(root)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    frames = []
    for i, row in enumerate(manifest["splits"].get(split, [])):
        cloud = fio.load_point_cloud(root / row["cloud"], frame_id=i)
        mask = fio.load_mask_pgm(root / row["mask"], grid)
        scene = fio.load_scene(root / row["scene"]) if with_scene else None
        frames.append(Frame(cloud, mask, scene))
    return frames


def attack_dataset(in_dir, out_dir, attack: AttackSpec, seed: int = 0,
                   force: bool = False) -> dict:
    """Write an adversarial variant: clouds rewritten through the injector,
    ground-truth masks and scenes copied unchanged (spoofed points do not
    confer real visibility)."""
    src = Path(in_dir)
    out = Path(out_dir)
    manifest = load_manifest(src)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise DataError(f"output directory {out} is not empty (use force to overwrite)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)

    manifest["attack"] = dataclasses.asdict(attack)
    manifest["attack_seed"] = seed
    for split, rows in manifest["splits"].items():
        if rows:
            (out / split).mkdir(exist_ok=True)
        for i, row in enumerate(rows):
            cloud = fio.load_point_cloud(src / row["cloud"], frame_id=i)
            per_frame = dataclasses.replace(attack, seed=frame_seed(seed, split, i))
            fio.save_point_cloud(out / row["cloud"], spoof(cloud, per_frame))
            shutil.copyfile(src / row["mask"], out / row["mask"])
            shutil.copyfile(src / row["scene"], out / row["scene"])
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def frames_to_pairs(frames: list[Frame], grid: GridSpec, filt: FilterSpec) -> list[tuple[BevImage, FovMask]]:
    """Preprocess frames into (BevImage, FovMask) training pairs."""
    return [(cloud_to_bev(f.cloud, grid, filt), f.mask) for f in frames]


__all__ = [
    "Frame", "SPLITS", "frame_seed", "synthesize_dataset", "attack_dataset",
    "load_manifest", "load_frames", "frames_to_pairs",
    "manifest_grid", "manifest_filter", "manifest_lidar",
]

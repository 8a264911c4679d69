"""Experiment configuration: strict JSON parsing into the library dataclasses.

A config document combines the sections below; unknown keys anywhere are
rejected before any work starts.

    {
      "family":  {"name": "outdoor-sparse", ...SceneFamily overrides},
      "lidar":   {...LidarModel},          # defaults follow the family
      "grid":    {"extent": 75, "resolution": 256},
      "filter":  {...FilterSpec},
      "attack":  {...AttackSpec},          # optional
      "defense": {...DefenseSpec},         # optional
      "net":     {...NetConfig},
      "train":   {...TrainConfig},
      "frames":  {"train": 400, "val": 50, "test": 100},
      "seed":    0,
      "out_dir": "runs/exp1"               # optional
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .attacks import AttackSpec, DefenseSpec
from .errors import DataError
from .scenes import LidarModel, SceneFamily, default_grid, default_lidar
from .segnet import NetConfig, TrainConfig
from .types import FilterSpec, GridSpec

_SECTIONS = ("family", "lidar", "grid", "filter", "attack", "defense",
             "net", "train", "frames", "seed", "out_dir")


def build_dataclass(cls, doc: dict, where: str):
    """Construct a dataclass from a JSON object, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise DataError(f"{where}: expected an object, got {type(doc).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise DataError(f"{where}: unknown keys {unknown}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise DataError(f"{where}: {e}") from e


@dataclass
class ExperimentConfig:
    family: SceneFamily
    lidar: LidarModel
    grid: GridSpec
    filter: FilterSpec
    net: NetConfig
    train: TrainConfig
    frames: dict
    seed: int = 0
    out_dir: str | None = None
    attack: AttackSpec | None = None
    defense: DefenseSpec | None = None


def parse_config(doc: dict, where: str = "config") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise DataError(f"{where}: expected a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise DataError(f"{where}: unknown sections {unknown}")

    fam_doc = dict(doc.get("family", {}))
    name = fam_doc.pop("name", "outdoor-sparse")
    family = SceneFamily.preset(name)
    if fam_doc:
        names = {f.name for f in dataclasses.fields(SceneFamily)}
        unknown = sorted(set(fam_doc) - names)
        if unknown:
            raise DataError(f"{where}.family: unknown keys {unknown}")
        fam_doc = {k: tuple(v) if isinstance(v, list) else v for k, v in fam_doc.items()}
        try:
            family = dataclasses.replace(family, **fam_doc)
        except (TypeError, ValueError) as e:
            raise DataError(f"{where}.family: {e}") from e

    lidar = build_dataclass(LidarModel, doc["lidar"], f"{where}.lidar") \
        if "lidar" in doc else default_lidar(family.name)
    grid = build_dataclass(GridSpec, doc["grid"], f"{where}.grid") \
        if "grid" in doc else default_grid(family.name)
    filt = build_dataclass(FilterSpec, doc["filter"], f"{where}.filter") \
        if "filter" in doc else FilterSpec(max_range=lidar.max_range)

    net_doc = dict(doc.get("net", {}))
    net_doc.setdefault("resolution", grid.resolution)
    net = build_dataclass(NetConfig, net_doc, f"{where}.net")
    train = build_dataclass(TrainConfig, doc.get("train", {}), f"{where}.train")

    frames = doc.get("frames", {"train": 0, "val": 0, "test": 0})
    if not isinstance(frames, dict) or set(frames) - {"train", "val", "test"}:
        raise DataError(f"{where}.frames: expected keys from {{train, val, test}}")

    attack = build_dataclass(AttackSpec, doc["attack"], f"{where}.attack") \
        if "attack" in doc else None
    defense = build_dataclass(DefenseSpec, doc["defense"], f"{where}.defense") \
        if "defense" in doc else None

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise DataError(f"{where}.seed: expected an integer")
    out_dir = doc.get("out_dir")
    return ExperimentConfig(family=family, lidar=lidar, grid=grid, filter=filt,
                            net=net, train=train, frames=frames, seed=seed,
                            out_dir=out_dir, attack=attack, defense=defense)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{p}: invalid JSON ({e})") from e
    return parse_config(doc, where=str(p))


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved config for echoing back to the user."""
    out = {
        "family": dataclasses.asdict(cfg.family),
        "lidar": dataclasses.asdict(cfg.lidar),
        "grid": {"extent": cfg.grid.extent, "resolution": cfg.grid.resolution},
        "filter": dataclasses.asdict(cfg.filter),
        "net": dataclasses.asdict(cfg.net),
        "train": dataclasses.asdict(cfg.train),
        "frames": cfg.frames,
        "seed": cfg.seed,
    }
    if cfg.out_dir is not None:
        out["out_dir"] = cfg.out_dir
    if cfg.attack is not None:
        out["attack"] = dataclasses.asdict(cfg.attack)
    if cfg.defense is not None:
        out["defense"] = dataclasses.asdict(cfg.defense)
    return out

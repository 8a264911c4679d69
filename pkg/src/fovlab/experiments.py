"""Experiment harness: cross-validation, transfer matrices, security sweeps,
parametric architecture study, and throughput benchmarking.

Every experiment cell derives its RNG from (global seed, cell labels), so
parallel and serial runs produce identical tables. Parallelism across cells
is capped by the FOVLAB_THREADS environment variable.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import mannwhitneyu

from .attacks import AttackSpec, spoof
from .classical import concave_hull, polar_to_mask, rasterize_polygon, raytrace_continuous, raytrace_quantized
from .errors import DataError
from .geometry import cloud_to_bev, filter_points, project_to_bev, quantize
from .metrics import ConfusionCounts, MetricRecord, auprc_arrays, confusion, metrics
from .segnet import NetConfig, Network, TrainConfig, binarize, infer_mcd, infer_mle, parameter_count, train, unet_init
from .segnet.inference import DEFAULT_THRESHOLD
from .types import BevImage, FilterSpec, FovMask, GridSpec, PointCloud

log = logging.getLogger(__name__)

CROSSVAL_BASE_CHANNELS = (4, 8, 16, 32)
CROSSVAL_DROPOUT = (0.05, 0.10, 0.15)
CROSSVAL_LR = (1e-4, 1e-3, 1e-2)

CLASSICAL_ESTIMATORS = ("rayq", "rayc", "concave")
LEARNED_ESTIMATORS = ("mle", "mcd")


def max_workers() -> int:
    cap = os.environ.get("FOVLAB_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            log.warning("ignoring malformed FOVLAB_THREADS=%r", cap)
    return max(1, os.cpu_count() or 1)


def classical_mask(method: str, points_xy: np.ndarray, grid: GridSpec,
                   n_bins: int = 360, k: int = 16) -> FovMask:
    """Run one classical estimator and rasterize it onto the grid."""
    if method == "rayq":
        return polar_to_mask(raytrace_quantized(points_xy, n_bins), grid)
    if method == "rayc":
        return rasterize_polygon(raytrace_continuous(points_xy), grid)
    if method == "concave":
        return rasterize_polygon(concave_hull(points_xy, k), grid)
    raise ValueError(f"unknown classical method {method!r}")


# ----------------------------------------------------------------------------
# cross-validation


def crossval(dataset, grid_configs, folds: int = 5, seed: int = 0, train_fn=None):
    """k-fold cross-validation over a (NetConfig, TrainConfig) grid.

    `dataset` is a sequence of (BevImage, FovMask) pairs. Folds are contiguous
    chunks of a seeded shuffle. Returns (best_net_cfg, best_train_cfg, table)
    where table rows record every (config, fold) validation loss. Ties are
    broken by smaller parameter count, then lower learning rate.

    `train_fn(net, train_set, val_set, cfg) -> (net, history)` may be injected
    for testing; it defaults to segnet.train.
    """
    n = len(dataset)
    if n < folds:
        raise ValueError(f"need at least {folds} samples for {folds}-fold cross-validation")
    if not grid_configs:
        raise ValueError("empty cross-validation grid")
    for net_cfg, train_cfg in grid_configs:
        if net_cfg.base_channels not in CROSSVAL_BASE_CHANNELS:
            raise ValueError(f"base_channels {net_cfg.base_channels} outside the search grid")
        if not any(abs(net_cfg.dropout_rate - d) < 1e-12 for d in CROSSVAL_DROPOUT):
            raise ValueError(f"dropout_rate {net_cfg.dropout_rate} outside the search grid")
        if not any(abs(train_cfg.learning_rate - lr) < 1e-15 for lr in CROSSVAL_LR):
            raise ValueError(f"learning_rate {train_cfg.learning_rate} outside the search grid")
    train_fn = train_fn or train

    order = np.random.default_rng(np.random.SeedSequence((seed, 0xCF))).permutation(n)
    bounds = np.linspace(0, n, folds + 1).astype(int)
    fold_idx = [order[bounds[i]:bounds[i + 1]] for i in range(folds)]

    table = []
    summary = []
    for ci, (net_cfg, train_cfg) in enumerate(grid_configs):
        losses = []
        for fi in range(folds):
            val = [dataset[j] for j in fold_idx[fi]]
            tr = [dataset[j] for f2 in range(folds) if f2 != fi for j in fold_idx[f2]]
            net = unet_init(net_cfg, seed=seed + ci)
            _, history = train_fn(net, tr, val, train_cfg)
            val_loss = min(h["val_loss"] for h in history)
            losses.append(val_loss)
            table.append({
                "config": ci, "fold": fi, "val_loss": val_loss,
                "base_channels": net_cfg.base_channels,
                "dropout_rate": net_cfg.dropout_rate,
                "learning_rate": train_cfg.learning_rate,
            })
        summary.append((float(np.mean(losses)), parameter_count(net_cfg),
                        train_cfg.learning_rate, ci))
    best = min(summary)
    best_net_cfg, best_train_cfg = grid_configs[best[3]]
    return best_net_cfg, best_train_cfg, table


# ----------------------------------------------------------------------------
# transfer matrix


def _pooled_record(net: Network, pairs, mode: str, threshold: float,
                   mcd_passes: int, seed: int, labels: dict) -> MetricRecord:
    total = ConfusionCounts(0, 0, 0, 0)
    scores, gts = [], []
    for i, (img, gt) in enumerate(pairs):
        if mode == "mcd":
            pm, _ = infer_mcd(net, img, T=mcd_passes, seed=int(
                np.random.SeedSequence((seed, i)).generate_state(1)[0]))
        else:
            pm = infer_mle(net, img)
        total = total + confusion(binarize(pm, threshold), gt)
        scores.append(pm.values.ravel())
        gts.append(gt.mask.ravel())
    rec = metrics(total, labels)
    rec.auprc = auprc_arrays(np.concatenate(scores), np.concatenate(gts))
    return rec


def transfer_matrix(models: dict, test_sets: dict, threshold: float = DEFAULT_THRESHOLD,
                    mcd_passes: int = 20, seed: int = 0) -> list[MetricRecord]:
    """Evaluate every (train family, test family, variant, model kind) cell.

    `models` maps train-family name -> Network; `test_sets` maps
    (test-family, variant) -> list of (BevImage, FovMask). Metrics are pooled
    over cells of all frames in a test set.
    """
    families = sorted(models)
    cells = []
    for train_family in families:
        for (test_family, variant) in sorted(test_sets):
            for kind in LEARNED_ESTIMATORS:
                cells.append((train_family, test_family, variant, kind))
    if not cells:
        raise DataError("transfer matrix has no cells: missing models or test sets")

    def run(cell):
        train_family, test_family, variant, kind = cell
        net = models.get(train_family)
        if net is None:
            raise DataError(f"missing checkpoint for cell train={train_family}")
        labels = {"train": train_family, "test": test_family,
                  "variant": variant, "model": kind}
        return _pooled_record(net, test_sets[(test_family, variant)], kind,
                              threshold, mcd_passes, seed, labels)

    workers = min(max_workers(), len(cells))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


# ----------------------------------------------------------------------------
# security sweep


@dataclass
class SweepFrame:
    """One benign test frame with everything estimators need."""
    cloud: PointCloud
    gt: FovMask


def security_sweep(frames: list[SweepFrame], grid: GridSpec, filt: FilterSpec,
                   estimators=CLASSICAL_ESTIMATORS, models: dict | None = None,
                   spoof_counts=(0, 25, 50, 75, 100, 125, 150),
                   threshold: float = DEFAULT_THRESHOLD, mcd_passes: int = 20,
                   n_bins: int = 360, k: int = 16, seed: int = 0,
                   per_frame_rows: list | None = None) -> list[dict]:
    """Mean metrics per (estimator, spoof count) under uniform spoofing.

    `models` supplies networks for the learned estimators ('mle', 'mcd').
    Per-frame records are appended to `per_frame_rows` when given (long-format
    table for violin plots).
    """
    models = models or {}
    rows = []
    for est in estimators:
        if est in LEARNED_ESTIMATORS and est not in models:
            raise DataError(f"security sweep needs a model for estimator {est!r}")
        for n_spoof in spoof_counts:
            per = []
            for fi, frame in enumerate(frames):
                cloud = frame.cloud
                if n_spoof:
                    atk = AttackSpec(kind="uniform", n_points=int(n_spoof),
                                     budget=max(150, int(n_spoof)), bounds=grid.extent,
                                     seed=int(np.random.SeedSequence(
                                         (seed, fi, int(n_spoof))).generate_state(1)[0]))
                    cloud = spoof(cloud, atk)
                pts = filter_points(project_to_bev(cloud), filt)
                if est in CLASSICAL_ESTIMATORS:
                    mask = classical_mask(est, pts[:, :2], grid, n_bins=n_bins, k=k)
                    scores = mask.mask.astype(float).ravel()
                else:
                    img = quantize(pts[:, :2], grid)
                    if est == "mcd":
                        pm, _ = infer_mcd(models[est], img, T=mcd_passes, seed=int(
                            np.random.SeedSequence((seed, fi, int(n_spoof), 1)).generate_state(1)[0]))
                    else:
                        pm = infer_mle(models[est], img)
                    mask = binarize(pm, threshold)
                    scores = pm.values.ravel()
                rec = metrics(confusion(mask, frame.gt))
                rec.auprc = auprc_arrays(scores, frame.gt.mask.ravel())
                per.append(rec)
                if per_frame_rows is not None:
                    per_frame_rows.append({
                        "estimator": est, "n_spoof": int(n_spoof), "frame": fi,
                        "precision": rec.precision, "recall": rec.recall,
                        "f1": rec.f1, "auprc": rec.auprc,
                    })
            rows.append({
                "estimator": est, "n_spoof": int(n_spoof),
                "precision": float(np.mean([r.precision for r in per])),
                "recall": float(np.mean([r.recall for r in per])),
                "accuracy": float(np.mean([r.accuracy for r in per])),
                "f1": float(np.mean([r.f1 for r in per])),
                "auprc": float(np.mean([r.auprc for r in per])),
            })
    return rows


def anomaly_ordering_pvalue(benign_scores, attacked_scores) -> float:
    """One-sided Mann-Whitney U: attacked scores stochastically dominate benign."""
    stat = mannwhitneyu(attacked_scores, benign_scores, alternative="greater")
    return float(stat.pvalue)


# ----------------------------------------------------------------------------
# parametric study and timing


def measure_hz(fn, frames, repeats: int = 1) -> dict:
    """Median and p95 frame rate of fn over the given frames."""
    times = []
    for _ in range(repeats):
        for frame in frames:
            t0 = time.perf_counter()
            fn(frame)
            times.append(time.perf_counter() - t0)
    times = np.array(times)
    return {
        "frames": len(times),
        "median_hz": float(1.0 / np.median(times)),
        "p95_hz": float(1.0 / np.quantile(times, 0.95)),
        "median_ms": float(np.median(times) * 1e3),
        "p95_ms": float(np.quantile(times, 0.95) * 1e3),
    }


def parametric_study(make_pairs, widths=(8, 16, 32, 64), depths=(3, 4, 5, 6),
                     resolutions=(64, 128, 256, 512), train_cfg: TrainConfig | None = None,
                     dropout_rate: float = 0.10, threshold: float = DEFAULT_THRESHOLD,
                     timing_frames: int = 50, seed: int = 0) -> list[dict]:
    """Sweep width x depth x resolution; returns metrics + timing per cell.

    `make_pairs(resolution) -> (train_pairs, val_pairs, test_pairs)` supplies
    data at each resolution (so grid extent and frame counts stay caller
    controlled). Combinations where the resolution is not divisible by
    2^depth are skipped with a logged reason.
    """
    train_cfg = train_cfg or TrainConfig()
    rows = []
    for resolution in resolutions:
        data = None
        for depth in depths:
            if resolution % (2 ** depth) != 0:
                log.info("skipping depth=%d at resolution=%d (not divisible by 2^depth)",
                         depth, resolution)
                continue
            if data is None:
                data = make_pairs(resolution)
            tr, va, te = data
            for width in widths:
                cfg = NetConfig(depth=depth, base_channels=width,
                                dropout_rate=dropout_rate, resolution=resolution)
                net = unet_init(cfg, seed=seed)
                net, _ = train(net, tr, va, train_cfg)
                total = ConfusionCounts(0, 0, 0, 0)
                for img, gt in te:
                    total = total + confusion(binarize(infer_mle(net, img), threshold), gt)
                rec = metrics(total)
                frames = [img for img, _ in te][:timing_frames]
                while len(frames) < timing_frames:
                    frames = frames + frames[: timing_frames - len(frames)]
                timing = measure_hz(lambda img: infer_mle(net, img), frames)
                rows.append({
                    "width": width, "depth": depth, "resolution": resolution,
                    "parameters": parameter_count(cfg),
                    "precision": rec.precision, "f1": rec.f1,
                    "median_ms": timing["median_ms"], "median_hz": timing["median_hz"],
                    "p95_ms": timing["p95_ms"],
                })
    return rows


# ----------------------------------------------------------------------------
# output writers


def write_jsonl(path, rows: list[dict]) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def write_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = sorted({k for row in rows for k in row})
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def format_table(rows: list[dict], columns: list[str] | None = None) -> str:
    """Aligned text table for terminal output."""
    if not rows:
        return "(empty)\n"
    columns = columns or sorted({k for row in rows for k in row})
    cells = [[_fmt(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(c), max(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    for r in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


__all__ = [
    "crossval", "transfer_matrix", "security_sweep", "parametric_study",
    "SweepFrame", "classical_mask", "measure_hz", "anomaly_ordering_pvalue",
    "write_jsonl", "write_csv", "format_table", "max_workers",
    "CROSSVAL_BASE_CHANNELS", "CROSSVAL_DROPOUT", "CROSSVAL_LR",
    "CLASSICAL_ESTIMATORS", "LEARNED_ESTIMATORS",
]

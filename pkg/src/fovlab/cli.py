"""Command-line entry point wiring the library into end-to-end workflows.

Subcommands: synth, attack, estimate, train, infer, eval, crossval, sweep,
bench. Every command accepts --seed, prints its resolved configuration, and
is reproducible from (config, seed) alone.

Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .attacks import AttackSpec
from .config import load_config, parse_config, resolved_dict
from .datasets import (attack_dataset, frames_to_pairs, load_frames, load_manifest,
                       manifest_filter, manifest_grid, synthesize_dataset)
from .errors import DataError, FovlabError, NumericError
from .experiments import (SweepFrame, classical_mask, crossval, format_table, measure_hz,
                          security_sweep, write_csv, write_jsonl,
                          CROSSVAL_DROPOUT, CROSSVAL_LR)
from .geometry import cloud_to_bev, filter_points, project_to_bev
from .metrics import ConfusionCounts, auprc_arrays, confusion, iou, metrics
from .segnet import (NetConfig, TrainConfig, binarize, infer_mcd, infer_mle,
                     load_checkpoint, save_checkpoint, train, unet_init)
from .segnet.inference import DEFAULT_THRESHOLD


def _echo_config(args, extra: dict | None = None) -> None:
    doc = {k: v for k, v in vars(args).items() if k not in ("func",) and v is not None}
    if extra:
        doc.update(extra)
    print("resolved config: " + json.dumps(doc, sort_keys=True, default=str))


def _load_experiment(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = parse_config({}, where="<defaults>")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed,
                                  train=dataclasses.replace(cfg.train, seed=args.seed))
    return cfg


def cmd_synth(args) -> int:
    cfg = _load_experiment(args)
    out = args.out or cfg.out_dir
    if not out:
        raise DataError("synth needs --out or an out_dir in the config")
    frames = dict(cfg.frames)
    if args.frames is not None:
        frames = {"train": 0, "val": 0, "test": args.frames} if args.split == "test" \
            else {**frames, args.split: args.frames}
    _echo_config(args, {"resolved": resolved_dict(cfg), "out": str(out)})
    manifest = synthesize_dataset(out, cfg.family, cfg.lidar, cfg.grid, cfg.filter,
                                  frames, seed=cfg.seed, force=args.force)
    counts = {s: len(rows) for s, rows in manifest["splits"].items()}
    print(f"wrote dataset to {out}: {counts}")
    return 0


def cmd_attack(args) -> int:
    attack = AttackSpec(kind=args.kind, n_points=args.n_points,
                        budget=max(150, args.n_points),
                        cluster_center=(args.center_x, args.center_y),
                        cluster_sigma=args.sigma, bounds=args.bounds,
                        seed=args.seed or 0)
    _echo_config(args, {"attack": dataclasses.asdict(attack)})
    attack_dataset(args.dataset, args.out, attack, seed=args.seed or 0, force=args.force)
    print(f"wrote adversarial variant to {args.out}")
    return 0


def cmd_estimate(args) -> int:
    _echo_config(args)
    root = Path(args.dataset)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    filt = manifest_filter(manifest)
    frames = load_frames(root, args.split)
    if not frames:
        raise DataError(f"dataset split {args.split!r} is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    total = ConfusionCounts(0, 0, 0, 0)
    for i, frame in enumerate(frames):
        pts = filter_points(project_to_bev(frame.cloud), filt)[:, :2]
        mask = classical_mask(args.method, pts, grid, n_bins=args.n_bins, k=args.k)
        fio.save_mask_pgm(out / f"pred_{i:05d}.pgm", mask)
        c = confusion(mask, frame.mask)
        total = total + c
        rec = metrics(c, {"frame": i, "method": args.method})
        rows.append({**rec.to_row(), "iou": iou(mask, frame.mask)})
    pooled = metrics(total, {"frame": "pooled", "method": args.method})
    rows.append(pooled.to_row())
    write_jsonl(out / "metrics.jsonl", rows)
    print(format_table([rows[-1]]))
    return 0


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    if args.epochs:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, max_epochs=args.epochs))
    if args.lr:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, learning_rate=args.lr))
    root = Path(args.dataset)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    filt = manifest_filter(manifest)
    net_cfg = dataclasses.replace(cfg.net, resolution=grid.resolution)
    _echo_config(args, {"net": dataclasses.asdict(net_cfg),
                        "train": dataclasses.asdict(cfg.train)})
    train_pairs = frames_to_pairs(load_frames(root, "train"), grid, filt)
    val_pairs = frames_to_pairs(load_frames(root, "val"), grid, filt)
    if not train_pairs or not val_pairs:
        raise DataError("training needs non-empty train and val splits")
    net = unet_init(net_cfg, seed=cfg.seed)
    net, history = train(net, train_pairs, val_pairs, cfg.train)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, net)
    log_path = out.with_suffix(out.suffix + ".log.jsonl") if out.suffix else out.with_suffix(".log.jsonl")
    write_jsonl(log_path, history)
    best = min(h["val_loss"] for h in history)
    print(f"wrote checkpoint {out} ({len(history)} epochs, best val loss {best:.4f})")
    return 0


def _iter_predictions(net, frames, grid, filt, mcd_passes, seed):
    for i, frame in enumerate(frames):
        img = cloud_to_bev(frame.cloud, grid, filt)
        if mcd_passes:
            sub = int(np.random.SeedSequence((seed, i)).generate_state(1)[0])
            pm, conf = infer_mcd(net, img, T=mcd_passes, seed=sub)
        else:
            pm, conf = infer_mle(net, img), None
        yield i, frame, pm, conf


def cmd_infer(args) -> int:
    _echo_config(args)
    root = Path(args.dataset)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    filt = manifest_filter(manifest)
    net = load_checkpoint(args.checkpoint)
    if net.config.resolution != grid.resolution:
        raise DataError(f"checkpoint resolution {net.config.resolution} != dataset "
                        f"resolution {grid.resolution}")
    frames = load_frames(root, args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame, pm, conf in _iter_predictions(net, frames, grid, filt,
                                                args.mcd, args.seed or 0):
        np.save(out / f"prob_{i:05d}.npy", pm.values)
        fio.save_mask_pgm(out / f"pred_{i:05d}.pgm", binarize(pm, args.threshold))
        if conf is not None:
            np.save(out / f"conf_{i:05d}.npy", conf.sigma)
    print(f"wrote {len(frames)} predictions to {out}")
    return 0


def cmd_eval(args) -> int:
    _echo_config(args)
    root = Path(args.dataset)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    filt = manifest_filter(manifest)
    net = load_checkpoint(args.checkpoint)
    frames = load_frames(root, args.split)
    if not frames:
        raise DataError(f"dataset split {args.split!r} is empty")
    rows = []
    total = ConfusionCounts(0, 0, 0, 0)
    scores, gts = [], []
    for i, frame, pm, conf in _iter_predictions(net, frames, grid, filt,
                                                args.mcd, args.seed or 0):
        c = confusion(binarize(pm, args.threshold), frame.mask)
        total = total + c
        rec = metrics(c, {"frame": i})
        rec.auprc = auprc_arrays(pm.values.ravel(), frame.mask.ravel())
        rows.append(rec.to_row())
        scores.append(pm.values.ravel())
        gts.append(frame.mask.ravel())
    pooled = metrics(total, {"frame": "pooled"})
    pooled.auprc = auprc_arrays(np.concatenate(scores), np.concatenate(gts))
    rows.append(pooled.to_row())
    if args.out:
        write_jsonl(args.out, rows)
    print(format_table([rows[-1]]))
    return 0


def cmd_crossval(args) -> int:
    _echo_config(args)
    root = Path(args.dataset)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    filt = manifest_filter(manifest)
    pairs = frames_to_pairs(load_frames(root, "train"), grid, filt)
    base = [int(b) for b in args.base_channels.split(",")]
    grid_cfgs = []
    for b in base:
        for d in (args.dropout,) if args.dropout else CROSSVAL_DROPOUT:
            for lr in (args.lr,) if args.lr else CROSSVAL_LR:
                grid_cfgs.append((
                    NetConfig(depth=args.depth, base_channels=b, dropout_rate=d,
                              resolution=grid.resolution),
                    TrainConfig(learning_rate=lr, max_epochs=args.epochs,
                                seed=args.seed or 0)))
    net_cfg, train_cfg, table = crossval(pairs, grid_cfgs, folds=args.folds,
                                         seed=args.seed or 0)
    if args.out:
        write_jsonl(args.out, table)
    print(format_table(table, ["config", "fold", "base_channels", "dropout_rate",
                               "learning_rate", "val_loss"]))
    print("selected: " + json.dumps({
        "base_channels": net_cfg.base_channels, "dropout_rate": net_cfg.dropout_rate,
        "learning_rate": train_cfg.learning_rate}, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    _echo_config(args)
    root = Path(args.dataset)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    filt = manifest_filter(manifest)
    frames = [SweepFrame(f.cloud, f.mask) for f in load_frames(root, args.split)]
    if not frames:
        raise DataError(f"dataset split {args.split!r} is empty")
    estimators = args.estimators.split(",")
    models = {}
    for kind in ("mle", "mcd"):
        if kind in estimators:
            if not args.checkpoint:
                raise DataError(f"estimator {kind!r} needs --checkpoint")
            models[kind] = load_checkpoint(args.checkpoint)
    counts = [int(c) for c in args.counts.split(",")]
    per_frame: list[dict] = []
    rows = security_sweep(frames, grid, filt, estimators=estimators, models=models,
                          spoof_counts=counts, n_bins=args.n_bins, k=args.k,
                          mcd_passes=args.mcd or 20, seed=args.seed or 0,
                          per_frame_rows=per_frame)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "sweep.jsonl", rows)
    write_csv(out / "sweep_frames.csv", per_frame)
    print(format_table(rows, ["estimator", "n_spoof", "precision", "recall", "f1", "auprc"]))
    return 0


def cmd_bench(args) -> int:
    _echo_config(args)
    root = Path(args.dataset)
    manifest = load_manifest(root)
    grid = manifest_grid(manifest)
    filt = manifest_filter(manifest)
    frames = load_frames(root, args.split)
    if not frames:
        raise DataError(f"dataset split {args.split!r} is empty")
    clouds = [f.cloud for f in frames]
    while len(clouds) < args.frames:
        clouds = clouds + clouds[: args.frames - len(clouds)]
    clouds = clouds[: args.frames]

    if args.method == "unet":
        if not args.checkpoint:
            raise DataError("bench --method unet needs --checkpoint")
        net = load_checkpoint(args.checkpoint)

        def run(cloud):
            return infer_mle(net, cloud_to_bev(cloud, grid, filt))
    else:
        def run(cloud):
            pts = filter_points(project_to_bev(cloud), filt)[:, :2]
            return classical_mask(args.method, pts, grid, n_bins=args.n_bins, k=args.k)

    run(clouds[0])  # warm caches before timing
    stats = measure_hz(run, clouds)
    stats["method"] = args.method
    stats["resolution"] = grid.resolution
    print(json.dumps(stats, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fovlab",
                                description="FOV estimation workbench: synthesize scenes, "
                                            "attack them, estimate FOV, train and evaluate models")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        return sp

    sp = add("synth", cmd_synth, "generate a synthetic dataset with ground-truth FOV masks")
    sp.add_argument("--config", help="experiment config JSON")
    sp.add_argument("--out", help="output dataset directory")
    sp.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    sp.add_argument("--frames", type=int, default=None, help="override frame count for --split")
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))

    sp = add("attack", cmd_attack, "write an adversarial variant of a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--kind", default="uniform", choices=("uniform", "cluster"))
    sp.add_argument("--n-points", type=int, default=150)
    sp.add_argument("--bounds", type=float, default=75.0)
    sp.add_argument("--center-x", type=float, default=0.0)
    sp.add_argument("--center-y", type=float, default=0.0)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--force", action="store_true")

    sp = add("estimate", cmd_estimate, "run a classical FOV estimator over a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--method", required=True, choices=("rayq", "rayc", "concave"))
    sp.add_argument("--n-bins", type=int, default=360)
    sp.add_argument("--k", type=int, default=16)
    sp.add_argument("--out", required=True, help="directory for masks and metrics.jsonl")

    sp = add("train", cmd_train, "train the segmentation network on a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--config", help="experiment config JSON (net/train sections)")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)

    sp = add("infer", cmd_infer, "write probability maps and masks for a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--mcd", type=int, default=0, help="MC-dropout passes (0 = MLE)")
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "evaluate a checkpoint against ground truth")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--mcd", type=int, default=0)
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sp.add_argument("--out", help="metrics JSON-lines path")

    sp = add("crossval", cmd_crossval, "grid search via k-fold cross-validation")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--depth", type=int, default=4)
    sp.add_argument("--epochs", type=int, default=5)
    sp.add_argument("--base-channels", default="4,8")
    sp.add_argument("--dropout", type=float, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--out")

    sp = add("sweep", cmd_sweep, "metrics vs spoof count for a set of estimators")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--estimators", default="rayq,rayc,concave")
    sp.add_argument("--counts", default="0,25,50,75,100,125,150")
    sp.add_argument("--checkpoint", help="checkpoint for mle/mcd estimators")
    sp.add_argument("--mcd", type=int, default=20)
    sp.add_argument("--n-bins", type=int, default=360)
    sp.add_argument("--k", type=int, default=16)
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("bench", cmd_bench, "throughput of the full preprocess+estimate path")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--method", default="rayq", choices=("rayq", "rayc", "concave", "unet"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--frames", type=int, default=50)
    sp.add_argument("--n-bins", type=int, default=720)
    sp.add_argument("--k", type=int, default=16)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except (DataError, FovlabError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

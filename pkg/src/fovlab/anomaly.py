"""Attack detection from MC-dropout confidence maps.

A frame's anomaly score is the fraction of cells whose sigma exceeds a
per-cell threshold; both thresholds are calibrated as nearest-rank quantiles
of benign data, so the benign false-alarm rate on the calibration set is at
most 1-q by construction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .types import ConfidenceMap

MIN_CALIBRATION_FRAMES = 20


@dataclass(frozen=True)
class AnomalyModel:
    tau_cell: float
    tau_image: float
    quantile: float
    n_calibration: int

    def __post_init__(self):
        if self.tau_cell < 0:
            raise ValueError("tau_cell must be >= 0")
        if not 0.0 <= self.tau_image <= 1.0:
            raise ValueError("tau_image must lie in [0, 1]")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")


def score(conf: ConfidenceMap, tau_cell: float) -> float:
    """Fraction of cells with sigma strictly above tau_cell."""
    return float(np.count_nonzero(conf.sigma > tau_cell)) / conf.sigma.size


def _nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    v = np.sort(values, kind="stable")
    rank = int(np.ceil(q * v.size))  # 1-based nearest rank
    return float(v[max(rank, 1) - 1])


def calibrate(benign_confs, q: float = 0.99) -> AnomalyModel:
    """Fit thresholds on benign confidence maps.

    tau_cell is the q-quantile (nearest rank) of all pooled benign sigmas;
    tau_image is the q-quantile of the benign image scores under tau_cell.
    """
    confs = list(benign_confs)
    if len(confs) == 0:
        raise ValueError("calibration set is empty")
    if len(confs) < MIN_CALIBRATION_FRAMES:
        raise ValueError(f"calibration needs >= {MIN_CALIBRATION_FRAMES} benign maps, got {len(confs)}")
    pooled = np.concatenate([c.sigma.ravel() for c in confs])
    tau_cell = _nearest_rank_quantile(pooled, q)
    scores = np.array([score(c, tau_cell) for c in confs])
    tau_image = _nearest_rank_quantile(scores, q)
    return AnomalyModel(tau_cell=tau_cell, tau_image=tau_image,
                        quantile=q, n_calibration=len(confs))


def detect(conf: ConfidenceMap, model: AnomalyModel) -> tuple[float, bool]:
    """Return (score, flagged); flagged iff score strictly exceeds tau_image."""
    s = score(conf, model.tau_cell)
    return s, s > model.tau_image


def save_model(path, model: AnomalyModel) -> None:
    Path(path).write_text(json.dumps(asdict(model), sort_keys=True, indent=2) + "\n")


def load_model(path) -> AnomalyModel:
    doc = json.loads(Path(path).read_text())
    return AnomalyModel(**doc)


__all__ = ["AnomalyModel", "score", "calibrate", "detect", "save_model", "load_model"]

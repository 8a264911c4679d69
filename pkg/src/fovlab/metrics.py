"""Cell-level segmentation metrics: confusion counts, P/R/F1/accuracy, AUPRC.

Visible is the positive class. Undefined ratios (0/0) are reported as 0,
which keeps all-invisible degenerate frames well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import FovMask, ProbMap


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


@dataclass
class MetricRecord:
    precision: float
    recall: float
    accuracy: float
    f1: float
    auprc: float | None = None
    labels: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = dict(self.labels)
        row.update(precision=self.precision, recall=self.recall,
                   accuracy=self.accuracy, f1=self.f1)
        if self.auprc is not None:
            row["auprc"] = self.auprc
        return row


def confusion(pred: FovMask, gt: FovMask) -> ConfusionCounts:
    if pred.mask.shape != gt.mask.shape:
        raise ValueError("prediction and ground-truth shapes differ")
    p, g = pred.mask, gt.mask
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        tn=int(np.count_nonzero(~p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
    )


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(c: ConfusionCounts, labels: dict | None = None) -> MetricRecord:
    precision = _safe_div(c.tp, c.tp + c.fp)
    recall = _safe_div(c.tp, c.tp + c.fn)
    accuracy = _safe_div(c.tp + c.tn, c.total)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return MetricRecord(precision, recall, accuracy, f1, labels=dict(labels or {}))


def iou(pred: FovMask, gt: FovMask) -> float:
    c = confusion(pred, gt)
    return _safe_div(c.tp, c.tp + c.fp + c.fn)


def auprc(pm: ProbMap, gt: FovMask) -> float:
    """Area under the precision-recall curve, step-wise (right-continuous) sum.

    Cells are ranked by descending probability; tied probabilities form one
    threshold group. Requires at least one positive cell.
    """
    return auprc_arrays(pm.values.ravel(), gt.mask.ravel())


def auprc_arrays(scores: np.ndarray, positives: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positives = np.asarray(positives, dtype=bool).ravel()
    if scores.shape != positives.shape:
        raise ValueError("score and label shapes differ")
    n_pos = int(np.count_nonzero(positives))
    if n_pos == 0:
        raise ValueError("AUPRC undefined: ground truth has no positive cells")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = positives[order].astype(np.float64)
    # last index of each tied group
    group_end = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    tp = np.cumsum(t)[group_end]
    count = group_end + 1.0
    precision = tp / count
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


__all__ = ["ConfusionCounts", "MetricRecord", "confusion", "metrics", "iou",
           "auprc", "auprc_arrays"]

"""Evaluation metrics for binary segmentation: IoU, Dice, precision, recall
and the exact symmetric Hausdorff distance, plus per-dataset aggregation.

Everything here is numpy-based and pure; the training loop converts model
outputs to arrays before evaluating.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "ConfusionCounts",
    "MetricsReport",
    "DatasetReport",
    "UndefinedMetricError",
    "binarize",
    "confusion",
    "rates",
    "hausdorff",
    "evaluate_dataset",
    "format_report_table",
]


class UndefinedMetricError(ValueError):
    """Raised when a metric has no value, e.g. Hausdorff on an empty mask."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    """Metrics for one prediction/reference pair or a dataset aggregate.

    Rates are in [0, 1]; hausdorff is in pixels at the evaluated
    resolution, or None when undefined (an empty mask on either side).
    `degenerate` lists rates that were defined as 1.0 from a 0/0 count.
    """

    iou: float
    dice: float
    precision: float
    recall: float
    hausdorff: float | None = None
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "iou": self.iou,
            "dice": self.dice,
            "precision": self.precision,
            "recall": self.recall,
            "hausdorff": self.hausdorff,
            "degenerate": list(self.degenerate),
        }


@dataclass(frozen=True)
class DatasetReport:
    """Per-image reports plus their unweighted mean.

    Images whose Hausdorff distance is undefined are excluded from the HD
    mean and counted in `hausdorff_undefined`.
    """

    per_image: tuple[MetricsReport, ...]
    ids: tuple[str, ...]
    mean: MetricsReport
    hausdorff_undefined: int = 0

    def as_dict(self) -> dict:
        return {
            "per_image": {
                i: r.as_dict() for i, r in zip(self.ids, self.per_image)
            },
            "mean": self.mean.as_dict(),
            "hausdorff_undefined": self.hausdorff_undefined,
        }


def _check_mask(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    vals = np.unique(m)
    if not np.isin(vals, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1), found values {vals[:5]}")
    return m.astype(np.uint8)


def binarize(pred: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold a probability map to a {0,1} mask; the boundary is foreground."""
    pred = np.asarray(pred)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if not np.isfinite(pred).all():
        raise ValueError("pred contains non-finite values")
    return (pred >= threshold).astype(np.uint8)


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Pixel-wise confusion counts between two binary masks."""
    pred = _check_mask(pred, "pred")
    gt = _check_mask(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def rates(counts: ConfusionCounts) -> MetricsReport:
    """Overlap rates from confusion counts.

    Any 0/0 ratio (e.g. empty prediction against empty reference) is
    defined as 1.0 and flagged in the report's `degenerate` field.
    """
    degenerate: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 1.0
        return num / den

    tp, fp, fn = counts.tp, counts.fp, counts.fn
    return MetricsReport(
        iou=ratio(tp, tp + fp + fn, "iou"),
        dice=ratio(2 * tp, 2 * tp + fp + fn, "dice"),
        precision=ratio(tp, tp + fp, "precision"),
        recall=ratio(tp, tp + fn, "recall"),
        degenerate=tuple(degenerate),
    )


def hausdorff(pred: np.ndarray, gt: np.ndarray) -> float:
    """Symmetric Hausdorff distance between foreground pixel sets.

    max(h(P, G), h(G, P)) with h the directed maximum nearest-neighbour
    Euclidean distance, in pixels. Raises UndefinedMetricError when either
    mask has no foreground, never returning a silent 0.
    """
    pred = _check_mask(pred, "pred")
    gt = _check_mask(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    p_pts = np.argwhere(pred)
    g_pts = np.argwhere(gt)
    if len(p_pts) == 0 or len(g_pts) == 0:
        raise UndefinedMetricError(
            "Hausdorff distance is undefined for an empty mask "
            f"(pred foreground={len(p_pts)}, gt foreground={len(g_pts)})"
        )
    d_pg = cKDTree(g_pts).query(p_pts, k=1)[0].max()
    d_gp = cKDTree(p_pts).query(g_pts, k=1)[0].max()
    return float(max(d_pg, d_gp))


def evaluate_pair(
    pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5
) -> MetricsReport:
    """All five metrics for one probability map / reference mask pair."""
    mask = binarize(pred, threshold)
    gt = _check_mask(gt, "gt")
    report = rates(confusion(mask, gt))
    try:
        hd: float | None = hausdorff(mask, gt)
    except UndefinedMetricError:
        hd = None
    return MetricsReport(
        iou=report.iou,
        dice=report.dice,
        precision=report.precision,
        recall=report.recall,
        hausdorff=hd,
        degenerate=report.degenerate,
    )


def evaluate_dataset(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    threshold: float = 0.5,
    ids: Sequence[str] | None = None,
) -> DatasetReport:
    """Evaluate (probability map, reference mask) pairs and average.

    The aggregate is the unweighted mean of each metric across images;
    images with an undefined Hausdorff distance are left out of the HD
    mean and counted.
    """
    if len(pairs) == 0:
        raise ValueError("no pairs to evaluate")
    if ids is None:
        ids = [str(i) for i in range(len(pairs))]
    if len(ids) != len(pairs):
        raise ValueError(f"{len(ids)} ids for {len(pairs)} pairs")

    reports = [evaluate_pair(p, g, threshold) for p, g in pairs]
    hds = [r.hausdorff for r in reports if r.hausdorff is not None]
    mean = MetricsReport(
        iou=float(np.mean([r.iou for r in reports])),
        dice=float(np.mean([r.dice for r in reports])),
        precision=float(np.mean([r.precision for r in reports])),
        recall=float(np.mean([r.recall for r in reports])),
        hausdorff=float(np.mean(hds)) if hds else None,
    )
    return DatasetReport(
        per_image=tuple(reports),
        ids=tuple(ids),
        mean=mean,
        hausdorff_undefined=len(reports) - len(hds),
    )


def _format_row(label: str, r: MetricsReport) -> str:
    hd = f"{r.hausdorff:.2f}" if r.hausdorff is not None else "undefined"
    return (
        f"{label:<16} {100 * r.iou:6.2f}% {100 * r.dice:6.2f}% "
        f"{100 * r.precision:6.2f}% {100 * r.recall:6.2f}% {hd:>9}"
    )


def format_report_table(report: DatasetReport) -> str:
    """Render one row per image plus the aggregate, percentages to 2 decimals."""
    lines = [f"{'image':<16} {'IoU':>7} {'Dice':>7} {'Prec':>7} {'Recall':>7} {'HD':>9}"]
    for img_id, r in zip(report.ids, report.per_image):
        lines.append(_format_row(img_id, r))
    lines.append(_format_row("mean", report.mean))
    if report.hausdorff_undefined:
        lines.append(
            f"# HD undefined for {report.hausdorff_undefined} image(s), "
            "excluded from the HD mean"
        )
    return "\n".join(lines)

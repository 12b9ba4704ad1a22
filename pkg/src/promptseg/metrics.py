"""Confusion-matrix accounting, IoU/accuracy summaries, and error dumps."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DEFAULT_IGNORE_INDEX, NUM_CLASSES, SUPERCLASS_NAMES
from .errors import ShapeError


@dataclass
class ConfusionMatrix:
    """Streaming class-vs-class counts; rows are ground truth, columns are
    predictions. Points whose label equals ignore_index are tallied
    separately and never enter the matrix."""

    num_classes: int = NUM_CLASSES
    ignore_index: int = DEFAULT_IGNORE_INDEX
    matrix: np.ndarray = field(default=None)  # type: ignore[assignment]
    ignored: int = 0

    def __post_init__(self):
        if self.matrix is None:
            self.matrix = np.zeros((self.num_classes, self.num_classes),
                                   dtype=np.int64)

    def update(self, gt: np.ndarray, pred: np.ndarray) -> None:
        gt = np.asarray(gt).astype(np.int64)
        pred = np.asarray(pred).astype(np.int64)
        if gt.shape != pred.shape or gt.ndim != 1:
            raise ShapeError(
                f"gt and pred must be equal-length 1-D, got {gt.shape} vs {pred.shape}")
        keep = gt != self.ignore_index
        self.ignored += int((~keep).sum())
        gt, pred = gt[keep], pred[keep]
        if len(gt) == 0:
            return
        c = self.num_classes
        if gt.min() < 0 or gt.max() >= c:
            raise ShapeError(f"ground-truth label outside 0..{c - 1}")
        if pred.min() < 0 or pred.max() >= c:
            raise ShapeError(f"prediction outside 0..{c - 1}")
        flat = np.bincount(gt * c + pred, minlength=c * c)
        self.matrix += flat.reshape(c, c)

    def merge(self, other: "ConfusionMatrix") -> None:
        if other.num_classes != self.num_classes:
            raise ShapeError("cannot merge matrices of different sizes")
        self.matrix += other.matrix
        self.ignored += other.ignored


@dataclass(frozen=True)
class MetricSummary:
    iou: np.ndarray  # [C], nan where the class never occurred
    acc: np.ndarray  # [C], nan likewise
    present: np.ndarray  # [C] bool, TP+FP+FN > 0
    mean_iou: float
    mean_acc: float
    all_acc: float
    ignored: int


def summarize(cm: ConfusionMatrix) -> MetricSummary:
    m = cm.matrix.astype(np.float64)
    tp = np.diag(m)
    fp = m.sum(axis=0) - tp
    fn = m.sum(axis=1) - tp
    denom = tp + fp + fn
    present = denom > 0
    iou = np.full(cm.num_classes, np.nan)
    acc = np.full(cm.num_classes, np.nan)
    iou[present] = tp[present] / denom[present]
    has_gt = (tp + fn) > 0
    acc[present & has_gt] = tp[present & has_gt] / (tp + fn)[present & has_gt]
    acc[present & ~has_gt] = 0.0  # only false positives, nothing to recall
    total = m.sum()
    return MetricSummary(
        iou=iou,
        acc=acc,
        present=present,
        mean_iou=float(iou[present].mean()) if present.any() else float("nan"),
        mean_acc=float(acc[present].mean()) if present.any() else float("nan"),
        all_acc=float(tp.sum() / total) if total > 0 else float("nan"),
        ignored=cm.ignored,
    )


def _cell(value: float) -> str:
    return f"{value:.4f}" if np.isfinite(value) else "-"


def render_table(summaries: dict[str, MetricSummary],
                 class_names: tuple[str, ...] = SUPERCLASS_NAMES) -> str:
    """One body row per summary: per-class "IoU / Acc" pairs, then the
    aggregates. Column order follows class_names; row order follows the
    mapping."""
    for label, summary in summaries.items():
        if len(class_names) != len(summary.iou):
            raise ShapeError(f"class_names length does not match summary {label!r}")
    header = ["", *class_names, "mIoU", "mAcc", "allAcc"]
    rows = [header]
    for label, s in summaries.items():
        cells = [f"{_cell(s.iou[i])} / {_cell(s.acc[i])}"
                 for i in range(len(class_names))]
        rows.append([label, *cells, _cell(s.mean_iou), _cell(s.mean_acc),
                     _cell(s.all_acc)])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines)


COLOR_CORRECT = (255, 255, 255)
COLOR_MISS = (255, 0, 0)  # focus class expected but not predicted
COLOR_FALSE_ALARM = (0, 0, 255)  # focus class predicted but wrong
COLOR_IGNORED = (128, 128, 128)


def export_error_ply(path: str | Path, coords: np.ndarray, gt: np.ndarray,
                     pred: np.ndarray, ignore_index: int = DEFAULT_IGNORE_INDEX,
                     focus_class: int | None = None) -> None:
    """Write an ASCII point cloud with per-point error colors.

    With a focus class, its misses are red and its false alarms blue; other
    points stay white. Without one, every mispredicted point is red.
    Ignored points are gray either way.
    """
    coords = np.asarray(coords, dtype=np.float64)
    gt = np.asarray(gt).astype(np.int64)
    pred = np.asarray(pred).astype(np.int64)
    n = coords.shape[0]
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeError(f"coords must be [N, 3], got {coords.shape}")
    if gt.shape != (n,) or pred.shape != (n,):
        raise ShapeError("gt and pred must match coords rows")

    colors = np.tile(np.array(COLOR_CORRECT, dtype=np.uint8), (n, 1))
    mismatch = gt != pred
    if focus_class is None:
        colors[mismatch] = COLOR_MISS
    else:
        colors[mismatch & (gt == focus_class)] = COLOR_MISS
        colors[mismatch & (pred == focus_class)] = COLOR_FALSE_ALARM
    colors[gt == ignore_index] = COLOR_IGNORED

    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {n}\n")
        for axis in "xyz":
            fh.write(f"property float {axis}\n")
        for channel in ("red", "green", "blue"):
            fh.write(f"property uchar {channel}\n")
        fh.write("end_header\n")
        for (x, y, z), (r, g, b) in zip(coords, colors):
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")

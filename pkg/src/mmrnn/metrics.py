"""Confusion-matrix evaluation: pixel accuracy, class accuracy, mean IOU.

Only valid cells are scored. Classes absent from both truth and
prediction are excluded from the class-accuracy and IOU means rather
than counted as 0 or 1.
"""

from __future__ import annotations

import numpy as np

from .grid import PatchGrid


def new_confusion(num_classes: int) -> np.ndarray:
    """Rows are ground truth, columns are predictions."""
    return np.zeros((num_classes, num_classes), dtype=np.int64)


def accumulate(cm: np.ndarray, pred: np.ndarray, truth: PatchGrid) -> np.ndarray:
    """Count valid cells into the matrix in place and return it."""
    if pred.shape != truth.labels.shape:
        raise ValueError(f"prediction {pred.shape} does not match grid {truth.labels.shape}")
    b = cm.shape[0]
    t = truth.labels[truth.valid]
    p = pred[truth.valid]
    if t.size and (t.min() < 0 or t.max() >= b or p.min() < 0 or p.max() >= b):
        raise ValueError(f"label outside [0, {b})")
    np.add.at(cm, (t, p), 1)
    return cm


def summarize(cm: np.ndarray) -> dict:
    """Pixel accuracy, mean per-class accuracy and mean IOU.

    Sums are taken over exact integer counts so results are reproducible
    to the bit; per_class_iou holds None for excluded classes.
    """
    total = int(cm.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    b = cm.shape[0]
    diag = [int(cm[k, k]) for k in range(b)]
    row = [int(cm[k, :].sum()) for k in range(b)]
    col = [int(cm[:, k].sum()) for k in range(b)]
    pixel_acc = sum(diag) / total
    recalls = [diag[k] / row[k] for k in range(b) if row[k] > 0]
    class_acc = sum(recalls) / len(recalls)
    per_class_iou: list[float | None] = []
    for k in range(b):
        union = row[k] + col[k] - diag[k]
        per_class_iou.append(diag[k] / union if union > 0 else None)
    present = [x for x in per_class_iou if x is not None]
    mean_iou = sum(present) / len(present)
    return {
        "pixel_acc": pixel_acc,
        "class_acc": class_acc,
        "mean_iou": mean_iou,
        "per_class_iou": per_class_iou,
    }

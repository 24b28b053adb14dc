"""Segmentation overlap metrics with auditable pixel counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError


@dataclass
class SegMetrics:
    iou: float
    dice: float
    tp: int
    fp: int
    fn: int


def _as_binary(arr, what: str) -> np.ndarray:
    data = np.asarray(getattr(arr, "data", arr), dtype=np.float64)
    if not np.all((data == 0.0) | (data == 1.0)):
        raise ContractError(f"{what} must be binary (0/1)")
    return data


def iou_dice(pred, gt) -> SegMetrics:
    """IoU = tp/(tp+fp+fn), Dice = 2tp/(2tp+fp+fn) from pixel counts.

    Both metrics are defined as 1.0 when prediction and ground truth are
    both empty (no foreground anywhere).
    """
    pred = _as_binary(pred, "pred")
    gt = _as_binary(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeError(f"iou_dice: shapes differ, {pred.shape} vs {gt.shape}")
    tp = int(np.sum((pred == 1.0) & (gt == 1.0)))
    fp = int(np.sum((pred == 1.0) & (gt == 0.0)))
    fn = int(np.sum((pred == 0.0) & (gt == 1.0)))
    if tp + fp + fn == 0:
        return SegMetrics(iou=1.0, dice=1.0, tp=0, fp=0, fn=0)
    iou = tp / (tp + fp + fn)
    dice = 2 * tp / (2 * tp + fp + fn)
    return SegMetrics(iou=iou, dice=dice, tp=tp, fp=fp, fn=fn)


def binarize(probabilities, threshold: float = 0.5) -> np.ndarray:
    """Threshold probabilities; ties (== threshold) go to foreground."""
    probs = np.asarray(getattr(probabilities, "data", probabilities),
                       dtype=np.float64)
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ContractError("binarize: values must lie in [0, 1]")
    return (probs >= threshold).astype(np.float64)

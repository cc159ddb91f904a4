# Copyright 2024
# Directory: ContourMARL/app/services/metrics.py

"""
Segmentation quality measures shared by the reward function and evaluation:
IoU, Dice, boundary extraction and the five-threshold Boundary F-score.
"""

import logging
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..core.errors import ShapeMismatchError
from ..models.entities import BinaryMask, MetricReport, ObjectMetrics

logger = logging.getLogger(__name__)

BOUNDARY_THRESHOLDS = (1, 2, 3, 4, 5)
_EIGHT_NEIGHBORHOOD = np.ones((3, 3), dtype=bool)


def _check_pair(op: str, pred: BinaryMask, gt: BinaryMask) -> None:
    if pred.bits.shape != gt.bits.shape:
        raise ShapeMismatchError(op, pred.bits.shape, gt.bits.shape)


def _dice_bits(a: np.ndarray, b: np.ndarray) -> float:
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def iou(pred: BinaryMask, gt: BinaryMask) -> float:
    """|A n B| / |A u B|; two empty masks score 1."""
    _check_pair("iou", pred, gt)
    union = int(np.logical_or(pred.bits, gt.bits).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(pred.bits, gt.bits).sum()) / union


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """2|A n B| / (|A| + |B|); two empty masks score 1."""
    _check_pair("dice", pred, gt)
    return _dice_bits(pred.bits, gt.bits)


def boundary_pixels(mask: BinaryMask) -> BinaryMask:
    """Set pixels with an unset 8-neighbor or lying on the grid border."""
    interior = ndimage.binary_erosion(mask.bits, structure=_EIGHT_NEIGHBORHOOD, border_value=0)
    return BinaryMask(bits=mask.bits & ~interior)


def dilate_chebyshev(bits: np.ndarray, radius: int) -> np.ndarray:
    """Dilate by a (2r+1) x (2r+1) square, i.e. a Chebyshev disk of radius r."""
    if radius <= 0 or not bits.any():
        return bits.copy()
    square = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(bits, structure=square)


def boundf(pred: BinaryMask, gt: BinaryMask) -> float:
    """
    Boundary F-score averaged over the pixel thresholds 1..5.

    Both boundary maps are dilated by each threshold and compared with Dice.

    Args:
        pred: Predicted mask
        gt: Ground-truth mask

    Returns:
        Score in [0, 1]
    """
    _check_pair("boundf", pred, gt)
    pred_edge = boundary_pixels(pred).bits
    gt_edge = boundary_pixels(gt).bits
    scores = [
        _dice_bits(dilate_chebyshev(pred_edge, n), dilate_chebyshev(gt_edge, n))
        for n in BOUNDARY_THRESHOLDS
    ]
    return float(np.mean(scores))


def object_metrics(pred: BinaryMask, gt: BinaryMask) -> ObjectMetrics:
    return ObjectMetrics(iou=iou(pred, gt), dice=dice(pred, gt), boundf=boundf(pred, gt))


def report(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask]) -> MetricReport:
    """
    Per-object metrics and their means.

    Args:
        preds: Predicted masks
        gts: Ground-truth masks, same length and pairwise dimensions

    Returns:
        MetricReport with per-object scores
    """
    if len(preds) != len(gts):
        raise ShapeMismatchError("report", (len(preds),), (len(gts),))
    if not preds:
        raise ValueError("report needs at least one mask pair")
    per_object = [object_metrics(p, g) for p, g in zip(preds, gts)]
    return aggregate(per_object)


def aggregate(per_object: Sequence[ObjectMetrics]) -> MetricReport:
    """Arithmetic means over already-computed per-object scores."""
    if not per_object:
        raise ValueError("cannot aggregate an empty metric list")
    return MetricReport(
        miou=float(np.mean([m.iou for m in per_object])),
        mdice=float(np.mean([m.dice for m in per_object])),
        mboundf=float(np.mean([m.boundf for m in per_object])),
        per_object=list(per_object),
    )

# Copyright 2024
# Directory: ContourMARL/tests/test_metrics.py

import numpy as np
import pytest

from app.core.errors import ShapeMismatchError
from app.models.entities import BinaryMask
from app.services import metrics


def brute_boundary(bits: np.ndarray) -> np.ndarray:
    h, w = bits.shape
    out = np.zeros_like(bits)
    for r in range(h):
        for c in range(w):
            if not bits[r, c]:
                continue
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < h and 0 <= cc < w) or not bits[rr, cc]:
                        out[r, c] = True
    return out


def brute_dilate(bits: np.ndarray, n: int) -> np.ndarray:
    h, w = bits.shape
    rows, cols = np.nonzero(bits)
    out = np.zeros_like(bits)
    for r in range(h):
        for c in range(w):
            out[r, c] = bool(np.any(np.maximum(np.abs(rows - r), np.abs(cols - c)) <= n))
    return out


def brute_dice(a: np.ndarray, b: np.ndarray) -> float:
    total = int(a.sum()) + int(b.sum())
    return 1.0 if total == 0 else 2.0 * int((a & b).sum()) / total


def brute_boundf(pred: np.ndarray, gt: np.ndarray) -> float:
    pe, ge = brute_boundary(pred), brute_boundary(gt)
    return float(np.mean([brute_dice(brute_dilate(pe, n), brute_dilate(ge, n)) for n in range(1, 6)]))


def random_mask(rng: np.random.Generator, size: int = 12) -> BinaryMask:
    bits = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        r0, c0 = rng.integers(0, size - 2, size=2)
        h, w = rng.integers(1, 6, size=2)
        bits[r0:r0 + h, c0:c0 + w] = True
    return BinaryMask(bits=bits)


def test_boundf_matches_brute_force_oracle(rng):
    for _ in range(100):
        pred, gt = random_mask(rng), random_mask(rng)
        assert metrics.boundf(pred, gt) == brute_boundf(pred.bits, gt.bits)


def test_identical_masks_score_one(disk):
    scores = metrics.object_metrics(disk, disk)
    assert (scores.iou, scores.dice, scores.boundf) == (1.0, 1.0, 1.0)


def test_dice_never_below_iou(rng):
    for _ in range(50):
        pred, gt = random_mask(rng), random_mask(rng)
        assert metrics.dice(pred, gt) >= metrics.iou(pred, gt)


def test_empty_masks():
    empty = BinaryMask.empty(6, 6)
    full = BinaryMask(bits=np.ones((6, 6), dtype=bool))
    assert metrics.iou(empty, empty) == 1.0
    assert metrics.dice(empty, empty) == 1.0
    assert metrics.iou(empty, full) == 0.0


def test_boundary_includes_grid_border():
    full = BinaryMask(bits=np.ones((5, 5), dtype=bool))
    edge = metrics.boundary_pixels(full).bits
    assert edge.sum() == 16
    assert not edge[2, 2]


def test_dilate_chebyshev_square():
    bits = np.zeros((7, 7), dtype=bool)
    bits[3, 3] = True
    assert metrics.dilate_chebyshev(bits, 2).sum() == 25


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatchError):
        metrics.iou(BinaryMask.empty(4, 4), BinaryMask.empty(5, 4))


def test_report_means_and_errors(disk):
    empty = BinaryMask.empty(disk.width, disk.height)
    result = metrics.report([disk, empty], [disk, disk])
    assert len(result.per_object) == 2
    assert result.mdice == pytest.approx(0.5)
    assert result.csv_rows()[-1][0] == "mean"
    with pytest.raises(ShapeMismatchError):
        metrics.report([disk], [disk, disk])
    with pytest.raises(ValueError):
        metrics.report([], [])


def test_scores_are_translation_covariant(rng):
    for _ in range(20):
        pred, gt = random_mask(rng), random_mask(rng)
        # pad so the shifted content never touches the grid border
        a = np.pad(pred.bits, 6)
        b = np.pad(gt.bits, 6)
        dy, dx = rng.integers(-5, 6, size=2)
        moved_a = np.roll(a, (dy, dx), axis=(0, 1))
        moved_b = np.roll(b, (dy, dx), axis=(0, 1))
        for score in (metrics.iou, metrics.dice, metrics.boundf):
            assert score(BinaryMask(bits=a), BinaryMask(bits=b)) == \
                score(BinaryMask(bits=moved_a), BinaryMask(bits=moved_b))

# Copyright 2024
# Directory: ContourMARL/app/services/geometry.py

"""
Geometric kernel for contour agents: polygon area, scanline rasterization,
Menger curvature, the contour consistency index, octagon initialization,
arc-length resampling and bounding-box perturbation.
All functions are pure.
"""

import logging

import numpy as np

from ..core.errors import InvalidGeometryError
from ..models.entities import BinaryMask, BoundingBox, ConsistencyWeights, Contour

logger = logging.getLogger(__name__)


def shoelace_area(contour: Contour) -> float:
    """Unsigned polygon area in px^2 (0 for degenerate contours)."""
    return abs(contour.signed_area)


def rasterize(contour: Contour, width: int, height: int) -> BinaryMask:
    """
    Even-odd scanline fill sampled at pixel centers.

    A pixel is set iff its center (c + 0.5, r + 0.5) lies inside the polygon
    under the even-odd rule; the polygon is clipped to the grid.

    Args:
        contour: Closed polygon
        width: Grid width in pixels
        height: Grid height in pixels

    Returns:
        H x W mask
    """
    if width < 1 or height < 1:
        raise InvalidGeometryError(f"grid must be at least 1 x 1, got {width} x {height}")
    bits = np.zeros((height, width), dtype=bool)
    pts = contour.points
    ax, ay = pts[:, 0], pts[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)

    row_lo = max(0, int(np.floor(ay.min() - 0.5)))
    row_hi = min(height, int(np.ceil(ay.max() - 0.5)) + 1)
    centers = np.arange(width, dtype=np.float64) + 0.5
    for r in range(row_lo, row_hi):
        py = r + 0.5
        crossing = (ay > py) != (by > py)
        if not crossing.any():
            continue
        ex, ey, fx, fy = ax[crossing], ay[crossing], bx[crossing], by[crossing]
        xs = np.sort((fx - ex) * (py - ey) / (fy - ey) + ex)
        # crossings strictly right of each center
        right = xs.size - np.searchsorted(xs, centers, side="right")
        bits[r] = (right % 2) == 1
    return BinaryMask(bits=bits)


def curvatures(contour: Contour) -> np.ndarray:
    """Menger curvature at every vertex, cyclic neighbors."""
    p = contour.points
    a, c = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0)
    ab, bc, ac = p - a, c - p, c - a
    cross = np.abs(ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    denom = np.linalg.norm(ab, axis=1) * np.linalg.norm(bc, axis=1) * np.linalg.norm(ac, axis=1)
    kappa = np.zeros(len(p))
    ok = (denom > 0) & (cross > 0)
    # 4 * triangle_area / product of side lengths, triangle_area = cross / 2
    kappa[ok] = 2.0 * cross[ok] / denom[ok]
    return kappa


def curvature(contour: Contour, i: int) -> float:
    """Menger curvature of (p_{i-1}, p_i, p_{i+1}) in 1/px."""
    n = contour.n
    sub = Contour(points=contour.points[[(i - 1) % n, i % n, (i + 1) % n]])
    return float(curvatures(sub)[1])


def edge_lengths(contour: Contour) -> np.ndarray:
    """Lengths d_{i,i+1} including the closing edge d_{N,1}."""
    p = contour.points
    return np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)


def perimeter(contour: Contour) -> float:
    return float(edge_lengths(contour).sum())


def consistency_index(contour: Contour, w: ConsistencyWeights) -> float:
    """C = lambda1 * Var(edge lengths) + lambda2 * Var(curvatures), population variance."""
    return float(w.lambda1 * np.var(edge_lengths(contour)) + w.lambda2 * np.var(curvatures(contour)))


def octagon_from_bbox(b: BoundingBox) -> Contour:
    """Cut the box corners at the 1/4 and 3/4 points of every edge (counter-clockwise)."""
    x0, y0, x1, y1 = b.as_tuple()
    w, h = b.width, b.height
    points = [
        (x0 + 0.25 * w, y0), (x0 + 0.75 * w, y0),
        (x1, y0 + 0.25 * h), (x1, y0 + 0.75 * h),
        (x0 + 0.75 * w, y1), (x0 + 0.25 * w, y1),
        (x0, y0 + 0.75 * h), (x0, y0 + 0.25 * h),
    ]
    return Contour.from_points(points)


def uniform_resample(contour: Contour, n: int) -> Contour:
    """
    Place n points at equal arc-length spacing along the closed polyline.

    The first output point is the input's first vertex; orientation is kept.

    Args:
        contour: Source polygon
        n: Number of output points (>= 3)

    Returns:
        Resampled contour
    """
    if n < 3:
        raise InvalidGeometryError(f"resampling needs n >= 3, got {n}")
    pts = contour.points
    nxt = np.roll(pts, -1, axis=0)
    seg = np.linalg.norm(nxt - pts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    targets = np.arange(n, dtype=np.float64) * (total / n)
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg) - 1)
    local = targets - cum[idx]
    frac = np.divide(local, seg[idx], out=np.zeros(n), where=seg[idx] > 0)
    out = pts[idx] + frac[:, None] * (nxt[idx] - pts[idx])
    return Contour.from_points(out, orient=False)


def perturb_bbox(b: BoundingBox, shift_frac: float, scale_frac: float, seed: int) -> BoundingBox:
    """
    Jitter a box: center shift of U(-s, s) * (w, h), extents scaled by 1 + U(-c, c).

    Args:
        b: Source box
        shift_frac: Max center shift as a fraction of the extent (|s| <= 0.5)
        scale_frac: Max relative extent change (|c| < 0.5)
        seed: Generator seed; same seed, same box

    Returns:
        Perturbed box
    """
    if not abs(shift_frac) <= 0.5:
        raise InvalidGeometryError(f"shift_frac must be within [-0.5, 0.5], got {shift_frac}")
    if not abs(scale_frac) < 0.5:
        raise InvalidGeometryError(f"scale_frac must be within (-0.5, 0.5), got {scale_frac}")
    s, c = abs(shift_frac), abs(scale_frac)
    rng = np.random.default_rng(seed)
    dx = rng.uniform(-s, s) * b.width
    dy = rng.uniform(-s, s) * b.height
    new_w = b.width * (1.0 + rng.uniform(-c, c))
    new_h = b.height * (1.0 + rng.uniform(-c, c))
    if new_w <= 0 or new_h <= 0:
        raise InvalidGeometryError(f"perturbation produced non-positive extents ({new_w}, {new_h})")
    shrink_x = 0.5 * (b.width - new_w)
    shrink_y = 0.5 * (b.height - new_h)
    return BoundingBox(
        x_min=b.x_min + dx + shrink_x,
        y_min=b.y_min + dy + shrink_y,
        x_max=b.x_max + dx - shrink_x,
        y_max=b.y_max + dy - shrink_y,
    )

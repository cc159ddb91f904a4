# Copyright 2024
# Directory: ContourMARL/tests/test_geometry.py

import math

import numpy as np
import pytest

from app.core.errors import InvalidGeometryError
from app.models.entities import BoundingBox, ConsistencyWeights, Contour
from app.services import geometry


def ray_cast_mask(points: np.ndarray, width: int, height: int) -> np.ndarray:
    """Per-pixel even-odd test: count edges crossing the ray to the right of each center."""
    bits = np.zeros((height, width), dtype=bool)
    n = len(points)
    for r in range(height):
        py = r + 0.5
        for c in range(width):
            px = c + 0.5
            inside = False
            for i in range(n):
                ex, ey = points[i]
                fx, fy = points[(i + 1) % n]
                if (ey > py) != (fy > py):
                    x_cross = (fx - ex) * (py - ey) / (fy - ey) + ex
                    if x_cross > px:
                        inside = not inside
            bits[r, c] = inside
    return bits


def test_rasterize_matches_ray_cast_on_random_polygons(rng):
    for _ in range(200):
        n = int(rng.integers(3, 9))
        pts = rng.uniform(-2.0, 14.0, size=(n, 2))
        contour = Contour(points=pts)
        expected = ray_cast_mask(pts, 12, 12)
        assert np.array_equal(geometry.rasterize(contour, 12, 12).bits, expected)


def test_rasterize_axis_aligned_square():
    square = Contour.from_points([(2, 3), (6, 3), (6, 7), (2, 7)])
    mask = geometry.rasterize(square, 10, 10)
    assert mask.count() == 16
    assert mask.bits[3:7, 2:6].all()


def test_rasterize_rejects_empty_grid():
    with pytest.raises(InvalidGeometryError):
        geometry.rasterize(Contour.from_points([(0, 0), (1, 0), (0, 1)]), 0, 4)


def test_shoelace_area_and_orientation():
    clockwise = [(0, 0), (0, 4), (4, 4), (4, 0)]
    contour = Contour.from_points(clockwise)
    assert contour.signed_area == pytest.approx(16.0)
    assert geometry.shoelace_area(Contour(points=clockwise)) == pytest.approx(16.0)


def test_curvature_of_sampled_circle():
    radius = 10.0
    theta = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
    circle = Contour.from_points(np.stack([20 + radius * np.cos(theta), 20 + radius * np.sin(theta)], axis=1))
    assert np.allclose(geometry.curvatures(circle), 1.0 / radius, atol=1e-6)
    assert geometry.curvature(circle, 5) == pytest.approx(1.0 / radius, abs=1e-6)


def test_collinear_points_have_zero_curvature():
    line = Contour(points=[(0, 0), (1, 0), (2, 0), (1, 1)])
    assert geometry.curvature(line, 1) == 0.0


def test_consistency_index_of_regular_polygon_is_zero():
    theta = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
    polygon = Contour.from_points(np.stack([np.cos(theta) * 7 + 10, np.sin(theta) * 7 + 10], axis=1))
    assert geometry.consistency_index(polygon, ConsistencyWeights()) == pytest.approx(0.0, abs=1e-12)


def test_consistency_index_grows_with_irregularity():
    w = ConsistencyWeights(lambda1=1.0, lambda2=0.0)
    even = Contour.from_points([(0, 0), (2, 0), (2, 2), (0, 2)])
    uneven = Contour.from_points([(0, 0), (5, 0), (5, 1), (0, 1)])
    assert geometry.consistency_index(uneven, w) > geometry.consistency_index(even, w)


def test_octagon_from_bbox():
    box = BoundingBox(x_min=4.0, y_min=2.0, x_max=20.0, y_max=10.0)
    octagon = geometry.octagon_from_bbox(box)
    assert octagon.n == 8
    assert octagon.signed_area > 0
    assert geometry.shoelace_area(octagon) == pytest.approx(7.0 / 8.0 * box.area)
    assert octagon.points[:, 0].min() == box.x_min and octagon.points[:, 1].max() == box.y_max


def test_uniform_resample_spacing_and_start():
    square = Contour.from_points([(0, 0), (8, 0), (8, 8), (0, 8)])
    resampled = geometry.uniform_resample(square, 16)
    assert resampled.n == 16
    assert np.allclose(resampled.points[0], square.points[0])
    assert np.allclose(geometry.edge_lengths(resampled), 2.0)
    assert geometry.perimeter(resampled) == pytest.approx(32.0)


def test_uniform_resample_rejects_tiny_n():
    with pytest.raises(InvalidGeometryError):
        geometry.uniform_resample(Contour.from_points([(0, 0), (1, 0), (0, 1)]), 2)


def test_perturb_bbox_zero_and_determinism():
    box = BoundingBox(x_min=5.0, y_min=5.0, x_max=25.0, y_max=15.0)
    same = geometry.perturb_bbox(box, 0.0, 0.0, seed=9)
    assert same.as_tuple() == pytest.approx(box.as_tuple())
    a = geometry.perturb_bbox(box, 0.2, 0.2, seed=9)
    b = geometry.perturb_bbox(box, 0.2, 0.2, seed=9)
    assert a == b
    assert abs(a.center[0] - box.center[0]) <= 0.2 * box.width + 1e-9
    assert 0.8 * box.width - 1e-9 <= a.width <= 1.2 * box.width + 1e-9


def test_perturb_bbox_rejects_large_fractions():
    box = BoundingBox(x_min=0.0, y_min=0.0, x_max=10.0, y_max=10.0)
    with pytest.raises(InvalidGeometryError):
        geometry.perturb_bbox(box, 0.6, 0.0, seed=0)
    with pytest.raises(InvalidGeometryError):
        geometry.perturb_bbox(box, 0.0, 0.5, seed=0)


def test_consistency_index_ignores_start_vertex_and_position(rng):
    w = ConsistencyWeights(lambda1=0.7, lambda2=0.3)
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=24))
    radii = rng.uniform(4.0, 9.0, size=24)
    points = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1) + 20.0
    base = geometry.consistency_index(Contour(points=points), w)
    for shift in (1, 7, 23):
        rotated = np.roll(points, shift, axis=0) + np.array([3.5, -2.0])
        assert geometry.consistency_index(Contour(points=rotated), w) == pytest.approx(base, rel=1e-9)

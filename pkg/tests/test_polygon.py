import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinkwrap.geom import ConvexPolygon, Plane, clip_polygon_halfspace, polygon_area
from shrinkwrap.errors import DegenerateInputError

UNIT_SQUARE = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]


def test_plane_rejects_zero_normal():
    with pytest.raises(DegenerateInputError):
        Plane((0, 0, 0), 1.0)


def test_axis_cut_halves_square():
    poly = ConvexPolygon(UNIT_SQUARE)
    kept = clip_polygon_halfspace(poly, Plane((1, 0, 0), 0.5))
    assert kept is not None
    assert kept.area == pytest.approx(0.5, abs=1e-12)


def test_polygon_inside_halfspace_unchanged():
    poly = ConvexPolygon(UNIT_SQUARE, labels=["a", "b", "c", "d"])
    kept = clip_polygon_halfspace(poly, Plane((1, 0, 0), 5.0))
    assert kept.verts == poly.verts
    assert kept.labels == poly.labels


def test_fully_clipped_returns_none():
    poly = ConvexPolygon(UNIT_SQUARE)
    assert clip_polygon_halfspace(poly, Plane((1, 0, 0), -1.0)) is None


def test_new_edges_carry_plane_tag():
    poly = ConvexPolygon(UNIT_SQUARE, labels=[0, 1, 2, 3])
    h = Plane((1, 0, 0), 0.5, tag="cut")
    kept = clip_polygon_halfspace(poly, h)
    assert "cut" in kept.labels
    # Surviving original edges keep their labels.
    assert {l for l in kept.labels if l != "cut"} <= {0, 1, 2, 3}


def _random_convex_polygon(rng):
    # Convex polygon in a random plane: convex hull of points on a circle.
    k = rng.integers(3, 9)
    angles = np.sort(rng.uniform(0, 2 * np.pi, k))
    radius = rng.uniform(0.2, 3.0)
    pts2 = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    # Random orthonormal frame.
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    origin = rng.normal(size=3)
    pts3 = origin + pts2 @ q[:, :2].T
    return ConvexPolygon(pts3)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10_000))
def test_complementary_clip_conserves_area(seed):
    rng = np.random.default_rng(seed)
    poly = _random_convex_polygon(rng)
    normal = rng.normal(size=3)
    while np.linalg.norm(normal) < 1e-6:
        normal = rng.normal(size=3)
    offset = float(normal @ (poly.centroid() + rng.normal(scale=0.5, size=3)))
    h = Plane(tuple(normal), offset)
    kept = clip_polygon_halfspace(poly, h)
    other = clip_polygon_halfspace(poly, h.flipped())
    area = poly.area
    kept_area = kept.area if kept is not None else 0.0
    other_area = other.area if other is not None else 0.0
    assert abs(kept_area + other_area - area) <= 1e-9 * max(area, 1.0)


def test_vertex_order_preserved():
    poly = ConvexPolygon(UNIT_SQUARE)
    kept = clip_polygon_halfspace(poly, Plane((0, 1, 0), 0.25))
    n = kept.normal()
    assert np.allclose(n, [0, 0, 1])  # still CCW w.r.t. +z


def test_polygon_area_triangle():
    tri = [(0, 0, 0), (2, 0, 0), (0, 2, 0)]
    assert polygon_area(tri) == pytest.approx(2.0)

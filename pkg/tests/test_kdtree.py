import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinkwrap.geom import KdTree3
from shrinkwrap.errors import InputError


def linear_scan_knn(points, q, k):
    d2 = np.einsum("ij,ij->i", points - q, points - q)
    order = np.lexsort((np.arange(len(points)), d2))
    return list(order[:k])


def test_empty_input_rejected():
    with pytest.raises(InputError):
        KdTree3(np.zeros((0, 3)))


def test_singleton():
    tree = KdTree3([[1.0, 2.0, 3.0]])
    assert tree.nearest([100, -5, 0]) == 0


def test_two_points_direct_distance():
    tree = KdTree3([[0, 0, 0], [1, 0, 0]])
    assert tree.nearest([0.4, 0, 0]) == 0


def test_tie_breaks_to_smallest_index():
    tree = KdTree3([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]])
    assert tree.nearest([0, 0, 0]) == 0
    assert tree.knn([0, 0, 0], 3) == [0, 1, 2]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_knn_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, 3))
    tree = KdTree3(pts)
    for q in rng.normal(size=(10, 3)):
        assert tree.knn(q, 8) == linear_scan_knn(pts, q, 8)


def test_knn_matches_linear_scan_large():
    rng = np.random.default_rng(42)
    pts = rng.normal(size=(1000, 3))
    tree = KdTree3(pts)
    for q in rng.normal(size=(100, 3)):
        assert tree.knn(q, 8) == linear_scan_knn(pts, q, 8)


def test_query_radius():
    pts = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0]], dtype=float)
    tree = KdTree3(pts)
    assert tree.query_radius([0, 0, 0], 1.5).tolist() == [0, 1]

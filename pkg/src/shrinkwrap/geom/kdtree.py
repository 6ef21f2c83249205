"""Spatial index over a fixed point set with linear-scan-exact semantics.

Wraps scipy's cKDTree but guarantees the same answers a brute-force scan
would give, including deterministic tie-breaking by smallest point index.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InputError

_TIE_SLACK = 1.0 + 1e-12


class KdTree3:
    """Balanced kd-tree over 3D points; immutable after construction."""

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise InputError("empty point set")
        if not np.isfinite(pts).all():
            raise InputError("points must be finite")
        self.points = pts
        self.points.setflags(write=False)
        self._tree = cKDTree(pts)

    def __len__(self):
        return len(self.points)

    def nearest(self, q) -> int:
        """Index of the nearest point to q (smallest index on ties)."""
        return self.knn(q, 1)[0]

    def knn(self, q, k: int) -> list:
        """Indices of the k nearest points, by (distance, index).

        Matches a linear scan sorted by squared distance with index
        tie-breaking; k is clamped to the point count.
        """
        q = np.asarray(q, dtype=float)
        k = min(int(k), len(self.points))
        d, _ = self._tree.query(q, k=k)
        dk = float(np.max(d)) if k > 1 else float(d)
        # Re-rank everything within the k-th distance so exact ties resolve
        # to the smallest index, as a scan would.
        cand = self._tree.query_ball_point(q, dk * _TIE_SLACK + 1e-300)
        cand = np.asarray(cand, dtype=int)
        diff = self.points[cand] - q
        d2 = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((cand, d2))
        return [int(cand[i]) for i in order[:k]]

    def query_radius(self, q, r: float) -> np.ndarray:
        """Sorted indices of points within distance r of q (inclusive)."""
        idx = self._tree.query_ball_point(np.asarray(q, dtype=float), float(r))
        return np.sort(np.asarray(idx, dtype=int))

    def query_batch(self, qs, k: int):
        """Plain cKDTree batch query (distances, indices); no tie ranking."""
        return self._tree.query(np.asarray(qs, dtype=float), k=k)

    @property
    def raw(self) -> cKDTree:
        return self._tree

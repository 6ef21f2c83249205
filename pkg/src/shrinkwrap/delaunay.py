"""3D Delaunay tetrahedralization, Voronoi-vertex extraction, farthest point
sampling, and power-diagram primitives.

The tetrahedralization itself is delegated to Qhull (scipy); everything
downstream consumes its combinatorics. Voronoi vertices of the input cloud
approximate the medial axis and are the candidate pool for interior helper
sites.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import Delaunay, HalfspaceIntersection, QhullError

from .constants import SLIVER_CIRCUMRADIUS_FACTOR
from .errors import DegenerateInputError, InputError
from .geom import KdTree3, Plane
from .sites import SiteSet, WeightedSite


@dataclass(frozen=True)
class TetComplex:
    points: np.ndarray
    tets: np.ndarray        # (m, 4) point indices
    neighbors: np.ndarray   # (m, 4) adjacent tet per facet, -1 on the hull

    @property
    def n_tets(self):
        return len(self.tets)


@dataclass(frozen=True)
class VoronoiVertexSet:
    points: np.ndarray      # (k, 3) retained circumcenters
    tet_index: np.ndarray   # generating tet per vertex
    skipped_slivers: int = 0


def delaunay3(points) -> TetComplex:
    """Delaunay tetrahedralization; deterministic for a fixed input order."""
    pts = np.ascontiguousarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateInputError("degenerate 3D input")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise DegenerateInputError("degenerate 3D input") from exc
    if tri.simplices.size == 0:
        raise DegenerateInputError("degenerate 3D input")
    return TetComplex(points=pts, tets=tri.simplices.copy(), neighbors=tri.neighbors.copy())


def tet_circumcenters(points, tets):
    """Circumcenters and circumradii of tetrahedra; NaN rows for slivers."""
    p0 = points[tets[:, 0]]
    rows = [points[tets[:, k]] - p0 for k in (1, 2, 3)]
    a = np.stack(rows, axis=1)
    b = 0.5 * np.stack([np.einsum("ij,ij->i", r, r) for r in rows], axis=1)
    centers = np.full((len(tets), 3), np.nan)
    ok = np.abs(np.linalg.det(a)) > 1e-300
    if ok.any():
        centers[ok] = np.linalg.solve(a[ok], b[ok][..., None])[..., 0] + p0[ok]
    radii = np.linalg.norm(centers - p0, axis=1)
    return centers, radii


def voronoi_vertices(complex: TetComplex) -> VoronoiVertexSet:
    """One circumcenter per finite tet, pruned of numeric junk.

    Sliver tets whose circumradius exceeds 1e3 x bbox diagonal are skipped
    (counted), and circumcenters outside the cloud's bounding sphere are
    discarded: they sit far from any useful medial structure.
    """
    pts = complex.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    centers, radii = tet_circumcenters(pts, complex.tets)
    bad = ~np.isfinite(radii) | (radii > SLIVER_CIRCUMRADIUS_FACTOR * diag)
    skipped = int(bad.sum())
    keep = ~bad
    centroid = pts.mean(axis=0)
    bound = np.linalg.norm(pts - centroid, axis=1).max()
    inside = np.linalg.norm(centers - centroid, axis=1) <= bound
    keep &= inside
    idx = np.nonzero(keep)[0]
    return VoronoiVertexSet(points=centers[idx], tet_index=idx, skipped_slivers=skipped)


def farthest_point_sampling(candidates, k: int, seed_index: int) -> list:
    """Greedy max-min sampling; deterministic, ties to the smallest index."""
    pts = np.asarray(candidates, dtype=float)
    n = len(pts)
    if n == 0:
        raise InputError("no candidates to sample")
    if not 0 <= seed_index < n:
        raise InputError("seed index out of range")
    if k >= n:
        if k > n:
            warnings.warn(
                f"requested {k} samples from {n} candidates; returning all",
                stacklevel=2,
            )
        return list(range(n))
    chosen = [int(seed_index)]
    diff = pts - pts[seed_index]
    dist = np.einsum("ij,ij->i", diff, diff)
    for _ in range(k - 1):
        nxt = int(np.argmax(dist))  # argmax takes the first max: smallest index
        chosen.append(nxt)
        diff = pts - pts[nxt]
        np.minimum(dist, np.einsum("ij,ij->i", diff, diff), out=dist)
    return chosen


def power_bisector(a: WeightedSite, b: WeightedSite) -> Plane:
    """Plane of equal power distance, keeping a's side.

    Kept half-space: 2(b-a).x <= |b|^2 - |a|^2 + (w_a - w_b). The weight
    difference is taken before anything else so that shifting all weights by
    an exactly representable constant reproduces the plane bit-for-bit.
    """
    pa = np.asarray(a.position, dtype=float)
    pb = np.asarray(b.position, dtype=float)
    if np.array_equal(pa, pb):
        raise DegenerateInputError("coincident sites")
    n = 2.0 * (pb - pa)
    dw = float(a.weight) - float(b.weight)
    off = (float(pb @ pb) - float(pa @ pa)) + dw
    return Plane(tuple(n), off, tag=(a.id, b.id))


def bisector_arrays(p_i, w_i, p_others, w_others):
    """Vectorized bisector planes of one site against many others.

    Returns (normals (k,3), offsets (k,)) with the same arithmetic as
    `power_bisector` so both paths agree bitwise.
    """
    n = 2.0 * (p_others - p_i)
    sq = np.einsum("ij,ij->i", p_others, p_others) - float(p_i @ p_i)
    off = sq + (float(w_i) - w_others)
    return n, off


def power_nearest(tree: KdTree3, positions, weights, queries):
    """Index of the minimum power-distance site for each query point.

    Ties break to the smallest site index, matching a linear scan of
    |x - p|^2 - w. Search widens until the Euclidean frontier proves no
    unseen site can win.
    """
    X = np.atleast_2d(np.asarray(queries, dtype=float))
    n = len(positions)
    m = len(X)
    w_max = float(weights.max()) if n else 0.0
    best = np.full(m, -1, dtype=np.int64)
    best_pow = np.full(m, np.inf)
    pending = np.arange(m)
    k = min(16, n)
    while len(pending):
        if k * 8 >= n:
            # Close to a full scan anyway; do it chunked and exactly.
            chunk = max(1, 4_000_000 // n)
            for s in range(0, len(pending), chunk):
                rows = pending[s : s + chunk]
                q = X[rows]
                d2 = (
                    np.einsum("ij,ij->i", q, q)[:, None]
                    - 2.0 * q @ positions.T
                    + np.einsum("ij,ij->i", positions, positions)[None, :]
                )
                pw = d2 - weights[None, :]
                pmin = pw.min(axis=1, keepdims=True)
                cand = np.where(pw == pmin, np.arange(n)[None, :], n)
                best[rows] = cand.min(axis=1)
                best_pow[rows] = pmin[:, 0]
            break
        d, idx = tree.query_batch(X[pending], k=k)
        d = d.reshape(len(pending), -1)
        idx = idx.reshape(len(pending), -1)
        diff = positions[idx] - X[pending][:, None, :]
        pw = np.einsum("ijk,ijk->ij", diff, diff) - weights[idx]
        pmin = pw.min(axis=1, keepdims=True)
        cand = np.where(pw == pmin, idx, n)
        best[pending] = cand.min(axis=1)
        best_pow[pending] = pmin[:, 0]
        frontier = d[:, -1]
        unresolved = frontier * frontier - w_max < pmin[:, 0]
        pending = pending[unresolved]
        k = min(n, k * 4)
    return best


def _chebyshev_interior(normals, offsets):
    """Strictly interior point of {x : N x <= o}, or None when (near) empty."""
    norms = np.linalg.norm(normals, axis=1)
    res = linprog(
        c=[0.0, 0.0, 0.0, -1.0],
        A_ub=np.hstack([normals, norms[:, None]]),
        b_ub=offsets,
        bounds=[(None, None)] * 3 + [(0, None)],
        method="highs",
    )
    if not res.success or res.x[3] <= 1e-14:
        return None
    return res.x[:3]


def candidate_neighbors(sites: SiteSet, i: int, tree: KdTree3, mesh_diag: float):
    """Superset of site i's true power-diagram neighbors.

    Grows a radius until the security condition holds: every vertex of the
    power cell computed from the in-radius candidates has a smaller power
    distance to i than any excluded site could achieve. The cell is clipped
    inside a bounding cube so unbounded cells terminate via the reach cap.
    """
    pos = sites.positions
    w = sites.weights
    n = len(sites)
    if n < 2:
        return np.empty(0, dtype=np.int64)
    p_i = pos[i]
    w_i = float(w[i])
    others = np.arange(n) != i
    w_max_other = float(w[others].max())
    reach_cap = 2.0 * mesh_diag + float(np.sqrt(max(w_max_other, 0.0)))

    d, _ = tree.query_batch(p_i, k=min(8, n))
    d = np.atleast_1d(d)
    nonzero = d[d > 0]
    r0 = float(nonzero.min()) if len(nonzero) else mesh_diag * 1e-3
    radius = max(4.0 * r0, 1e-12)

    def needed(reach):
        return reach + np.sqrt(max(reach * reach - w_i + w_max_other, 0.0))

    for _ in range(64):
        cand = tree.query_radius(p_i, radius)
        cand = cand[cand != i]
        if len(cand) == n - 1:
            return cand
        normals, offsets = bisector_arrays(p_i, w_i, pos[cand], w[cand])
        # Bounding cube at +- radius around the site keeps the region finite.
        cube_n = np.vstack([np.eye(3), -np.eye(3)])
        cube_o = np.concatenate([p_i + radius, -(p_i - radius)])
        normals_all = np.vstack([normals, cube_n])
        offsets_all = np.concatenate([offsets, cube_o])

        slack = normals_all @ p_i - offsets_all
        if (slack < -1e-12 * max(1.0, np.abs(offsets_all).max())).all():
            interior = p_i
        else:
            interior = _chebyshev_interior(normals_all, offsets_all)
        if interior is None:
            # Empty power cell: no true neighbors; current candidates suffice.
            return cand
        try:
            hs = HalfspaceIntersection(
                np.hstack([normals_all, -offsets_all[:, None]]), interior
            )
            verts = hs.intersections
        except QhullError:
            radius *= 2.0
            continue
        verts = verts[np.isfinite(verts).all(axis=1)]
        if len(verts) == 0:
            return cand
        reach = float(np.linalg.norm(verts - p_i, axis=1).max())
        on_cube = reach >= radius * (1.0 - 1e-9)
        if on_cube and radius < reach_cap:
            radius = min(2.0 * radius, max(reach_cap, radius * 2.0))
            continue
        reach = min(reach, reach_cap)
        r_needed = needed(reach)
        if radius >= r_needed:
            return cand[np.linalg.norm(pos[cand] - p_i, axis=1) <= r_needed]
        radius = r_needed * 1.0000001
    return np.nonzero(others)[0]

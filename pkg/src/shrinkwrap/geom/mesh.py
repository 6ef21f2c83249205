"""Indexed triangle meshes: validation, distance queries, sampling, winding.

The mesh is the package's only surface representation. Arrays are frozen at
construction; derived structures (edge tables, adjacency, normals) are built
lazily and cached, so instances are safe to share across readers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InputError

_FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class ManifoldReport:
    non_manifold_edge_count: int
    non_manifold_vertex_count: int
    boundary_edge_count: int
    is_watertight_manifold: bool
    euler_characteristic: int

    def __str__(self):
        status = "watertight manifold" if self.is_watertight_manifold else "defective"
        return (
            f"{status}: non-manifold edges={self.non_manifold_edge_count} "
            f"non-manifold vertices={self.non_manifold_vertex_count} "
            f"boundary edges={self.boundary_edge_count} "
            f"euler characteristic={self.euler_characteristic}"
        )


class IndexedTriMesh:
    """Immutable triangle mesh: float64 vertices, int32 face index triples."""

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=float)
        f = np.ascontiguousarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InputError("vertices must be an (n, 3) array")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise InputError("faces must be an (m, 3) array")
        if not np.isfinite(v).all():
            raise InputError("vertex coordinates must be finite")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise InputError("face index out of range")
        if len(f) and (
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        ).any():
            raise InputError("degenerate face with repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @cached_property
    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def face_corners(self):
        f = self.faces
        v = self.vertices
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    @cached_property
    def face_cross(self):
        a, b, c = self.face_corners
        return np.cross(b - a, c - a)

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_cross, axis=1)

    @cached_property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def face_normals(self):
        cr = self.face_cross
        n = np.linalg.norm(cr, axis=1)
        n = np.where(n == 0.0, 1.0, n)
        return cr / n[:, None]

    @cached_property
    def edge_table(self):
        """dict (min_vi, max_vi) -> list of incident face indices."""
        table = {}
        for fi, (a, b, c) in enumerate(self.faces):
            for u, w in ((a, b), (b, c), (c, a)):
                key = (u, w) if u < w else (w, u)
                table.setdefault(key, []).append(fi)
        return table

    @cached_property
    def face_neighbors(self):
        """(m, 3) neighbor face across edge k = (f[k], f[k+1]); -1 if open."""
        nb = np.full((self.n_faces, 3), -1, dtype=np.int64)
        table = self.edge_table
        for fi, (a, b, c) in enumerate(self.faces):
            tri = (a, b, c)
            for k in range(3):
                u, w = tri[k], tri[(k + 1) % 3]
                key = (u, w) if u < w else (w, u)
                inc = table[key]
                if len(inc) == 2:
                    nb[fi, k] = inc[0] if inc[1] == fi else inc[1]
        return nb

    @cached_property
    def vertex_faces(self):
        """list: vertex index -> list of incident faces."""
        vf = [[] for _ in range(self.n_vertices)]
        for fi, face in enumerate(self.faces):
            for vi in face:
                vf[vi].append(fi)
        return vf

    def compacted(self) -> "IndexedTriMesh":
        """Copy without unreferenced vertices."""
        used = np.unique(self.faces)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return IndexedTriMesh(self.vertices[used], remap[self.faces])

    def transformed(self, scale: float, offset) -> "IndexedTriMesh":
        return IndexedTriMesh(self.vertices * scale + np.asarray(offset, dtype=float), self.faces)


def mesh_validate(mesh: IndexedTriMesh) -> ManifoldReport:
    """Edge/vertex incidence analysis.

    A vertex is non-manifold when its incident faces split into more than one
    edge-connected fan. Watertight manifold means every edge has exactly two
    incident faces and both defect counts are zero.
    """
    table = mesh.edge_table
    boundary = sum(1 for inc in table.values() if len(inc) == 1)
    nonmanifold_e = sum(1 for inc in table.values() if len(inc) > 2)

    nonmanifold_v = 0
    for vi, inc_faces in enumerate(mesh.vertex_faces):
        if len(inc_faces) <= 1:
            continue
        # Group the incident faces by shared edges through vi.
        local_edges = {}
        for fi in inc_faces:
            a, b, c = mesh.faces[fi]
            others = [w for w in (a, b, c) if w != vi]
            for w in others:
                local_edges.setdefault(w, []).append(fi)
        parent = {fi: fi for fi in inc_faces}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for group in local_edges.values():
            for fi in group[1:]:
                ra, rb = find(group[0]), find(fi)
                if ra != rb:
                    parent[ra] = rb
        roots = {find(fi) for fi in inc_faces}
        if len(roots) > 1:
            nonmanifold_v += 1

    every_edge_two = bool(table) and all(len(inc) == 2 for inc in table.values())
    watertight = (
        boundary == 0 and nonmanifold_e == 0 and nonmanifold_v == 0 and every_edge_two
    )
    euler = mesh.n_vertices - len(table) + mesh.n_faces
    return ManifoldReport(
        non_manifold_edge_count=nonmanifold_e,
        non_manifold_vertex_count=nonmanifold_v,
        boundary_edge_count=boundary,
        is_watertight_manifold=watertight,
        euler_characteristic=euler,
    )


def closest_point_triangles(p, a, b, c):
    """Closest points on triangles (a, b, c) to paired query points p.

    All arguments are (n, 3); returns (points (n, 3), squared distances (n,)).
    Vectorized Voronoi-region case analysis.
    """
    p = np.asarray(p, dtype=float)
    ab = b - a
    ac = c - a
    ap = p - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom

    t_ab = np.nan_to_num(t_ab, nan=0.0)
    t_ac = np.nan_to_num(t_ac, nan=0.0)
    t_bc = np.nan_to_num(t_bc, nan=0.0)
    v_in = np.nan_to_num(v_in, nan=1.0 / 3.0)
    w_in = np.nan_to_num(w_in, nan=1.0 / 3.0)

    m_a = (d1 <= 0) & (d2 <= 0)
    m_b = (d3 >= 0) & (d4 <= d3)
    m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    m_c = (d6 >= 0) & (d5 <= d6)
    m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    m_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)

    q = a + v_in[:, None] * ab + w_in[:, None] * ac
    q = np.where(m_bc[:, None], b + t_bc[:, None] * (c - b), q)
    q = np.where(m_ac[:, None], a + t_ac[:, None] * ac, q)
    q = np.where(m_c[:, None], c, q)
    q = np.where(m_ab[:, None], a + t_ab[:, None] * ab, q)
    q = np.where(m_b[:, None], b, q)
    q = np.where(m_a[:, None], a, q)

    diff = p - q
    return q, np.einsum("ij,ij->i", diff, diff)


class MeshDistanceIndex:
    """Exact accelerated closest-point queries against a triangle mesh.

    A kd-tree over face centroids prunes candidates: a face can only beat the
    current best if its centroid lies within best + its bounding radius, so
    scanning everything inside that ball reproduces the brute-force minimum.
    """

    def __init__(self, mesh: IndexedTriMesh):
        if mesh.n_faces == 0:
            raise InputError("mesh has no faces")
        self.mesh = mesh
        a, b, c = mesh.face_corners
        self.centroids = (a + b + c) / 3.0
        r2 = np.maximum(
            np.einsum("ij,ij->i", a - self.centroids, a - self.centroids),
            np.maximum(
                np.einsum("ij,ij->i", b - self.centroids, b - self.centroids),
                np.einsum("ij,ij->i", c - self.centroids, c - self.centroids),
            ),
        )
        self.radii = np.sqrt(r2)
        self.max_radius = float(self.radii.max())
        self._tree = cKDTree(self.centroids)

    def query(self, points):
        """Closest surface points for a batch of queries.

        Returns (closest (n,3), face indices (n,), squared distances (n,)).
        Ties on distance resolve to the smallest face index.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        mesh = self.mesh
        k0 = min(8, mesh.n_faces)
        _, seed = self._tree.query(pts, k=k0)
        seed = seed.reshape(n, -1)

        best_q = np.zeros((n, 3))
        best_d2 = np.full(n, np.inf)
        best_f = np.full(n, -1, dtype=np.int64)
        va, vb, vc = mesh.face_corners

        flat_f = seed.ravel()
        flat_p = np.repeat(pts, seed.shape[1], axis=0)
        q, d2 = closest_point_triangles(flat_p, va[flat_f], vb[flat_f], vc[flat_f])
        q = q.reshape(n, -1, 3)
        d2 = d2.reshape(n, -1)
        fidx = seed
        pick = np.lexsort((fidx, d2), axis=-1)[:, 0]
        rows = np.arange(n)
        best_q = q[rows, pick]
        best_d2 = d2[rows, pick]
        best_f = fidx[rows, pick]

        # Expand to every face whose bounding ball can undercut the bound.
        ub = np.sqrt(best_d2)
        balls = self._tree.query_ball_point(pts, ub + self.max_radius + 1e-300)
        for i in range(n):
            cand = np.asarray(balls[i], dtype=np.int64)
            if len(cand) == 0:
                continue
            near = cand[
                np.linalg.norm(self.centroids[cand] - pts[i], axis=1)
                <= ub[i] + self.radii[cand]
            ]
            if len(near) == 0:
                continue
            q, d2 = closest_point_triangles(
                np.broadcast_to(pts[i], (len(near), 3)), va[near], vb[near], vc[near]
            )
            order = np.lexsort((near, d2))
            j = order[0]
            if d2[j] < best_d2[i] or (d2[j] == best_d2[i] and near[j] < best_f[i]):
                best_d2[i] = d2[j]
                best_q[i] = q[j]
                best_f[i] = near[j]
        return best_q, best_f, best_d2


def closest_point_on_mesh(mesh: IndexedTriMesh, q):
    """Globally nearest surface point to q: (point, face index, squared dist)."""
    index = MeshDistanceIndex(mesh)
    pts, faces, d2 = index.query(np.asarray(q, dtype=float)[None, :])
    return pts[0], int(faces[0]), float(d2[0])


def sample_surface(mesh: IndexedTriMesh, count: int, rng):
    """Area-uniform surface samples: (points (count,3), face indices)."""
    areas = mesh.face_areas
    total = areas.sum()
    if total <= 0:
        raise InputError("mesh has zero surface area")
    fi = rng.choice(mesh.n_faces, size=count, p=areas / total)
    a, b, c = mesh.face_corners
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    u = 1.0 - r1
    v = r1 * (1.0 - r2)
    w = r1 * r2
    pts = u[:, None] * a[fi] + v[:, None] * b[fi] + w[:, None] * c[fi]
    return pts, fi


def mesh_winding_number(mesh: IndexedTriMesh, points, chunk: int = 2_000_000):
    """Generalized winding number of the mesh around each query point.

    Signed solid-angle sum; +1 inside for an outward-oriented closed mesh.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    va, vb, vc = mesh.face_corners
    out = np.zeros(len(pts))
    if mesh.n_faces == 0:
        return out
    per = max(1, chunk // mesh.n_faces)
    for s in range(0, len(pts), per):
        block = pts[s : s + per]
        a = va[None, :, :] - block[:, None, :]
        b = vb[None, :, :] - block[:, None, :]
        c = vc[None, :, :] - block[:, None, :]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        det = np.einsum("nij,nij->ni", a, np.cross(b, c))
        denom = (
            la * lb * lc
            + np.einsum("nij,nij->ni", a, b) * lc
            + np.einsum("nij,nij->ni", b, c) * la
            + np.einsum("nij,nij->ni", c, a) * lb
        )
        omega = 2.0 * np.arctan2(det, denom)
        out[s : s + per] = omega.sum(axis=1) / _FOUR_PI
    return out

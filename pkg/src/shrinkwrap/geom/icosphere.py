"""Icosphere construction and the enclosing initial surface."""

from __future__ import annotations

import numpy as np

from ..constants import BOUNDING_SPHERE_MARGIN
from ..errors import DegenerateInputError, InputError
from .mesh import IndexedTriMesh, mesh_winding_number


def _icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts[0])
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int64,
    )
    return verts, faces


def icosphere(subdiv_level: int) -> IndexedTriMesh:
    """Unit icosphere, outward-oriented; level 0 is the bare icosahedron."""
    if subdiv_level < 0:
        raise InputError("subdivision level must be >= 0")
    verts, faces = _icosahedron()
    verts = list(map(tuple, verts))
    for _ in range(subdiv_level):
        midpoint = {}
        new_faces = []

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key in midpoint:
                return midpoint[key]
            p = np.asarray(verts[i]) + np.asarray(verts[j])
            p /= np.linalg.norm(p)
            verts.append(tuple(p))
            midpoint[key] = len(verts) - 1
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.asarray(new_faces, dtype=np.int64)
    mesh = IndexedTriMesh(np.asarray(verts, dtype=float), faces)
    # Outward orientation: face normals align with radial direction.
    a, b, c = mesh.face_corners
    if (np.einsum("ij,ij->i", mesh.face_cross, (a + b + c)) <= 0).any():
        mesh = IndexedTriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def bounding_sphere_mesh(points, subdiv_level: int) -> IndexedTriMesh:
    """Icosphere strictly enclosing the cloud, used as the initial surface.

    Centered at the centroid with a 1.25x radius margin so no input point
    starts on the surface.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateInputError("degenerate input")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    s = np.linalg.svd(centered, compute_uv=False)
    if s[2] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateInputError("degenerate input")
    radius = BOUNDING_SPHERE_MARGIN * float(np.linalg.norm(centered, axis=1).max())
    sphere = icosphere(subdiv_level)
    return IndexedTriMesh(sphere.vertices * radius + centroid, sphere.faces)


def enclosing_radius(mesh: IndexedTriMesh, points) -> np.ndarray:
    """Winding numbers of points w.r.t. the mesh (helper for containment tests)."""
    return mesh_winding_number(mesh, points)

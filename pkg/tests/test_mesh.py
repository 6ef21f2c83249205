import numpy as np
import pytest

from shrinkwrap.errors import DegenerateInputError, InputError
from shrinkwrap.geom import (
    IndexedTriMesh,
    MeshDistanceIndex,
    bounding_sphere_mesh,
    closest_point_on_mesh,
    icosphere,
    mesh_validate,
    mesh_winding_number,
    sample_surface,
)
from shrinkwrap.geom.mesh import closest_point_triangles


def brute_force_closest(mesh, q):
    a, b, c = mesh.face_corners
    n = mesh.n_faces
    pts, d2 = closest_point_triangles(np.broadcast_to(q, (n, 3)), a, b, c)
    order = np.lexsort((np.arange(n), d2))
    j = order[0]
    return pts[j], j, d2[j]


def test_mesh_rejects_bad_faces():
    with pytest.raises(InputError):
        IndexedTriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
    with pytest.raises(InputError):
        IndexedTriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])


def test_validate_icosphere_watertight():
    mesh = icosphere(2)
    rep = mesh_validate(mesh)
    assert rep.is_watertight_manifold
    assert rep.non_manifold_edge_count == 0
    assert rep.non_manifold_vertex_count == 0
    assert rep.boundary_edge_count == 0
    assert rep.euler_characteristic == 2


def test_validate_single_triangle():
    mesh = IndexedTriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    rep = mesh_validate(mesh)
    assert rep.boundary_edge_count == 3
    assert not rep.is_watertight_manifold


def test_validate_bowtie_vertex():
    # Two triangles sharing exactly one vertex with disjoint fans.
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
    faces = [[0, 1, 2], [0, 3, 4]]
    rep = mesh_validate(IndexedTriMesh(verts, faces))
    assert rep.non_manifold_vertex_count == 1


def test_validate_three_faces_on_edge():
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]]
    faces = [[0, 1, 2], [0, 1, 3], [0, 1, 4]]
    rep = mesh_validate(IndexedTriMesh(verts, faces))
    assert rep.non_manifold_edge_count == 1


def test_closest_point_at_vertex():
    mesh = icosphere(1)
    v0 = mesh.vertices[0]
    q, face, d2 = closest_point_on_mesh(mesh, v0)
    assert d2 == pytest.approx(0.0, abs=1e-24)
    assert np.allclose(q, v0)
    assert 0 in mesh.faces[face]


def test_closest_point_axis_projection():
    # Unit square in the z=0 plane, query straight above the origin corner.
    verts = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    faces = [[0, 1, 2], [0, 2, 3]]
    mesh = IndexedTriMesh(verts, faces)
    q, _, d2 = closest_point_on_mesh(mesh, np.array([0.0, 0.0, 2.0]))
    assert np.allclose(q, [0, 0, 0], atol=1e-14)
    assert d2 == pytest.approx(4.0, rel=1e-14)


def test_closest_point_matches_brute_force():
    rng = np.random.default_rng(7)
    mesh = icosphere(2)  # 320 faces
    index = MeshDistanceIndex(mesh)
    queries = rng.normal(scale=1.5, size=(200, 3))
    got_q, got_f, got_d2 = index.query(queries)
    for i, q in enumerate(queries):
        _, bf_f, bf_d2 = brute_force_closest(mesh, q)
        assert got_d2[i] <= bf_d2 * (1 + 1e-12) + 1e-300
        assert got_d2[i] >= bf_d2 * (1 - 1e-12) - 1e-300
        assert got_f[i] == bf_f


def test_icosahedron_counts():
    mesh = icosphere(0)
    assert mesh.n_vertices == 12
    assert mesh.n_faces == 20


def test_bounding_sphere_encloses_points():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(200, 3)) * np.array([2.0, 1.0, 0.5]) + 5.0
    mesh = bounding_sphere_mesh(pts, 2)
    rep = mesh_validate(mesh)
    assert rep.is_watertight_manifold
    assert rep.euler_characteristic == 2
    w = mesh_winding_number(mesh, pts)
    assert np.all(np.abs(w - 1.0) < 1e-6)


def test_bounding_sphere_rejects_coplanar():
    pts = np.random.default_rng(0).normal(size=(30, 3))
    pts[:, 2] = 0.0
    with pytest.raises(DegenerateInputError):
        bounding_sphere_mesh(pts, 1)


def test_winding_inside_outside():
    mesh = icosphere(2)
    w = mesh_winding_number(mesh, [[0, 0, 0], [3, 0, 0]])
    assert w[0] == pytest.approx(1.0, abs=1e-9)
    assert w[1] == pytest.approx(0.0, abs=1e-9)


def test_sample_surface_area_weighted():
    mesh = icosphere(1)
    rng = np.random.default_rng(0)
    pts, fi = sample_surface(mesh, 5000, rng)
    assert pts.shape == (5000, 3)
    r = np.linalg.norm(pts, axis=1)
    # Samples lie on chords of the unit sphere.
    assert np.all(r <= 1.0 + 1e-12)
    assert np.all(r >= 0.9)


def test_compacted_drops_unreferenced():
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [9, 9, 9]]
    mesh = IndexedTriMesh(verts, [[0, 1, 2]])
    slim = mesh.compacted()
    assert slim.n_vertices == 3
    assert mesh_validate(slim).boundary_edge_count == 3

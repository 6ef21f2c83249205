import numpy as np
import pytest

from shrinkwrap.geom import mesh_validate, mesh_winding_number
from shrinkwrap.shapes import (
    bowl_mesh,
    box_mesh,
    delete_patch,
    flask_mesh,
    sample_cloud,
    sphere_cloud,
    thin_plate_mesh,
    torus_mesh,
)


@pytest.mark.parametrize(
    "mesh,euler",
    [
        (box_mesh(segments=2), 2),
        (thin_plate_mesh(4, 4, 0.05), 2),
        (torus_mesh(), 0),
        (flask_mesh(), 2),
        (bowl_mesh(), 2),
    ],
    ids=["box", "plate", "torus", "flask", "bowl"],
)
def test_generators_are_watertight(mesh, euler):
    rep = mesh_validate(mesh)
    assert rep.is_watertight_manifold
    assert rep.euler_characteristic == euler


def test_generators_are_outward_oriented():
    w = mesh_winding_number(box_mesh(), [[0, 0, 0]])[0]
    assert w == pytest.approx(1.0, abs=1e-6)
    w = mesh_winding_number(flask_mesh(), [[0.5, 0, 0.05]])[0]
    assert w == pytest.approx(1.0, abs=1e-4)
    # Cavity interior is outside the solid.
    w = mesh_winding_number(flask_mesh(), [[0.0, 0, 1.0]])[0]
    assert w == pytest.approx(0.0, abs=1e-4)


def test_sample_cloud_on_surface():
    mesh = box_mesh()
    pts = sample_cloud(mesh, 500, seed=1)
    assert np.abs(pts).max() <= 0.5 + 1e-12


def test_sphere_cloud_radius():
    pts = sphere_cloud(300, seed=2, radius=2.0)
    assert np.allclose(np.linalg.norm(pts, axis=1), 2.0)


def test_delete_patch_removes_ball():
    pts = sphere_cloud(2000, seed=3)
    kept = delete_patch(pts, [0, 0, 1.0], 0.4)
    assert len(kept) < len(pts)
    assert np.linalg.norm(kept - np.array([0, 0, 1.0]), axis=1).min() > 0.4

"""Procedural test geometry: closed meshes and point clouds.

Everything here is deterministic given the RNG seed. Meshes come out
watertight and outward-oriented; clouds are area-uniform surface samples of
those meshes unless stated otherwise.
"""

from __future__ import annotations

import numpy as np

from .geom import IndexedTriMesh, icosphere, sample_surface


def _oriented(verts, faces):
    mesh = IndexedTriMesh(verts, faces)
    v0 = mesh.vertices[mesh.faces[:, 0]]
    v1 = mesh.vertices[mesh.faces[:, 1]]
    v2 = mesh.vertices[mesh.faces[:, 2]]
    vol = np.einsum("ij,ij->i", v0, np.cross(v1, v2)).sum()
    if vol < 0:
        mesh = IndexedTriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def sphere_mesh(subdiv=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    base = icosphere(subdiv)
    return IndexedTriMesh(base.vertices * radius + np.asarray(center, dtype=float), base.faces)


def box_mesh(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), segments=1):
    """Axis-aligned box with each side split into segments x segments cells."""
    sx, sy, sz = (float(s) / 2.0 for s in size)
    n = int(segments)
    verts = []
    index = {}

    def vid(p):
        key = (round(p[0], 12), round(p[1], 12), round(p[2], 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    faces = []
    axes = [
        (0, 1, 2, sx, sy, sz), (0, 1, 2, sx, sy, -sz),
        (1, 2, 0, sy, sz, sx), (1, 2, 0, sy, sz, -sx),
        (2, 0, 1, sz, sx, sy), (2, 0, 1, sz, sx, -sy),
    ]
    for au, av, an, hu, hv, hn in axes:
        us = np.linspace(-hu, hu, n + 1)
        vs = np.linspace(-hv, hv, n + 1)
        grid = {}
        for i, u in enumerate(us):
            for j, v in enumerate(vs):
                p = [0.0, 0.0, 0.0]
                p[au], p[av], p[an] = u, v, hn
                grid[i, j] = vid(tuple(p))
        flip = hn < 0
        for i in range(n):
            for j in range(n):
                a, b = grid[i, j], grid[i + 1, j]
                c, d = grid[i + 1, j + 1], grid[i, j + 1]
                if flip:
                    faces += [(a, c, b), (a, d, c)]
                else:
                    faces += [(a, b, c), (a, c, d)]
    verts = np.asarray(verts) + np.asarray(center, dtype=float)
    return _oriented(verts, np.asarray(faces))


def thin_plate_mesh(nx=8, ny=8, half_thickness=0.05, size=(1.0, 1.0)):
    """Closed slab: two parallel grids joined by a rim band."""
    sx, sy = float(size[0]) / 2.0, float(size[1]) / 2.0
    xs = np.linspace(-sx, sx, nx + 1)
    ys = np.linspace(-sy, sy, ny + 1)
    h = float(half_thickness)
    top = [(x, y, h) for y in ys for x in xs]
    bot = [(x, y, -h) for y in ys for x in xs]
    verts = np.asarray(top + bot)
    off = len(top)

    def T(i, j):
        return j * (nx + 1) + i

    def B(i, j):
        return off + j * (nx + 1) + i

    faces = []
    for j in range(ny):
        for i in range(nx):
            faces += [(T(i, j), T(i + 1, j), T(i + 1, j + 1)),
                      (T(i, j), T(i + 1, j + 1), T(i, j + 1))]
            faces += [(B(i, j), B(i + 1, j + 1), B(i + 1, j)),
                      (B(i, j), B(i, j + 1), B(i + 1, j + 1))]
    # Rim: CCW boundary loop of the top grid, walls point outward.
    loop = (
        [T(i, 0) for i in range(nx)]
        + [T(nx, j) for j in range(ny)]
        + [T(i, ny) for i in range(nx, 0, -1)]
        + [T(0, j) for j in range(ny, 0, -1)]
    )
    for k in range(len(loop)):
        ta = loop[k]
        tb = loop[(k + 1) % len(loop)]
        ba, bb = ta + off, tb + off
        faces += [(ta, ba, bb), (ta, bb, tb)]
    return _oriented(verts, np.asarray(faces))


def lathe_mesh(profile_rz, n_seg=48):
    """Surface of revolution around the z axis.

    ``profile_rz`` is an (r, z) polyline; endpoints with r == 0 become poles.
    Intermediate r == 0 points are not supported.
    """
    prof = [(float(r), float(z)) for r, z in profile_rz]
    if prof[0][0] != 0.0 or prof[-1][0] != 0.0:
        raise ValueError("profile must start and end on the axis (r == 0)")
    angles = np.linspace(0.0, 2.0 * np.pi, n_seg, endpoint=False)
    cos, sin = np.cos(angles), np.sin(angles)
    verts = [(0.0, 0.0, prof[0][1])]
    rings = []
    for r, z in prof[1:-1]:
        if r <= 0:
            raise ValueError("interior profile points must have r > 0")
        start = len(verts)
        verts.extend(zip(r * cos, r * sin, np.full(n_seg, z)))
        rings.append(start)
    verts.append((0.0, 0.0, prof[-1][1]))
    last = len(verts) - 1

    faces = []
    for s in range(n_seg):
        t = (s + 1) % n_seg
        faces.append((0, rings[0] + s, rings[0] + t))
    for a, b in zip(rings[:-1], rings[1:]):
        for s in range(n_seg):
            t = (s + 1) % n_seg
            faces += [(a + s, b + s, b + t), (a + s, b + t, a + t)]
    for s in range(n_seg):
        t = (s + 1) % n_seg
        faces.append((last, rings[-1] + t, rings[-1] + s))
    return _oriented(np.asarray(verts), np.asarray(faces))


def torus_mesh(major=1.0, minor=0.35, nu=48, nv=24):
    us = np.linspace(0, 2 * np.pi, nu, endpoint=False)
    vs = np.linspace(0, 2 * np.pi, nv, endpoint=False)
    verts = []
    for u in us:
        for v in vs:
            r = major + minor * np.cos(v)
            verts.append((r * np.cos(u), r * np.sin(u), minor * np.sin(v)))
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            faces += [(a, b, c), (a, c, d)]
    return _oriented(np.asarray(verts), np.asarray(faces))


def flask_mesh(
    outer_radius=0.6,
    height=1.6,
    wall=0.12,
    cavity_depth=1.2,
    n_seg=40,
    n_axial=10,
):
    """Vessel with a deep blind cavity opening at the top.

    The surface is closed and genus 0, but the cavity floor is far from the
    mouth, which is exactly the geometry that starves surface evolution.
    """
    ro = float(outer_radius)
    ri = ro - float(wall)
    h = float(height)
    zc = h - float(cavity_depth)
    if not (0 < ri < ro and 0 < zc < h):
        raise ValueError("inconsistent flask dimensions")

    def seg(p, q, n):
        return [
            (p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t)
            for t in np.linspace(0, 1, n, endpoint=False)
        ]

    prof = (
        seg((0.0, 0.0), (ro, 0.0), n_axial // 2 + 1)
        + seg((ro, 0.0), (ro, h), n_axial)
        + seg((ro, h), (ri, h), 2)
        + seg((ri, h), (ri, zc), n_axial)
        + seg((ri, zc), (0.0, zc), n_axial // 2 + 1)
        + [(0.0, zc)]
    )
    return lathe_mesh(prof, n_seg=n_seg)


def bowl_mesh(radius=1.0, wall=0.15, depth=0.9, n_seg=40):
    """Open-top hemispherical shell (closed solid surface)."""
    r_in = radius - wall
    prof = [(0.0, 0.0)]
    for a in np.linspace(-np.pi / 2, 0.0, 12)[1:]:
        prof.append((radius * np.cos(a), radius * np.sin(a) + radius))
    for a in np.linspace(0.0, -np.pi / 2, 12)[:-1]:
        prof.append((r_in * np.cos(a), r_in * np.sin(a) + radius + (radius - depth - wall)))
    prof.append((0.0, radius - depth))
    return lathe_mesh([(r, z) for r, z in prof], n_seg=n_seg)


def sample_cloud(mesh: IndexedTriMesh, count: int, seed: int, noise: float = 0.0):
    """Area-uniform cloud from a mesh, optionally with Gaussian noise."""
    rng = np.random.default_rng(seed)
    pts, _ = sample_surface(mesh, count, rng)
    if noise > 0:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return pts


def sphere_cloud(count: int, seed: int, radius=1.0, noise: float = 0.0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * radius
    if noise > 0:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return pts


def delete_patch(points, center, radius):
    """Remove all points within a ball: simulates missing data."""
    pts = np.asarray(points)
    keep = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1) > radius
    return pts[keep]

"""Planes, convex planar polygons, and half-space clipping.

Polygons are stored as an ordered CCW vertex loop together with one label per
edge recording which cutting plane (or original edge) produced it. Clipping a
polygon keeps labels aligned, which is what lets the power-diagram code
recover cell adjacency and triple points combinatorially.

The inner clip kernel works on plain Python lists of coordinate tuples: it is
called once per (triangle, cell) fragment in the hot path and plain floats
beat small numpy arrays there by a wide margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInputError


@dataclass(frozen=True)
class Plane:
    """Half-space carrier: keeps {x : normal . x <= offset}."""

    normal: tuple
    offset: float
    tag: object = None

    def __post_init__(self):
        n = tuple(float(c) for c in self.normal)
        if n == (0.0, 0.0, 0.0):
            raise DegenerateInputError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def signed(self, x) -> float:
        """normal . x - offset; nonpositive on the kept side."""
        n = self.normal
        return n[0] * x[0] + n[1] * x[1] + n[2] * x[2] - self.offset

    def flipped(self) -> "Plane":
        n = self.normal
        return Plane((-n[0], -n[1], -n[2]), -self.offset, self.tag)


class ConvexPolygon:
    """Planar convex polygon with per-edge provenance labels.

    ``labels[k]`` belongs to the directed edge ``verts[k] -> verts[(k+1) % m]``.
    """

    __slots__ = ("verts", "labels")

    def __init__(self, verts, labels=None):
        verts = [tuple(map(float, v)) for v in verts]
        if len(verts) < 3:
            raise DegenerateInputError("polygon needs at least 3 vertices")
        if labels is None:
            labels = [None] * len(verts)
        if len(labels) != len(verts):
            raise ValueError("one label per edge required")
        self.verts = verts
        self.labels = list(labels)

    def __len__(self):
        return len(self.verts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.verts, dtype=float)

    @property
    def area(self) -> float:
        return polygon_area(self.verts)

    def normal(self) -> np.ndarray:
        """Unit normal implied by the CCW vertex order."""
        n = _loop_normal(self.verts)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise DegenerateInputError("degenerate polygon has no normal")
        return n / norm

    def centroid(self) -> np.ndarray:
        v = self.as_array()
        return v.mean(axis=0)


def _loop_normal(verts) -> np.ndarray:
    acc = np.zeros(3)
    m = len(verts)
    for k in range(m):
        a = verts[k]
        b = verts[(k + 1) % m]
        acc[0] += a[1] * b[2] - a[2] * b[1]
        acc[1] += a[2] * b[0] - a[0] * b[2]
        acc[2] += a[0] * b[1] - a[1] * b[0]
    return 0.5 * acc


def polygon_area(verts) -> float:
    """Area of a planar polygon given as a vertex loop."""
    return float(np.linalg.norm(_loop_normal(verts)))


def clip_loop(verts, labels, nx, ny, nz, off, new_label):
    """Clip a convex vertex loop by the half-space n.x <= off.

    Returns ``(verts, labels)`` for the kept piece or ``None`` when nothing
    with positive extent remains. Cut edges inherit the original edge label;
    the closing edge along the plane receives ``new_label``.
    """
    m = len(verts)
    d = [nx * v[0] + ny * v[1] + nz * v[2] - off for v in verts]
    all_in = True
    any_in = False
    for dk in d:
        if dk > 0.0:
            all_in = False
        else:
            any_in = True
    if all_in:
        return verts, labels
    if not any_in:
        return None

    out_v = []
    out_l = []
    for k in range(m):
        a = verts[k]
        la = labels[k]
        j = k + 1
        if j == m:
            j = 0
        b = verts[j]
        da = d[k]
        db = d[j]
        if da <= 0.0:
            out_v.append(a)
            if db > 0.0:
                t = da / (da - db)
                p = (
                    a[0] + t * (b[0] - a[0]),
                    a[1] + t * (b[1] - a[1]),
                    a[2] + t * (b[2] - a[2]),
                )
                out_l.append(la)
                out_v.append(p)
                out_l.append(new_label)
            else:
                out_l.append(la)
        elif db <= 0.0:
            t = da / (da - db)
            p = (
                a[0] + t * (b[0] - a[0]),
                a[1] + t * (b[1] - a[1]),
                a[2] + t * (b[2] - a[2]),
            )
            out_v.append(p)
            out_l.append(la)

    # Exact duplicates appear when the plane passes through a vertex.
    cleaned_v = []
    cleaned_l = []
    for k, v in enumerate(out_v):
        j = k + 1
        if j == len(out_v):
            j = 0
        if v == out_v[j]:
            continue
        cleaned_v.append(v)
        cleaned_l.append(out_l[k])
    if len(cleaned_v) < 3:
        return None
    return cleaned_v, cleaned_l


def clip_polygon_halfspace(poly: ConvexPolygon, h: Plane):
    """Intersect ``poly`` with the kept half-space of ``h``.

    Returns a new ConvexPolygon, or ``None`` when the polygon is entirely
    clipped away (an empty result is not an error). New edges created along
    the plane carry ``h.tag`` when set, else the plane itself.
    """
    label = h.tag if h.tag is not None else h
    n = h.normal
    res = clip_loop(poly.verts, poly.labels, n[0], n[1], n[2], h.offset, label)
    if res is None:
        return None
    verts, labels = res
    if verts is poly.verts:
        return poly
    out = ConvexPolygon.__new__(ConvexPolygon)
    out.verts = verts
    out.labels = labels
    return out

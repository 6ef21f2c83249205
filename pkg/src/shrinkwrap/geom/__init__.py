from .polygon import Plane, ConvexPolygon, clip_polygon_halfspace, polygon_area
from .kdtree import KdTree3
from .mesh import (
    IndexedTriMesh,
    ManifoldReport,
    MeshDistanceIndex,
    closest_point_on_mesh,
    mesh_validate,
    mesh_winding_number,
    sample_surface,
)
from .icosphere import icosphere, bounding_sphere_mesh

__all__ = [
    "Plane",
    "ConvexPolygon",
    "clip_polygon_halfspace",
    "polygon_area",
    "KdTree3",
    "IndexedTriMesh",
    "ManifoldReport",
    "MeshDistanceIndex",
    "closest_point_on_mesh",
    "mesh_validate",
    "mesh_winding_number",
    "sample_surface",
    "icosphere",
    "bounding_sphere_mesh",
]

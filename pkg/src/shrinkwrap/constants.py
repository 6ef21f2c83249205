"""Global numeric tolerances, defined in one place.

All tolerances are expressed as factors of the bounding-box diagonal of the
data they are applied to, so that every stage of the pipeline is scale-free
(the CLI additionally normalizes inputs into the unit box before running).
"""

# Geometric classification epsilon (coplanarity, duplicate points, clipping
# slivers). Absolute epsilon = GEOM_EPS_FACTOR * bbox_diagonal.
GEOM_EPS_FACTOR = 1e-9

# Magnitude of random perturbations applied to break exact degeneracies.
PERTURB_FACTOR = 1e-6

# Vertex welding radius used when gluing power-cell fragments back into a
# complex. Must sit far above float noise (~1e-15) and far below feature size.
WELD_FACTOR = 1e-7

# Circumcenters farther than this many bbox diagonals from a tetrahedron are
# treated as sliver artifacts and skipped.
SLIVER_CIRCUMRADIUS_FACTOR = 1e3

# Margin applied to the enclosing sphere radius of the initial guiding surface.
BOUNDING_SPHERE_MARGIN = 1.25

# Default icosphere subdivision for the initial guiding surface (642 vertices).
DEFAULT_SPHERE_SUBDIV = 3

# Default number of interior helper sites.
DEFAULT_VIRTUAL_BUDGET = 1000

# Safety cap on wrap iterations (empirically ~20 suffices).
DEFAULT_MAX_ITERATIONS = 30

# Default background grid resolution for the topology-repair field.
DEFAULT_GRID_RESOLUTION = 128


def geom_eps(diagonal: float) -> float:
    """Absolute geometric epsilon for data with the given bbox diagonal."""
    return GEOM_EPS_FACTOR * diagonal


def weld_eps(diagonal: float) -> float:
    """Absolute welding radius for data with the given bbox diagonal."""
    return WELD_FACTOR * diagonal

"""Surface-evolution driver: shrink-wrap a guiding surface onto the cloud.

Each step recomputes the restricted power diagram of the active sites on the
current guiding surface, repairs manifoldness violations, and replaces the
surface by the dual triangulation, whose vertices are exactly the sites that
captured territory. Weights are chosen so that the surface keeps attracting
unattached points:

  * attached sites (already surface vertices) get weight 0;
  * every other active site gets the squared distance to its surface
    projection, which provably lets at least the closest one attach without
    disturbing the neighborhood structure;
  * when a single site remains, any weight strictly between its squared
    projection distance and its squared distance to the nearest surface
    vertex works; the midpoint maximizes numeric margin.

Interior virtual sites (near the cloud's medial structure) join the same
competition, attach once, and are retired, which is what pulls the surface
into deep cavities quickly.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import (
    DEFAULT_GRID_RESOLUTION,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_SPHERE_SUBDIV,
    DEFAULT_VIRTUAL_BUDGET,
    PERTURB_FACTOR,
    geom_eps,
)
from .delaunay import delaunay3, farthest_point_sampling, voronoi_vertices
from .errors import AlgorithmError, DegenerateInputError, InputError, ManifoldFixError
from .geom import IndexedTriMesh, bounding_sphere_mesh, mesh_winding_number
from .geom.mesh import MeshDistanceIndex
from .rpd import (
    RestrictedPowerDiagram,
    ViolationKind,
    compute_rpd,
    extract_rdt,
)
from .sites import SiteKind, SiteStatus, SiteSet


@dataclass
class Config:
    """Reconstruction parameters; defaults suit unit-box inputs."""

    virtual_budget: int = DEFAULT_VIRTUAL_BUDGET
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    sphere_subdiv: int = DEFAULT_SPHERE_SUBDIV
    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    perturb_factor: float = PERTURB_FACTOR
    rng_seed: int = 0

    def __post_init__(self):
        if self.virtual_budget < 0:
            raise InputError("virtual budget must be >= 0")
        for name in ("max_iterations", "sphere_subdiv", "grid_resolution"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        if self.perturb_factor <= 0:
            raise InputError("perturbation factor must be positive")


@dataclass
class SmoothnessScore:
    value: float
    angles: np.ndarray
    normals: np.ndarray
    mean_normal: np.ndarray
    degenerate_count: int = 0


@dataclass
class GuidingSurface:
    """The evolving watertight mesh plus the site backing each vertex."""

    mesh: IndexedTriMesh
    vertex_sites: np.ndarray  # site id per vertex, -1 when unmapped

    def __post_init__(self):
        self.vertex_sites = np.asarray(self.vertex_sites, dtype=np.int64)
        if len(self.vertex_sites) != self.mesh.n_vertices:
            raise InputError("one site id per guiding vertex required")


@dataclass
class StepRecord:
    iteration: int
    attached_real: int
    attached_virtual: int
    violations_fixed: int
    deferred: int
    ms: float

    def as_dict(self):
        return {
            "iter": self.iteration,
            "attached_real": self.attached_real,
            "attached_virtual": self.attached_virtual,
            "violations": self.violations_fixed,
            "deferred": self.deferred,
            "ms": round(self.ms, 3),
        }


@dataclass
class ReconstructionState:
    guiding: GuidingSurface
    sites: SiteSet
    iteration: int = 0
    history: list = field(default_factory=list)
    eps_p: float = 1e-6
    eps_g: float = 1e-9
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    dropped_duplicates: int = 0

    @property
    def unattached_real_ids(self):
        mask = self.sites.real_mask & self.sites.unattached_mask
        return self.sites.indices(mask)

    @property
    def attached_real_count(self):
        return int((self.sites.real_mask & self.sites.attached_mask).sum())

    @property
    def attached_virtual_count(self):
        return int((self.sites.virtual_mask & self.sites.attached_mask).sum())


def dedup_points(points, eps: float):
    """Drop near-duplicate points (within eps), keeping first occurrences.

    Grid snapping removes the bulk; a pair query over the survivors catches
    duplicates that straddle grid-cell boundaries.
    """
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return pts, 0
    scale = max(eps, 1e-300)
    keys = np.round(pts / scale).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    keep = np.sort(first)
    survivors = pts[keep]
    pairs = cKDTree(survivors).query_pairs(eps, output_type="ndarray")
    if len(pairs):
        drop = np.unique(pairs[:, 1])
        mask = np.ones(len(survivors), dtype=bool)
        mask[drop] = False
        survivors = survivors[mask]
    return survivors, len(pts) - len(survivors)


def assign_weights(state: ReconstructionState) -> None:
    """Set all site weights for the next diagram.

    Attached sites get zero. With several unattached sites each gets its
    squared surface distance; coincident projections are disambiguated by
    shaving eps_p^2 off all but the nearest. A lone unattached site gets the
    midpoint of its admissible interval, perturbing the site when the
    interval is empty (projection exactly on a surface vertex).
    """
    sites = state.sites
    mesh = state.guiding.mesh
    sites.weights[:] = 0.0
    q_ids = sites.indices(sites.unattached_mask & sites.active_mask)
    if len(q_ids) == 0:
        return
    index = MeshDistanceIndex(mesh)
    _, _, d2 = index.query(sites.positions[q_ids])

    if len(q_ids) == 1:
        qid = int(q_ids[0])
        for attempt in range(6):
            vert_d2 = np.min(
                np.einsum(
                    "ij,ij->i",
                    mesh.vertices - sites.positions[qid],
                    mesh.vertices - sites.positions[qid],
                )
            )
            lo = float(d2[0])
            if lo < vert_d2:
                sites.weights[qid] = 0.5 * (lo + vert_d2)
                return
            if attempt == 5:
                break
            # Projection coincides with a surface vertex: nudge the site.
            offset = state.rng.normal(size=3)
            offset *= state.eps_p / np.linalg.norm(offset)
            sites.positions[qid] = sites.positions[qid] + offset
            _, _, d2 = index.query(sites.positions[qid][None, :])
        raise AlgorithmError(
            "could not separate lone site from surface vertices after 5 nudges"
        )

    sites.weights[q_ids] = d2
    # Coincident projections: only the nearest keeps its full weight.
    proj, _, _ = index.query(sites.positions[q_ids])
    order = np.lexsort((q_ids, d2))
    welded = {}
    snap = max(state.eps_g, 1e-300)
    for k in order:
        key = tuple(np.round(proj[k] / snap).astype(np.int64))
        if key in welded:
            sites.weights[q_ids[k]] = d2[k] - state.eps_p**2
        else:
            welded[key] = q_ids[k]


def seed_virtual_sites(points, config: Config, guiding: IndexedTriMesh) -> np.ndarray:
    """Interior helper positions: sampled circumcenters of the cloud.

    Circumcenters of the cloud's tetrahedralization approximate the medial
    structure; those outside the initial surface are discarded and the rest
    thinned by farthest point sampling to the budget.
    """
    if config.virtual_budget == 0:
        return np.zeros((0, 3))
    pts = np.asarray(points, dtype=float)
    complex_ = delaunay3(pts)
    vv = voronoi_vertices(complex_)
    if len(vv.points) == 0:
        return np.zeros((0, 3))
    inside = mesh_winding_number(guiding, vv.points) > 0.5
    cands = vv.points[inside]
    if len(cands) == 0:
        return np.zeros((0, 3))
    # Near-coincident sites make bisector planes pure noise: thin the
    # candidates against themselves and against the input points.
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    eps = max(geom_eps(float(np.linalg.norm(hi - lo))), 1e-300)
    cands, _ = dedup_points(cands, eps)
    from scipy.spatial import cKDTree

    d, _ = cKDTree(pts).query(cands, k=1)
    cands = cands[d > eps]
    if len(cands) == 0:
        return np.zeros((0, 3))
    if len(cands) <= config.virtual_budget:
        if len(cands) < config.virtual_budget:
            warnings.warn(
                f"only {len(cands)} virtual-site candidates for budget "
                f"{config.virtual_budget}",
                stacklevel=2,
            )
        return cands
    centroid = np.asarray(points, dtype=float).mean(axis=0)
    seed = int(np.argmin(np.linalg.norm(cands - centroid, axis=1)))
    picked = farthest_point_sampling(cands, config.virtual_budget, seed)
    return cands[picked]


def smoothness_score(apex, wings) -> SmoothnessScore:
    """Angle-weighted normal spread of a triangle fan around its apex.

    ``wings`` is (m, 2, 3): the two non-apex corners of each fan triangle,
    wound consistently. Zero for a planar fan; invariant under similarity
    transforms. Degenerate triangles contribute nothing and are counted.
    """
    apex = np.asarray(apex, dtype=float)
    wings = np.asarray(wings, dtype=float)
    if wings.ndim != 3 or wings.shape[1:] != (2, 3) or len(wings) == 0:
        raise InputError("fan must be a (m, 2, 3) array with m >= 1")
    u = wings[:, 0, :] - apex
    v = wings[:, 1, :] - apex
    cr = np.cross(u, v)
    cr_norm = np.linalg.norm(cr, axis=1)
    lu = np.linalg.norm(u, axis=1)
    lv = np.linalg.norm(v, axis=1)
    ok = (cr_norm > 0) & (lu > 0) & (lv > 0)
    degenerate = int((~ok).sum())
    normals = np.zeros_like(cr)
    normals[ok] = cr[ok] / cr_norm[ok, None]
    cosang = np.zeros(len(wings))
    cosang[ok] = np.clip(
        np.einsum("ij,ij->i", u[ok], v[ok]) / (lu[ok] * lv[ok]), -1.0, 1.0
    )
    angles = np.where(ok, np.arccos(cosang), 0.0)
    weighted = angles[:, None] * normals
    mean = weighted.sum(axis=0)
    norm = np.linalg.norm(mean)
    if norm > 0:
        mean = mean / norm
    diff = normals - mean
    value = float(np.sum(angles * np.einsum("ij,ij->i", diff, diff) * ok))
    return SmoothnessScore(
        value=value,
        angles=angles,
        normals=normals,
        mean_normal=mean,
        degenerate_count=degenerate,
    )


def _component_fan(rpd: RestrictedPowerDiagram, site_id, fragment_ids):
    """Hypothetical dual fan (wings) if only this component were kept."""
    mesh = rpd.mesh
    pos = rpd.sites.positions
    apex = pos[site_id]
    wings = []
    for fid in fragment_ids:
        frag = rpd.fragments[fid]
        n_face = mesh.face_normals[frag.face]
        for _, j1, j2 in frag.corner_triples():
            a = pos[j1]
            b = pos[j2]
            if np.dot(np.cross(a - apex, b - apex), n_face) < 0:
                a, b = b, a
            wings.append((a, b))
    if not wings:
        return None
    return np.asarray(wings)


def component_smoothness(rpd, site_id, fragment_ids) -> float:
    wings = _component_fan(rpd, site_id, fragment_ids)
    if wings is None:
        return math.inf
    return smoothness_score(rpd.sites.positions[site_id], wings).value


def fix_manifoldness(rpd: RestrictedPowerDiagram, state: ReconstructionState):
    """Repair the diagram until the dual is a closed 2-manifold.

    Multi-component cells keep the component with the smoothest hypothetical
    fan (ties: larger area, lower index); the discarded components' faces are
    re-partitioned among the remaining sites. Other violations defer an
    unattached participant to the next iteration. Returns (rpd, deferred ids,
    fixes applied).
    """
    sites = state.sites
    mesh = state.guiding.mesh
    active = set(int(s) for s in rpd.active_ids)
    exclusions = {}
    deferred = set()
    fixes = 0
    max_passes = 2 * max(len(active), 1)

    for _pass in range(max_passes):
        violations = rpd.check_manifold_conditions()
        if not violations:
            return rpd, sorted(deferred), fixes
        changed = False
        new_deferrals = False
        for v in violations:
            fixes += 1
            if v.kind == ViolationKind.MULTI_COMPONENT_CELL:
                sid = v.site_ids[0]
                comps = rpd.cell_components(sid)
                scored = []
                cell = rpd.cells[sid]
                for ci, frag_ids in enumerate(comps):
                    xi = component_smoothness(rpd, sid, frag_ids)
                    scored.append((xi, -cell.component_areas[ci], ci))
                scored.sort()
                keep = scored[0][2]
                keep_faces = {rpd.fragments[f].face for f in comps[keep]}
                lose_faces = set()
                for ci, frag_ids in enumerate(comps):
                    if ci != keep:
                        lose_faces.update(rpd.fragments[f].face for f in frag_ids)
                if keep_faces & lose_faces:
                    # Cannot separate at face granularity; retry next round.
                    target = _deferral_target(rpd, sites, v, deferred)
                    if target is not None:
                        deferred.add(target)
                        changed = True
                        new_deferrals = True
                    continue
                exclusions.setdefault(sid, set()).update(lose_faces)
                changed = True
            else:
                target = _deferral_target(rpd, sites, v, deferred)
                if target is not None:
                    deferred.add(target)
                    changed = True
                    new_deferrals = True
        if not changed:
            raise ManifoldFixError(
                "manifold fix did not converge", violations=violations
            )
        if new_deferrals:
            # Face bans were derived against the previous active set; with
            # sites removed the territory reflows, so they must be re-derived.
            exclusions = {}
        active_ids = np.asarray(sorted(active - deferred), dtype=np.int64)
        if len(active_ids) == 0:
            raise ManifoldFixError(
                "manifold fix deferred every active site", violations=violations
            )
        rpd = compute_rpd(
            mesh, sites, active_ids=active_ids, exclusions=exclusions,
            require_watertight=False,
        )
    raise ManifoldFixError("manifold fix did not converge")


def _deferral_target(rpd, sites, violation, already):
    """The site to push to the next iteration, or None.

    Preference order: the offending cell if unattached, then the smallest-id
    unattached participant or neighbor. When every participant is attached,
    the offender itself is deferred anyway: keeping the surface manifold
    outranks keeping any single site on it for this iteration (the site
    drops to unattached and retries).
    """
    offender = violation.site_ids[0]
    if sites.status[offender] == SiteStatus.UNATTACHED and offender not in already:
        return int(offender)
    candidates = [
        sid
        for sid in violation.site_ids
        if sid not in already and sites.status[sid] == SiteStatus.UNATTACHED
    ]
    if not candidates:
        candidates = [
            sid
            for sid in sorted(rpd.cell_neighbors(offender))
            if sid not in already and sites.status[sid] == SiteStatus.UNATTACHED
        ]
    if candidates:
        return int(min(candidates))
    if offender not in already:
        return int(offender)
    fallback = [sid for sid in violation.site_ids if sid not in already]
    return int(min(fallback)) if fallback else None


def wrap_step(state: ReconstructionState, config: Config) -> ReconstructionState:
    """One evolution step; the guiding surface is watertight on return."""
    t0 = time.perf_counter()
    sites = state.sites
    virtual_attached_at_entry = sites.indices(
        sites.virtual_mask & sites.attached_mask
    )
    assign_weights(state)
    active_ids = sites.indices(sites.active_mask)
    rpd = compute_rpd(state.guiding.mesh, sites, active_ids=active_ids)
    rpd, deferred, fixes = fix_manifoldness(rpd, state)
    dual, vertex_sites = extract_rdt(rpd)

    in_dual = np.zeros(len(sites), dtype=bool)
    in_dual[vertex_sites] = True
    sites.status[in_dual] = SiteStatus.ATTACHED
    lost = ~in_dual & (sites.status == SiteStatus.ATTACHED)
    sites.status[lost] = SiteStatus.UNATTACHED
    # Helpers that were already part of the surface have served their
    # purpose; they disappear from the next diagram.
    sites.status[virtual_attached_at_entry] = SiteStatus.RETIRED

    state.guiding = GuidingSurface(dual, vertex_sites)
    state.iteration += 1
    record = StepRecord(
        iteration=state.iteration,
        attached_real=state.attached_real_count,
        attached_virtual=state.attached_virtual_count,
        violations_fixed=fixes,
        deferred=len(deferred),
        ms=(time.perf_counter() - t0) * 1e3,
    )
    state.history.append(record)
    return state


@dataclass
class WrapResult:
    guiding: GuidingSurface
    sites: SiteSet
    history: list
    truncated: bool
    excluded_real_ids: list


def init_state(points, config: Config, virtual_positions=None) -> ReconstructionState:
    """Build the initial state: enclosing sphere plus real/virtual sites."""
    pts = np.asarray(points, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    eps_g = geom_eps(diag)
    pts, dropped = dedup_points(pts, eps_g)
    if len(pts) < 4:
        raise DegenerateInputError("need at least 4 distinct points")
    sphere = bounding_sphere_mesh(pts, config.sphere_subdiv)
    real = SiteSet(pts)
    if virtual_positions is None:
        virtual_positions = seed_virtual_sites(pts, config, sphere)
    if len(virtual_positions):
        virt = SiteSet(
            virtual_positions,
            kinds=np.full(len(virtual_positions), SiteKind.VIRTUAL, dtype=np.uint8),
        )
        sites = SiteSet.concat(real, virt)
    else:
        sites = real
    state = ReconstructionState(
        guiding=GuidingSurface(sphere, np.full(sphere.n_vertices, -1, dtype=np.int64)),
        sites=sites,
        eps_p=config.perturb_factor * diag,
        eps_g=eps_g,
        rng=np.random.default_rng(config.rng_seed),
    )
    state.dropped_duplicates = dropped
    return state


def run_shrinkwrap(points, config: Config, progress=None, state=None) -> WrapResult:
    """Evolve until every real point is interpolated or progress stalls.

    Termination: all real sites attached; or the unattached-real set is
    unchanged for 3 consecutive iterations (those points are excluded); or
    the iteration cap (result flagged truncated, not an error). All virtual
    sites are retired on exit and the surface contains only real vertices.
    """
    if state is None:
        state = init_state(points, config)
    stall = 0
    prev_unattached = None
    truncated = False
    while True:
        unattached = frozenset(int(i) for i in state.unattached_real_ids)
        if not unattached:
            break
        if prev_unattached is not None and unattached == prev_unattached:
            stall += 1
            if stall >= 3:
                break
        else:
            stall = 0
        prev_unattached = unattached
        if state.iteration >= config.max_iterations:
            truncated = True
            break
        wrap_step(state, config)
        if progress is not None:
            progress(state.history[-1].as_dict())

    # Sweep remaining helpers off the surface.
    sites = state.sites
    sites.status[sites.virtual_mask] = SiteStatus.RETIRED
    for _ in range(3):
        vs = state.guiding.vertex_sites
        if not (sites.kinds[vs] == SiteKind.VIRTUAL).any():
            break
        wrap_step(state, config)
        if progress is not None:
            progress(state.history[-1].as_dict())
    excluded = sorted(int(i) for i in state.unattached_real_ids)
    return WrapResult(
        guiding=state.guiding,
        sites=sites,
        history=state.history,
        truncated=truncated,
        excluded_real_ids=excluded,
    )

"""Restricted power diagram of weighted sites on a triangle mesh surface.

Every surface point is assigned to the site minimizing |x - p|^2 - w; the
per-triangle pieces of each cell are produced by half-space clipping against
bisector planes of nearby candidate sites, discovered by a breadth-first walk
over (triangle, site) pairs:

  * clipping a fragment by the bisector against site j proves j owns the
    territory across that cut, so (same triangle, j) is enqueued;
  * a fragment edge lying on one of the triangle's own edges continues the
    cell into the neighboring triangle, so (neighbor, same site) is enqueued.

Candidate sets come from a per-site radius that is grown until the security
condition holds: no site outside the radius can reach any fragment vertex
with a smaller power distance. Cells, components, the three manifoldness
conditions, and the dual triangulation are all read off the fragment soup.

Edge labels are plain ints: j >= 0 marks the bisector against site j, and
-1/-2/-3 mark the host triangle's original edges 0/1/2.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .constants import geom_eps, weld_eps
from .errors import AlgorithmError, InputError
from .geom import IndexedTriMesh, KdTree3, MeshDistanceIndex, mesh_validate
from .geom.polygon import clip_loop, polygon_area
from .delaunay import bisector_arrays, power_nearest
from .sites import SiteSet


class ViolationKind(Enum):
    CELL_NOT_DISK = "CellNotDisk"
    MULTI_SHARED_BOUNDARY = "MultiSharedBoundary"
    FEWER_THAN_THREE_NEIGHBORS = "FewerThanThreeNeighbors"
    MULTI_COMPONENT_CELL = "MultiComponentCell"


@dataclass(frozen=True)
class ManifoldViolation:
    kind: ViolationKind
    site_ids: tuple
    component_ids: tuple = ()

    def __str__(self):
        return f"{self.kind.value}{self.site_ids}"


class Fragment:
    """One convex piece of a cell inside one mesh triangle."""

    __slots__ = ("site", "face", "verts", "labels", "area")

    def __init__(self, site, face, verts, labels):
        self.site = site
        self.face = face
        self.verts = verts
        self.labels = labels
        ax = ay = az = 0.0
        m = len(verts)
        for k in range(m):
            a = verts[k]
            b = verts[k + 1] if k + 1 < m else verts[0]
            ax += a[1] * b[2] - a[2] * b[1]
            ay += a[2] * b[0] - a[0] * b[2]
            az += a[0] * b[1] - a[1] * b[0]
        self.area = 0.5 * math.sqrt(ax * ax + ay * ay + az * az)

    def corner_triples(self):
        """(position, j1, j2) for corners where two bisector edges meet."""
        verts = self.verts
        labels = self.labels
        m = len(verts)
        out = []
        for k in range(m):
            incoming = labels[k - 1]
            outgoing = labels[k]
            if incoming >= 0 and outgoing >= 0 and incoming != outgoing:
                out.append((verts[k], incoming, outgoing))
        return out


@dataclass
class RpdCell:
    site_id: int
    fragment_ids: list = field(default_factory=list)
    components: list | None = None       # lists of fragment ids, area-descending
    component_areas: list | None = None
    complex_cache: tuple | None = None

    @property
    def area(self):
        return sum(a for a in self.component_areas) if self.component_areas else None


class RestrictedPowerDiagram:
    """Fragment soup plus per-cell bookkeeping for one site configuration."""

    def __init__(self, mesh, sites, active_ids, fragments, diagnostics):
        self.mesh = mesh
        self.sites = sites
        self.active_ids = np.asarray(active_ids, dtype=np.int64)
        self.fragments = fragments
        self.diagnostics = diagnostics
        self.cells = {}
        for fid, frag in enumerate(fragments):
            cell = self.cells.get(frag.site)
            if cell is None:
                cell = self.cells[frag.site] = RpdCell(site_id=frag.site)
            cell.fragment_ids.append(fid)
        self._weld_tol = weld_eps(mesh.bbox_diagonal)
        self._vt = [tuple(v) for v in mesh.vertices]
        self._ft = mesh.faces.tolist()
        for cell in self.cells.values():
            self._split_components(cell)

    # -- cell structure ----------------------------------------------------

    def cell_area(self, site_id) -> float:
        cell = self.cells.get(site_id)
        if cell is None:
            return 0.0
        return sum(self.fragments[fid].area for fid in cell.fragment_ids)

    def total_area(self) -> float:
        return sum(f.area for f in self.fragments)

    def _edge_records(self, fid):
        """(edge_key, lo, hi) intervals of mesh-edge-labeled fragment edges."""
        frag = self.fragments[fid]
        face = self._ft[frag.face]
        vt = self._vt
        out = []
        m = len(frag.verts)
        for k, lab in enumerate(frag.labels):
            if lab >= 0:
                continue
            e = -lab - 1
            a_idx = face[e]
            b_idx = face[e + 1] if e < 2 else face[0]
            a = vt[a_idx]
            b = vt[b_idx]
            abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
            denom = abx * abx + aby * aby + abz * abz
            p0 = frag.verts[k]
            p1 = frag.verts[k + 1] if k + 1 < m else frag.verts[0]
            t0 = ((p0[0] - a[0]) * abx + (p0[1] - a[1]) * aby + (p0[2] - a[2]) * abz) / denom
            t1 = ((p1[0] - a[0]) * abx + (p1[1] - a[1]) * aby + (p1[2] - a[2]) * abz) / denom
            key = (a_idx, b_idx) if a_idx < b_idx else (b_idx, a_idx)
            if a_idx > b_idx:
                t0, t1 = 1.0 - t0, 1.0 - t1
            out.append((key, min(t0, t1), max(t0, t1)))
        return out

    def _split_components(self, cell):
        """Partition the cell's fragments into edge-connected groups."""
        fids = cell.fragment_ids
        parent = {fid: fid for fid in fids}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        by_edge = {}
        for fid in fids:
            for key, lo, hi in self._edge_records(fid):
                by_edge.setdefault(key, []).append((fid, lo, hi))
        for recs in by_edge.values():
            for ai in range(len(recs)):
                fa, alo, ahi = recs[ai]
                for bi in range(ai + 1, len(recs)):
                    fb, blo, bhi = recs[bi]
                    if min(ahi, bhi) - max(alo, blo) > -1e-9:
                        ra, rb = find(fa), find(fb)
                        if ra != rb:
                            parent[ra] = rb
        groups = {}
        for fid in fids:
            groups.setdefault(find(fid), []).append(fid)
        comps = sorted(
            groups.values(),
            key=lambda g: (-sum(self.fragments[f].area for f in g), min(g)),
        )
        cell.components = comps
        cell.component_areas = [
            sum(self.fragments[f].area for f in g) for g in comps
        ]

    def cell_components(self, site_id):
        """Fragment-id groups of the cell, sorted by descending area."""
        cell = self.cells.get(site_id)
        if cell is None:
            return []
        return cell.components

    # -- welding -----------------------------------------------------------

    def _weld_points(self, points, tol=None):
        """Map raw coordinates to canonical ids within weld tolerance."""
        tol = self._weld_tol if tol is None else tol
        inv = 1.0 / tol if tol > 0 else 1.0
        buckets = {}
        canon = []
        ids = []
        for p in points:
            cx, cy, cz = int(math.floor(p[0] * inv)), int(math.floor(p[1] * inv)), int(
                math.floor(p[2] * inv)
            )
            found = -1
            for ox in (0, -1, 1):
                for oy in (0, -1, 1):
                    for oz in (0, -1, 1):
                        cell = buckets.get((cx + ox, cy + oy, cz + oz))
                        if not cell:
                            continue
                        for cid in cell:
                            q = canon[cid]
                            if (
                                abs(q[0] - p[0]) <= tol
                                and abs(q[1] - p[1]) <= tol
                                and abs(q[2] - p[2]) <= tol
                            ):
                                found = cid
                                break
                        if found >= 0:
                            break
                    if found >= 0:
                        break
                if found >= 0:
                    break
            if found < 0:
                found = len(canon)
                canon.append(p)
                buckets.setdefault((cx, cy, cz), []).append(found)
            ids.append(found)
        return ids, canon

    def _cell_complex(self, cell):
        """Welded (V, E, F, edge multiplicity, boundary graph) of one cell."""
        verts, edge_count, edge_label, _, _ = self._cell_complex_full(cell)
        return verts, edge_count, edge_label

    def _cell_complex_full(self, cell):
        """As `_cell_complex` plus directed edges and canonical positions.

        Directed edges follow fragment polygon order (CCW w.r.t. the outward
        face normal), so walking a cell's boundary through them is
        rotationally consistent across cells.
        """
        if cell.complex_cache is not None:
            return cell.complex_cache
        pts = []
        for fid in cell.fragment_ids:
            frag = self.fragments[fid]
            for v in frag.verts:
                pts.append(v)
        ids, canon = self._weld_points(pts)
        edge_count = {}
        edge_label = {}
        directed = []
        cursor = 0
        for fid in cell.fragment_ids:
            frag = self.fragments[fid]
            m = len(frag.verts)
            for k in range(m):
                a = ids[cursor + k]
                b = ids[cursor + (k + 1) % m]
                if a == b:
                    continue
                key = (a, b) if a < b else (b, a)
                edge_count[key] = edge_count.get(key, 0) + 1
                edge_label.setdefault(key, frag.labels[k])
                directed.append((a, b, frag.labels[k]))
            cursor += m
        verts = set()
        for a, b in edge_count:
            verts.add(a)
            verts.add(b)
        cell.complex_cache = (verts, edge_count, edge_label, directed, canon)
        return cell.complex_cache

    # -- conditions ----------------------------------------------------------

    def cell_neighbors(self, site_id):
        cell = self.cells.get(site_id)
        if cell is None:
            return set()
        out = set()
        for fid in cell.fragment_ids:
            for lab in self.fragments[fid].labels:
                if lab >= 0:
                    out.add(lab)
        return out

    def check_manifold_conditions(self):
        """Empty list iff the dual triangulation will be a watertight manifold."""
        violations = []
        pair_seen = set()
        for site_id, cell in sorted(self.cells.items()):
            comps = cell.components
            if len(comps) > 1:
                violations.append(
                    ManifoldViolation(
                        kind=ViolationKind.MULTI_COMPONENT_CELL,
                        site_ids=(site_id,),
                        component_ids=tuple(range(len(comps))),
                    )
                )
                continue  # remaining checks assume a connected cell
            neighbors = self.cell_neighbors(site_id)
            if len(neighbors) < 3:
                violations.append(
                    ManifoldViolation(
                        kind=ViolationKind.FEWER_THAN_THREE_NEIGHBORS,
                        site_ids=(site_id,) + tuple(sorted(neighbors)),
                    )
                )
                continue
            verts, edge_count, edge_label = self._cell_complex(cell)
            if any(c > 2 for c in edge_count.values()):
                violations.append(
                    ManifoldViolation(
                        kind=ViolationKind.CELL_NOT_DISK, site_ids=(site_id,)
                    )
                )
                continue
            boundary = [e for e, c in edge_count.items() if c == 1]
            euler = len(verts) - len(edge_count) + len(cell.fragment_ids)
            loops = _count_simple_loops(boundary)
            if euler != 1 or loops != 1:
                violations.append(
                    ManifoldViolation(
                        kind=ViolationKind.CELL_NOT_DISK, site_ids=(site_id,)
                    )
                )
                continue
            # Condition 2: one contiguous border chain per neighbor.
            by_neighbor = {}
            for e in boundary:
                lab = edge_label[e]
                if lab >= 0:
                    by_neighbor.setdefault(lab, []).append(e)
            for j, edges in by_neighbor.items():
                key = (site_id, j) if site_id < j else (j, site_id)
                if key in pair_seen:
                    continue
                if _count_chains(edges) > 1:
                    pair_seen.add(key)
                    violations.append(
                        ManifoldViolation(
                            kind=ViolationKind.MULTI_SHARED_BOUNDARY, site_ids=key
                        )
                    )
        return violations

    # -- dual extraction -----------------------------------------------------

    def triple_points(self):
        """Welded triple points: list of (position, generator tuple, face)."""
        recs = []
        for frag in self.fragments:
            for pos, j1, j2 in frag.corner_triples():
                recs.append((pos, frag.site, j1, j2, frag.face))
        if not recs:
            return []
        ids, canon = self._weld_points([r[0] for r in recs])
        groups = {}
        for rid, rec in zip(ids, recs):
            groups.setdefault(rid, []).append(rec)
        out = []
        for rid, group in groups.items():
            gens = set()
            for pos, i, j1, j2, face in group:
                gens.update((i, j1, j2))
            out.append((canon[rid], tuple(sorted(gens)), group[0][4], group))
        return out

    def _corner_groups(self):
        """Label-change corners of all welded cell-boundary loops, grouped.

        A corner is a boundary vertex whose incoming and outgoing bisector
        labels differ: a diagram vertex as seen from one cell. Grouping the
        corners of all cells by position recovers each diagram vertex with
        its full pinwheel, immune to fragment-level noise wedges below the
        weld tolerance. Returns [(position, [(cell, before, after), ...])].
        """
        records = []
        for site_id, cell in sorted(self.cells.items()):
            _, edge_count, _, directed, canon = self._cell_complex_full(cell)
            inb = {}
            outb = {}
            ok = True
            for a, b, lab in directed:
                key = (a, b) if a < b else (b, a)
                if edge_count[key] != 1:
                    continue
                if b in inb or a in outb:
                    ok = False  # boundary is not a simple loop
                    break
                inb[b] = lab
                outb[a] = lab
            if not ok:
                continue
            for v, lab_in in inb.items():
                lab_out = outb.get(v)
                if lab_out is None or lab_in == lab_out:
                    continue
                if lab_in < 0 or lab_out < 0:
                    continue
                records.append((canon[v], site_id, lab_in, lab_out))
        if not records:
            return []
        ids, canon_pts = self._weld_points(
            [r[0] for r in records], tol=3.0 * self._weld_tol
        )
        groups = {}
        for gid, rec in zip(ids, records):
            groups.setdefault(gid, []).append((rec[1], rec[2], rec[3]))
        return [(canon_pts[gid], recs) for gid, recs in sorted(groups.items())]

    def dual_triangles(self):
        """Distinct generator triples; degenerate pinwheels are fan-split.

        Each diagram vertex contributes the fan triangulation of its cell
        cycle, reconstructed combinatorially from the corners' before/after
        labels (cell i sits between them in rotational order).
        """
        triples = set()
        for pos, recs in self._corner_groups():
            gens = tuple(sorted({r[0] for r in recs}))
            if len(gens) < 3:
                continue
            order = _cycle_from_records(recs)
            if order is not None:
                for k in range(1, len(order) - 1):
                    triples.add(tuple(sorted((order[0], order[k], order[k + 1]))))
            elif len(gens) == 3:
                triples.add(gens)
            else:
                group = [(pos, r[0], r[1], r[2], -1) for r in recs]
                for tri in _fan_split(pos, gens, group, self.sites.positions):
                    triples.add(tri)
        return sorted(triples)

    # -- debug dump ----------------------------------------------------------

    def dump_polygons(self, path):
        """ASCII polygon soup: one line per fragment, site id first."""
        with open(path, "w") as fh:
            fh.write(f"# fragments={len(self.fragments)} sites={len(self.cells)}\n")
            fh.write("# format: site_id n x1 y1 z1 ... xn yn zn\n")
            for frag in self.fragments:
                coords = " ".join(
                    f"{c:.17g}" for v in frag.verts for c in v
                )
                fh.write(f"{frag.site} {len(frag.verts)} {coords}\n")


def _cycle_from_records(recs):
    """Rotational cell order at a diagram vertex from (cell, before, after).

    The successor of a cell is its 'after' label; a valid vertex yields one
    cycle visiting every recorded cell exactly once. None on inconsistency.
    """
    succ = {}
    for cell, before, after in recs:
        if cell in succ:
            return None
        succ[cell] = after
    start = min(succ)
    order = [start]
    while True:
        nxt = succ.get(order[-1])
        if nxt is None:
            return None
        if nxt == start:
            break
        if nxt in succ and nxt not in order and len(order) <= len(succ):
            order.append(nxt)
        else:
            return None
    if len(order) != len(succ):
        return None
    return order


def _count_simple_loops(edges):
    """Number of closed loops formed by the edge set; -1 if not all degree 2."""
    if not edges:
        return 0
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if any(len(v) != 2 for v in adj.values()):
        return -1
    seen = set()
    loops = 0
    for start in adj:
        if start in seen:
            continue
        loops += 1
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    return loops


def _count_chains(edges):
    """Connected components of an edge subset (chains or loops)."""
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = set()
    comps = 0
    for start in adj:
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    return comps


def _fan_split(pos, gens, group, positions):
    """Split a degenerate (4+ generator) diagram vertex into triangles.

    Orders the cells by the angle of their corner wedge around the point and
    fans from the smallest id, which keeps neighboring duals consistent.
    """
    wedge_dir = {}
    for p, i, j1, j2, face in group:
        wedge_dir.setdefault(i, np.asarray(p) - np.asarray(pos))
    # Direction from the point toward each generator's site as a fallback.
    dirs = {}
    for g in gens:
        d = positions[g] - np.asarray(pos)
        n = np.linalg.norm(d)
        dirs[g] = d / n if n > 0 else d
    normal = np.zeros(3)
    vals = list(dirs.values())
    for k in range(len(vals)):
        normal += np.cross(vals[k], vals[(k + 1) % len(vals)])
    if np.linalg.norm(normal) < 1e-12:
        normal = np.array([0.0, 0.0, 1.0])
    normal /= np.linalg.norm(normal)
    u = np.cross(normal, [1.0, 0.0, 0.0])
    if np.linalg.norm(u) < 1e-6:
        u = np.cross(normal, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    ordered = sorted(
        gens, key=lambda g: math.atan2(float(dirs[g] @ v), float(dirs[g] @ u))
    )
    start = ordered.index(min(gens))
    ordered = ordered[start:] + ordered[:start]
    tris = []
    for k in range(1, len(ordered) - 1):
        tris.append(tuple(sorted((ordered[0], ordered[k], ordered[k + 1]))))
    return tris


@dataclass
class RpdDiagnostics:
    dropped_slivers: int = 0
    redo_passes: int = 0
    fragments: int = 0


class _InfluenceIndex:
    """Spatial index answering: which sites j satisfy |c - p_j| <= r + s_j?

    s_j = sqrt(shifted weight) is the site's pull radius. Sites are bucketed
    by pull radius (powers of four) so each bucket can be queried with its
    own worst-case padding instead of the global maximum.
    """

    def __init__(self, positions, pulls, ids):
        self.buckets = []
        pulls = np.asarray(pulls, dtype=float)
        zero = pulls <= 0.0
        groups = [(np.nonzero(zero)[0], 0.0)]
        live = np.nonzero(~zero)[0]
        if len(live):
            smax = float(pulls[live].max())
            level = np.ceil(np.log2(np.maximum(pulls[live] / smax, 1e-18)) / 2.0)
            for lv in np.unique(level):
                sel = live[level == lv]
                groups.append((sel, float(pulls[sel].max())))
        for sel, pad in groups:
            if len(sel) == 0:
                continue
            self.buckets.append(
                (cKDTree(positions[sel]), np.asarray(ids)[sel], pad)
            )

    def query(self, c, r):
        out = []
        for tree, ids, pad in self.buckets:
            hits = tree.query_ball_point(c, r + pad)
            if hits:
                out.append(ids[hits])
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(out)


def compute_rpd(
    mesh: IndexedTriMesh,
    sites: SiteSet,
    active_ids=None,
    exclusions=None,
    require_watertight: bool = True,
) -> RestrictedPowerDiagram:
    """Clip the power diagram of the active sites onto the mesh surface.

    ``exclusions`` maps a site id to a set of face indices the site may not
    own; excluded territory falls to the remaining sites (used by the
    multi-component manifold fix).
    """
    if require_watertight and not mesh_validate(mesh).is_watertight_manifold:
        raise InputError("guiding surface not watertight")
    if active_ids is None:
        active_ids = sites.indices(sites.active_mask)
    active_ids = np.asarray(active_ids, dtype=np.int64)
    if len(active_ids) < 1:
        raise InputError("need at least one active site")
    exclusions = exclusions or {}

    pos = sites.positions
    apos = pos[active_ids]
    awts = sites.weights[active_ids]
    diag = mesh.bbox_diagonal
    drop_area = geom_eps(diag) ** 2
    diagnostics = RpdDiagnostics()

    if len(active_ids) == 1:
        sid = int(active_ids[0])
        frags = [
            Fragment(sid, fi, [tuple(v) for v in mesh.vertices[face]], [-1, -2, -3])
            for fi, face in enumerate(mesh.faces)
        ]
        diagnostics.fragments = len(frags)
        return RestrictedPowerDiagram(mesh, sites, active_ids, frags, diagnostics)

    # The diagram is invariant under a uniform weight shift; anchoring the
    # minimum at zero makes sqrt(w) a meaningful pull radius.
    shifted = awts - awts.min()
    wmap = np.zeros(len(pos))
    wmap[active_ids] = shifted

    # Candidate searches center on each site's territory on the surface:
    # a weighted site competes near its projection, not around itself.
    centers_a = apos.copy()
    heavy_local = np.nonzero(shifted > 0.0)[0]
    if len(heavy_local):
        proj, _, _ = MeshDistanceIndex(mesh).query(apos[heavy_local])
        centers_a[heavy_local] = proj
    centers = np.zeros_like(pos)
    centers[active_ids] = centers_a

    influence = _InfluenceIndex(apos, np.sqrt(shifted), active_ids)
    ctree = cKDTree(centers_a)
    k0 = min(9, len(active_ids))
    dk, _ = ctree.query(centers_a, k=k0)
    dk = np.atleast_2d(dk)
    radius = np.zeros(len(pos))
    radius[active_ids] = np.maximum(2.2 * dk[:, -1], 1e-9 * diag)

    site_tree = KdTree3(apos)
    owners = power_nearest(site_tree, apos, shifted, mesh.vertices)

    engine = _ClipEngine(
        mesh, pos, wmap, centers, radius, active_ids, influence,
        exclusions, drop_area, diagnostics,
    )
    engine.seed(owners)
    for _pass in range(24):
        engine.process()
        violators = engine.security_violators()
        if not violators:
            break
        diagnostics.redo_passes += 1
        for sid, need in violators.items():
            engine.grow(sid, need)
    else:
        raise AlgorithmError("candidate radius growth did not stabilize")

    fragments = engine.collect()
    diagnostics.fragments = len(fragments)
    return RestrictedPowerDiagram(mesh, sites, active_ids, fragments, diagnostics)


class _PlaneSet:
    """Power-sorted candidate planes of one site, built in chunks."""

    __slots__ = ("cand", "normals", "offsets", "pws", "sufw", "wj", "center",
                 "_all_ids", "_all_pw", "_all_sufw", "_p_i", "_w_i", "_pos", "_wmap")

    def __init__(self, engine, sid, p_i, center, all_ids, all_pw, all_sufw):
        self.cand = []
        self.normals = []
        self.offsets = []
        self.pws = []
        self.sufw = []
        self.wj = []
        self.center = center
        self._all_ids = all_ids
        self._all_pw = all_pw
        self._all_sufw = all_sufw
        self._p_i = p_i
        self._w_i = float(engine.wmap[sid])
        self._pos = engine.pos
        self._wmap = engine.wmap

    def ensure(self, k):
        """Materialize planes through index k; False when exhausted."""
        total = len(self._all_ids)
        built = len(self.cand)
        if k < built:
            return True
        if built >= total:
            return False
        hi = min(built + _ClipEngine._CHUNK, total)
        ids = self._all_ids[built:hi]
        normals, offsets = bisector_arrays(
            self._p_i, self._w_i, self._pos[ids], self._wmap[ids]
        )
        self.cand.extend(ids.tolist())
        self.normals.extend(normals.tolist())
        self.offsets.extend(offsets.tolist())
        self.pws.extend(self._all_pw[built:hi].tolist())
        self.sufw.extend(self._all_sufw[built:hi].tolist())
        self.wj.extend(self._wmap[ids].tolist())
        return k < hi


class _ClipEngine:
    """Incremental (triangle, site) clipping with per-site candidate growth."""

    def __init__(
        self, mesh, pos, wmap, centers, radius, active_ids, influence,
        exclusions, drop_area, diagnostics,
    ):
        self.mesh = mesh
        self.pos = pos
        self.wmap = wmap
        self.centers = centers
        self.radius = radius
        self.active_ids = active_ids
        self.influence = influence
        self.banned = exclusions
        self.no_bans = not exclusions
        self.drop_area = drop_area
        self.diagnostics = diagnostics

        self.faces_t = mesh.faces.tolist()
        self.neighbors_t = mesh.face_neighbors.tolist()
        self.verts_t = [tuple(v) for v in mesh.vertices.tolist()]
        self.pos_t = pos.tolist()
        self.wmap_t = wmap.tolist()

        self.plane_cache = {}
        self.frag_map = {}   # (face, site) -> Fragment
        self.zone_map = {}   # (face, site) -> (rho2, powmax)
        self.pairs_of = {}   # site -> set of faces with live fragments
        self.visited = set()
        self.queue = deque()

    # -- candidate planes --------------------------------------------------

    _CHUNK = 32

    def planes_for(self, sid):
        """Candidate planes, materialized lazily along the power order.

        Most fragments stop scanning after a dozen candidates, so bisector
        planes are built in chunks of 32; `_PlaneSet.ensure` extends on
        demand.
        """
        cached = self.plane_cache.get(sid)
        if cached is not None:
            return cached
        p_i = self.pos[sid]
        c_i = self.centers[sid]
        cand = self.influence.query(c_i, self.radius[sid])
        cand = cand[cand != sid]
        if len(cand):
            # Order by power distance at the center: most competitive first.
            diff = self.pos[cand] - c_i
            pw = np.einsum("ij,ij->i", diff, diff) - self.wmap[cand]
            order = np.argsort(pw, kind="stable")
            cand = cand[order]
            pw = pw[order]
            sufw = np.maximum.accumulate(self.wmap[cand][::-1])[::-1]
        else:
            pw = np.empty(0)
            sufw = np.empty(0)
        entry = _PlaneSet(self, sid, p_i, (c_i[0], c_i[1], c_i[2]), cand, pw, sufw)
        self.plane_cache[sid] = entry
        return entry

    # -- seeding and incremental growth -------------------------------------

    def is_banned(self, sid, fi):
        s = self.banned.get(sid)
        return s is not None and fi in s

    def seed(self, owners):
        faces_t = self.faces_t
        for fi in range(len(faces_t)):
            for vi in faces_t[fi]:
                sid = int(self.active_ids[owners[vi]])
                if self.no_bans or not self.is_banned(sid, fi):
                    self.queue.append((fi, sid))
        for sid, banned_faces in self.banned.items():
            for fi in banned_faces:
                if fi >= len(faces_t):
                    continue
                all_banned = all(
                    self.is_banned(int(self.active_ids[owners[vi]]), fi)
                    for vi in faces_t[fi]
                )
                if all_banned:
                    for vi in faces_t[fi]:
                        o = _owner_excluding(
                            self.mesh.vertices[vi], self.pos, self.wmap,
                            self.active_ids, self.banned, fi,
                        )
                        if o >= 0:
                            self.queue.append((fi, o))

    def grow(self, sid, need):
        """Raise a site's candidate radius and schedule its pairs for re-clip."""
        self.radius[sid] = max(self.radius[sid] * 1.5, need * 1.01)
        self.plane_cache.pop(sid, None)
        for fi in list(self.pairs_of.get(sid, ())):
            key = (fi, sid)
            self.frag_map.pop(key, None)
            self.zone_map.pop(key, None)
            self.visited.discard(key)
            self.queue.append(key)
        self.pairs_of.pop(sid, None)

    # -- security ------------------------------------------------------------

    def security_violators(self):
        """Sites whose radius cannot yet certify their fragments.

        With influence queries, a site outside the candidate set satisfies
        |c_i - p_j| > R_i + s_j, hence its power at any fragment point
        exceeds (R_i - rho_i)^2 >= powmax_i once R_i >= rho_i +
        sqrt(max(powmax_i, 0)). Only that scalar condition needs checking.
        """
        rho2 = {}
        powmax = {}
        for (fi, sid), (r2, pm) in self.zone_map.items():
            if r2 > rho2.get(sid, -1.0):
                rho2[sid] = r2
            if pm > powmax.get(sid, -math.inf):
                powmax[sid] = pm
        out = {}
        for sid, r2 in rho2.items():
            need = math.sqrt(r2) + math.sqrt(max(powmax[sid], 0.0))
            if self.radius[sid] < need:
                out[sid] = need
        return out

    # -- main loop -----------------------------------------------------------

    def process(self):
        queue = self.queue
        visited = self.visited
        faces_t = self.faces_t
        neighbors_t = self.neighbors_t
        verts_t = self.verts_t
        pos_t = self.pos_t
        wmap_t = self.wmap_t
        no_bans = self.no_bans
        frag_map = self.frag_map
        zone_map = self.zone_map
        pairs_of = self.pairs_of
        drop_area = self.drop_area

        while queue:
            fi, sid = queue.popleft()
            key = (fi, sid)
            if key in visited:
                continue
            visited.add(key)
            if not no_bans and self.is_banned(sid, fi):
                continue
            face = faces_t[fi]
            poly_v = [verts_t[face[0]], verts_t[face[1]], verts_t[face[2]]]
            poly_l = [-1, -2, -3]
            ps = self.planes_for(sid)
            cand = ps.cand
            normals = ps.normals
            offsets = ps.offsets
            pws = ps.pws
            sufw = ps.sufw
            wjs = ps.wj
            px, py, pz = pos_t[sid]
            cx, cy, cz = ps.center
            w_i = wmap_t[sid]

            rho2 = 0.0
            powmax = -math.inf
            for v in poly_v:
                dx, dy, dz = v[0] - cx, v[1] - cy, v[2] - cz
                q = dx * dx + dy * dy + dz * dz
                if q > rho2:
                    rho2 = q
                dx, dy, dz = v[0] - px, v[1] - py, v[2] - pz
                q = dx * dx + dy * dy + dz * dz - w_i
                if q > powmax:
                    powmax = q
            rho = math.sqrt(rho2)
            alive = True
            k = 0
            while True:
                if k >= len(cand) and not ps.ensure(k):
                    break
                # Candidates are sorted by power at the center. Even at the
                # fragment-ball point closest to candidate k, its power is at
                # least (sqrt(pk+wk)-rho)^2 - wk, and that bound only rises
                # along the remaining candidates; once it clears the
                # fragment's own worst power, stop.
                pk = pws[k]
                wk = sufw[k]
                t = math.sqrt(pk + wk) - rho
                if t > 0.0 and t * t - wk > powmax:
                    break
                # This candidate alone may still be unable to reach parity
                # anywhere on the fragment ball; skip the clip if so.
                wj = wjs[k]
                t = math.sqrt(pk + wj) - rho
                if t > 0.0 and t * t - wj > powmax:
                    k += 1
                    continue
                j = cand[k]
                k += 1
                if not no_bans and self.is_banned(j, fi):
                    continue
                n = normals[k - 1]
                res = clip_loop(poly_v, poly_l, n[0], n[1], n[2], offsets[k - 1], j)
                if res is None:
                    # Only mis-seeded pairs die; hand the face to the eater.
                    alive = False
                    if (fi, j) not in visited:
                        queue.append((fi, j))
                    break
                new_v, new_l = res
                if new_v is not poly_v:
                    poly_v, poly_l = new_v, new_l
                    rho2 = 0.0
                    powmax = -math.inf
                    for v in poly_v:
                        dx, dy, dz = v[0] - cx, v[1] - cy, v[2] - cz
                        q = dx * dx + dy * dy + dz * dz
                        if q > rho2:
                            rho2 = q
                        dx, dy, dz = v[0] - px, v[1] - py, v[2] - pz
                        q = dx * dx + dy * dy + dz * dz - w_i
                        if q > powmax:
                            powmax = q
                    rho = math.sqrt(rho2)
            if not alive:
                continue
            # Surviving labels are the true local adjacency: bisector edges
            # hand the neighboring strip of this face to that site, original
            # triangle edges continue the cell into the adjacent face.
            for lab in poly_l:
                if lab < 0:
                    nf = neighbors_t[fi][-lab - 1]
                    if nf >= 0 and (nf, sid) not in visited:
                        queue.append((nf, sid))
                elif (fi, lab) not in visited:
                    queue.append((fi, lab))
            frag = Fragment(sid, fi, poly_v, poly_l)
            if frag.area < drop_area:
                self.diagnostics.dropped_slivers += 1
                continue
            frag_map[key] = frag
            zone_map[key] = (rho2, powmax)
            pairs_of.setdefault(sid, set()).add(fi)

    def collect(self):
        return [self.frag_map[k] for k in sorted(self.frag_map)]


def _owner_excluding(x, pos, wts, active_ids, banned, fi):
    best = -1
    best_pow = math.inf
    for sid in active_ids:
        sid = int(sid)
        s = banned.get(sid)
        if s is not None and fi in s:
            continue
        d = pos[sid] - x
        p = float(d @ d) - wts[sid]
        if p < best_pow:
            best_pow = p
            best = sid
    return best


def cell_components(rpd: RestrictedPowerDiagram, site_id: int):
    """Edge-connected fragment groups of one cell, area-descending."""
    return rpd.cell_components(site_id)


def check_manifold_conditions(rpd: RestrictedPowerDiagram):
    return rpd.check_manifold_conditions()


def extract_rdt(rpd: RestrictedPowerDiagram) -> tuple:
    """Dual triangulation of the diagram as a watertight oriented mesh.

    Returns (mesh, vertex_site_ids). Vertex positions are copied from the
    site array bit-for-bit. Raises when manifold violations remain.
    """
    violations = rpd.check_manifold_conditions()
    if violations:
        raise ManifoldViolationError(violations)
    triples = rpd.dual_triangles()
    if not triples:
        raise AlgorithmError("diagram has no triple points to dualize")
    site_ids = sorted({s for tri in triples for s in tri})
    local = {s: k for k, s in enumerate(site_ids)}
    tris = np.asarray(
        [[local[a], local[b], local[c]] for a, b, c in triples], dtype=np.int64
    )
    tris = _orient_consistently(tris, rpd.sites.positions[site_ids])
    mesh = IndexedTriMesh(rpd.sites.positions[site_ids].copy(), tris)
    report = mesh_validate(mesh)
    if not report.is_watertight_manifold:
        raise AlgorithmError(f"dual triangulation is defective ({report})")
    return mesh, np.asarray(site_ids, dtype=np.int64)


class ManifoldViolationError(AlgorithmError):
    def __init__(self, violations):
        super().__init__(
            "manifold conditions violated: "
            + ", ".join(str(v) for v in violations[:8])
            + ("..." if len(violations) > 8 else "")
        )
        self.violations = violations


def _orient_consistently(tris, verts):
    """Flip triangles so shared edges disagree, then make volume positive."""
    edge_map = {}
    for t, (a, b, c) in enumerate(tris):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            edge_map.setdefault(key, []).append(t)
    adj = [[] for _ in range(len(tris))]
    for inc in edge_map.values():
        for i in range(len(inc)):
            for j in range(i + 1, len(inc)):
                adj[inc[i]].append(inc[j])
                adj[inc[j]].append(inc[i])

    oriented = tris.copy()
    state = np.zeros(len(tris), dtype=np.int8)  # 0 unseen, 1 fixed
    comps = []
    for seed in range(len(tris)):
        if state[seed]:
            continue
        comp = [seed]
        state[seed] = 1
        stack = [seed]
        while stack:
            t = stack.pop()
            dir_edges = set()
            a, b, c = oriented[t]
            dir_edges.update(((a, b), (b, c), (c, a)))
            for o in adj[t]:
                if state[o]:
                    continue
                oa, ob, oc = oriented[o]
                flips = 0
                for u, v in ((oa, ob), (ob, oc), (oc, oa)):
                    if (u, v) in dir_edges:
                        flips += 1
                if flips:
                    oriented[o] = oriented[o][::-1]
                state[o] = 1
                comp.append(o)
                stack.append(o)
        comps.append(comp)
    for comp in comps:
        block = oriented[comp]
        v0 = verts[block[:, 0]]
        v1 = verts[block[:, 1]]
        v2 = verts[block[:, 2]]
        vol = np.einsum("ij,ij->i", v0, np.cross(v1, v2)).sum()
        if vol < 0:
            oriented[comp] = block[:, ::-1]
    return oriented


def brute_force_assign(mesh, sites, n_samples, rng_seed, active_ids=None):
    """Monte-Carlo area estimate per cell: the assignment oracle.

    Samples the surface uniformly by area and assigns each sample to its
    minimum power-distance site directly. Returns {site_id: area fraction}.
    """
    from .geom import sample_surface

    if active_ids is None:
        active_ids = sites.indices(sites.active_mask)
    active_ids = np.asarray(active_ids, dtype=np.int64)
    rng = np.random.default_rng(rng_seed)
    pts, _ = sample_surface(mesh, int(n_samples), rng)
    pos = sites.positions[active_ids]
    wts = sites.weights[active_ids]
    counts = np.zeros(len(active_ids), dtype=np.int64)
    chunk = max(1, 4_000_000 // max(len(active_ids), 1))
    for s in range(0, len(pts), chunk):
        block = pts[s : s + chunk]
        d2 = (
            np.einsum("ij,ij->i", block, block)[:, None]
            - 2.0 * block @ pos.T
            + np.einsum("ij,ij->i", pos, pos)[None, :]
        )
        pw = d2 - wts[None, :]
        pmin = pw.min(axis=1, keepdims=True)
        first = np.where(pw == pmin, np.arange(len(active_ids))[None, :], len(active_ids)).min(axis=1)
        counts += np.bincount(first, minlength=len(active_ids))
    frac = counts / len(pts)
    return {int(sid): float(f) for sid, f in zip(active_ids, frac)}

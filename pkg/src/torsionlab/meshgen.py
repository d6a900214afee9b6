"""Interface-fitted conforming triangulations of two-phase configurations.

Boundary and interface loops are sampled at equal arclength, interior points
come from a hexagonal lattice kept clear of the curves, and the triangulation
is a filtered Delaunay of the combined point set with a few smoothing passes.
Everything is deterministic for identical inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import StarBoundary, TwoPhaseConfig, area

__all__ = ["Mesh", "MeshingError", "generate_mesh", "boundary_normals",
           "refine_uniform", "mesh_to_text"]

TAG_SHELL = 0
TAG_CORE = 1


class MeshingError(RuntimeError):
    pass


@dataclass
class Mesh:
    """Conforming triangulation with region tags and oriented edge lists.

    ``vertices`` are the P1 nodes; for ``order == 2`` the FEM nodes are the
    vertices followed by one node per edge (``nodes``), and ``tri_nodes``
    lists 6 node indices per triangle as [v0, v1, v2, m01, m12, m20].
    Edge nodes on the outer boundary / the interface are projected onto the
    analytic curves, so order-2 elements are isoparametrically curved.
    """

    vertices: np.ndarray                 # (nv, 2)
    triangles: np.ndarray                # (nt, 3) CCW
    tri_tags: np.ndarray                 # (nt,) TAG_SHELL / TAG_CORE
    boundary_edges: np.ndarray           # (nbe, 2) oriented, domain on the left
    interface_edges: np.ndarray          # (nie, 2) oriented, core on the left
    interface_core: np.ndarray           # (nie,) owning core index
    order: int
    outer: StarBoundary
    cores: tuple[StarBoundary, ...]
    target_h: float
    # order-2 extras (empty arrays for order 1)
    edges: np.ndarray = field(default=None)        # (ne, 2) unique edges
    tri_nodes: np.ndarray = field(default=None)    # (nt, 6) or (nt, 3)
    nodes: np.ndarray = field(default=None)        # (nn, 2) all FEM nodes

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Sorted unique FEM node indices on the outer boundary."""
        return self._bnodes

    @property
    def boundary_theta(self) -> np.ndarray:
        """Polar angle of each boundary node about the outer center."""
        return self._btheta

    def __post_init__(self):
        if self.order == 1:
            self.tri_nodes = self.triangles
            self.nodes = self.vertices
            self.edges = np.empty((0, 2), dtype=int)
            self._bedge_nodes = self.boundary_edges
            self._iedge_nodes = self.interface_edges
        else:
            self._build_p2()
        bset = np.unique(self._bedge_nodes)
        self._bnodes = bset
        self._btheta = self.outer.angle_of(self.nodes[bset])

    def _build_p2(self):
        tris = self.triangles
        e_all = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        e_sorted = np.sort(e_all, axis=1)
        edges, inv = np.unique(e_sorted, axis=0, return_inverse=True)
        self.edges = edges
        nv = len(self.vertices)
        mid = 0.5 * (self.vertices[edges[:, 0]] + self.vertices[edges[:, 1]])
        edge_key = {tuple(e): i for i, e in enumerate(map(tuple, edges))}
        # project boundary / interface edge midpoints onto analytic curves
        for e in map(tuple, np.sort(self.boundary_edges, axis=1)):
            i = edge_key[e]
            th = self.outer.angle_of(mid[i])
            mid[i] = self.outer.point(th)
        for e, ci in zip(np.sort(self.interface_edges, axis=1), self.interface_core):
            i = edge_key[tuple(e)]
            core = self.cores[ci]
            th = core.angle_of(mid[i])
            mid[i] = core.point(th)
        self.nodes = np.vstack([self.vertices, mid])
        nt = len(tris)
        tn = np.empty((nt, 6), dtype=int)
        tn[:, :3] = tris
        tn[:, 3] = nv + inv[:nt]
        tn[:, 4] = nv + inv[nt:2 * nt]
        tn[:, 5] = nv + inv[2 * nt:]
        self.tri_nodes = tn
        # boundary / interface edges at P2 level: [v0, v1, mid]
        def _with_mid(edges_arr):
            out = np.empty((len(edges_arr), 3), dtype=int)
            out[:, :2] = edges_arr
            for r, e in enumerate(np.sort(edges_arr, axis=1)):
                out[r, 2] = nv + edge_key[tuple(e)]
            return out

        self._bedge_nodes = _with_mid(self.boundary_edges)
        self._iedge_nodes = _with_mid(self.interface_edges)

    @property
    def boundary_edge_nodes(self) -> np.ndarray:
        """Boundary edges with their node lists ((nbe,2) for P1, (nbe,3) for P2)."""
        return self._bedge_nodes

    @property
    def interface_edge_nodes(self) -> np.ndarray:
        return self._iedge_nodes

    def min_angle(self) -> float:
        p = self.vertices
        t = self.triangles
        angs = []
        for i in range(3):
            a = p[t[:, i]]
            b = p[t[:, (i + 1) % 3]]
            c = p[t[:, (i + 2) % 3]]
            v1 = b - a
            v2 = c - a
            cosang = np.sum(v1 * v2, axis=1) / (
                np.linalg.norm(v1, axis=1) * np.linalg.norm(v2, axis=1))
            angs.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angs))

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices
        t = self.triangles
        v1 = p[t[:, 1]] - p[t[:, 0]]
        v2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0])


def _loop_points(b: StarBoundary, h: float):
    from .geometry import perimeter

    n = max(16, int(np.ceil(perimeter(b) / h)))
    th = b.equal_arclength_angles(n)
    return b.point(th)


def _hex_points(bbox, h):
    (x0, y0), (x1, y1) = bbox
    dy = h * np.sqrt(3) / 2
    rows = int(np.ceil((y1 - y0) / dy)) + 1
    cols = int(np.ceil((x1 - x0) / h)) + 2
    pts = []
    for j in range(rows):
        y = y0 + j * dy
        off = 0.5 * h if j % 2 else 0.0
        xs = x0 + off + h * np.arange(cols)
        pts.append(np.stack([xs, np.full_like(xs, y)], axis=1))
    return np.concatenate(pts)


def generate_mesh(config: TwoPhaseConfig, target_h: float, order: int = 2,
                  smooth_iters: int = 4) -> Mesh:
    """Interface-fitted triangulation of (D, Omega) with region tags."""
    if order not in (1, 2):
        raise MeshingError("element order must be 1 or 2")
    outer = config.outer
    h = float(target_h)
    loops = [_loop_points(outer, h)] + [_loop_points(c, h) for c in config.cores]
    n_outer = len(loops[0])
    core_sizes = [len(l) for l in loops[1:]]
    fixed = np.concatenate(loops)
    n_fixed = len(fixed)

    # dense samples of each curve for distance filtering
    dense = [b.polyline(max(512, 16 * len(l)))
             for b, l in zip((outer, *config.cores), loops)]
    trees = [cKDTree(d) for d in dense]

    margin = 0.65 * h
    pad = 2 * h
    bbox = (fixed.min(axis=0) - pad, fixed.max(axis=0) + pad)
    cand = _hex_points(bbox, h)
    keep = outer.contains(cand)
    for t in trees:
        keep &= t.query(cand)[0] > margin
    interior = cand[keep]
    pts = np.vstack([fixed, interior])

    def _ok(p):
        if not outer.contains(p[None])[0]:
            return False
        return all(t.query(p)[0] > margin for t in trees)

    # Laplacian smoothing of interior points only
    for _ in range(smooth_iters):
        tri = Delaunay(pts)
        indptr, idx = tri.vertex_neighbor_vertices
        moved = pts.copy()
        for i in range(n_fixed, len(pts)):
            nb = idx[indptr[i]:indptr[i + 1]]
            if len(nb) == 0:
                continue
            target = pts[nb].mean(axis=0)
            if _ok(target):
                moved[i] = target
        pts = moved

    tri = Delaunay(pts)
    simp = tri.simplices
    # orient CCW
    v1 = pts[simp[:, 1]] - pts[simp[:, 0]]
    v2 = pts[simp[:, 2]] - pts[simp[:, 0]]
    sa = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    flip = sa < 0
    simp[flip] = simp[flip][:, [0, 2, 1]]

    cent = pts[simp].mean(axis=1)
    inside = outer.contains(cent)
    simp = simp[inside]
    cent = cent[inside]
    tags = np.where(config.in_core(cent), TAG_CORE, TAG_SHELL)

    # drop unused vertices, remap
    used = np.unique(simp)
    remap = -np.ones(len(pts), dtype=int)
    remap[used] = np.arange(len(used))
    verts = pts[used]
    simp = remap[simp]

    # edge incidence
    nt = len(simp)
    e_all = np.concatenate([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]])
    owner = np.tile(np.arange(nt), 3)
    e_sorted = np.sort(e_all, axis=1)
    uniq, inv, counts = np.unique(e_sorted, axis=0, return_inverse=True,
                                  return_counts=True)
    if counts.max() > 2:
        raise MeshingError("non-manifold edge in triangulation")

    boundary_edges = []
    interface_edges = []
    interface_core = []
    # map: edge id -> incident (tri, oriented pair)
    first_seen = {}
    for row in range(len(e_all)):
        eid = inv[row]
        if eid in first_seen:
            t0, o0 = first_seen[eid]
            t1, o1 = owner[row], e_all[row]
            if tags[t0] != tags[t1]:
                # oriented so the core-tagged triangle is on the left
                o = o0 if tags[t0] == TAG_CORE else o1
                interface_edges.append(o)
                # owning core: the core containing the core-side centroid
                ci = _which_core(config, verts[simp[t0 if tags[t0] == TAG_CORE else t1]].mean(axis=0))
                interface_core.append(ci)
        else:
            first_seen[eid] = (owner[row], e_all[row])
    single = counts[inv] == 1
    for row in np.nonzero(single)[0]:
        boundary_edges.append(e_all[row])
    boundary_edges = np.asarray(boundary_edges, dtype=int).reshape(-1, 2)
    interface_edges = np.asarray(interface_edges, dtype=int).reshape(-1, 2)
    interface_core = np.asarray(interface_core, dtype=int)

    mesh = Mesh(
        vertices=verts,
        triangles=simp,
        tri_tags=tags,
        boundary_edges=boundary_edges,
        interface_edges=interface_edges,
        interface_core=interface_core,
        order=order,
        outer=outer,
        cores=tuple(config.cores),
        target_h=h,
    )
    _validate(mesh, config, n_outer, core_sizes)
    return mesh


def _which_core(config: TwoPhaseConfig, p) -> int:
    for i, c in enumerate(config.cores):
        if c.contains(p[None])[0]:
            return i
    # fall back to nearest core center
    d = [np.hypot(p[0] - c.center[0], p[1] - c.center[1]) for c in config.cores]
    return int(np.argmin(d))


def _validate(mesh: Mesh, config: TwoPhaseConfig, n_outer: int, core_sizes):
    if (mesh.tri_tags == TAG_CORE).sum() == 0 or (mesh.tri_tags == TAG_SHELL).sum() == 0:
        raise MeshingError("mesh lost a region tag")
    if len(mesh.boundary_edges) != n_outer:
        raise MeshingError(
            f"boundary loop has {len(mesh.boundary_edges)} edges, expected {n_outer}")
    if len(mesh.interface_edges) != sum(core_sizes):
        raise MeshingError(
            f"interface has {len(mesh.interface_edges)} edges, expected {sum(core_sizes)}")
    # boundary vertices must sit on the analytic curve
    bverts = np.unique(mesh.boundary_edges)
    th = mesh.outer.angle_of(mesh.vertices[bverts])
    d = np.abs(np.hypot(*(mesh.vertices[bverts] - mesh.outer.center).T)
               - mesh.outer.radius(th))
    if d.max() > 1e-9 * mesh.outer.r0:
        raise MeshingError("boundary vertex off the analytic boundary")
    # interface vertices on their core curve
    for e, ci in zip(mesh.interface_edges, mesh.interface_core):
        core = mesh.cores[ci]
        for v in e:
            p = mesh.vertices[v]
            thv = core.angle_of(p)
            if abs(np.hypot(p[0] - core.center[0], p[1] - core.center[1])
                   - core.radius(thv)) > 1e-9 * core.r0:
                raise MeshingError("interface vertex off the core boundary")
    if mesh.triangle_areas().min() <= 0:
        raise MeshingError("inverted triangle")


def boundary_normals(mesh: Mesh) -> np.ndarray:
    """Outward unit normal per outer-boundary vertex, angle-weighted averaging.

    Returns an (n_boundary_vertices, 2) array aligned with
    ``np.unique(mesh.boundary_edges)``.
    """
    bverts = np.unique(mesh.boundary_edges)
    pos = {v: i for i, v in enumerate(bverts)}
    acc = np.zeros((len(bverts), 2))
    for a, b in mesh.boundary_edges:
        t = mesh.vertices[b] - mesh.vertices[a]
        L = np.hypot(*t)
        n = np.array([t[1], -t[0]]) / L
        # weight by the half edge length at each endpoint (angle-weighted
        # averaging reduces to length weighting for polylines)
        acc[pos[a]] += n * L
        acc[pos[b]] += n * L
    acc /= np.linalg.norm(acc, axis=1)[:, None]
    return acc


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle in 4; new curve nodes projected onto the curves."""
    verts = mesh.vertices
    tris = mesh.triangles
    e_all = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e_sorted = np.sort(e_all, axis=1)
    uniq, inv = np.unique(e_sorted, axis=0, return_inverse=True)
    nv = len(verts)
    mid = 0.5 * (verts[uniq[:, 0]] + verts[uniq[:, 1]])
    edge_key = {tuple(e): i for i, e in enumerate(map(tuple, uniq))}
    for e in map(tuple, np.sort(mesh.boundary_edges, axis=1)):
        i = edge_key[e]
        th = mesh.outer.angle_of(mid[i])
        mid[i] = mesh.outer.point(th)
    for e, ci in zip(np.sort(mesh.interface_edges, axis=1), mesh.interface_core):
        i = edge_key[tuple(e)]
        core = mesh.cores[ci]
        th = core.angle_of(mid[i])
        mid[i] = core.point(th)
    new_verts = np.vstack([verts, mid])

    nt = len(tris)
    m01 = nv + inv[:nt]
    m12 = nv + inv[nt:2 * nt]
    m20 = nv + inv[2 * nt:]
    t0 = np.stack([tris[:, 0], m01, m20], axis=1)
    t1 = np.stack([tris[:, 1], m12, m01], axis=1)
    t2 = np.stack([tris[:, 2], m20, m12], axis=1)
    t3 = np.stack([m01, m12, m20], axis=1)
    new_tris = np.concatenate([t0, t1, t2, t3])
    new_tags = np.concatenate([mesh.tri_tags] * 4)

    def _split_edges(edges_arr, cores_arr=None):
        out = []
        out_c = []
        for r, (a, b) in enumerate(edges_arr):
            m = nv + edge_key[tuple(sorted((a, b)))]
            out.append((a, m))
            out.append((m, b))
            if cores_arr is not None:
                out_c.extend([cores_arr[r], cores_arr[r]])
        return (np.asarray(out, dtype=int).reshape(-1, 2),
                np.asarray(out_c, dtype=int))

    new_bedges, _ = _split_edges(mesh.boundary_edges)
    new_iedges, new_icore = _split_edges(mesh.interface_edges, mesh.interface_core)

    return Mesh(
        vertices=new_verts,
        triangles=new_tris,
        tri_tags=new_tags,
        boundary_edges=new_bedges,
        interface_edges=new_iedges,
        interface_core=new_icore,
        order=mesh.order,
        outer=mesh.outer,
        cores=mesh.cores,
        target_h=mesh.target_h / 2,
    )


def mesh_to_text(mesh: Mesh) -> str:
    """Plain-text export with $vertices / $triangles / edge sections."""
    out = ["$vertices"]
    for x, y in mesh.vertices:
        out.append(f"{x!r} {y!r}")
    out.append("$triangles(tag)")
    for (a, b, c), t in zip(mesh.triangles, mesh.tri_tags):
        out.append(f"{a} {b} {c} {t}")
    out.append("$boundary_edges")
    for a, b in mesh.boundary_edges:
        out.append(f"{a} {b}")
    out.append("$interface_edges")
    for (a, b), ci in zip(mesh.interface_edges, mesh.interface_core):
        out.append(f"{a} {b} {ci}")
    return "\n".join(out) + "\n"

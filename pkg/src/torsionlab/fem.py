"""Two-phase finite elements: torsion solve, Neumann solve, flux recovery.

Isoparametric P1/P2 triangles; order-2 elements adjacent to the outer
boundary or the interface are curved (edge nodes sit on the analytic
curves).  All solves use a sparse direct factorization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import BoundaryField, FemField
from .meshgen import TAG_CORE, Mesh

__all__ = [
    "FemError",
    "assemble_system",
    "solve_torsion",
    "solve_neumann_zero_avg",
    "solve_dirichlet",
    "boundary_flux",
    "torsional_rigidity",
    "RigidityReport",
    "interface_flux_jump",
    "normal_second_derivative",
    "boundary_mass_matrix",
    "mass_matrix",
    "make_boundary_field",
    "field_to_csv",
]


class FemError(RuntimeError):
    pass


# --- reference elements ------------------------------------------------------

# 7-point degree-5 quadrature on the reference triangle (barycentric)
_QW = np.array([0.225,
                0.13239415278850618, 0.13239415278850618, 0.13239415278850618,
                0.12593918054482715, 0.12593918054482715, 0.12593918054482715]) * 0.5
_a = 0.4701420641051151
_b = 0.1012865073234563
_QP = np.array([
    [1 / 3, 1 / 3],
    [_a, _a], [1 - 2 * _a, _a], [_a, 1 - 2 * _a],
    [_b, _b], [1 - 2 * _b, _b], [_b, 1 - 2 * _b],
])


def _shape_tri(order: int, pts):
    """Shape functions and reference gradients at (nq, 2) reference points."""
    xi = pts[:, 0]
    eta = pts[:, 1]
    L1 = 1 - xi - eta
    L2 = xi
    L3 = eta
    if order == 1:
        N = np.stack([L1, L2, L3], axis=1)
        dN = np.broadcast_to(
            np.array([[[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]]),
            (len(pts), 3, 2)).copy()
        return N, dN
    N = np.stack([
        L1 * (2 * L1 - 1), L2 * (2 * L2 - 1), L3 * (2 * L3 - 1),
        4 * L1 * L2, 4 * L2 * L3, 4 * L3 * L1,
    ], axis=1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    dN = np.empty((len(pts), 6, 2))
    for j in range(2):
        dN[:, 0, j] = (4 * L1 - 1) * dL[0, j]
        dN[:, 1, j] = (4 * L2 - 1) * dL[1, j]
        dN[:, 2, j] = (4 * L3 - 1) * dL[2, j]
        dN[:, 3, j] = 4 * (L2 * dL[0, j] + L1 * dL[1, j])
        dN[:, 4, j] = 4 * (L3 * dL[1, j] + L2 * dL[2, j])
        dN[:, 5, j] = 4 * (L1 * dL[2, j] + L3 * dL[0, j])
    return N, dN


# 4-point Gauss on [-1, 1]
_GX = np.array([-0.8611363115940526, -0.3399810435848563,
                0.3399810435848563, 0.8611363115940526])
_GW = np.array([0.34785484513745385, 0.6521451548625461,
                0.6521451548625461, 0.34785484513745385])


def _shape_line(order: int, xi):
    if order == 1:
        N = np.stack([(1 - xi) / 2, (1 + xi) / 2], axis=1)
        dN = np.stack([np.full_like(xi, -0.5), np.full_like(xi, 0.5)], axis=1)
        return N, dN
    N = np.stack([xi * (xi - 1) / 2, xi * (xi + 1) / 2, 1 - xi * xi], axis=1)
    dN = np.stack([xi - 0.5, xi + 0.5, -2 * xi], axis=1)
    return N, dN


# --- assembly ----------------------------------------------------------------

def _sigma_per_element(mesh: Mesh, sigma_c: float) -> np.ndarray:
    return np.where(mesh.tri_tags == TAG_CORE, sigma_c, 1.0)


def assemble_system(mesh: Mesh, sigma_c: float):
    """Global stiffness (sigma-weighted) and load vector for f = 1."""
    conn = mesh.tri_nodes
    X = mesh.nodes[conn]                     # (ne, nn, 2)
    N, dN = _shape_tri(mesh.order, _QP)      # (nq, nn), (nq, nn, 2)
    J = np.einsum("eni,qnj->eqij", X, dN)    # (ne, nq, 2, 2)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(detJ <= 0):
        raise FemError("non-positive Jacobian in assembly")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1]
    inv[..., 0, 1] = -J[..., 0, 1]
    inv[..., 1, 0] = -J[..., 1, 0]
    inv[..., 1, 1] = J[..., 0, 0]
    inv /= detJ[..., None, None]
    # physical gradients: g[e,q,n,i] = dN[q,n,j] * invJ[e,q,j,i]
    g = np.einsum("qnj,eqji->eqni", dN, inv)
    sig = _sigma_per_element(mesh, sigma_c)
    w = _QW[None, :] * detJ                  # (ne, nq)
    Ke = np.einsum("eq,eqni,eqmi->enm", w * sig[:, None], g, g)
    be = np.einsum("eq,qn->en", w, N)

    nn = mesh.n_nodes
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(nn, nn)).tocsr()
    b = np.zeros(nn)
    np.add.at(b, conn.ravel(), be.ravel())
    return A, b


def mass_matrix(mesh: Mesh):
    """Global (volume) mass matrix on the isoparametric elements."""
    conn = mesh.tri_nodes
    X = mesh.nodes[conn]
    N, dN = _shape_tri(mesh.order, _QP)
    J = np.einsum("eni,qnj->eqij", X, dN)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    w = _QW[None, :] * detJ
    Me = np.einsum("eq,qn,qm->enm", w, N, N)
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    nn = mesh.n_nodes
    return sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(nn, nn)).tocsr()


def _line_mass(mesh: Mesh, edge_nodes: np.ndarray):
    """Mass matrix of the curved line elements given by ``edge_nodes``."""
    X = mesh.nodes[edge_nodes]               # (ne, nn, 2)
    N, dN = _shape_line(mesh.order, _GX)     # (nq, nn)
    dxdxi = np.einsum("eni,qn->eqi", X, dN)
    jac = np.linalg.norm(dxdxi, axis=-1)     # (ne, nq)
    w = _GW[None, :] * jac
    Me = np.einsum("eq,qn,qm->enm", w, N, N)
    nloc = edge_nodes.shape[1]
    rows = np.repeat(edge_nodes, nloc, axis=1).ravel()
    cols = np.tile(edge_nodes, (1, nloc)).ravel()
    nn = mesh.n_nodes
    return sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(nn, nn)).tocsr()


def boundary_mass_matrix(mesh: Mesh):
    """Outer-boundary mass matrix restricted to ``mesh.boundary_nodes``."""
    M = _line_mass(mesh, mesh.boundary_edge_nodes)
    bn = mesh.boundary_nodes
    return M[np.ix_(bn, bn)].tocsr()


def make_boundary_field(mesh: Mesh, values, zero_average: bool = False,
                        _Mb=None) -> BoundaryField:
    """Wrap nodal boundary values (array or callable of theta)."""
    bn = mesh.boundary_nodes
    th = mesh.boundary_theta
    if callable(values):
        values = values(th)
    values = np.broadcast_to(np.asarray(values, dtype=float), bn.shape).copy()
    Mb = boundary_mass_matrix(mesh) if _Mb is None else _Mb
    w = np.asarray(Mb.sum(axis=1)).ravel()
    return BoundaryField(bn, values, th, w, zero_average=zero_average)


# --- solvers -----------------------------------------------------------------

def solve_torsion(mesh: Mesh, sigma_c: float) -> FemField:
    """Galerkin solution of -div(sigma grad u) = 1, u = 0 on the outer boundary."""
    if sigma_c <= 0:
        raise FemError("sigma_c must be positive")
    A, b = assemble_system(mesh, sigma_c)
    u = _dirichlet_solve(mesh, A, b, np.zeros(len(mesh.boundary_nodes)))
    return FemField(mesh, u, sigma_c=sigma_c, kind="torsion")


def solve_dirichlet(mesh: Mesh, sigma_c: float, boundary_values) -> FemField:
    """sigma-harmonic field with prescribed Dirichlet data on the outer boundary."""
    A, _ = assemble_system(mesh, sigma_c)
    if isinstance(boundary_values, BoundaryField):
        boundary_values = boundary_values.values
    u = _dirichlet_solve(mesh, A, np.zeros(mesh.n_nodes),
                         np.asarray(boundary_values, dtype=float))
    return FemField(mesh, u, sigma_c=sigma_c, kind="dirichlet")


def _dirichlet_solve(mesh: Mesh, A, b, bvals):
    nn = mesh.n_nodes
    bn = mesh.boundary_nodes
    mask = np.zeros(nn, dtype=bool)
    mask[bn] = True
    free = ~mask
    u = np.zeros(nn)
    u[bn] = bvals
    rhs = b[free] - A[np.ix_(free, mask.nonzero()[0])] @ u[mask]
    Aff = A[np.ix_(free.nonzero()[0], free.nonzero()[0])].tocsc()
    sol = spla.spsolve(Aff, rhs)
    res = np.linalg.norm(Aff @ sol - rhs)
    scale = np.linalg.norm(rhs) or 1.0
    if res / scale > 1e-10:
        raise FemError(f"direct solve residual too large: {res / scale:g}")
    u[free.nonzero()[0]] = sol
    return u


def solve_neumann_zero_avg(mesh: Mesh, sigma_c: float,
                           xi: BoundaryField) -> FemField:
    """Zero-boundary-average solution of the two-phase Neumann problem.

    The constraint int_{dOmega} v = 0 is enforced through a single scalar
    multiplier row built from the boundary mass.
    """
    Mb = boundary_mass_matrix(mesh)
    w = np.asarray(Mb.sum(axis=1)).ravel()
    scale = w.sum() * (np.abs(xi.values).max() or 1.0)
    if abs(w @ xi.values) > 1e-9 * scale:
        raise FemError("Neumann data must have zero boundary average")
    A, _ = assemble_system(mesh, sigma_c)
    nn = mesh.n_nodes
    bn = mesh.boundary_nodes
    m = np.zeros(nn)
    m[bn] = w
    rhs = np.zeros(nn + 1)
    rhs[bn] = Mb @ xi.values
    K = sp.bmat([[A, m[:, None]], [m[None, :], None]], format="csc")
    sol = spla.spsolve(K, rhs)
    v = sol[:nn]
    return FemField(mesh, v, sigma_c=sigma_c, kind="neumann")


def boundary_flux(field: FemField, sigma_c: float | None = None,
                  rhs_is_one: bool = True) -> BoundaryField:
    """Variational recovery of the outer-boundary normal flux.

    Solves the boundary mass system for g with
    int_{dOmega} g phi = int sigma grad u . grad phi - int f phi.
    """
    mesh = field.mesh
    if sigma_c is None:
        sigma_c = field.sigma_c
    A, b = assemble_system(mesh, sigma_c)
    r = A @ field.values - (b if rhs_is_one else 0.0)
    Mb = boundary_mass_matrix(mesh)
    bn = mesh.boundary_nodes
    g = spla.spsolve(Mb.tocsc(), r[bn])
    return make_boundary_field(mesh, g, _Mb=Mb)


@dataclass(frozen=True)
class RigidityReport:
    value: float          # int u
    energy: float         # int sigma |grad u|^2

    def __float__(self):
        return self.value


def torsional_rigidity(u: FemField, sigma_c: float | None = None) -> RigidityReport:
    """Torsional rigidity: int u, together with the energy int sigma |grad u|^2."""
    mesh = u.mesh
    if sigma_c is None:
        sigma_c = u.sigma_c
    A, b = assemble_system(mesh, sigma_c)
    return RigidityReport(value=float(b @ u.values),
                          energy=float(u.values @ (A @ u.values)))


def _element_gradient(mesh: Mesh, values, elems, ref_pts):
    """Physical gradient of the field on given elements at reference points."""
    conn = mesh.tri_nodes[elems]
    X = mesh.nodes[conn]
    N, dN = _shape_tri(mesh.order, ref_pts)
    J = np.einsum("eni,qnj->eqij", X, dN)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1]
    inv[..., 0, 1] = -J[..., 0, 1]
    inv[..., 1, 0] = -J[..., 1, 0]
    inv[..., 1, 1] = J[..., 0, 0]
    inv /= detJ[..., None, None]
    g = np.einsum("qnj,eqji->eqni", dN, inv)
    vals = values[conn]
    return np.einsum("en,eqni->eqi", vals, g)


def interface_flux_jump(u: FemField, sigma_c: float | None = None) -> float:
    """Max |[[sigma dn u]]| over interface edge midpoints (both-side traces).

    A conforming Galerkin solution annihilates the variational jump by
    construction, so the jump is recovered from one-sided gradient traces;
    it measures discretization quality.
    """
    mesh = u.mesh
    if sigma_c is None:
        sigma_c = u.sigma_c
    # locate the two triangles sharing each interface edge
    tris = mesh.triangles
    edge_map = {}
    for t in range(len(tris)):
        for k in range(3):
            e = tuple(sorted((tris[t, k], tris[t, (k + 1) % 3])))
            edge_map.setdefault(e, []).append((t, k))
    jump_max = 0.0
    for (a, b), ci in zip(mesh.interface_edges, mesh.interface_core):
        owners = edge_map[tuple(sorted((a, b)))]
        if len(owners) != 2:
            raise FemError("interface edge not shared by two triangles")
        core = mesh.cores[ci]
        pm = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        n = core.normal(core.angle_of(pm))
        flux = {}
        for t, k in owners:
            # reference midpoint of local edge k
            ref = {0: (0.5, 0.0), 1: (0.5, 0.5), 2: (0.0, 0.5)}[k]
            grad = _element_gradient(mesh, u.values, np.array([t]),
                                     np.array([ref]))[0, 0]
            sig = sigma_c if mesh.tri_tags[t] == TAG_CORE else 1.0
            flux[mesh.tri_tags[t]] = sig * (grad @ n)
        jump_max = max(jump_max, abs(flux[TAG_CORE] - flux[1 - TAG_CORE]))
    return float(jump_max)


def normal_second_derivative(u: FemField, sigma_c: float | None = None) -> BoundaryField:
    """Second normal derivative of u on the outer boundary.

    Uses the level-line identity d2u/dn2 = -1 - kappa * dn(u), valid because
    u vanishes on the outer boundary and -Delta u = 1 in the shell.
    """
    mesh = u.mesh
    trace = np.abs(u.values[mesh.boundary_nodes]).max()
    if trace > 1e-8:
        raise FemError(
            f"normal_second_derivative needs a homogeneous trace, got max {trace:g}")
    g = boundary_flux(u, sigma_c=sigma_c, rhs_is_one=True)
    kappa = mesh.outer.curvature(mesh.boundary_theta)
    return g.with_values(-1.0 - kappa * g.values)


def field_to_csv(field: FemField) -> str:
    """Node-indexed CSV export: node_id,x,y,value."""
    lines = ["node_id,x,y,value"]
    for i, ((x, y), v) in enumerate(zip(field.mesh.nodes, field.values)):
        lines.append(f"{i},{x!r},{y!r},{v!r}")
    return "\n".join(lines) + "\n"

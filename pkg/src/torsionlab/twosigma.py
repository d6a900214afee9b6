"""Two-conductivity experiment: can one inclusion shape serve two sigmas?

Solving the torsion problem twice on the same mesh with conductivities
alpha and beta, the combination v = alpha u_alpha - beta u_beta has zero
core gradient energy exactly when the configuration is simultaneously
overdetermined-solvable for both conductivities; that happens only for
concentric disks.  The deviation score quantifies the failure, and the
reduction field w transports the two-phase pair back to a one-phase
torsion candidate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .fields import FemField
from .geometry import TwoPhaseConfig
from .meshgen import TAG_CORE, Mesh, generate_mesh

__all__ = ["DualSolvePair", "LockingReport", "ReductionReport",
           "TwoSigmaScore", "ReductionInvalidError", "dual_solve",
           "locking_field", "serrin_reduction", "two_sigma_deviation",
           "score_sweep_to_csv"]

#: relative core-energy threshold below which v counts as locked (constant)
LOCKING_TOL = 1e-4


class ReductionInvalidError(RuntimeError):
    pass


@dataclass
class DualSolvePair:
    """Torsion solutions for two conductivities on one shared mesh."""

    alpha: float
    beta: float
    u_alpha: FemField
    u_beta: FemField

    @property
    def mesh(self) -> Mesh:
        return self.u_alpha.mesh


@dataclass
class LockingReport:
    """The locking field v = alpha u_alpha - beta u_beta and its core stats."""

    v: FemField
    core_energy: float                 # int_D |grad v|^2
    trace_deviation: float             # max |v - (alpha-beta) u_alpha| on dD
    core_means: list[float]            # nodal mean of v per core component
    core_stds: list[float]             # nodal std of v per core component


@dataclass
class ReductionReport:
    """One-phase candidate w with its equation residual and flux spread."""

    w: FemField
    equation_residual: float           # max interior |(-Lap_h w) - 1|
    flux_mean: float
    flux_deviation: float              # max |dn w - mean| on the boundary


@dataclass
class TwoSigmaScore:
    flux_dev_alpha: float
    flux_dev_beta: float
    core_energy: float

    @property
    def total(self) -> float:
        return self.flux_dev_alpha + self.flux_dev_beta + self.core_energy


def dual_solve(mesh: Mesh, alpha: float, beta: float) -> DualSolvePair:
    """Solve the torsion problem for conductivities alpha and beta."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("conductivities must be positive")
    if abs(alpha - beta) < 1e-6:
        raise ValueError("conductivities must be distinct (|alpha-beta| >= 1e-6)")
    return DualSolvePair(alpha=float(alpha), beta=float(beta),
                         u_alpha=fem.solve_torsion(mesh, alpha),
                         u_beta=fem.solve_torsion(mesh, beta))


def _core_stiffness(mesh: Mesh):
    """Stiffness restricted to core elements: A(sigma_c=2) - A(sigma_c=1)."""
    A2, _ = fem.assemble_system(mesh, 2.0)
    A1, _ = fem.assemble_system(mesh, 1.0)
    return A1, (A2 - A1)


def _core_node_groups(mesh: Mesh):
    """Node index sets of each core component (triangle centroid assignment)."""
    groups = []
    core_tris = np.nonzero(mesh.tri_tags == TAG_CORE)[0]
    centroids = mesh.vertices[mesh.triangles[core_tris]].mean(axis=1)
    for core in mesh.cores:
        mine = core_tris[core.contains(centroids, shrink=-1e-9)]
        groups.append(np.unique(mesh.tri_nodes[mine]))
    return groups


def locking_field(pair: DualSolvePair) -> LockingReport:
    """v = alpha u_alpha - beta u_beta; locally constant in D iff (D, Omega)
    is simultaneously solvable for both conductivities."""
    mesh = pair.mesh
    vals = pair.alpha * pair.u_alpha.values - pair.beta * pair.u_beta.values
    v = FemField(mesh=mesh, values=vals, kind="locking")
    _, Acore = _core_stiffness(mesh)
    core_energy = float(vals @ (Acore @ vals))
    iface = np.unique(mesh.interface_edge_nodes)
    expected = (pair.alpha - pair.beta) * pair.u_alpha.values[iface]
    trace_dev = float(np.abs(vals[iface] - expected).max())
    means, stds = [], []
    for nodes in _core_node_groups(mesh):
        means.append(float(vals[nodes].mean()))
        stds.append(float(vals[nodes].std()))
    return LockingReport(v=v, core_energy=core_energy,
                         trace_deviation=trace_dev,
                         core_means=means, core_stds=stds)


def serrin_reduction(pair: DualSolvePair,
                     locking_tol: float = LOCKING_TOL) -> ReductionReport:
    """One-phase candidate w = u_alpha + (alpha-1) E_D(u_alpha - v/(alpha-beta)).

    The extension by zero E_D adjusts core-interior nodes only (the adjusted
    quantity has zero trace on the interface); the result should solve the
    one-phase torsion problem when the locking field is constant per core.
    """
    mesh = pair.mesh
    lock = locking_field(pair)
    A1, Acore = _core_stiffness(mesh)
    ua = pair.u_alpha.values
    scale = float(ua @ (Acore @ ua))       # core gradient energy of u_alpha
    if lock.core_energy > locking_tol * scale:
        raise ReductionInvalidError(
            f"core gradient energy {lock.core_energy:g} exceeds "
            f"{locking_tol:g} * {scale:g}; v is not locked, w is meaningless")
    # u_alpha - v/(alpha-beta) = beta (u_beta - u_alpha)/(alpha-beta)
    adjust = (pair.alpha - 1.0) * pair.beta * (
        pair.u_beta.values - ua) / (pair.alpha - pair.beta)
    core_nodes = np.unique(mesh.tri_nodes[mesh.tri_tags == TAG_CORE])
    interior_core = np.setdiff1d(core_nodes,
                                 np.unique(mesh.interface_edge_nodes))
    wvals = ua.copy()
    wvals[interior_core] += adjust[interior_core]
    w = FemField(mesh=mesh, values=wvals, sigma_c=1.0, kind="torsion")

    # equation residual in the L2 (Riesz) sense on non-Dirichlet nodes:
    # solve M z = A1 w - b there; z represents (-Lap_h w) - 1
    _, b = fem.assemble_system(mesh, 1.0)
    r = A1 @ wvals - b
    free = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes)
    M = fem.mass_matrix(mesh)
    z = spla.spsolve(M[np.ix_(free, free)].tocsc(), r[free])
    g = fem.boundary_flux(w)
    c_hat = g.weighted_mean()
    return ReductionReport(w=w, equation_residual=float(np.abs(z).max()),
                           flux_mean=float(c_hat),
                           flux_deviation=float(np.abs(g.values - c_hat).max()))


def two_sigma_deviation(config: TwoPhaseConfig, alpha: float, beta: float,
                        target_h: float = 0.05, order: int = 2,
                        mesh: Mesh | None = None) -> TwoSigmaScore:
    """Score = flux spread of u_alpha + flux spread of u_beta + core energy
    of the locking field; near zero only for concentric disks."""
    if mesh is None:
        mesh = generate_mesh(config, target_h, order=order)
    pair = dual_solve(mesh, alpha, beta)
    lock = locking_field(pair)

    def spread(u):
        g = fem.boundary_flux(u)
        return float(np.abs(g.values - g.weighted_mean()).max())

    return TwoSigmaScore(flux_dev_alpha=spread(pair.u_alpha),
                         flux_dev_beta=spread(pair.u_beta),
                         core_energy=lock.core_energy)


def score_sweep_to_csv(offsets, scores) -> str:
    """CSV of deviation scores over a family of core offsets."""
    lines = ["offset,score_alpha_flux,score_beta_flux,E_core,total"]
    for off, s in zip(offsets, scores):
        lines.append(f"{float(off)!r},{s.flux_dev_alpha!r},"
                     f"{s.flux_dev_beta!r},{s.core_energy!r},{s.total!r}")
    return "\n".join(lines) + "\n"

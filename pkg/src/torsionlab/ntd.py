"""Two-phase Neumann-to-Dirichlet operator on zero-average boundary data.

The operator is assembled densely, column by column, through repeated
Neumann solves sharing one factorization; the spectrum comes from the
generalized symmetric eigenproblem with the boundary mass matrix as metric.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem, shape_calc
from .fields import BoundaryField, FemField
from .geometry import TwoPhaseConfig
from .meshgen import Mesh, generate_mesh

__all__ = ["NtdOperator", "NtdSpectrum", "NtdAssemblyError", "assemble_ntd",
           "ntd_spectrum", "theorem1_experiment", "Theorem1Row"]


class NtdAssemblyError(RuntimeError):
    pass


@dataclass
class NtdOperator:
    """Galerkin matrix of the NtD map in the boundary-mass metric."""

    mesh: Mesh
    sigma_c: float
    matrix: np.ndarray          # symmetrized Mb @ Lambda, (nb, nb)
    mass: np.ndarray            # dense boundary mass matrix
    asymmetry: float


@dataclass
class NtdSpectrum:
    """Descending positive eigenvalues with mass-orthonormal eigenfields."""

    eigenvalues: np.ndarray
    eigenfields: list[BoundaryField]
    mesh: Mesh
    sigma_c: float


def assemble_ntd(mesh: Mesh, sigma_c: float,
                 asymmetry_tol: float = 1e-6) -> NtdOperator:
    """Dense NtD assembly by one Neumann solve per boundary basis function."""
    Mb = fem.boundary_mass_matrix(mesh).toarray()
    bn = mesh.boundary_nodes
    nb = len(bn)
    w = Mb.sum(axis=1)
    wsum = w.sum()
    nn = mesh.n_nodes
    A, _ = fem.assemble_system(mesh, sigma_c)
    m = np.zeros(nn)
    m[bn] = w
    K = sp.bmat([[A, m[:, None]], [m[None, :], None]], format="csc")
    lu = spla.splu(K)
    T = np.empty((nb, nb))
    for j in range(nb):
        xi = np.full(nb, -w[j] / wsum)
        xi[j] += 1.0                    # zero-average projection of e_j
        rhs = np.zeros(nn + 1)
        rhs[bn] = Mb @ xi
        sol = lu.solve(rhs)
        T[:, j] = sol[:nn][bn]
    Araw = Mb @ T
    denom = np.abs(Araw).max()
    asym = np.abs(Araw - Araw.T).max() / denom
    if asym > asymmetry_tol:
        raise NtdAssemblyError(
            f"NtD asymmetry {asym:g} exceeds {asymmetry_tol:g}; solver inaccuracy")
    return NtdOperator(mesh=mesh, sigma_c=sigma_c,
                       matrix=0.5 * (Araw + Araw.T), mass=Mb, asymmetry=asym)


def ntd_spectrum(op: NtdOperator, k_max: int) -> NtdSpectrum:
    """The k_max largest eigenpairs, mass-orthonormal, deterministic signs."""
    nb = op.matrix.shape[0]
    cap = nb // 8
    if k_max > cap:
        raise NtdAssemblyError(
            f"k_max={k_max} exceeds the resolution cap {cap} (= boundary nodes / 8)")
    vals, vecs = scipy.linalg.eigh(op.matrix, op.mass)
    order = np.argsort(vals)[::-1][:k_max]
    mesh = op.mesh
    # boundary loop order for a reproducible sign convention
    loop = np.argsort(mesh.boundary_theta)
    eigenvalues = []
    eigenfields = []
    for idx in order:
        lam = float(vals[idx])
        if lam <= 0:
            break
        v = vecs[:, idx]
        vl = v[loop]
        nz = np.nonzero(np.abs(vl) > 1e-12 * np.abs(vl).max())[0]
        if len(nz) and vl[nz[0]] < 0:
            v = -v
        eigenvalues.append(lam)
        eigenfields.append(fem.make_boundary_field(mesh, v, zero_average=True))
    return NtdSpectrum(eigenvalues=np.asarray(eigenvalues),
                       eigenfields=eigenfields, mesh=mesh, sigma_c=op.sigma_c)


@dataclass(frozen=True)
class Theorem1Row:
    k: int
    lam: float
    d2T: float
    bound: float


def theorem1_experiment(config: TwoPhaseConfig, k_range,
                        target_h: float = 0.05, order: int = 2,
                        mesh: Mesh | None = None,
                        overdetermined_tol: float = shape_calc.OVERDETERMINED_TOL):
    """Per eigen-perturbation h_k = xi_k n: d2T and the no-minimizer bound.

    bound_k = -2 c^2 / lambda_k + 2 c min d2nn(u); returns the rows plus the
    smallest k with d2T < 0.
    """
    if mesh is None:
        mesh = generate_mesh(config, target_h, order=order)
    sigma_c = config.sigma_c
    u = fem.solve_torsion(mesh, sigma_c)
    g = fem.boundary_flux(u)
    c_hat = shape_calc._check_critical(g, overdetermined_tol)
    d2nn_min = float(fem.normal_second_derivative(u).values.min())
    k_range = sorted(int(k) for k in k_range)
    op = assemble_ntd(mesh, sigma_c)
    spec = ntd_spectrum(op, max(k_range))
    rows = []
    k_neg = None
    for k in k_range:
        lam = float(spec.eigenvalues[k - 1])
        xi = spec.eigenfields[k - 1]
        up = shape_calc.solve_shape_derivative(mesh, sigma_c, xi, c_hat)
        d2 = shape_calc.second_shape_derivative(
            u, up, xi, c_hat, overdetermined_tol=overdetermined_tol)
        bound = -2 * c_hat ** 2 / lam + 2 * c_hat * d2nn_min
        rows.append(Theorem1Row(k=k, lam=lam, d2T=d2, bound=bound))
        if k_neg is None and d2 < 0:
            k_neg = k
    return {"rows": rows, "k_neg": k_neg, "c_hat": c_hat,
            "d2nn_min": d2nn_min, "spectrum": spec}

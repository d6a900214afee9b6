"""Shared fixtures: meshes and solves reused across the whole suite.

Everything heavy is session-scoped; the configurations are immutable and
the solvers are pure, so sharing is safe.
"""
import numpy as np
import pytest

from torsionlab import fem
from torsionlab.geometry import StarBoundary, TwoPhaseConfig
from torsionlab.meshgen import generate_mesh, refine_uniform

RHO = 0.5
R = 1.0
SIGMA_C = 2.0


@pytest.fixture(scope="session")
def concentric_config():
    """Concentric disks: core radius 0.5 inside the unit disk, sigma_c = 2."""
    return TwoPhaseConfig(outer=StarBoundary(r0=R),
                          cores=(StarBoundary(r0=RHO),), sigma_c=SIGMA_C)


@pytest.fixture(scope="session")
def concentric_mesh(concentric_config):
    return generate_mesh(concentric_config, 0.05, order=2)


@pytest.fixture(scope="session")
def concentric_mesh_fine(concentric_mesh):
    """One uniform refinement of the concentric mesh (h = 0.025)."""
    return refine_uniform(concentric_mesh)


@pytest.fixture(scope="session")
def concentric_solution(concentric_mesh):
    return fem.solve_torsion(concentric_mesh, SIGMA_C)


@pytest.fixture(scope="session")
def concentric_flux(concentric_solution):
    return fem.boundary_flux(concentric_solution)


@pytest.fixture(scope="session")
def one_phase_solution(concentric_mesh):
    """sigma = 1 everywhere: the classical one-phase torsion function."""
    return fem.solve_torsion(concentric_mesh, 1.0)


@pytest.fixture(scope="session")
def offset_config():
    """Core of radius 0.5 shifted to (0.2, 0): not overdetermined-solvable."""
    return TwoPhaseConfig(outer=StarBoundary(r0=R),
                          cores=(StarBoundary(center=(0.2, 0.0), r0=RHO),),
                          sigma_c=SIGMA_C)


@pytest.fixture(scope="session")
def offset_mesh(offset_config):
    return generate_mesh(offset_config, 0.05, order=2)


def radial_reference(r, rho=RHO, R_out=R, sigma_c=SIGMA_C):
    """Closed-form concentric torsion function (2D), independent re-derivation."""
    r = np.asarray(r, dtype=float)
    shell = (R_out ** 2 - r ** 2) / 4.0
    core = (R_out ** 2 - rho ** 2) / 4.0 + (rho ** 2 - r ** 2) / (4.0 * sigma_c)
    return np.where(r >= rho, shell, core)


def max_nodal_error(u, sigma_c):
    """Max nodal deviation of a concentric-disk solve from the closed form."""
    rr = np.hypot(u.mesh.nodes[:, 0], u.mesh.nodes[:, 1])
    return float(np.abs(u.values - radial_reference(rr, sigma_c=sigma_c)).max())

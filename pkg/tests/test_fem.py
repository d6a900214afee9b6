"""Two-phase finite elements: solves, flux recovery, rigidity, identities."""
import math

import numpy as np
import pytest

from torsionlab import fem
from torsionlab.geometry import StarBoundary, TwoPhaseConfig
from torsionlab.meshgen import generate_mesh, refine_uniform

from conftest import max_nodal_error


# --- torsion solves ----------------------------------------------------------

def test_one_phase_disk_matches_quartic(one_phase_solution):
    assert max_nodal_error(one_phase_solution, sigma_c=1.0) < 1e-4


def test_two_phase_center_value(concentric_solution):
    mesh = concentric_solution.mesh
    i = int(np.argmin(np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])))
    r = np.hypot(*mesh.nodes[i])
    expected = 0.1875 + (0.25 - r * r) / 8.0   # closed form at radius r
    assert concentric_solution.values[i] == pytest.approx(expected, abs=1e-3)
    assert abs(expected - 0.21875) < 1e-4      # node sits essentially at 0


def test_two_phase_max_nodal_error(concentric_solution):
    assert max_nodal_error(concentric_solution, sigma_c=2.0) < 1e-3


def test_sigma_continuity_at_one(concentric_mesh):
    u1 = fem.solve_torsion(concentric_mesh, 1.0)
    u2 = fem.solve_torsion(concentric_mesh, 1.0 + 1e-9)
    assert np.abs(u1.values - u2.values).max() < 1e-6


def test_maximum_principle(concentric_solution):
    u = concentric_solution
    bn = u.mesh.boundary_nodes
    assert np.abs(u.values[bn]).max() == 0.0
    interior = np.setdiff1d(np.arange(u.mesh.n_nodes), bn)
    assert u.values[interior].min() > 0


def test_rejects_nonpositive_sigma(concentric_mesh):
    with pytest.raises(fem.FemError):
        fem.solve_torsion(concentric_mesh, -1.0)


# --- Neumann solves ----------------------------------------------------------

def test_neumann_zero_data(concentric_mesh):
    xi = fem.make_boundary_field(concentric_mesh, np.zeros(
        len(concentric_mesh.boundary_nodes)), zero_average=True)
    v = fem.solve_neumann_zero_avg(concentric_mesh, 2.0, xi)
    assert np.abs(v.values).max() < 1e-10


def test_neumann_one_phase_cosine_trace(concentric_mesh):
    xi = fem.make_boundary_field(concentric_mesh, np.cos)
    v = fem.solve_neumann_zero_avg(concentric_mesh, 1.0, xi)
    trace = v.boundary_trace
    assert np.abs(trace - np.cos(concentric_mesh.boundary_theta)).max() < 1e-4


def test_neumann_two_phase_cosine_trace(concentric_mesh):
    # transmission matching of harmonic modes: trace = lambda_1 cos(theta)
    # with lambda_1 = (1 - mu rho^2) / (1 + mu rho^2), mu = 1/3, rho = 0.5
    xi = fem.make_boundary_field(concentric_mesh, np.cos)
    v = fem.solve_neumann_zero_avg(concentric_mesh, 2.0, xi)
    lam1 = 11.0 / 13.0
    err = np.abs(v.boundary_trace
                 - lam1 * np.cos(concentric_mesh.boundary_theta)).max()
    assert err < 1e-3


def test_neumann_trace_is_zero_average(concentric_mesh):
    xi = fem.make_boundary_field(concentric_mesh, np.cos)
    v = fem.solve_neumann_zero_avg(concentric_mesh, 2.0, xi)
    g = fem.make_boundary_field(concentric_mesh, v.boundary_trace)
    assert abs(g.weighted_mean()) < 1e-10


def test_neumann_rejects_nonzero_average(concentric_mesh):
    xi = fem.make_boundary_field(concentric_mesh, np.ones(
        len(concentric_mesh.boundary_nodes)))
    with pytest.raises(fem.FemError):
        fem.solve_neumann_zero_avg(concentric_mesh, 2.0, xi)


def test_neumann_self_adjointness(concentric_mesh):
    rng = np.random.default_rng(7)
    th = concentric_mesh.boundary_theta
    Mb = fem.boundary_mass_matrix(concentric_mesh)

    def random_zero_avg():
        raw = fem.make_boundary_field(
            concentric_mesh, rng.standard_normal(len(th)))
        return raw.with_values(raw.values - raw.weighted_mean(),
                               zero_average=True)

    xi, eta = random_zero_avg(), random_zero_avg()
    v_eta = fem.solve_neumann_zero_avg(concentric_mesh, 2.0, eta)
    v_xi = fem.solve_neumann_zero_avg(concentric_mesh, 2.0, xi)
    a = float(xi.values @ (Mb @ v_eta.boundary_trace))
    b = float(eta.values @ (Mb @ v_xi.boundary_trace))
    assert abs(a - b) < 1e-10 * max(abs(a), 1.0)


# --- flux recovery -----------------------------------------------------------

def test_one_phase_flux_constant(one_phase_solution):
    g = fem.boundary_flux(one_phase_solution)
    # max nodal deviation carries the O(h^2) recovery error; the mean is
    # essentially exact
    assert np.abs(g.values + 0.5).max() < 1e-3
    assert abs(g.weighted_mean() + 0.5) < 1e-6


@pytest.mark.parametrize("sigma_c", [0.5, 2.0, 10.0])
def test_two_phase_flux_constant(concentric_mesh, sigma_c):
    u = fem.solve_torsion(concentric_mesh, sigma_c)
    g = fem.boundary_flux(u)
    assert np.abs(g.values + 0.5).max() < 1e-3


def test_flux_round_trip(concentric_mesh):
    xi = fem.make_boundary_field(concentric_mesh, np.cos)
    v = fem.solve_neumann_zero_avg(concentric_mesh, 2.0, xi)
    g = fem.boundary_flux(v, rhs_is_one=False)
    assert np.abs(g.values - xi.values).max() < 1e-3


def test_flux_compatibility_with_divergence_theorem(concentric_flux):
    total = float(concentric_flux.weights @ concentric_flux.values)
    assert total == pytest.approx(-math.pi, rel=1e-4)


def test_flux_strictly_negative_everywhere(concentric_flux, offset_mesh):
    assert concentric_flux.values.max() < 0
    g = fem.boundary_flux(fem.solve_torsion(offset_mesh, 2.0))
    assert g.values.max() < 0


# --- rigidity ----------------------------------------------------------------

def test_rigidity_one_phase_disk(one_phase_solution):
    rig = fem.torsional_rigidity(one_phase_solution)
    assert rig.value == pytest.approx(math.pi / 8, abs=1e-4)


def test_rigidity_energy_identity(concentric_solution):
    rig = fem.torsional_rigidity(concentric_solution)
    assert rig.energy == pytest.approx(rig.value, rel=1e-6)
    assert float(rig) == rig.value


# --- interface jump ----------------------------------------------------------

def test_interface_jump_small(concentric_solution):
    assert fem.interface_flux_jump(concentric_solution) < 1e-3


def test_interface_jump_vanishes_for_unit_sigma(one_phase_solution):
    # one-sided gradient traces carry O(h^2) discretization error even when
    # no material discontinuity exists; the jump must sit at that floor,
    # far below the gradient scale |grad u| ~ 1/2
    assert fem.interface_flux_jump(one_phase_solution, sigma_c=1.0) < 1e-4


def test_interface_jump_refinement_slope(concentric_solution,
                                         concentric_mesh_fine):
    j0 = fem.interface_flux_jump(concentric_solution)
    u1 = fem.solve_torsion(concentric_mesh_fine, 2.0)
    j1 = fem.interface_flux_jump(u1)
    slope = math.log2(j0 / j1)
    assert slope >= 1.5


# --- second normal derivative ------------------------------------------------

def test_d2nn_unit_disk(one_phase_solution):
    d2 = fem.normal_second_derivative(one_phase_solution)
    assert np.abs(d2.values + 0.5).max() < 1e-3


def test_d2nn_radius_two_disk():
    cfg = TwoPhaseConfig(outer=StarBoundary(r0=2.0),
                         cores=(StarBoundary(r0=0.5),), sigma_c=2.0)
    mesh = generate_mesh(cfg, 0.1, order=2)
    u = fem.solve_torsion(mesh, 1.0)
    d2 = fem.normal_second_derivative(u)
    # c = -1 and curvature 1/2: d2nn = -1 - (1/2)(-1) = -1/2
    assert np.abs(d2.values + 0.5).max() < 1e-3


def test_d2nn_refuses_inhomogeneous_trace(concentric_mesh):
    v = fem.solve_dirichlet(concentric_mesh, 2.0, np.cos(
        concentric_mesh.boundary_theta))
    with pytest.raises(fem.FemError):
        fem.normal_second_derivative(v)


def test_d2nn_matches_normal_finite_differences(concentric_mesh_fine):
    # one-sided second difference of u along the inward normal; u is
    # quadratic along each radius in the shell, so the truncation term
    # vanishes and only interpolation error remains
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    mesh = concentric_mesh_fine
    u = fem.solve_torsion(mesh, 2.0)
    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1],
                        mesh.triangles)
    f = LinearTriInterpolator(tri, u.values[: len(mesh.vertices)])
    d2 = fem.normal_second_derivative(u)
    delta = 0.2
    for th in (0.0, 1.0, 2.5, 4.0):
        n = np.array([math.cos(th), math.sin(th)])
        p0 = n
        u1 = float(f(*(p0 - delta * n)))
        u2 = float(f(*(p0 - 2 * delta * n)))
        fd = (0.0 - 2 * u1 + u2) / delta ** 2
        i = int(np.argmin(np.abs(np.mod(mesh.boundary_theta - th,
                                        2 * np.pi))))
        assert fd == pytest.approx(d2.values[i], abs=1e-2)


# --- convergence -------------------------------------------------------------

def test_h_convergence_order_two(concentric_mesh, concentric_mesh_fine,
                                 concentric_solution):
    e0 = max_nodal_error(concentric_solution, sigma_c=2.0)
    e1 = max_nodal_error(fem.solve_torsion(concentric_mesh_fine, 2.0),
                         sigma_c=2.0)
    assert math.log2(e0 / e1) >= 1.9


# --- exports -----------------------------------------------------------------

def test_field_csv_schema(one_phase_solution):
    text = fem.field_to_csv(one_phase_solution)
    lines = text.strip().splitlines()
    assert lines[0] == "node_id,x,y,value"
    assert len(lines) == one_phase_solution.mesh.n_nodes + 1

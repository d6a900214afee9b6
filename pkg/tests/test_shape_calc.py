"""Shape derivatives of the rigidity: projection, T', u', T'', probes, ascent."""
import math

import numpy as np
import pytest

from torsionlab import fem, shape_calc
from torsionlab.geometry import StarBoundary, TwoPhaseConfig, area
from torsionlab.shape_calc import (NotCriticalError, classify_critical_shape,
                                   finite_difference_probe,
                                   first_shape_derivative, optimize_rigidity,
                                   project_zero_average,
                                   second_shape_derivative,
                                   solve_shape_derivative,
                                   trajectory_to_jsonl)


def _mode(mesh, f, k):
    return project_zero_average(
        fem.make_boundary_field(mesh, f(k * mesh.boundary_theta)))


# --- zero-average projection -------------------------------------------------

def test_project_kills_constants(concentric_mesh):
    hn = fem.make_boundary_field(concentric_mesh, np.ones(
        len(concentric_mesh.boundary_nodes)))
    out = project_zero_average(hn)
    assert np.abs(out.values).max() < 1e-12


def test_project_leaves_cosine_untouched(concentric_mesh):
    hn = fem.make_boundary_field(concentric_mesh, np.cos)
    out = project_zero_average(hn)
    assert np.abs(out.values - hn.values).max() < 1e-10


def test_project_idempotent(concentric_mesh):
    rng = np.random.default_rng(3)
    hn = fem.make_boundary_field(concentric_mesh, rng.standard_normal(
        len(concentric_mesh.boundary_nodes)))
    once = project_zero_average(hn)
    twice = project_zero_average(once)
    assert np.abs(twice.values - once.values).max() < 1e-13
    assert abs(once.weighted_mean()) < 1e-13


# --- first derivative --------------------------------------------------------

def test_first_derivative_vanishes_at_critical_shape(concentric_solution,
                                                     concentric_mesh):
    for k in (1, 2, 3):
        hn = _mode(concentric_mesh, np.cos, k)
        dT = first_shape_derivative(concentric_solution, hn)
        assert abs(dT) < 1e-4 * np.abs(hn.values).max()


def test_first_derivative_zero_field(concentric_solution, concentric_mesh):
    hn = fem.make_boundary_field(concentric_mesh, np.zeros(
        len(concentric_mesh.boundary_nodes)), zero_average=True)
    assert first_shape_derivative(concentric_solution, hn) == 0.0


def test_first_derivative_nonzero_off_center(offset_mesh):
    u = fem.solve_torsion(offset_mesh, 2.0)
    hn = _mode(offset_mesh, np.cos, 1)
    assert abs(first_shape_derivative(u, hn)) > 1e-4


# --- shape-derivative PDE ----------------------------------------------------

def test_shape_derivative_zero_data(concentric_mesh):
    hn = fem.make_boundary_field(concentric_mesh, np.zeros(
        len(concentric_mesh.boundary_nodes)), zero_average=True)
    up = solve_shape_derivative(concentric_mesh, 2.0, hn, -0.5)
    assert np.abs(up.values).max() < 1e-12


def test_shape_derivative_one_phase_harmonic(concentric_mesh):
    # hn = cos(theta), c = -1/2: u' = (1/2) r cos(theta), flux (1/2) cos
    hn = _mode(concentric_mesh, np.cos, 1)
    up = solve_shape_derivative(concentric_mesh, 1.0, hn, -0.5)
    gp = fem.boundary_flux(up, rhs_is_one=False)
    target = 0.5 * np.cos(concentric_mesh.boundary_theta)
    assert np.abs(gp.values - target).max() < 1e-3


def test_shape_derivative_two_phase_flux(concentric_mesh):
    # two-phase response: flux = (1/2)(13/11) cos(theta)
    hn = _mode(concentric_mesh, np.cos, 1)
    up = solve_shape_derivative(concentric_mesh, 2.0, hn, -0.5)
    gp = fem.boundary_flux(up, rhs_is_one=False)
    target = 0.5 * (13.0 / 11.0) * np.cos(concentric_mesh.boundary_theta)
    assert np.abs(gp.values - target).max() < 1e-3


# --- second derivative -------------------------------------------------------

def test_second_derivative_negative_at_concentric(concentric_solution,
                                                  concentric_mesh):
    for k in (1, 2, 3):
        hn = _mode(concentric_mesh, np.cos, k)
        up = solve_shape_derivative(concentric_mesh, 2.0, hn, -0.5)
        d2 = second_shape_derivative(concentric_solution, up, hn)
        assert d2 < 0


def test_second_derivative_refuses_noncritical_base(offset_mesh):
    u = fem.solve_torsion(offset_mesh, 2.0)
    hn = _mode(offset_mesh, np.cos, 1)
    up = solve_shape_derivative(offset_mesh, 2.0, hn, -0.5)
    with pytest.raises(NotCriticalError):
        second_shape_derivative(u, up, hn)


# --- finite-difference probe -------------------------------------------------

def test_probe_constant_path(concentric_config, concentric_mesh):
    hn = fem.make_boundary_field(concentric_mesh, np.zeros(
        len(concentric_mesh.boundary_nodes)), zero_average=True)
    rep = finite_difference_probe(concentric_config, hn,
                                  [-0.02, -0.01, 0.01, 0.02],
                                  mesh=concentric_mesh)
    assert abs(rep.dT) < 1e-10 * rep.T0
    assert abs(rep.d2T) < 1e-8


def test_probe_concentric_cos2_flat_and_concave(concentric_config,
                                                concentric_mesh):
    hn = _mode(concentric_mesh, np.cos, 2)
    rep = finite_difference_probe(concentric_config, hn,
                                  [-0.02, -0.01, 0.01, 0.02],
                                  mesh=concentric_mesh)
    assert abs(rep.dT) < 1e-3 * rep.T0
    assert rep.d2T < 0


# --- classification ----------------------------------------------------------

def test_classify_rejects_noncritical(offset_config):
    with pytest.raises(NotCriticalError):
        classify_critical_shape(offset_config, [1], target_h=0.08)


def test_classify_low_modes_maximizer(concentric_config):
    out = classify_critical_shape(concentric_config, [1, 2], target_h=0.08)
    assert out["verdict"] == "maximizer-evidence"
    assert all(v < 0 for v in out["d2T"].values())


# --- optimizer ---------------------------------------------------------------

def test_optimizer_step_contract():
    cfg = TwoPhaseConfig(outer=StarBoundary(),
                         cores=(StarBoundary(center=(0.15, 0.0), r0=0.4),),
                         sigma_c=2.0)
    traj = optimize_rigidity(cfg, steps=3, target_h=0.1)
    assert len(traj) >= 2
    Ts = [s.T for s in traj]
    assert all(b >= a for a, b in zip(Ts, Ts[1:]))
    a0 = area(cfg)
    assert all(abs(s.area - a0) <= 1e-8 * a0 for s in traj)
    text = trajectory_to_jsonl(traj)
    assert text.count("\n") == len(traj)

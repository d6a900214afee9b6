"""Two-conductivity experiment: locking field, reduction, deviation score."""
import numpy as np
import pytest

from torsionlab import fem
from torsionlab.geometry import StarBoundary, TwoPhaseConfig
from torsionlab.meshgen import TAG_CORE, TAG_SHELL
from torsionlab.twosigma import (ReductionInvalidError, dual_solve,
                                 locking_field, score_sweep_to_csv,
                                 serrin_reduction, two_sigma_deviation)


@pytest.fixture(scope="module")
def pair(concentric_mesh):
    return dual_solve(concentric_mesh, 2.0, 3.0)


@pytest.fixture(scope="module")
def offset_pair(offset_mesh):
    return dual_solve(offset_mesh, 2.0, 3.0)


def test_dual_solve_validation(concentric_mesh):
    with pytest.raises(ValueError):
        dual_solve(concentric_mesh, -1.0, 2.0)
    with pytest.raises(ValueError):
        dual_solve(concentric_mesh, 2.0, 2.0 + 1e-8)


def test_both_fluxes_constant(pair):
    for u in (pair.u_alpha, pair.u_beta):
        g = fem.boundary_flux(u)
        assert np.abs(g.values + 0.5).max() < 1e-3


def test_solutions_agree_in_shell(pair):
    mesh = pair.mesh
    shell_nodes = np.unique(mesh.tri_nodes[mesh.tri_tags == TAG_SHELL])
    diff = np.abs(pair.u_alpha.values[shell_nodes]
                  - pair.u_beta.values[shell_nodes]).max()
    assert diff < 1e-3


def test_near_equal_conductivities_continuity(concentric_mesh):
    p = dual_solve(concentric_mesh, 2.0 + 2e-6, 2.0)
    assert np.abs(p.u_alpha.values - p.u_beta.values).max() < 1e-4


def test_locking_field_constant_concentric(pair):
    lock = locking_field(pair)
    core_nodes = np.unique(pair.mesh.tri_nodes[pair.mesh.tri_tags == TAG_CORE])
    assert np.abs(lock.v.values[core_nodes] + 0.1875).max() < 1e-3
    assert lock.core_energy < 1e-5
    assert len(lock.core_means) == 1
    assert lock.core_means[0] == pytest.approx(-0.1875, abs=1e-3)
    assert lock.core_stds[0] < 1e-3


def test_locking_trace_identity(pair):
    # trace of v on the interface equals (alpha-beta) * u_alpha there
    assert locking_field(pair).trace_deviation < 1e-6


def test_locking_energy_large_off_center(pair, offset_pair):
    e_off = locking_field(offset_pair).core_energy
    e_con = locking_field(pair).core_energy
    assert e_off > 1e-4
    assert e_off > 10 * e_con


def test_reduction_matches_one_phase_solution(pair):
    red = serrin_reduction(pair)
    mesh = pair.mesh
    rr2 = mesh.nodes[:, 0] ** 2 + mesh.nodes[:, 1] ** 2
    assert np.abs(red.w.values - (1.0 - rr2) / 4.0).max() < 1e-3
    assert abs(red.flux_mean + 0.5) < 1e-3
    assert red.flux_deviation < 1e-3
    assert red.equation_residual < 1e-2


def test_interface_trace_of_v_matches_radial_form(pair):
    lock = locking_field(pair)
    iface = np.unique(pair.mesh.interface_edge_nodes)
    rr2 = (pair.mesh.nodes[iface, 0] ** 2 + pair.mesh.nodes[iface, 1] ** 2)
    expected = (2.0 - 3.0) * (1.0 - rr2) / 4.0
    assert np.abs(lock.v.values[iface] - expected).max() < 1e-3


def test_reduction_refuses_unlocked_pair(offset_pair):
    with pytest.raises(ReductionInvalidError):
        serrin_reduction(offset_pair)


def test_deviation_discriminates(concentric_config, concentric_mesh,
                                 offset_config, offset_mesh):
    s0 = two_sigma_deviation(concentric_config, 2.0, 3.0, mesh=concentric_mesh)
    s1 = two_sigma_deviation(offset_config, 2.0, 3.0, mesh=offset_mesh)
    assert s0.total < 1e-2
    assert s1.total >= 10 * s0.total


def test_deviation_rotation_invariance():
    # remeshing after rotation perturbs the score at FEM-error level only
    def cfg(center):
        return TwoPhaseConfig(outer=StarBoundary(),
                              cores=(StarBoundary(center=center, r0=0.4),),
                              sigma_c=2.0)

    s0 = two_sigma_deviation(cfg((0.2, 0.0)), 2.0, 3.0, target_h=0.06)
    s1 = two_sigma_deviation(cfg((0.0, 0.2)), 2.0, 3.0, target_h=0.06)
    assert s1.total == pytest.approx(s0.total, rel=0.05)


def test_score_csv_schema():
    from torsionlab.twosigma import TwoSigmaScore

    scores = [TwoSigmaScore(0.1, 0.2, 0.3)]
    text = score_sweep_to_csv([0.0], scores)
    lines = text.strip().splitlines()
    assert lines[0] == "offset,score_alpha_flux,score_beta_flux,E_core,total"
    assert lines[1].endswith(repr(0.1 + 0.2 + 0.3))

"""Closed-form radial solutions and the annulus flux mismatch."""
import math

import numpy as np
import pytest
from scipy.integrate import solve_bvp

from torsionlab.analytic import (AnnulusCandidate, RadialTwoPhase,
                                 annulus_flux_mismatch, radial_flux,
                                 radial_torsion_value)

CFG = RadialTwoPhase(rho=0.5, R=1.0, sigma_c=2.0)


def test_center_value():
    assert radial_torsion_value(CFG, 0.0) == pytest.approx(0.21875, abs=1e-15)


def test_dirichlet_value_at_outer_radius():
    assert radial_torsion_value(CFG, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_one_phase_reduction():
    cfg = RadialTwoPhase(rho=0.5, R=1.0, sigma_c=1.0)
    r = np.linspace(0, 1, 11)
    assert np.allclose(radial_torsion_value(cfg, r), (1 - r * r) / 4, atol=1e-15)


def test_continuity_at_interface():
    eps = 1e-12
    lo = radial_torsion_value(CFG, CFG.rho - eps)
    hi = radial_torsion_value(CFG, CFG.rho + eps)
    assert abs(lo - hi) < 1e-11


def test_flux_identity_both_sides():
    # sigma(r) U'(r) = -r/2 on both sides of the interface
    h = 1e-7
    rho = CFG.rho
    d_shell = (radial_torsion_value(CFG, rho + 2 * h)
               - radial_torsion_value(CFG, rho + h)) / h
    d_core = (radial_torsion_value(CFG, rho - h)
              - radial_torsion_value(CFG, rho - 2 * h)) / h
    assert 1.0 * d_shell == pytest.approx(-rho / 2, abs=1e-6)
    assert CFG.sigma_c * d_core == pytest.approx(-rho / 2, abs=1e-6)


def test_radial_flux_values():
    assert radial_flux(CFG) == -0.5
    assert radial_flux(RadialTwoPhase(rho=0.5, R=2.0, sigma_c=2.0)) == -1.0


@pytest.mark.parametrize("sigma_c", [0.5, 2.0, 10.0])
def test_radial_flux_sigma_independent(sigma_c):
    assert radial_flux(RadialTwoPhase(rho=0.5, R=1.0, sigma_c=sigma_c)) == -0.5


def test_rejects_bad_radii():
    with pytest.raises(ValueError):
        RadialTwoPhase(rho=1.5, R=1.0, sigma_c=2.0)
    with pytest.raises(ValueError):
        AnnulusCandidate(R1=2.0, R2=1.0)
    with pytest.raises(ValueError):
        radial_torsion_value(CFG, 1.5)


# --- annulus -----------------------------------------------------------------

def test_annulus_named_values():
    inner, outer, mismatch = annulus_flux_mismatch(AnnulusCandidate(1.0, 2.0))
    A = 3.0 / (4.0 * math.log(2.0))
    assert inner == pytest.approx(A - 0.5, abs=1e-12)
    assert outer == pytest.approx(1.0 - A / 2.0, abs=1e-12)
    assert mismatch == pytest.approx(0.123032, abs=1e-4)
    assert mismatch > 0


def test_annulus_against_bvp_oracle():
    # independent oracle: solve U'' + U'/r = -1, U(R1) = U(R2) = 0 numerically
    for R1, R2 in ((1.0, 2.0), (0.5, 3.0), (2.0, 2.5)):
        def ode(r, y):
            return np.vstack([y[1], -1.0 - y[1] / r])

        def bc(ya, yb):
            return np.array([ya[0], yb[0]])

        r = np.linspace(R1, R2, 200)
        sol = solve_bvp(ode, bc, r, np.zeros((2, len(r))), tol=1e-8,
                        max_nodes=100000)
        assert sol.success
        inner, outer, mismatch = annulus_flux_mismatch(AnnulusCandidate(R1, R2))
        assert abs(sol.y[1][0]) == pytest.approx(inner, abs=1e-6)
        assert abs(sol.y[1][-1]) == pytest.approx(outer, abs=1e-6)


def test_annulus_higher_dimension_positive():
    for N in (3, 4):
        _, _, mismatch = annulus_flux_mismatch(AnnulusCandidate(1.0, 2.0, N=N))
        assert mismatch > 0


def test_thin_annulus_limit():
    _, _, mismatch = annulus_flux_mismatch(
        AnnulusCandidate(1.0, 1.0 * (1 + 1e-6)))
    assert mismatch < 1e-5


def test_mismatch_positive_on_grid():
    rng = np.random.default_rng(0)
    count = 0
    while count < 20:
        R1, R2 = np.sort(rng.uniform(0.05, 5.0, size=2))
        if R2 / R1 < 1 + 1e-3:
            continue
        _, _, mismatch = annulus_flux_mismatch(AnnulusCandidate(R1, R2))
        assert mismatch > 0
        count += 1

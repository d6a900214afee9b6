"""Boundary response operator (Neumann-to-Dirichlet): assembly and spectrum."""
import numpy as np
import pytest

from torsionlab import fem
from torsionlab.ntd import NtdAssemblyError, assemble_ntd, ntd_spectrum


@pytest.fixture(scope="module")
def op_one_phase(concentric_mesh):
    return assemble_ntd(concentric_mesh, 1.0)


@pytest.fixture(scope="module")
def op_two_phase(concentric_mesh):
    return assemble_ntd(concentric_mesh, 2.0)


def test_assembly_symmetry(op_two_phase):
    assert op_two_phase.asymmetry < 1e-8
    A = op_two_phase.matrix
    assert np.abs(A - A.T).max() == 0.0


def test_one_phase_disk_spectrum_pairs(op_one_phase):
    spec = ntd_spectrum(op_one_phase, 6)
    expected = [1.0, 1.0, 0.5, 0.5, 1 / 3, 1 / 3]
    assert np.abs(spec.eigenvalues - expected).max() < 1e-3


def test_two_phase_first_pair(op_two_phase):
    spec = ntd_spectrum(op_two_phase, 2)
    assert np.abs(spec.eigenvalues - 11.0 / 13.0).max() < 1e-3


def test_sigma_continuity_of_assembly(concentric_mesh, op_one_phase):
    near = assemble_ntd(concentric_mesh, 1.0 + 1e-9)
    denom = np.abs(op_one_phase.matrix).max()
    assert np.abs(near.matrix - op_one_phase.matrix).max() / denom < 1e-8


def test_core_conductivity_lowers_first_pair(concentric_mesh, op_two_phase):
    # mu = (sigma_c-1)/(sigma_c+1) flips sign between 2 and 1/2: the stiffer
    # core shrinks the boundary response, the softer core inflates it
    lo = ntd_spectrum(op_two_phase, 2).eigenvalues
    op_soft = assemble_ntd(concentric_mesh, 0.5)
    hi = ntd_spectrum(op_soft, 2).eigenvalues
    assert lo.max() < 1.0 < hi.min()
    assert np.abs(hi - 13.0 / 11.0).max() < 1e-3


def test_spectrum_positive_decreasing(op_two_phase):
    spec = ntd_spectrum(op_two_phase, 24)
    lam = spec.eigenvalues
    assert lam.min() > 0
    assert np.all(np.diff(lam) <= 1e-12)
    for k in range(len(lam) - 10):
        assert lam[k + 10] < lam[k]


def test_spectrum_one_over_k_decay(op_one_phase):
    spec = ntd_spectrum(op_one_phase, 24)
    # rank 2k-1, 2k belong to wavenumber k: lambda ~ 1/k on the disk
    ks = (np.arange(len(spec.eigenvalues)) // 2) + 1
    prod = spec.eigenvalues * ks
    assert 0.5 <= prod.min() and prod.max() <= 1.5


def test_eigenfields_orthonormal_zero_average(op_two_phase, concentric_mesh):
    spec = ntd_spectrum(op_two_phase, 8)
    Mb = op_two_phase.mass
    V = np.stack([f.values for f in spec.eigenfields], axis=1)
    G = V.T @ Mb @ V
    assert np.abs(G - np.eye(len(spec.eigenvalues))).max() < 1e-8
    for f in spec.eigenfields:
        assert abs(f.weights @ f.values) < 1e-8


def test_quadratic_form_positive(op_two_phase):
    rng = np.random.default_rng(11)
    w = op_two_phase.mass.sum(axis=1)
    for _ in range(20):
        xi = rng.standard_normal(len(w))
        xi -= (w @ xi) / w.sum()
        assert xi @ (op_two_phase.matrix @ xi) > 0


def test_deterministic_sign_convention(op_two_phase):
    s1 = ntd_spectrum(op_two_phase, 4)
    s2 = ntd_spectrum(op_two_phase, 4)
    for a, b in zip(s1.eigenfields, s2.eigenfields):
        assert np.array_equal(a.values, b.values)


def test_k_max_cap_enforced(op_two_phase):
    nb = op_two_phase.matrix.shape[0]
    with pytest.raises(NtdAssemblyError):
        ntd_spectrum(op_two_phase, nb // 8 + 1)

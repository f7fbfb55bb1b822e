import numpy as np
import pytest

from liouville_lab.errors import DomainError, UsageError
from liouville_lab.gff import disk_spectrum
from liouville_lab.solver import solve_liouville
from liouville_lab.spectra import (exact_log_fluctuation_constant, fluctuation_constant, massive_green,
                                   weighted_eigs, wick_square_functional)


@pytest.fixture(scope="module")
def full8(lat8):
    U = solve_liouville(lat8, 0.1).U
    return weighted_eigs(lat8, U, lat8.n)


def test_flat_weight_relates_to_laplacian(lat16):
    spec = weighted_eigs(lat16, np.zeros(lat16.n), 5)
    lap = disk_spectrum(lat16, 5).eigenvalues
    assert np.allclose(spec.eigenvalues, lap / (2 * np.pi))


def test_first_weighted_eigenvalue(lat64):
    lam = weighted_eigs(lat64, np.zeros(lat64.n), 1).eigenvalues[0]
    assert lam == pytest.approx(5.783185962946784 / (2 * np.pi), rel=2e-3)


def test_weighted_normalization(full8):
    E, w = full8.vectors, full8.weight
    assert np.allclose(E.T @ (E * w[:, None]), np.eye(full8.count), atol=1e-9)
    assert full8.normalization_residual < 1e-10


def test_all_modes_logdet_identity(full8):
    for alpha in (0.05, 0.2, 1.0):
        fc = fluctuation_constant(full8, alpha)
        exact = exact_log_fluctuation_constant(full8.lattice, full8.U, alpha)
        assert fc["log_Z"] == pytest.approx(exact, rel=1e-9, abs=1e-12)


def test_massive_kernel_all_modes(full8):
    K = massive_green(full8, 0.2, nodes=[3, 50, 100])
    assert np.allclose(K.truncated, K.exact, atol=1e-10)
    assert K.mass == pytest.approx(0.8 * np.pi)
    assert np.all(np.linalg.eigvalsh(K.exact) > 0)


def test_massive_kernel_decreases_with_mass(full8):
    a = massive_green(full8, 0.1, nodes=[50]).exact[0, 0]
    b = massive_green(full8, 1.0, nodes=[50]).exact[0, 0]
    assert b < a


def test_truncation_tail_positive(lat16):
    U = solve_liouville(lat16, 0.1).U
    spec = weighted_eigs(lat16, U, 60)
    fc = fluctuation_constant(spec, 0.2)
    exact = exact_log_fluctuation_constant(lat16, U, 0.2)
    assert np.all(fc["terms"] > 0)
    assert fc["log_Z"] < exact
    assert exact - fc["log_Z"] < 5 * fc["tail_estimate"]


def test_alpha_domain(full8):
    with pytest.raises(DomainError):
        fluctuation_constant(full8, -full8.eigenvalues[0])


def test_wick_square_moments(full8):
    W = wick_square_functional(full8, seed=1, size=20000, modes=20)
    lam = full8.eigenvalues[:20]
    assert abs(W.mean()) < 4 * np.sqrt(2 * np.sum(1 / lam**2) / 20000)
    assert W.var() == pytest.approx(2 * np.sum(1 / lam**2), rel=0.05)
    a = wick_square_functional(full8, seed=1, size=300, start=100, modes=20)
    assert np.array_equal(a, W[100:400])


def test_bad_inputs(lat8):
    with pytest.raises(UsageError):
        weighted_eigs(lat8, np.zeros(3))
    with pytest.raises(UsageError):
        weighted_eigs(lat8, np.zeros(lat8.n), lat8.n + 1)

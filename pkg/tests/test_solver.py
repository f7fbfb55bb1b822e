import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liouville_lab.chaos import insertion_weight
from liouville_lab.errors import ConfigurationError, DomainError
from liouville_lab.geometry import InsertionSet, MetricTensor, build_lattice, laplacian_apply
from liouville_lab.gff import disk_spectrum
from liouville_lab.solver import (SolverConfig, energy, free_energy, gateaux_derivative,
                                  perturbed_free_energy, radial_alpha, radial_solution, rate_function,
                                  solution_continuity_check, solve_liouville)

LAM = 2 / np.pi**2


@pytest.fixture(scope="module")
def base16(lat16):
    return solve_liouville(lat16, 0.2)


def test_radial_alpha_root():
    for lam in (0.01, 0.1, LAM, 1.0):
        a = radial_alpha(lam)
        assert 0 < a < 1
        assert np.pi**2 * lam == pytest.approx(a / (1 - a) ** 2)
    assert radial_alpha(LAM) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        radial_alpha(-1)


def test_radial_solution_converges():
    errs = [np.abs(solve_liouville(lat, LAM).U - radial_solution(lat.points, LAM)).max()
            for lat in (build_lattice(1 / 16), build_lattice(1 / 32))]
    assert errs[1] < errs[0] / 3


def test_zero_lambda_is_zero(lat16):
    sol = solve_liouville(lat16, 0.0)
    assert np.abs(sol.U).max() < 1e-12
    assert free_energy(lat16, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_residual_and_equation(lat16, base16):
    assert base16.residual_norm <= SolverConfig().tolerance
    lhs = laplacian_apply(lat16, base16.U)
    assert np.allclose(lhs, 8 * np.pi**2 * 0.2 * np.exp(base16.U), atol=1e-8)
    assert np.all(base16.U <= 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 0.5))
def test_energy_minimal_at_solution(seed, scale):
    lat = build_lattice(1 / 16)
    sol = solve_liouville(lat, 0.2)
    v = scale * np.random.default_rng(seed).standard_normal(lat.n)
    assert energy(lat, sol.U + v, 0.2) >= sol.energy - 1e-12


def test_unique_from_any_start(lat16, base16):
    other = solve_liouville(lat16, 0.2, initial=np.random.default_rng(0).uniform(-3, 1, lat16.n))
    assert np.abs(other.U - base16.U).max() < 1e-8


def test_insertion_split(lat16):
    ins = InsertionSet.of(((0.2, 0.1), 1.0))
    sol = solve_liouville(lat16, 0.1, ins=ins)
    _, H = insertion_weight(lat16, ins)
    assert np.allclose(sol.U - sol.regular_part, H)
    assert sol.residual_norm <= SolverConfig().tolerance


def test_hyperbolic_background_zero_solution(lat16):
    # with R = -2 and g = 4 / (1 - |x|^2)^2 the zero field solves the equation at Lambda = 1 / (4 pi^2)
    sol = solve_liouville(lat16, 1 / (4 * np.pi**2), metric=MetricTensor.hyperbolic(lat16))
    assert np.abs(sol.U).max() < 1e-8


def test_gateaux_matches_finite_difference(lat16, base16):
    hdir = disk_spectrum(lat16, 2).vectors[:, 1]
    W = gateaux_derivative(base16, hdir)
    t = 1e-5
    up = solve_liouville(lat16, 0.2, f=t * hdir, initial=base16.regular_part).U
    dn = solve_liouville(lat16, 0.2, f=-t * hdir, initial=base16.regular_part).U
    assert np.allclose((up - dn) / (2 * t), W, atol=1e-6)


def test_rate_function(lat16, base16):
    assert rate_function(lat16, np.zeros(lat16.n), 0.2, base=base16) == 0.0
    g = np.random.default_rng(5)
    for _ in range(5):
        assert rate_function(lat16, 0.1 * g.standard_normal(lat16.n), 0.2, base=base16) > 0


def test_perturbed_free_energy_convex(lat16, base16):
    b = disk_spectrum(lat16, 4).vectors
    f0, f1 = b[:, 0], -2 * b[:, 3]
    val = lambda f: perturbed_free_energy(lat16, 0.2, f, base=base16) + base16.energy
    mid = val(0.5 * (f0 + f1))
    assert mid <= 0.5 * (val(f0) + val(f1)) + 1e-10
    assert val(np.zeros(lat16.n)) == pytest.approx(0.0, abs=1e-12)


def test_continuity_check(lat16):
    f1 = disk_spectrum(lat16, 1).vectors[:, 0]
    res = solution_continuity_check(lat16, 0.2, np.zeros(lat16.n), [t * f1 for t in (0.4, 0.2, 0.1)])
    assert res["monotone_decay"]
    gaps = [r["gap_h1"] for r in res["rows"]]
    assert gaps[1] / gaps[0] == pytest.approx(0.5, rel=0.05)


def test_solver_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(tolerance=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(max_iterations=0)


def test_manifest(base16):
    m = base16.manifest()
    assert m["metric"] == "flat" and m["Lambda"] == 0.2 and m["iterations"] >= 1

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from liouville_lab.errors import ConfigurationError, DomainError, UsageError
from liouville_lab.geometry import LftParams
from liouville_lab.gff import sample_exact
from liouville_lab.semiclassics import (ExperimentReport, central_charge_to_gamma, conformal_weight,
                                        convergence_in_probability, default_pair_panel,
                                        effective_sample_size, fluctuation_covariance_test,
                                        kpz_exponent, kpz_rescaling_identity, log_mean_exp,
                                        partition_asymptotics, tilted_expectation, weighted_mean,
                                        weighted_quantile)


def test_kpz_exponent_symbolic():
    g = sympy.symbols("gamma", positive=True)
    assert sympy.simplify(kpz_exponent(g, [g])) == -1
    a = sympy.symbols("alpha")
    assert sympy.simplify(kpz_exponent(g, [a, a]) - 4 / g**2 * (2 - a * (2 / g + g / 2))) == 0


@given(st.floats(0.05, 1.99))
def test_kpz_single_gamma_numeric(g):
    assert kpz_exponent(g, [g]) == pytest.approx(-1.0, abs=1e-12)


def test_conformal_weight():
    assert conformal_weight(0.0, 1.0) == 0
    # alpha = Q gives the reflection-symmetric point Q^2 / 4
    Q = 2 + 0.5
    assert conformal_weight(Q, 1.0) == pytest.approx(Q**2 / 4)
    with pytest.raises(DomainError):
        conformal_weight(1.0, 0.0)


def test_central_charge():
    assert central_charge_to_gamma(0.0) == pytest.approx(np.sqrt(8 / 3))
    assert central_charge_to_gamma(-2.0) == pytest.approx(np.sqrt(2))
    assert central_charge_to_gamma(1.0) == pytest.approx(2.0)
    assert central_charge_to_gamma(-1e6) < 0.01
    with pytest.raises(DomainError):
        central_charge_to_gamma(1.5)


def test_weight_statistics():
    lw = np.zeros(100)
    assert effective_sample_size(lw) == pytest.approx(100)
    assert effective_sample_size(np.r_[0.0, np.full(99, -1e3)]) == pytest.approx(1.0)
    val, se = log_mean_exp(np.log(np.arange(1, 5.0)))
    assert val == pytest.approx(np.log(2.5))
    m, _ = weighted_mean(np.arange(4.0), np.log([1, 1, 1, 1]))
    assert m == pytest.approx(1.5)
    assert weighted_quantile(np.array([3.0, 1.0, 2.0]), np.zeros(3)) == 2.0


def test_report_checks():
    r = ExperimentReport("x", {})
    assert r.passed
    r.check("a", 1, 1, 0, True)
    r.check("b", 2, 1, 0, False)
    assert not r.passed and r.failed() == ["b"]
    assert r.to_dict()["passed"] is False


def test_tilted_zero_lambda_agrees(lat16):
    p = LftParams.from_lambda(0.5, 0.0)
    i0 = lat16.nearest_node((0, 0))
    r = tilted_expectation(lat16, lambda phi: phi[:, i0] ** 2, p, n_samples=512, seed=1)
    assert r["direct"]["value"] == pytest.approx(r["shifted"]["value"])
    assert r["direct"]["ess"] == pytest.approx(512)


def test_tilted_small_lambda_consistent(lat16):
    p = LftParams.from_lambda(0.5, 0.02)
    i0 = lat16.nearest_node((0, 0))
    r = tilted_expectation(lat16, lambda phi: phi[:, i0], p, n_samples=2048, seed=2)
    d, s = r["direct"], r["shifted"]
    assert abs(d["value"] - s["value"]) < 3 * np.hypot(d["se"], s["se"])
    with pytest.raises(ConfigurationError):
        tilted_expectation(lat16, lambda phi: phi[:, 0], p, mode="bogus")


def test_partition_zero_lambda_exact(lat16):
    rep = partition_asymptotics(lat16, 0.0, [0.4, 0.2], n_samples=64, seed=0)
    for row in rep.table:
        assert row["gamma2_lnZ"] == 0.0 and row["log_constant"] == 0.0


def test_partition_small_run(lat16):
    rep = partition_asymptotics(lat16, 0.2, [0.4, 0.3, 0.2], n_samples=1024, seed=3)
    gaps = [r["rel_gap"] for r in rep.table]
    assert gaps[-1] < 0.1
    assert rep.estimates["constant_prediction"] > 0


def test_gammas_must_descend(lat16):
    with pytest.raises(ConfigurationError):
        partition_asymptotics(lat16, 0.2, [0.2, 0.3], n_samples=16)


def test_convergence_pure_scaling(lat16):
    rep = convergence_in_probability(lat16, 0.0, [0.4, 0.2], n_samples=256, seed=4)
    a, b = (r["median_hminus1"] for r in rep.table)
    assert b / a == pytest.approx(0.5)


def test_pair_panel_deterministic(lat32):
    a, b = default_pair_panel(lat32, 10), default_pair_panel(lat32, 10)
    assert np.array_equal(a, b) and np.all(a[:, 0] != a[:, 1])


def test_fluctuations_zero_lambda_is_green(lat16):
    rep = fluctuation_covariance_test(lat16, 0.0, 0.3, n_samples=4000, seed=5,
                                      pairs=default_pair_panel(lat16, 10))
    for r in rep.table:
        assert r["massive"] == pytest.approx(r["massless"])
        assert abs(r["empirical"] - r["massive"]) < 4 * r["se"]


def test_kpz_pathwise(lat16):
    X = sample_exact(lat16, seed=6)
    x = lat16.points[:, 0]
    rep = kpz_rescaling_identity(lat16, 1.2, [0.3, 1.0], [x > 0.1, x < -0.1], 3.3, X)
    assert rep.passed
    assert rep.estimates["max_rel_dev"] < 1e-12
    with pytest.raises(UsageError):
        kpz_rescaling_identity(lat16, 1.0, [0.3, 0.4], [x > 0, x > -0.5], 2.0, X)
    with pytest.raises(ConfigurationError):
        kpz_rescaling_identity(lat16, 1.0, [0.3], [x > 0], -1.0, X)

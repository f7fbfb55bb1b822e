import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from liouville_lab.errors import ConfigurationError, DomainError, UsageError
from liouville_lab.geometry import (InsertionSet, LftParams, MetricTensor, build_lattice,
                                    conformal_radius, green_apply, green_kernel, h1_energy,
                                    hminus1_norm, integrate, interpolation_matrix, laplacian_apply,
                                    mobius, stencil_curvature)

inside = st.tuples(st.floats(0, 0.95), st.floats(0, 2 * np.pi)).map(
    lambda rt: (rt[0] * np.cos(rt[1]), rt[0] * np.sin(rt[1])))


def test_node_counts():
    assert build_lattice(0.5).n == 9
    assert build_lattice(1 / 64).n == 12849


@pytest.mark.parametrize("h", [0.6, 0.0, -0.1, 1.0])
def test_too_coarse_rejected(h):
    with pytest.raises(ConfigurationError):
        build_lattice(h)


def test_index_bijection(lat16):
    for k, (i, j) in enumerate(lat16.ij):
        assert lat16.index_of(i, j) == k
    assert lat16.index_of(100, 0) == -1
    assert np.all(np.hypot(*lat16.points.T) < 1)
    assert build_lattice(1 / 16).points.tobytes() == lat16.points.tobytes()


def test_stiffness_symmetric_positive(lat8):
    A = lat8.A.toarray()
    assert np.array_equal(A, A.T)
    assert scipy.linalg.eigvalsh(A)[0] > 0


def test_quadratic_exact_in_interior(lat16):
    u = conformal_radius(lat16.points)
    lap = laplacian_apply(lat16, u)
    full = np.array([all(lat16.index_of(i + di, j + dj) >= 0
                         for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))) for i, j in lat16.ij])
    assert np.allclose(lap[full], -4.0, atol=1e-10)


def test_poisson_second_order():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        lat = build_lattice(h)
        u = green_apply(lat, np.ones(lat.n))
        errs.append(np.abs(u - np.pi / 2 * conformal_radius(lat.points)).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.7)


def test_green_apply_inverts_laplacian(lat16):
    f = np.random.default_rng(0).standard_normal(lat16.n)
    u = green_apply(lat16, f)
    assert np.allclose(-laplacian_apply(lat16, u), 2 * np.pi * f)


def test_discrete_green_near_continuum(lat32):
    i, j = lat32.nearest_node((0, 0)), lat32.nearest_node((0.5, 0))
    assert abs(lat32.green_columns([i])[j, 0] - np.log(2)) < 2e-3


@settings(max_examples=50, deadline=None)
@given(inside, inside)
def test_green_kernel_symmetric_positive(x, y):
    if np.hypot(x[0] - y[0], x[1] - y[1]) < 1e-6:
        return
    g = green_kernel(x, y)
    assert g > 0
    assert g == pytest.approx(green_kernel(y, x), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(inside, inside, inside)
def test_green_kernel_mobius_invariant(x, y, a):
    if np.hypot(x[0] - y[0], x[1] - y[1]) < 1e-3:
        return
    psi = mobius(a)
    px, py = psi(np.array(x)), psi(np.array(y))
    assert green_kernel(px, py) == pytest.approx(green_kernel(x, y), rel=1e-8, abs=1e-10)


def test_green_kernel_domain():
    with pytest.raises(DomainError):
        green_kernel((0.1, 0.1), (0.1, 0.1))
    with pytest.raises(DomainError):
        green_kernel((1.0, 0.0), (0.0, 0.0))


def test_green_kernel_at_origin():
    assert green_kernel((0, 0), (0.5, 0)) == pytest.approx(np.log(2))


@settings(max_examples=50, deadline=None)
@given(inside, inside)
def test_mobius_maps(w, a):
    psi = mobius(a)
    w = np.array(w)
    z = psi(w)
    assert np.hypot(*z) < 1
    assert np.allclose(psi.inverse(z), w, atol=1e-10)
    # conformal radius transforms with |psi'|
    assert conformal_radius(z) == pytest.approx(psi.derivative_modulus(w) * conformal_radius(w), rel=1e-9)
    eps = 1e-6
    fd = np.hypot(*(psi(w + [eps, 0]) - psi(w - [eps, 0]))) / (2 * eps)
    assert fd == pytest.approx(psi.derivative_modulus(w), rel=1e-5)


def test_mobius_domain():
    with pytest.raises(DomainError):
        mobius((1.0, 0.0))


def test_integrate_area(lat64):
    assert integrate(lat64, np.ones(lat64.n)) == pytest.approx(np.pi, rel=0.01)


def test_h1_energy_matches_quadratic_form(lat16):
    u = np.random.default_rng(1).standard_normal(lat16.n)
    assert h1_energy(lat16, u) == pytest.approx(float(u @ lat16.A @ u))
    assert h1_energy(lat16, u) > 0


def test_hminus1_norm_properties(lat16):
    g = np.random.default_rng(2)
    u = g.standard_normal(lat16.n)
    assert hminus1_norm(lat16, np.zeros(lat16.n)) == 0
    assert hminus1_norm(lat16, 3 * u) == pytest.approx(9 * hminus1_norm(lat16, u))
    batch = np.vstack([u, 2 * u])
    out = hminus1_norm(lat16, batch)
    assert out.shape == (2,) and out[1] == pytest.approx(4 * out[0])


def test_hminus1_single_mode():
    # the zero extension of sin(pi s) sin(pi t) restricted to the disk is not a pure mode,
    # but a bump supported well inside has most weight on low modes and a finite sum
    lat = build_lattice(1 / 32)
    r2 = (lat.points**2).sum(axis=1)
    u = np.exp(-20 * r2)
    full = hminus1_norm(lat, u, jmax=64)
    assert hminus1_norm(lat, u, jmax=8) <= full
    assert hminus1_norm(lat, u, jmax=32) == pytest.approx(full, rel=1e-3)


def test_interpolation_reproduces_linear(lat32):
    pts = np.random.default_rng(3).uniform(-0.6, 0.6, (200, 2))
    f = 0.3 + 1.7 * lat32.points[:, 0] - 0.4 * lat32.points[:, 1]
    W = interpolation_matrix(lat32, pts)
    assert np.allclose(W @ f, 0.3 + 1.7 * pts[:, 0] - 0.4 * pts[:, 1])


def test_lft_params():
    p = LftParams.from_lambda(0.5, 0.2)
    assert p.mu == pytest.approx(0.8)
    assert p.Lambda == pytest.approx(0.2)
    assert p.Q == pytest.approx(4.25)
    for bad in (0.0, 2.0, 2.5):
        with pytest.raises(ConfigurationError, match="gamma"):
            LftParams(bad, 1.0)
    with pytest.raises(ConfigurationError):
        LftParams(1.0, -1.0)


@given(st.floats(0.01, 1.99), st.floats(0, 100))
def test_lambda_roundtrip(gamma, Lambda):
    assert LftParams.from_lambda(gamma, Lambda).Lambda == pytest.approx(Lambda, rel=1e-12, abs=1e-300)


def test_insertion_validation():
    s = InsertionSet.of(((0, 0), 1.0), ((0.3, 0.1), 0.5))
    assert len(s) == 2 and s
    assert not InsertionSet()
    with pytest.raises(ConfigurationError):
        InsertionSet.of(((0, 0), 2.0))
    with pytest.raises(ConfigurationError):
        InsertionSet.of(((1.0, 0), 1.0))
    with pytest.raises(ConfigurationError):
        InsertionSet.of(((0, 0), 1.0), ((0, 0), 0.5))
    assert len(s.union(InsertionSet.of(((0.5, 0), 0.2)))) == 3


def test_hyperbolic_curvature_stencil(lat32):
    idx, R = stencil_curvature(lat32, lambda p: np.log(4 / (1 - (p**2).sum(-1)) ** 2))
    inner = lat32.radius[idx] < 0.5
    assert np.allclose(R[inner], -2.0, atol=5e-3)
    hyp = MetricTensor.hyperbolic(lat32)
    assert hyp.factor[lat32.nearest_node((0, 0))] == pytest.approx(4.0)
    assert not hyp.is_flat and MetricTensor.flat(lat32).is_flat


def test_conformal_metric_curvature(lat32):
    U = np.log(4 / (1 - lat32.radius**2) ** 2)
    m = MetricTensor.conformal(lat32, U)
    inner = lat32.radius < 0.5
    assert np.allclose(m.curvature[inner], -2.0, atol=5e-3)


def test_shape_errors(lat16):
    with pytest.raises(UsageError):
        laplacian_apply(lat16, np.zeros(lat16.n + 1))
    with pytest.raises(UsageError):
        build_lattice(1 / 64).green_matrix()

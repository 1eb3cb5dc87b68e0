import math
import warnings

import numpy as np
import pytest

from heatpaths.detzeta import (
    ConjugatePointError,
    DegenerateHessian,
    HessianSpec,
    Method,
    degenerate_asymptotics_sphere,
    fredholm_det,
    hessian_matrix,
    hessian_spec,
    leading_asymptotics,
    predicted_limits,
    spectral_zeta_det,
    zeta_det,
)
from heatpaths.geom import Euclidean, FlatTorus, Sphere

NORTH = np.array([0.0, 0.0, 1.0])
EX = np.array([1.0, 0.0, 0.0])


def random_spec(rng, n=2):
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    return HessianSpec(Q @ np.diag(rng.uniform(-0.9 * math.pi**2, 10.0, n)) @ Q.T)


def test_sphere_quarter_geodesic():
    spec = hessian_spec(Sphere(1), NORTH, EX)
    assert spec.speed == pytest.approx(math.pi / 2)
    np.testing.assert_allclose(spec.R, np.diag([0.0, -((math.pi / 2) ** 2)]), atol=1e-14)
    assert fredholm_det(spec).value == pytest.approx(2 / math.pi, rel=1e-14)
    assert fredholm_det(spec, "eigen-product").value == pytest.approx(2 / math.pi, rel=1e-12)


def test_flat_hessian_is_identity():
    spec = hessian_spec(FlatTorus(2, (1.0, 2.0)), [0.1, 0.2], [0.3, 0.9])
    assert fredholm_det(spec).value == 1.0
    np.testing.assert_array_equal(hessian_matrix(spec), np.eye(2 * 64))
    assert hessian_spec(Euclidean(3), [0, 0, 0], [1, 1, 1]).n == 3


def test_hessian_matrix_diagonal_entries():
    spec = HessianSpec.from_matrix([[-2.0]])
    H = hessian_matrix(spec, 64)
    k = np.arange(1, 65)
    np.testing.assert_allclose(np.diag(H), 1 - 2.0 / (k * np.pi) ** 2)
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    with pytest.raises(ValueError):
        hessian_matrix(spec, 10)
    with pytest.raises(ValueError):
        HessianSpec.from_matrix([[0.0, 1.0], [0.0, 0.0]])


def test_callable_R_matches_constant():
    R = np.array([[-1.0, 0.3], [0.3, 2.0]])
    const = HessianSpec(R)
    var = HessianSpec(lambda s: R)
    a = fredholm_det(const).value
    assert fredholm_det(var).value == pytest.approx(a, rel=1e-9)
    assert fredholm_det(var, Method.EIGEN_PRODUCT, n_modes=2048).value == pytest.approx(a, rel=1e-7)
    f = HessianSpec(lambda s: np.array([[-3 * s, 0.5 * np.sin(3 * s)], [0.5 * np.sin(3 * s), 2 + s * s]]))
    assert fredholm_det(f, Method.EIGEN_PRODUCT, n_modes=2048).value == pytest.approx(fredholm_det(f).value, rel=1e-7)
    np.testing.assert_allclose(hessian_matrix(var, 64), hessian_matrix(const, 64), atol=1e-12)


def test_methods_agree_on_random_specs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        spec = random_spec(rng, int(rng.integers(1, 4)))
        gy = fredholm_det(spec).value
        ep = fredholm_det(spec, Method.EIGEN_PRODUCT)
        assert ep.value == pytest.approx(gy, rel=1e-8)
        assert abs(ep.value - gy) <= 10 * ep.tail_bound * abs(gy) + 1e-12


def test_zeta_normalization():
    for n in (1, 2, 3):
        assert zeta_det(HessianSpec(np.zeros((n, n)))).value == pytest.approx(2.0**n, abs=1e-12)
    assert zeta_det(HessianSpec.from_matrix([[1.0]])).value == pytest.approx(2 * math.sinh(1.0), rel=1e-14)


def test_spectral_zeta_oracle():
    assert spectral_zeta_det(0.0) == pytest.approx(2.0, rel=1e-12)
    assert spectral_zeta_det(1.0) == pytest.approx(2 * math.sinh(1.0), rel=1e-12)
    assert spectral_zeta_det(-3.0) == pytest.approx(2 * math.sin(math.sqrt(3)) / math.sqrt(3), rel=1e-10)
    for k0 in (1, 2):
        mu = -((k0 * math.pi) ** 2)
        zp = zeta_det(HessianSpec.from_matrix([[mu]]), prime=True)
        assert zp.removed_zero_modes == 1
        assert zp.value == pytest.approx((-1) ** (k0 + 1) / (k0 * math.pi) ** 2, rel=1e-12)
        assert spectral_zeta_det(mu, prime=True) == pytest.approx(zp.value, rel=1e-8)


def test_fredholm_zeta_identity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = predicted_limits(random_spec(rng))
        assert abs(a - b) <= 1e-12 * abs(a)


def test_hessian_det_equals_jacobian():
    rng = np.random.default_rng(2)
    S = Sphere(1.3)
    for _ in range(50):
        x = rng.standard_normal(3)
        x *= 1.3 / np.linalg.norm(x)
        v = rng.standard_normal(3)
        v -= v.dot(x) / 1.69 * x
        v *= rng.uniform(0.01, 0.95 * math.pi) * 1.3 / np.linalg.norm(v)
        y = S.exp_map(x, v)
        assert fredholm_det(hessian_spec(S, x, y)).value == pytest.approx(S.exp_jacobian(x, y), abs=1e-10)


def test_degenerate_hessian_warns():
    spec = HessianSpec.from_matrix(np.diag([0.0, -math.pi**2]))
    with pytest.warns(DegenerateHessian):
        r = fredholm_det(spec)
    assert r.value == 0.0 and r.degenerate
    with pytest.warns(DegenerateHessian):
        assert fredholm_det(spec, Method.EIGEN_PRODUCT).value == 0.0
    with pytest.warns(DegenerateHessian):
        assert zeta_det(spec).value == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert zeta_det(spec, prime=True).value == pytest.approx(4 / (2 * math.pi**2))


def test_antipodal_points_raise():
    with pytest.raises(ConjugatePointError):
        leading_asymptotics(Sphere(1), NORTH, -NORTH)


def test_nondegenerate_asymptotics():
    rep = leading_asymptotics(Sphere(1), NORTH, EX)
    assert rep.prediction == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert rep.relative_error < 1e-5
    assert rep.notes["forms_differ"] < 1e-12
    flat = leading_asymptotics(FlatTorus(1, (2 * math.pi,)), np.array([0.0]), np.array([1.0]))
    assert flat.relative_error < 1e-10


def test_antipodal_asymptotics():
    rep = degenerate_asymptotics_sphere()
    assert 1.35 <= rep.alpha <= 1.65
    assert rep.residual_ratio > 10
    assert rep.extrapolated == pytest.approx(2 * math.pi**2, rel=1e-3)
    with pytest.raises(ValueError):
        degenerate_asymptotics_sphere((0.1, 0.2, 0.05))

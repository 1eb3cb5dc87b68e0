import math
import warnings

import numpy as np
import pytest

from heatpaths.geom import Euclidean, FlatTorus, Interval, Sphere
from heatpaths.kernelconv import build_grid
from heatpaths.reference import (
    TruncationWarning,
    exact_kernel_flat,
    fk_reference,
    fk_reference_line,
    interval_kernel_images,
    interval_kernel_series,
    reference_kernel,
    reference_matrix,
    spectral_basis,
    sphere_kernel,
    sphere_kernel_mp,
    torus_kernel,
)

NORTH = np.array([0.0, 0.0, 1.0])


def test_flat_kernel_value():
    assert exact_kernel_flat(1, 1.0, 0.0, 0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert exact_kernel_flat(2, 0.5, [0, 0], [1, 0]) == pytest.approx(math.exp(-1) / math.pi)
    assert reference_kernel(Euclidean(3), 1.0, [0, 0, 0], [0, 0, 0]) == pytest.approx((2 * math.pi) ** -1.5)


def test_large_time_limits():
    assert sphere_kernel(Sphere(1), 40.0, 0.3) == pytest.approx(1 / (4 * math.pi), rel=1e-12)
    I = Interval(math.pi, "dirichlet")
    t = 20.0
    assert interval_kernel_series(I, t, math.pi / 2, math.pi / 2) == pytest.approx(2 / math.pi * math.exp(-t / 2), rel=1e-12)


@pytest.mark.parametrize("t", [0.05, 0.3, 1.0])
def test_torus_images_match_fourier(t):
    L, x, y = 2.0, 0.1, 1.3
    k = np.arange(1, 60)
    fourier = (1 + 2 * np.sum(np.exp(-2 * (math.pi * k / L) ** 2 * t) * np.cos(2 * math.pi * k * (y - x) / L))) / L
    assert torus_kernel(FlatTorus(1, (L,)), t, np.array([x]), np.array([y])) == pytest.approx(fourier, rel=1e-12)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
@pytest.mark.parametrize("t", [0.01, 0.1, 0.5, 2.0])
def test_images_match_eigenseries(bc, t):
    I = Interval(1.7, bc)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 1.7, (2, 50))
    a = interval_kernel_images(I, t, x, y)
    b = interval_kernel_series(I, t, x, y)
    assert np.abs(a - b).max() < 1e-8


@pytest.mark.parametrize("m,res", [(Sphere(1), 16), (FlatTorus(1, (1.0,)), 32), (Interval(2.0, "neumann"), 64)])
def test_rows_integrate_to_one(m, res):
    g = build_grid(m, res)
    K = reference_matrix(m, g, 0.3)
    np.testing.assert_allclose(K.values @ g.weights, 1.0, rtol=1e-6)
    assert K.values.min() >= 0
    assert K.is_symmetric()


def test_dirichlet_positive_inside():
    I = Interval(1.0, "dirichlet")
    g = build_grid(I, 32)
    K = reference_matrix(I, g, 0.2)
    assert K.values.min() > 0
    assert np.all(K.values @ g.weights < 1.0)


def test_sphere_kernel_mp_agrees():
    for c in (1.0, 0.3, -0.9):
        assert float(sphere_kernel_mp(0.4, c)) == pytest.approx(sphere_kernel(Sphere(1), 0.4, c), rel=1e-12)


def test_truncation_warning():
    with pytest.warns(TruncationWarning):
        sphere_kernel(Sphere(1), 0.01, 1.0, lmax=20)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sphere_kernel(Sphere(1), 0.01, 1.0)


def test_spectral_bases_orthonormal():
    for m in (FlatTorus(1, (2 * math.pi,)), Interval(2.0, "dirichlet"), Interval(2.0, "neumann"), Sphere(1.5)):
        B = spectral_basis(m, 6)
        g = build_grid(m, 64)
        phi = B.evaluate(g.points)
        G = (phi.conj().T * g.weights) @ phi
        np.testing.assert_allclose(G, np.eye(B.size), atol=1e-10)


def test_fk_constant_potential():
    S = Sphere(1)
    t = 0.7
    x = S.exp_map(NORTH, [0.4, 0.0, 0.0])
    # u0 = z is an eigenfunction with eigenvalue 1 of 1/2 Delta; V = scal / 8 = 1/4
    val = fk_reference(S, lambda p: np.full(p.shape[:-1], 0.25), t, x, lambda p: p[..., 2])
    assert val == pytest.approx(math.exp(-1.25 * t) * x[2], rel=1e-12)


def test_fk_doubling_is_stable():
    C = FlatTorus(1, (2 * math.pi,))
    V = lambda p: np.cos(p[..., 0])
    u0 = lambda p: np.cos(p[..., 0])
    a = fk_reference(C, V, 0.5, np.array([0.3]), u0, order=16, check=False)
    b = fk_reference(C, V, 0.5, np.array([0.3]), u0, order=33, check=False)
    assert abs(a - b) < 1e-9


def test_fk_magnetic_plane_wave():
    C = FlatTorus(1, (2 * math.pi,))
    a = 0.3
    t = 0.5
    val = fk_reference(C, None, t, np.array([0.0]), lambda p: np.ones(p.shape[:-1]), a=a)
    assert val == pytest.approx(math.exp(-a * a * t / 2), rel=1e-12)


def test_mehler_value():
    t = 0.5
    val = fk_reference_line(lambda p: 0.5 * p[..., 0] ** 2, t, 0.0, lambda p: np.ones(p.shape[:-1]))
    assert val == pytest.approx(math.cosh(t) ** -0.5, rel=1e-6)
    assert val == pytest.approx(0.94171, abs=1e-5)
    x = 0.8
    val = fk_reference_line(lambda p: 0.5 * p[..., 0] ** 2, t, x, lambda p: np.ones(p.shape[:-1]))
    assert val == pytest.approx(math.cosh(t) ** -0.5 * math.exp(-0.5 * x * x * math.tanh(t)), rel=1e-6)

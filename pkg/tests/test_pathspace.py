import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatpaths.geom import CutLocusError, Euclidean, FlatTorus, Interval, Sphere
from heatpaths.pathspace import (
    Partition,
    PiecewiseGeodesicPath,
    ReflectedPath,
    action_energy,
    action_with_potential,
    coarea_sides_euclidean_1d,
    increments_F_tau,
    make_partition,
    path_from_row,
    path_to_row,
    polygon_deviation,
    project_to_polygon,
    reflect_unfold,
    sigma_h1_density,
    sigma_l2_density,
    sigma_l2_prefactor,
    unfold_point,
)

NORTH = np.array([0.0, 0.0, 1.0])
EX = np.array([1.0, 0.0, 0.0])


def test_partitions():
    np.testing.assert_allclose(make_partition(1.0, 4).times, [0, 0.25, 0.5, 0.75, 1.0])
    triv = make_partition(2.0, 1)
    np.testing.assert_allclose(triv.times, [0.0, 2.0])
    r = make_partition(1.0, 3, "random", seed=7)
    assert np.all(r.increments > 0)
    assert r.increments.sum() == pytest.approx(1.0, abs=1e-12)
    assert r == make_partition(1.0, 3, "random", seed=7)
    assert make_partition(1.0, 4).is_uniform() and not r.is_uniform()
    assert r.mesh == r.increments.max()


@pytest.mark.parametrize("times", [[0.0, 0.5, 0.5, 1.0], [0.0, 1.0, 0.5], [0.1, 1.0], [0.0]])
def test_partition_rejects_degenerate(times):
    with pytest.raises(ValueError):
        Partition(times)


def test_make_partition_validation():
    with pytest.raises(ValueError):
        make_partition(0.0, 3)
    with pytest.raises(ValueError):
        make_partition(1.0, 0)
    with pytest.raises(ValueError):
        make_partition(1.0, 2, "chebyshev")


def line(nodes, t=1.0, m=None):
    nodes = np.asarray(nodes, dtype=float)
    return PiecewiseGeodesicPath(m or Euclidean(1), make_partition(t, len(nodes) - 1), nodes)


def test_action_energy_examples():
    assert action_energy(line([0, 1])) == pytest.approx(0.5)
    assert action_energy(line([0, 0.5, 1])) == pytest.approx(0.5)
    sph = PiecewiseGeodesicPath(Sphere(1), make_partition(1.0, 1), np.stack([NORTH, EX]))
    assert action_energy(sph) == pytest.approx((math.pi / 2) ** 2 / 2)


def test_action_single_segment_depends_on_distance_only():
    S = Sphere(1)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(3)
        x /= np.linalg.norm(x)
        y = rng.standard_normal(3)
        y /= np.linalg.norm(y)
        dt = rng.uniform(0.1, 2)
        p = PiecewiseGeodesicPath(S, Partition([0.0, dt]), np.stack([x, y]))
        assert action_energy(p) == pytest.approx(S.distance(x, y) ** 2 / (2 * dt), rel=1e-12)


def test_action_additive_over_concatenation():
    p = line([0.0, 0.3, -0.2, 0.9], t=1.5)
    tau = p.partition
    a = PiecewiseGeodesicPath(Euclidean(1), Partition(tau.times[:3]), p.nodes[:3])
    b = PiecewiseGeodesicPath(Euclidean(1), Partition(tau.times[2:] - tau.times[2]), p.nodes[2:])
    assert action_energy(p) == pytest.approx(action_energy(a) + action_energy(b))


def test_action_with_potential_examples():
    p = line([0, 1])
    assert action_with_potential(p, lambda x: np.full(x.shape[:-1], 2.5)) == pytest.approx(0.5 + 2.5)
    assert action_with_potential(p, lambda x: x[..., 0]) == pytest.approx(1.0)
    C = FlatTorus(1, (2 * math.pi,))
    const = PiecewiseGeodesicPath(C, make_partition(1.0, 3), np.zeros((4, 1)))
    assert action_with_potential(const, lambda x: np.cos(x[..., 0])) == pytest.approx(1.0)


def test_sigma_h1_density_examples():
    p = line([0.0, 0.4, -0.1], t=1.0)
    assert sigma_h1_density(p, pinned=True).value == pytest.approx(2.0)
    q = line([3.0, -2.0, 7.0], t=1.0)
    assert sigma_h1_density(q).value == pytest.approx(sigma_h1_density(p).value)
    S = Sphere(1)
    sp = PiecewiseGeodesicPath(S, make_partition(0.7, 1), np.stack([NORTH, EX]))
    assert sigma_h1_density(sp, pinned=True).value == pytest.approx(math.pi / 2)


def test_sigma_h1_pinned_matches_formula():
    rng = np.random.default_rng(5)
    S = Sphere(1)
    T = FlatTorus(2, (1.0, 2.0))
    for i in range(100):
        N = int(rng.integers(1, 6))
        tau = make_partition(rng.uniform(0.2, 2.0), N, "random", seed=i)
        if i % 2 == 0:
            nodes = [NORTH]
            for _ in range(N):
                v = rng.standard_normal(3)
                v -= v.dot(nodes[-1]) * nodes[-1]
                v *= rng.uniform(0, 2.5) / np.linalg.norm(v)
                nodes.append(S.exp_map(nodes[-1], v))
            nodes = np.stack(nodes)
            m, n = S, 2
            d = np.array([math.acos(np.clip(a @ b, -1, 1)) for a, b in zip(nodes, nodes[1:])])
            J = np.where(d > 0, np.sin(d) / np.where(d > 0, d, 1), 1.0)
        else:
            nodes = rng.uniform(0, 1, (N + 1, 2)) * [1.0, 2.0]
            m, n = T, 2
            J = np.ones(N)
        expected = tau.t ** (n / 2) * np.prod(tau.increments ** (-n / 2)) / np.prod(J)
        got = sigma_h1_density(PiecewiseGeodesicPath(m, tau, nodes), pinned=True).value
        assert got == pytest.approx(expected, rel=1e-10)


def test_sigma_h1_propagates_cut_locus():
    S = Sphere(1)
    with pytest.raises(CutLocusError):
        PiecewiseGeodesicPath(S, make_partition(1.0, 1), np.stack([NORTH, -NORTH]))


def test_sigma_l2_density():
    p = line([0.0, 0.4, -0.1], t=1.0)
    assert sigma_l2_density(p).value == pytest.approx(0.5)
    # with the partition factor the L2 density becomes the H1 density on flat spaces
    for N in (1, 2, 3):
        q = line(np.linspace(0, 1, N + 1), t=1.3)
        pref = sigma_l2_prefactor(q.partition, 1)
        assert pref * sigma_l2_density(q).value == pytest.approx(sigma_h1_density(q).value, rel=1e-14)
        assert pref * sigma_l2_density(q, pinned=True).value == pytest.approx(sigma_h1_density(q, pinned=True).value)


def test_project_parabola():
    fine = np.linspace(0, 1, 1001)
    coarse = make_partition(1.0, 10)
    p = project_to_polygon(Euclidean(1), fine, fine**2, coarse)
    assert polygon_deviation(p, fine, fine**2) == pytest.approx(0.0025, rel=1e-9)


def test_project_identity_and_constant():
    tau = make_partition(1.0, 5)
    nodes = np.array([0.0, 0.3, 0.1, 0.5, 0.2, 0.4])
    p = project_to_polygon(Euclidean(1), tau.times, nodes, tau)
    np.testing.assert_allclose(p.nodes[:, 0], nodes)
    fine = np.linspace(0, 1, 101)
    c = project_to_polygon(Euclidean(1), fine, np.full(101, 0.7), tau)
    assert polygon_deviation(c, fine, np.full(101, 0.7)) == 0.0
    with pytest.raises(ValueError):
        project_to_polygon(Euclidean(1), np.linspace(0, 1, 7), np.zeros(7), make_partition(1.0, 4))


def test_F_tau():
    p = line([0.0, 1.0, -1.0])
    assert np.all(increments_F_tau(p)[1] == 1.0)
    S = Sphere(1)
    t = 0.8
    const = PiecewiseGeodesicPath(S, make_partition(t, 4), np.tile(NORTH, (5, 1)))
    assert increments_F_tau(const)[1] == pytest.approx(math.exp(t / 6))
    d = 1.2
    seg = PiecewiseGeodesicPath(S, make_partition(1.0, 1), np.stack([NORTH, S.exp_map(NORTH, d * EX)]))
    inc, F = increments_F_tau(seg)
    assert np.linalg.norm(inc[0]) == pytest.approx(d)
    assert F == pytest.approx(math.exp(2 / 12 - d**2 / 12))


def test_reflect_unfold_examples():
    assert reflect_unfold(1.0, 0.5, 0.5) == (0.5, 0)
    f, r = reflect_unfold(1.0, 0.5, 1.5)
    assert (float(f), int(r)) == (0.5, 1)
    f, r = reflect_unfold(1.0, 0.2, -0.2)
    assert float(f) == pytest.approx(0.2) and int(r) == 1
    f, r = reflect_unfold(1.0, 0.5, 3.25)
    assert float(f) == pytest.approx(0.75) and int(r) == 3


@settings(max_examples=300, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-50, 50))
def test_fold_unfold_roundtrip(L, u):
    folded, _ = reflect_unfold(L, 0.0, u)
    cell = int(np.floor(u / L))
    assert 0 <= folded <= L
    assert float(unfold_point(L, folded, cell)) == pytest.approx(u, abs=1e-12 * max(1.0, abs(u)))


def test_reflected_path():
    I = Interval(1.0, "dirichlet")
    rp = ReflectedPath(I, make_partition(1.0, 3), np.array([[0.5, 1.5, -0.2, 0.3]]))
    np.testing.assert_allclose(rp.nodes[0, :, 0], [0.5, 0.5, 0.2, 0.3])
    np.testing.assert_array_equal(rp.segment_reflections[0], [1, 2, 1])
    assert rp.reflections[0] == 4


def test_coarea_identity():
    f = lambda p: np.exp(-action_energy(p))
    lhs, rhs = coarea_sides_euclidean_1d(f, x=0.0, t=1.0)
    assert abs(lhs - rhs) / abs(lhs) < 1e-6
    # density 2 times the Gaussian integral pi
    assert lhs == pytest.approx(2 * math.pi, rel=1e-6)


def test_path_row_roundtrip():
    S = Sphere(1)
    tau = make_partition(1.0, 3, "random", seed=3)
    nodes = np.stack([NORTH, S.exp_map(NORTH, 0.3 * EX), EX, S.exp_map(EX, [0, 0.2, 0])])
    p = PiecewiseGeodesicPath(S, tau, nodes)
    row = path_to_row(p)
    assert len(row) == 2 + 2 + 12
    q = path_from_row(S, row)
    np.testing.assert_allclose(q.nodes, p.nodes)
    assert q.partition == p.partition


def test_evaluate_matches_nodes_and_geodesics():
    S = Sphere(1)
    tau = make_partition(2.0, 2)
    p = PiecewiseGeodesicPath(S, tau, np.stack([NORTH, EX, [0.0, 1.0, 0.0]]))
    np.testing.assert_allclose(p.evaluate(tau.times), p.nodes, atol=1e-14)
    mid = p.evaluate([0.5])[0]
    np.testing.assert_allclose(mid, [math.sqrt(0.5), 0, math.sqrt(0.5)], atol=1e-14)

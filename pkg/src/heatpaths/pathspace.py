"""Partitions, piecewise geodesic paths and the discrete path-space measures.

Paths hold node arrays of shape ``(..., N + 1, d)`` so a single object can
carry one path or a whole Monte-Carlo batch.  Measures are represented by
their densities with respect to the product Riemannian measure
``dx_1 ... dx_N`` under the evaluation map at the partition times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geom import GeodesicSegment, Interval, ManifoldSpec, fold_interval

__all__ = [
    "Partition",
    "make_partition",
    "PiecewiseGeodesicPath",
    "ReflectedPath",
    "DensityFactor",
    "action_energy",
    "action_with_potential",
    "integrate_along",
    "sigma_h1_density",
    "sigma_l2_density",
    "sigma_l2_prefactor",
    "project_to_polygon",
    "polygon_deviation",
    "increments_F_tau",
    "reflect_unfold",
    "cell_index",
    "unfold_point",
    "path_to_row",
    "path_from_row",
]

GAUSS_ORDER = 4


@dataclass(frozen=True)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a partition needs at least the two end points")
        if times[0] != 0.0:
            raise ValueError("partitions start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("partition times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def t(self) -> float:
        return float(self.times[-1])

    @property
    def N(self) -> int:
        return self.times.size - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(self.increments.max())

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        inc = self.increments
        return bool(np.allclose(inc, inc[0], rtol=rtol, atol=0))

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


def make_partition(t: float, N: int, scheme: str = "uniform", seed: int | None = None) -> Partition:
    """Uniform partition, or a random one with flat-Dirichlet increments."""
    if not t > 0:
        raise ValueError("t must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    if scheme == "uniform":
        times = t * np.arange(N + 1) / N
    elif scheme == "random":
        inc = np.random.default_rng(seed).dirichlet(np.ones(N)) * t
        times = np.concatenate([[0.0], np.cumsum(inc)])
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    times[-1] = t
    return Partition(times)


class PiecewiseGeodesicPath:
    """Path that is a geodesic on each partition subinterval.

    ``velocities[..., j, :]`` is the initial velocity of segment ``j`` at
    node ``j``.  When not supplied it is computed from the nodes through the
    logarithm map, which enforces membership in the space of paths whose
    segments are unique shortest geodesics.
    """

    def __init__(self, manifold: ManifoldSpec, partition: Partition, nodes, velocities=None):
        self.manifold = manifold
        self.partition = partition
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.shape[-2] != partition.N + 1 or nodes.shape[-1] != manifold.ambient_dim:
            raise ValueError(
                f"nodes shape {nodes.shape} does not match N={partition.N}, d={manifold.ambient_dim}"
            )
        self.nodes = nodes
        if velocities is None:
            velocities = manifold.log_map(nodes[..., :-1, :], nodes[..., 1:, :])
            velocities = velocities / partition.increments[:, None]
        self.velocities = np.asarray(velocities, dtype=float)

    @classmethod
    def from_nodes(cls, manifold, partition, nodes):
        return cls(manifold, partition, nodes)

    @property
    def batch_shape(self) -> tuple:
        return self.nodes.shape[:-2]

    @property
    def increments(self) -> np.ndarray:
        """The increments ``gamma'(tau_{j-1}+) * Delta_j tau``."""
        return self.velocities * self.partition.increments[:, None]

    @cached_property
    def segments(self) -> list[GeodesicSegment]:
        if self.batch_shape:
            raise ValueError("segments are only materialized for a single path")
        inc = self.partition.increments
        return [
            GeodesicSegment(self.nodes[j], self.nodes[j + 1], float(inc[j]), self.velocities[j])
            for j in range(self.partition.N)
        ]

    def points_along(self, fractions):
        """Points and velocities at local fractions in ``[0, 1]`` of every segment.

        Returns arrays of shape ``(..., N, q, d)``.
        """
        fr = np.asarray(fractions, dtype=float)
        inc = self.partition.increments
        s = inc[:, None] * fr[None, :]
        x = self.nodes[..., :-1, None, :]
        u = self.velocities[..., :, None, :]
        return self.manifold.geodesic(x, u, s)

    def evaluate(self, s) -> np.ndarray:
        """Path position at global times ``s`` (1-D array), shape ``(..., len(s), d)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        times = self.partition.times
        j = np.clip(np.searchsorted(times, s, side="right") - 1, 0, self.partition.N - 1)
        x = self.nodes[..., j, :]
        u = self.velocities[..., j, :]
        return self.manifold.geodesic(x, u, s - times[j])[0]


def integrate_along(path, f, order: int = GAUSS_ORDER):
    """``int_0^t f(gamma(s), gamma'(s)) ds`` by Gauss-Legendre per segment."""
    xi, w = np.polynomial.legendre.leggauss(order)
    pts, vel = path.points_along((xi + 1.0) / 2.0)
    vals = np.asarray(f(pts, vel))
    inc = path.partition.increments
    return np.sum(vals * (w[None, :] * inc[:, None] / 2.0), axis=(-2, -1))


def action_energy(path) -> np.ndarray:
    """``S_0 = 1/2 sum_j d(x_{j-1}, x_j)^2 / Delta_j tau``."""
    inc = path.partition.increments
    speed2 = np.sum(path.velocities**2, axis=-1)
    return 0.5 * np.sum(speed2 * inc, axis=-1)


def action_with_potential(path, V, quad_order: int = GAUSS_ORDER) -> np.ndarray:
    return action_energy(path) + integrate_along(path, lambda p, _v: V(p), quad_order)


@dataclass(frozen=True)
class DensityFactor:
    value: np.ndarray
    measure: str
    pinned: bool
    # the (2 pi)^{-dim/2} normalization is never folded into ``value``
    normalized: bool = False


def _jacobians(path) -> np.ndarray:
    m = path.manifold
    return m.exp_jacobian(path.nodes[..., :-1, :], path.nodes[..., 1:, :])


def sigma_h1_density(path, pinned: bool = False) -> DensityFactor:
    """Density of the discrete H^1 volume under the evaluation map.

    Unpinned: ``prod_j Delta_j tau^{-n/2} J(x_{j-1}, x_j)^{-1}``; pinned paths
    carry the extra ``t^{n/2}`` of the co-area normalization.
    """
    n = path.manifold.dim
    tau = path.partition
    J = _jacobians(path)
    value = np.prod(tau.increments ** (-n / 2.0) / J, axis=-1)
    if pinned:
        value = value * tau.t ** (n / 2.0)
    return DensityFactor(value, "sigma-h1", pinned)


def sigma_l2_density(path, pinned: bool = False) -> DensityFactor:
    """Density of the discrete L^2 volume under the evaluation map.

    The metric is diagonal in the node values ``X(tau_j)``, so the density is
    ``prod_j Delta_j tau^{n/2}`` on every manifold; curvature enters only
    through the scalar-curvature weight of the integrand.
    """
    n = path.manifold.dim
    tau = path.partition
    # node-coordinate Jacobian factor is identically 1; still enforce H° membership
    _jacobians(path)
    value = np.broadcast_to(np.prod(tau.increments ** (n / 2.0)), path.batch_shape).copy()
    if pinned:
        value = value * tau.t ** (n / 2.0)
    return DensityFactor(value, "sigma-l2", pinned)


def sigma_l2_prefactor(partition: Partition, n: int) -> float:
    """Partition-dependent factor that turns the L^2 volume into Gaussian normalization."""
    return float(np.prod(partition.increments ** (-float(n))))


def project_to_polygon(manifold, fine_times, fine_nodes, coarse: Partition) -> PiecewiseGeodesicPath:
    """Interpolate a sampled path at the coarse partition times by minimizing geodesics."""
    fine_times = np.asarray(fine_times, dtype=float)
    fine_nodes = np.asarray(fine_nodes, dtype=float)
    if fine_nodes.ndim == 1:
        fine_nodes = fine_nodes[:, None]
    idx = np.searchsorted(fine_times, coarse.times - 1e-12 * max(coarse.t, 1.0))
    idx = np.clip(idx, 0, fine_times.size - 1)
    if not np.allclose(fine_times[idx], coarse.times, rtol=0, atol=1e-12 * max(coarse.t, 1.0)):
        raise ValueError("coarse times must be a subset of the fine times")
    return PiecewiseGeodesicPath(manifold, coarse, fine_nodes[..., idx, :])


def polygon_deviation(path: PiecewiseGeodesicPath, fine_times, fine_nodes) -> float:
    """Sup distance between a sampled path and its piecewise geodesic projection."""
    fine_nodes = np.asarray(fine_nodes, dtype=float)
    if fine_nodes.ndim == 1:
        fine_nodes = fine_nodes[:, None]
    return float(np.max(path.manifold.distance(path.evaluate(fine_times), fine_nodes)))


def increments_F_tau(path, quad_order: int = GAUSS_ORDER):
    """Increments and ``F_tau = exp(int scal / 12 - sum_j ric(D_j, D_j) / 12)``."""
    m = path.manifold
    inc = path.increments
    ric = m.curvature_data(path.nodes[..., :-1, :], inc).ric_vv
    scal_int = integrate_along(path, lambda p, _v: m.scal(p), quad_order)
    F = np.exp(scal_int / 12.0 - np.sum(ric, axis=-1) / 12.0)
    return inc, F


def cell_index(length: float, u):
    return np.floor(np.asarray(u, dtype=float) / length).astype(np.int64)


def unfold_point(length: float, folded, cell):
    """Inverse of folding, given the reflection-group cell of the unfolded point."""
    folded = np.asarray(folded, dtype=float)
    cell = np.asarray(cell)
    even = cell % 2 == 0
    return np.where(even, cell * length + folded, (cell + 1) * length - folded)


def reflect_unfold(length: float, x, unfolded_end):
    """Fold an unfolded straight segment back into ``[0, length]``.

    Returns the folded end point and the number of boundary reflections,
    which equals the number of lattice walls ``k * length`` crossed.
    """
    if not length > 0:
        raise ValueError("length must be positive")
    refl = np.abs(cell_index(length, unfolded_end) - cell_index(length, x))
    return fold_interval(length, unfolded_end), refl


class ReflectedPath:
    """Reflected piecewise-geodesic path on an interval, kept in unfolded form."""

    def __init__(self, manifold: Interval, partition: Partition, unfolded):
        self.manifold = manifold
        self.partition = partition
        unfolded = np.asarray(unfolded, dtype=float)
        if unfolded.shape[-1] != partition.N + 1:
            raise ValueError("need N + 1 unfolded nodes")
        self.unfolded = unfolded

    @property
    def batch_shape(self):
        return self.unfolded.shape[:-1]

    @property
    def nodes(self) -> np.ndarray:
        return fold_interval(self.manifold.length, self.unfolded)[..., None]

    @property
    def velocities(self) -> np.ndarray:
        return (np.diff(self.unfolded, axis=-1) / self.partition.increments)[..., None]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.unfolded, axis=-1)[..., None]

    @property
    def segment_reflections(self) -> np.ndarray:
        L = self.manifold.length
        return np.abs(np.diff(cell_index(L, self.unfolded), axis=-1))

    @property
    def reflections(self) -> np.ndarray:
        return np.sum(self.segment_reflections, axis=-1)

    def points_along(self, fractions):
        fr = np.asarray(fractions, dtype=float)
        inc = self.partition.increments
        a = self.unfolded[..., :-1, None]
        b = self.unfolded[..., 1:, None]
        straight = a + (b - a) * fr
        vel = np.broadcast_to(((b - a) / inc[:, None]), straight.shape)
        # velocity sign flips on odd cells; only |velocity| enters scalar weights
        return fold_interval(self.manifold.length, straight)[..., None], vel[..., None]


def path_to_row(path: PiecewiseGeodesicPath) -> list[float]:
    """CSV row ``t, N, tau_1 .. tau_{N-1}, node coordinates flattened``."""
    tau = path.partition
    if path.batch_shape:
        raise ValueError("serialize one path at a time")
    return [tau.t, float(tau.N), *tau.times[1:-1].tolist(), *path.nodes.reshape(-1).tolist()]


def path_from_row(manifold: ManifoldSpec, row) -> PiecewiseGeodesicPath:
    row = [float(v) for v in row]
    t, N = row[0], int(round(row[1]))
    inner = row[2 : 2 + N - 1]
    times = np.array([0.0, *inner, t])
    coords = np.array(row[2 + N - 1 :])
    nodes = coords.reshape(N + 1, manifold.ambient_dim)
    return PiecewiseGeodesicPath(manifold, Partition(times), nodes)


def coarea_sides_euclidean_1d(f, x: float = 0.0, t: float = 1.0, half_width: float = 12.0, n: int = 801):
    """Both sides of the co-area identity on R^1 with a two-step uniform partition.

    ``f(x1, x2)`` is integrated against the unpinned discrete H^1 density on the
    left and against ``t^{-1/2}`` times the pinned one on the right, using the
    trapezoid rule on ``[x - half_width, x + half_width]`` in each variable.
    """
    from .geom import Euclidean

    m = Euclidean(1)
    tau = make_partition(t, 2)
    z = np.linspace(x - half_width, x + half_width, n)
    h = z[1] - z[0]
    X1, X2 = np.meshgrid(z, z, indexing="ij")
    nodes = np.stack([np.full_like(X1, x), X1, X2], axis=-1)[..., None]
    path = PiecewiseGeodesicPath(m, tau, nodes)
    vals = f(path)
    w = np.full(n, h)
    w[[0, -1]] *= 0.5
    W = w[:, None] * w[None, :]
    lhs = math.fsum((vals * sigma_h1_density(path).value * W).ravel())
    # outer integral over the end point y = x2, inner over x1
    inner = np.sum(vals * sigma_h1_density(path, pinned=True).value * w[:, None], axis=0)
    rhs = t ** (-0.5) * math.fsum((inner * w).ravel())
    return lhs, rhs

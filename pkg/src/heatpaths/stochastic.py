"""Monte-Carlo sampling of the approximate Wiener measures.

Steps are drawn in the tangent space at the current node and pushed to the
manifold by the exponential map, so the node law is exactly the normalized
``e^{-S_0}`` density against the discrete H^1 volume and every integrand is
averaged with unit weight.  Random numbers come from Philox streams keyed by
``(seed, chunk index)`` with a fixed chunk size, so results do not depend on
how chunks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import gammaincc

from .bundle import (
    EndomorphismWeight,
    MagneticWeight,
    ScalarWeight,
    magnetic_weight,
    path_ordered_exponential,
    scalar_weight,
)
from .geom import Euclidean, FlatTorus, Interval, Sphere, manifold_label
from .pathspace import Partition, PiecewiseGeodesicPath, ReflectedPath, integrate_along

__all__ = [
    "CHUNK",
    "SamplerConfig",
    "MCEstimate",
    "QVStats",
    "chunk_streams",
    "sample_polygon_path",
    "truncation_bias_bound",
    "cylinder_expectation",
    "feynman_kac_mc",
    "quadratic_variation_stats",
    "estimate_row",
    "ESTIMATE_COLUMNS",
]

CHUNK = 1 << 14


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    n_samples: int = 10_000
    truncation: float = 0.9

    def __post_init__(self):
        if not 0 < self.truncation <= 1:
            raise ValueError("truncation must lie in (0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass(frozen=True)
class MCEstimate:
    mean: complex | float | np.ndarray
    stderr: float | np.ndarray
    n: int
    truncation_bias_bound: float = 0.0

    def within(self, target, k: float = 3.0, floor: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.mean - target) <= np.maximum(k * self.stderr, floor)))


class QVStats(NamedTuple):
    ric_mean: float
    ric_stderr: float
    scal_mean: float
    scal_stderr: float
    diff_var: float


def chunk_streams(seed: int, n: int, chunk: int = CHUNK):
    """Yield ``(generator, size)`` per chunk of the sample index range."""
    for c in range(0, math.ceil(n / chunk)):
        ss = np.random.SeedSequence([int(seed), c])
        yield np.random.Generator(np.random.Philox(ss)), min(chunk, n - c * chunk)


def truncation_bias_bound(m, tau: Partition, truncation: float = 0.9) -> float:
    """Sum over steps of the Gaussian tail mass beyond the truncation radius."""
    if not isinstance(m, Sphere):
        return 0.0
    R = truncation * m.injectivity_radius()
    return float(np.sum(gammaincc(m.dim / 2.0, R**2 / (2.0 * tau.increments))))


def _sphere_steps(m: Sphere, x, dt, rng, R):
    """Truncated Gaussian tangent step of covariance ``dt`` at each point of ``x``."""
    n = x.shape[0]
    z = rng.standard_normal((n, 2)) * math.sqrt(dt)
    bad = np.einsum("ij,ij->i", z, z) >= R * R
    while np.any(bad):
        k = int(bad.sum())
        z[bad] = rng.standard_normal((k, 2)) * math.sqrt(dt)
        bad = np.einsum("ij,ij->i", z, z) >= R * R
    return np.einsum("ia,iab->ib", z, m.tangent_frame(x))


def sample_polygon_path(m, x, tau: Partition, rng: np.random.Generator, n: int = 1, truncation: float = 0.9):
    """Draw ``n`` piecewise geodesic paths from the approximate Wiener measure.

    Torus and interval paths are sampled in the universal cover and carry
    their unfolded velocities, so winding and reflections are kept exactly.
    """
    inc = tau.increments
    N = tau.N
    if isinstance(m, Interval):
        x0 = float(np.asarray(x, dtype=float).reshape(-1)[0])
        steps = rng.standard_normal((n, N)) * np.sqrt(inc)
        unfolded = np.concatenate([np.full((n, 1), x0), x0 + np.cumsum(steps, axis=1)], axis=1)
        return ReflectedPath(m, tau, unfolded)
    if isinstance(m, (Euclidean, FlatTorus)):
        d = m.dim
        x0 = m.canonical(np.asarray(x, dtype=float))
        steps = rng.standard_normal((n, N, d)) * np.sqrt(inc)[:, None]
        raw = np.concatenate([np.broadcast_to(x0, (n, 1, d)), x0 + np.cumsum(steps, axis=1)], axis=1)
        nodes = m.canonical(raw)
        return PiecewiseGeodesicPath(m, tau, nodes, velocities=steps / inc[:, None])
    if isinstance(m, Sphere):
        R = truncation * m.injectivity_radius()
        nodes = np.empty((n, N + 1, 3))
        vel = np.empty((n, N, 3))
        nodes[:, 0] = m.canonical(np.asarray(x, dtype=float))
        for j in range(N):
            v = _sphere_steps(m, nodes[:, j], inc[j], rng, R)
            vel[:, j] = v / inc[j]
            nodes[:, j + 1] = m.exp_map(nodes[:, j], v)
        return PiecewiseGeodesicPath(m, tau, nodes, velocities=vel)
    raise TypeError(f"no sampler for {type(m).__name__}")


class _Accumulator:
    """Collects samples; means and variances use compensated sums."""

    def __init__(self):
        self.re, self.im = [], []
        self.n = 0
        self.complex = False
        self.shape = ()

    def add(self, vals):
        vals = np.asarray(vals)
        self.shape = vals.shape[1:]
        if np.iscomplexobj(vals):
            self.complex = True
        flat = vals.reshape(vals.shape[0], -1)
        self.re.append(np.real(flat))
        self.im.append(np.imag(flat))
        self.n += vals.shape[0]

    def result(self, bias: float) -> MCEstimate:
        re = np.concatenate(self.re)
        im = np.concatenate(self.im)
        n = self.n
        k = re.shape[1]
        mr = np.array([math.fsum(re[:, i]) / n for i in range(k)])
        mi = np.array([math.fsum(im[:, i]) / n for i in range(k)])
        var = np.array(
            [math.fsum((re[:, i] - mr[i]) ** 2) + math.fsum((im[:, i] - mi[i]) ** 2) for i in range(k)]
        ) / max(n - 1, 1)
        se = np.sqrt(var / n)
        mean = mr + 1j * mi if self.complex else mr
        if self.shape == ():
            return MCEstimate(mean[0].item(), float(se[0]), n, bias)
        return MCEstimate(mean.reshape(self.shape), se.reshape(self.shape), n, bias)


def cylinder_expectation(m, x, tau: Partition, F: Callable, cfg: SamplerConfig) -> MCEstimate:
    """Estimate ``int F(gamma(tau_1), ..., gamma(tau_N)) dW_{x,tau}``.

    ``F`` receives the node array of shape ``(batch, N, d)``.
    """
    acc = _Accumulator()
    for rng, size in chunk_streams(cfg.seed, cfg.n_samples):
        path = sample_polygon_path(m, x, tau, rng, size, cfg.truncation)
        vals = np.asarray(F(path.nodes[:, 1:, :]))
        if vals.ndim == 0:
            vals = np.full(size, vals)
        acc.add(vals)
    return acc.result(truncation_bias_bound(m, tau, cfg.truncation))


def _path_weight(path, w):
    if isinstance(w, ScalarWeight):
        return scalar_weight(path, w.V)
    if isinstance(w, MagneticWeight):
        return magnetic_weight(path, w.omega, w.V)
    if isinstance(w, EndomorphismWeight):
        P = path_ordered_exponential(path, w).value
        return np.linalg.inv(P)
    raise TypeError(f"unsupported weight {type(w).__name__}")


def feynman_kac_mc(m, x, t: float, tau: Partition, weight, u0: Callable, cfg: SamplerConfig) -> MCEstimate:
    """Estimate ``E[P(gamma)^{-1} u0(gamma(t))]`` under the approximate Wiener measure.

    On a Dirichlet interval each path also carries the sign ``(-1)^refl``.
    """
    if not math.isclose(tau.t, t, rel_tol=1e-12):
        raise ValueError(f"partition ends at {tau.t}, expected t = {t}")
    acc = _Accumulator()
    for rng, size in chunk_streams(cfg.seed, cfg.n_samples):
        path = sample_polygon_path(m, x, tau, rng, size, cfg.truncation)
        W = _path_weight(path, weight)
        end = np.asarray(u0(path.nodes[:, -1, :]))
        if isinstance(weight, EndomorphismWeight):
            vals = np.einsum("bij,bj->bi", W, np.broadcast_to(end, (size, weight.k)))
        else:
            vals = W * end
        if isinstance(m, Interval) and m.bc == "dirichlet":
            sign = np.where(path.reflections % 2 == 0, 1.0, -1.0)
            vals = vals * sign.reshape(sign.shape + (1,) * (np.ndim(vals) - 1))
        acc.add(vals)
    return acc.result(truncation_bias_bound(m, tau, cfg.truncation))


def quadratic_variation_stats(m, x, t: float, tau: Partition, cfg: SamplerConfig) -> QVStats:
    """Means of ``sum_j ric(D_j gamma, D_j gamma)`` and ``int scal`` over one sample."""
    ric_acc, scal_acc, diff_acc = _Accumulator(), _Accumulator(), _Accumulator()
    for rng, size in chunk_streams(cfg.seed, cfg.n_samples):
        path = sample_polygon_path(m, x, tau, rng, size, cfg.truncation)
        inc = path.increments
        ric = np.sum(m.curvature_data(path.nodes[:, :-1, :], inc).ric_vv, axis=-1)
        scal = integrate_along(path, lambda p, _v: m.scal(p))
        ric_acc.add(ric)
        scal_acc.add(scal)
        diff_acc.add(ric - scal)
    r, s, d = (a.result(0.0) for a in (ric_acc, scal_acc, diff_acc))
    return QVStats(r.mean, r.stderr, s.mean, s.stderr, d.stderr**2 * d.n)


ESTIMATE_COLUMNS = ["manifold", "t", "N", "scheme", "n_samples", "seed", "mean", "stderr", "bias_bound"]


def estimate_row(m, tau: Partition, scheme: str, cfg: SamplerConfig, est: MCEstimate) -> list:
    return [
        manifold_label(m),
        tau.t,
        tau.N,
        scheme,
        cfg.n_samples,
        cfg.seed,
        est.mean,
        est.stderr,
        est.truncation_bias_bound,
    ]

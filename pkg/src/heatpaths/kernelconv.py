"""Quadrature grids, approximate heat kernels and their convolution products.

Kernels are dense matrices ``k(x_i, y_j)`` on a quadrature grid and the
convolution ``(k * l)(x, y) = int k(x, z) l(z, y) dz`` is a weighted matrix
product.  Three single-step families are provided:

* ``PLAIN_H1``: ``(2 pi t)^{-n/2} exp(-d^2 / 2t) J(x, y)^{-1}``
* ``ELL_CORRECTED``: the above times ``exp(int scal / 12 - ric(v, v) / 12)``
  with ``v = log_x(y)`` the increment of the connecting geodesic
* ``L2_CORRECTED``: ``(2 pi t)^{-n/2} exp(-d^2 / 2t + c int scal)`` without the
  Jacobian, with ``c = 1/6`` by default

On the sphere kernels vanish beyond ``0.9 pi r``.  On the torus and the
interval every geodesic contributes (images ``|m| <= 8``), interval images
carrying the boundary sign ``(-1)^refl`` for Dirichlet conditions.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bundle import MagneticWeight, ScalarWeight
from .geom import Euclidean, FlatTorus, Interval, ManifoldSpec, Sphere, manifold_label
from .pathspace import Partition, PiecewiseGeodesicPath, action_energy, sigma_h1_density

__all__ = [
    "UnsupportedManifold",
    "QuadratureGrid",
    "KernelMatrix",
    "KernelFamily",
    "build_grid",
    "window_grid",
    "eval_kernel",
    "kernel_matrix",
    "grid_identity",
    "convolve",
    "chernoff_product",
    "ConvergenceReport",
    "convergence_report",
    "sup_error",
    "pinned_path_integral",
    "REPORT_COLUMNS",
    "kernel_triples",
]

IMAGES = 8
TRUNCATION = 0.9
L2_SCAL_COEFFICIENT = 1.0 / 6.0
# entries below this are flushed to zero; subnormals make BLAS crawl
FLUSH = 1e-200
MIN_RESOLUTION = {"torus": 4, "sphere": 8, "interval": 8}
ROW_BLOCK = 256


class UnsupportedManifold(ValueError):
    """The requested operation has no grid on this manifold."""


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    manifold: ManifoldSpec
    points: np.ndarray
    weights: np.ndarray
    resolution: int

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.weights))


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    grid: QuadratureGrid
    values: np.ndarray
    t: float
    label: str = ""

    def is_symmetric(self, tol: float = 1e-10) -> bool:
        v = self.values
        return bool(np.abs(v - v.T).max() <= tol * max(np.abs(v).max(), 1.0))


class KernelFamily(enum.Enum):
    PLAIN_H1 = "plain-h1"
    ELL_CORRECTED = "ell-corrected"
    L2_CORRECTED = "l2-corrected"

    @classmethod
    def parse(cls, name) -> "KernelFamily":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "-")
        aliases = {"plain": "plain-h1", "ell": "ell-corrected", "l2": "l2-corrected"}
        return cls(aliases.get(key, key))


def build_grid(m: ManifoldSpec, resolution: int) -> QuadratureGrid:
    """Tensor trapezoid grid on the torus, Gauss-Legendre x uniform longitudes on
    the sphere (exact for spherical harmonics of degree ``< 2 * resolution``),
    composite midpoint rule on the interval."""
    if isinstance(m, Euclidean):
        raise UnsupportedManifold("Euclidean space is not compact; use window_grid")
    need = MIN_RESOLUTION[m.kind]
    if resolution < need:
        raise ValueError(f"resolution {resolution} below the minimum {need} for {m.kind}")
    if isinstance(m, FlatTorus):
        axes = [np.arange(resolution) * L / resolution for L in m.sides]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.n)
        w = np.full(pts.shape[0], m.volume() / pts.shape[0])
        return QuadratureGrid(m, pts, w, resolution)
    if isinstance(m, Sphere):
        z, wz = np.polynomial.legendre.leggauss(resolution)
        nlon = 2 * resolution
        phi = 2 * np.pi * np.arange(nlon) / nlon
        sth = np.sqrt(1.0 - z**2)
        pts = np.stack(
            [sth[:, None] * np.cos(phi), sth[:, None] * np.sin(phi), np.broadcast_to(z[:, None], (resolution, nlon))],
            axis=-1,
        ).reshape(-1, 3)
        w = (wz[:, None] * np.full(nlon, 2 * np.pi / nlon)).reshape(-1)
        return QuadratureGrid(m, m.radius * pts, m.radius**2 * w, resolution)
    if isinstance(m, Interval):
        h = m.length / resolution
        pts = ((np.arange(resolution) + 0.5) * h)[:, None]
        return QuadratureGrid(m, pts, np.full(resolution, h), resolution)
    raise UnsupportedManifold(type(m).__name__)


def window_grid(m: Euclidean, resolution: int, half_width: float = 8.0) -> QuadratureGrid:
    """Trapezoid grid of spacing ``1 / resolution`` on ``[-half_width, half_width]^n``."""
    if not isinstance(m, Euclidean):
        raise UnsupportedManifold("window grids are for Euclidean space")
    k = int(round(half_width * resolution))
    ax = np.arange(-k, k + 1) / resolution
    pts = np.stack(np.meshgrid(*([ax] * m.n), indexing="ij"), axis=-1).reshape(-1, m.n)
    return QuadratureGrid(m, pts, np.full(pts.shape[0], resolution ** (-m.n)), resolution)


def _gauss(n, t, d2):
    return (2 * np.pi * t) ** (-n / 2.0) * np.exp(-d2 / (2 * t))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _straight_line_weight(x, disp, t, V, omega):
    """``exp(int (i omega(v) - V))`` along ``s -> x + s disp / t`` on ``[0, t]``."""
    expo = 0.0
    for xi, wi in zip(_GL_X, _GL_W):
        p = x + 0.5 * (xi + 1.0) * disp
        if V is not None:
            expo = expo - 0.5 * wi * t * V(p)
        if omega is not None:
            expo = expo + 0.5j * wi * np.sum(omega(p) * disp, axis=-1)
    return np.exp(expo)


def _unpack_weight(weight):
    if weight is None:
        return None, None
    if isinstance(weight, ScalarWeight):
        return weight.V, None
    if isinstance(weight, MagneticWeight):
        return weight.V, weight.omega
    if callable(weight):
        return weight, None
    raise TypeError(f"kernels take scalar or magnetic weights, not {type(weight).__name__}")


def eval_kernel(
    family,
    m: ManifoldSpec,
    t: float,
    x,
    y,
    weight=None,
    truncation: float = TRUNCATION,
    l2_scal_coefficient: float = L2_SCAL_COEFFICIENT,
):
    """Single-step approximate kernel, broadcasting over leading axes of ``x`` and ``y``.

    ``weight`` is an optional potential ``V`` (callable or ScalarWeight) or a
    MagneticWeight; it multiplies by ``exp(int (i omega(gamma') - V))`` along
    each connecting geodesic.
    """
    family = KernelFamily.parse(family)
    if not t > 0:
        raise ValueError("t must be positive")
    V, omega = _unpack_weight(weight)
    if omega is not None and not isinstance(m, (FlatTorus, Euclidean)):
        raise UnsupportedManifold("magnetic kernels are implemented on flat manifolds only")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if y.ndim == 0:
        y = y[None]

    if isinstance(m, Euclidean):
        disp = y - x
        out = _gauss(m.n, t, np.sum(disp**2, axis=-1))
        if V is not None or omega is not None:
            out = out * _straight_line_weight(x, disp, t, V, omega)
        return out

    if isinstance(m, FlatTorus):
        L = np.asarray(m.sides)
        base = y - x
        out = 0.0
        for shift in itertools.product(range(-IMAGES, IMAGES + 1), repeat=m.n):
            disp = base + np.asarray(shift) * L
            term = _gauss(m.n, t, np.sum(disp**2, axis=-1))
            if V is not None or omega is not None:
                term = term * _straight_line_weight(x, disp, t, V, omega)
            out = out + term
        return out

    if isinstance(m, Interval):
        L = m.length
        sigma = -1.0 if m.bc == "dirichlet" else 1.0
        xs, ys = x[..., 0], y[..., 0]
        out = 0.0
        for k in range(-IMAGES, IMAGES + 1):
            for sgn, target in ((1.0, 2 * k * L + ys), (sigma, 2 * k * L - ys)):
                disp = (target - xs)[..., None]
                term = sgn * _gauss(1, t, disp[..., 0] ** 2)
                if V is not None:
                    # the potential is sampled along the folded segment
                    term = term * _straight_line_weight(
                        x, disp, t, lambda p: V(m.canonical(p)), None
                    )
                out = out + term
        return out

    if isinstance(m, Sphere):
        xb, yb = np.broadcast_arrays(x, y)
        th = m._angle(xb, yb)[0]
        d = m.radius * th
        keep = d < truncation * m.injectivity_radius()
        n = m.dim
        d2 = d**2
        scal = 2.0 / m.radius**2
        if family is KernelFamily.L2_CORRECTED:
            val = _gauss(n, t, d2) * np.exp(l2_scal_coefficient * t * scal)
        else:
            val = _gauss(n, t, d2) / np.sinc(th / np.pi)
            if family is KernelFamily.ELL_CORRECTED:
                # ric(v, v) = |v|^2 / r^2 for the increment v = log_x(y)
                val = val * np.exp(t * scal / 12.0 - d2 / m.radius**2 / 12.0)
        out = np.where(keep, val, 0.0)
        if V is not None and np.any(keep):
            u = m.log_map(xb[keep], yb[keep])
            expo = 0.0
            for xi, wi in zip(_GL_X, _GL_W):
                p = m.exp_map(xb[keep], 0.5 * (xi + 1.0) * u)
                expo = expo - 0.5 * wi * t * V(p)
            out[keep] = out[keep] * np.exp(expo)
        return out

    raise UnsupportedManifold(type(m).__name__)


def _flush(a):
    a[np.abs(a) < FLUSH] = 0
    return a


def kernel_matrix(family, m, grid: QuadratureGrid, t: float, weight=None, **kw) -> KernelMatrix:
    """Single-step kernel sampled on all grid pairs, evaluated in row blocks."""
    P = grid.points
    rows = []
    for i in range(0, grid.size, ROW_BLOCK):
        rows.append(np.asarray(eval_kernel(family, m, t, P[i : i + ROW_BLOCK, None, :], P[None, :, :], weight, **kw)))
    vals = _flush(np.concatenate(rows, axis=0))
    return KernelMatrix(grid, vals, t, KernelFamily.parse(family).value)


def grid_identity(grid: QuadratureGrid) -> KernelMatrix:
    """Quadrature delta: convolution with it is the identity."""
    return KernelMatrix(grid, np.diag(1.0 / grid.weights), 0.0, "identity")


def convolve(k: KernelMatrix, l: KernelMatrix) -> KernelMatrix:
    if k.grid is not l.grid:
        if k.grid.size != l.grid.size or not np.array_equal(k.grid.points, l.grid.points):
            raise ValueError("kernels live on different grids")
    vals = _flush((k.values * k.grid.weights[None, :]) @ l.values)
    return KernelMatrix(k.grid, vals, k.t + l.t, k.label)


def _runs(increments):
    runs = []
    for dt in increments:
        if runs and runs[-1][0] == dt:
            runs[-1][1] += 1
        else:
            runs.append([dt, 1])
    return runs


def _power(B, p):
    out = None
    while p:
        if p & 1:
            out = B.copy() if out is None else _flush(out @ B)
        p >>= 1
        if p:
            B = _flush(B @ B)
    return out


def chernoff_product(family, m, grid: QuadratureGrid, tau: Partition, weight=None, **kw) -> KernelMatrix:
    """``K_{D_1 tau} * ... * K_{D_N tau}`` on the grid.

    Runs of equal increments are raised to powers by repeated squaring.
    """
    w = grid.weights
    out = None
    for dt, count in _runs(tau.increments.tolist()):
        B = kernel_matrix(family, m, grid, dt, weight, **kw).values * w[None, :]
        B = _power(B, count)
        out = B if out is None else _flush(out @ B)
    return KernelMatrix(grid, out / w[None, :], tau.t, KernelFamily.parse(family).value)


def sup_error(k: KernelMatrix, ref: KernelMatrix, mask=None) -> float:
    diff = np.abs(k.values - ref.values)
    if mask is not None:
        diff = diff[mask]
    return float(diff.max())


@dataclass
class ConvergenceReport:
    manifold: str
    family: str
    t: float
    resolution: int
    N: list
    sup_errors: list
    relative_errors: list
    rate: float
    exact: bool
    excluded: list = field(default_factory=list)

    def rows(self):
        return [
            [self.manifold, self.family, self.t, n, self.resolution, e, self.rate]
            for n, e in zip(self.N, self.sup_errors)
        ]

    def monotone(self) -> bool:
        e = self.sup_errors
        return all(b < a for a, b in zip(e, e[1:]))


REPORT_COLUMNS = ["manifold", "family", "t", "N", "resolution", "sup_error", "rate"]


def convergence_report(
    family,
    m,
    t: float,
    N_list,
    reference: KernelMatrix,
    weight=None,
    exact_tol: float = 1e-8,
    min_fit_N: int = 1,
    mask=None,
) -> ConvergenceReport:
    """Sup-norm error of uniform Chernoff products against ``reference``.

    The rate is the least-squares slope of ``log error`` against ``log(t / N)``
    over ``N >= min_fit_N``; when every relative error is below ``exact_tol``
    the report is flagged exact and no rate is fitted.
    """
    from .pathspace import make_partition

    grid = reference.grid
    scale = float(np.abs(reference.values if mask is None else reference.values[mask]).max())
    errs = []
    for N in N_list:
        prod = chernoff_product(family, m, grid, make_partition(t, N), weight)
        errs.append(sup_error(prod, reference, mask))
    rel = [e / scale for e in errs]
    exact = max(rel) < exact_tol
    used = [(n, e) for n, e in zip(N_list, errs) if n >= min_fit_N]
    excluded = [n for n in N_list if n < min_fit_N]
    rate = math.nan
    if not exact and len(used) >= 2:
        lx = np.log([t / n for n, _ in used])
        ly = np.log([e for _, e in used])
        rate = float(np.polyfit(lx, ly, 1)[0])
    return ConvergenceReport(
        manifold_label(m), KernelFamily.parse(family).value, t, grid.resolution, list(N_list), errs, rel, rate, exact, excluded
    )


def pinned_path_integral(m, grid: QuadratureGrid, tau: Partition, x, y) -> float:
    """Brute-force ``K_tau(x, y)`` as an integral over the pinned path space.

    Intermediate nodes run over the grid (``N <= 3``); the integrand is
    ``e^{-S_0}`` against the pinned discrete H^1 density, normalized by
    ``(2 pi t)^{-n/2} (2 pi)^{-n (N - 1) / 2}``.  Pairs at or beyond the
    kernel truncation radius contribute nothing, as in the kernel families.
    """
    N = tau.N
    if N > 3:
        raise ValueError("brute-force path integrals are limited to N <= 3")
    n = m.dim
    P = grid.points
    idx = list(itertools.product(range(grid.size), repeat=N - 1))
    mids = P[np.array(idx, dtype=int)] if N > 1 else np.empty((1, 0, P.shape[1]))
    B = mids.shape[0]
    x = np.broadcast_to(np.asarray(x, dtype=float), (B, 1, P.shape[1]))
    y = np.broadcast_to(np.asarray(y, dtype=float), (B, 1, P.shape[1]))
    nodes = np.concatenate([x, mids, y], axis=1)
    d = m.distance(nodes[:, :-1], nodes[:, 1:])
    ok = np.all(d < TRUNCATION * m.injectivity_radius(), axis=-1)
    path = PiecewiseGeodesicPath(m, tau, nodes[ok])
    f = np.exp(-action_energy(path)) * sigma_h1_density(path, pinned=True).value
    wts = np.prod(grid.weights[np.array(idx, dtype=int)], axis=-1) if N > 1 else np.ones(1)
    total = math.fsum((f * wts[ok]).tolist())
    return (2 * np.pi * tau.t) ** (-n / 2) * (2 * np.pi) ** (-n * (N - 1) / 2) * total


def kernel_triples(k: KernelMatrix):
    """Rows ``(x_index, y_index, value)`` for dumping a kernel."""
    I, J = np.indices(k.values.shape)
    return zip(I.ravel().tolist(), J.ravel().tolist(), k.values.ravel().tolist())

"""Ground-truth heat kernels and Feynman-Kac values.

Flat kernels are closed form, torus kernels are image sums, sphere kernels
are Legendre series and interval kernels come both as image sums and as
eigenfunction series, so the two constructions can check each other.
Feynman-Kac references are Galerkin solves ``exp(-t H)`` in a truncated
eigenbasis of ``1/2 Delta``, with a mode-doubling self check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import mpmath as mp
import numpy as np
from numpy.polynomial.legendre import leggauss, legval
from scipy.linalg import expm, solve_banded

from .geom import Euclidean, FlatTorus, Interval, ManifoldSpec, Sphere
from .kernelconv import IMAGES, KernelMatrix, QuadratureGrid

__all__ = [
    "TruncationWarning",
    "exact_kernel_flat",
    "torus_kernel",
    "sphere_kernel",
    "sphere_kernel_mp",
    "interval_kernel_images",
    "interval_kernel_series",
    "reference_kernel",
    "reference_matrix",
    "SpectralBasis",
    "spectral_basis",
    "fk_reference",
    "fk_reference_line",
]

TAIL_TOL = 1e-12


class TruncationWarning(UserWarning):
    """A series was cut off while its last term was still significant."""


def _check_tail(last, total, what: str):
    if np.any(np.abs(last) > TAIL_TOL * np.maximum(np.abs(total), 1e-300)):
        warnings.warn(f"{what}: last retained term not below {TAIL_TOL:g} of the sum", TruncationWarning, stacklevel=3)


def exact_kernel_flat(n: int, t: float, x, y):
    """``(2 pi t)^{-n/2} exp(-|x - y|^2 / 2t)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if n == 1 and x.ndim == y.ndim == 0:
        d2 = (x - y) ** 2
    else:
        d2 = np.sum((np.atleast_1d(y) - np.atleast_1d(x)) ** 2, axis=-1)
    return (2 * np.pi * t) ** (-n / 2.0) * np.exp(-d2 / (2 * t))


def torus_kernel(m: FlatTorus, t: float, x, y, images: int = IMAGES):
    """Product over coordinates of 1-D image sums."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 1.0
    for i, L in enumerate(m.sides):
        delta = y[..., i] - x[..., i]
        ks = np.arange(-images, images + 1)
        terms = np.exp(-((delta[..., None] + ks * L) ** 2) / (2 * t)) / math.sqrt(2 * math.pi * t)
        s = terms.sum(axis=-1)
        _check_tail(np.maximum(terms[..., 0], terms[..., -1]), s, "torus image sum")
        out = out * s
    return out


def _sphere_lmax(t: float, radius: float = 1.0) -> int:
    return int(max(32, math.ceil(10.0 * radius / math.sqrt(t))))


def sphere_kernel(m: Sphere, t: float, cos_angle, lmax: int | None = None):
    """``sum_l (2l+1) / (4 pi r^2) exp(-t l(l+1) / 2r^2) P_l(cos d)``."""
    r2 = m.radius**2
    lmax = lmax or _sphere_lmax(t, m.radius)
    l = np.arange(lmax + 1)
    coef = (2 * l + 1) / (4 * np.pi * r2) * np.exp(-t * l * (l + 1) / (2 * r2))
    c = np.clip(np.asarray(cos_angle, dtype=float), -1.0, 1.0)
    total = legval(c, coef)
    _check_tail(coef[-1], total, "sphere Legendre series")
    return total


def sphere_kernel_mp(t, cos_angle, margin: float = 60.0):
    """Unit-sphere Legendre series in multiprecision, for very small ``t``.

    Precision grows with the size of ``exp(pi^2 / 2t)`` so that the alternating
    antipodal series keeps about 30 significant digits.  Terms are summed
    until ``t l (l+1) / 2`` exceeds the cancellation exponent plus ``margin``.
    """
    t = mp.mpf(t)
    expo = float(mp.pi**2 / (2 * t))
    dps = int(expo / math.log(10)) + 30
    with mp.workdps(dps):
        t = mp.mpf(t)
        c = mp.mpf(cos_angle)
        s = mp.mpf(0)
        p0, p1 = mp.mpf(1), c
        l = 0
        stop = expo + margin + 40
        while True:
            if l == 0:
                pl = p0
            elif l == 1:
                pl = p1
            else:
                p0, p1 = p1, ((2 * l - 1) * c * p1 - (l - 1) * p0) / l
                pl = p1
            s += (2 * l + 1) / (4 * mp.pi) * mp.exp(-t * l * (l + 1) / 2) * pl
            l += 1
            if t * l * (l + 1) / 2 > stop:
                break
        return s


def interval_kernel_images(m: Interval, t: float, x, y, images: int = IMAGES):
    """Signed image sum: ``sum_k G(x - y - 2kL) + sigma G(x + y - 2kL)``."""
    L = m.length
    sigma = -1.0 if m.bc == "dirichlet" else 1.0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ks = np.arange(-images, images + 1)
    a = np.exp(-((x[..., None] - y[..., None] - 2 * ks * L) ** 2) / (2 * t))
    b = np.exp(-((x[..., None] + y[..., None] - 2 * ks * L) ** 2) / (2 * t))
    return (a + sigma * b).sum(axis=-1) / math.sqrt(2 * math.pi * t)


def _interval_modes(m: Interval, t: float) -> int:
    return int(math.ceil(math.sqrt(2 * 45.0 / t) * m.length / math.pi)) + 2


def interval_kernel_series(m: Interval, t: float, x, y, modes: int | None = None):
    """Sine series (Dirichlet) or cosine series (Neumann) of the kernel."""
    L = m.length
    K = modes or _interval_modes(m, t)
    x = np.asarray(x, dtype=float)[..., None]
    y = np.asarray(y, dtype=float)[..., None]
    k = np.arange(1, K + 1)
    decay = np.exp(-t * (k * np.pi / L) ** 2 / 2)
    if m.bc == "dirichlet":
        terms = decay * np.sin(k * np.pi * x / L) * np.sin(k * np.pi * y / L)
        total = 2.0 / L * terms.sum(axis=-1)
    else:
        terms = decay * np.cos(k * np.pi * x / L) * np.cos(k * np.pi * y / L)
        total = 1.0 / L + 2.0 / L * terms.sum(axis=-1)
    _check_tail(2.0 / L * decay[-1], np.abs(total).max(), "interval eigenseries")
    return total


def reference_kernel(m: ManifoldSpec, t: float, x, y, order: int | None = None):
    """Ground-truth kernel of ``e^{-t Delta / 2}`` at points ``x``, ``y``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if isinstance(m, Euclidean):
        return exact_kernel_flat(m.n, t, x, y)
    if isinstance(m, FlatTorus):
        return torus_kernel(m, t, x, y, order or IMAGES)
    if isinstance(m, Sphere):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = np.sum(x * y, axis=-1) / m.radius**2
        return sphere_kernel(m, t, c, order)
    if isinstance(m, Interval):
        x = np.asarray(x, dtype=float)[..., 0]
        y = np.asarray(y, dtype=float)[..., 0]
        return interval_kernel_images(m, t, x, y, order or IMAGES)
    raise TypeError(type(m).__name__)


def reference_matrix(m: ManifoldSpec, grid: QuadratureGrid, t: float, order: int | None = None) -> KernelMatrix:
    P = grid.points
    if isinstance(m, Sphere):
        c = np.clip(P @ P.T / m.radius**2, -1.0, 1.0)
        vals = sphere_kernel(m, t, c, order)
    else:
        vals = reference_kernel(m, t, P[:, None, :], P[None, :, :], order)
    return KernelMatrix(grid, np.asarray(vals, dtype=float), t, "reference")


@dataclass(frozen=True)
class SpectralBasis:
    """Truncated eigenbasis of ``1/2 Delta``.

    ``evaluate(points)`` returns the basis functions at the points, shape
    ``(..., size)``.  On the sphere only the zonal functions (axis ``e_z``) are
    kept, which suffices for zonal data.
    """

    manifold: ManifoldSpec
    eigenvalues: np.ndarray
    evaluate: Callable
    order: int

    @property
    def size(self) -> int:
        return self.eigenvalues.size


def spectral_basis(m: ManifoldSpec, order: int) -> SpectralBasis:
    if isinstance(m, FlatTorus) and m.n == 1:
        L = m.sides[0]
        k = np.arange(-order, order + 1)
        lam = 0.5 * (2 * np.pi * k / L) ** 2
        ev = lambda p: np.exp(2j * np.pi * np.asarray(p)[..., :1] * k / L) / math.sqrt(L)
        return SpectralBasis(m, lam, ev, order)
    if isinstance(m, Sphere):
        r = m.radius
        l = np.arange(order + 1)
        lam = l * (l + 1) / (2 * r**2)
        norm = np.sqrt((2 * l + 1) / (4 * np.pi * r**2))

        def ev(p):
            z = np.clip(np.asarray(p)[..., 2] / r, -1, 1)
            return np.stack([legval(z, np.eye(order + 1)[j]) for j in range(order + 1)], axis=-1) * norm

        return SpectralBasis(m, lam, ev, order)
    if isinstance(m, Interval):
        L = m.length
        if m.bc == "dirichlet":
            k = np.arange(1, order + 1)
            ev = lambda p: math.sqrt(2 / L) * np.sin(np.pi * np.asarray(p)[..., :1] * k / L)
        else:
            k = np.arange(0, order + 1)
            scale = np.where(k == 0, math.sqrt(1 / L), math.sqrt(2 / L))
            ev = lambda p: scale * np.cos(np.pi * np.asarray(p)[..., :1] * k / L)
        return SpectralBasis(m, 0.5 * (np.pi * k / L) ** 2, ev, order)
    raise TypeError(f"no spectral basis for {type(m).__name__}")


def _quadrature_nodes(m: ManifoldSpec, order: int):
    """Nodes and weights integrating products of three basis functions exactly enough."""
    q = 4 * order + 16
    if isinstance(m, FlatTorus):
        L = m.sides[0]
        pts = (np.arange(q) * L / q)[:, None]
        return pts, np.full(q, L / q)
    if isinstance(m, Sphere):
        z, w = leggauss(q)
        r = m.radius
        pts = r * np.stack([np.sqrt(1 - z**2), np.zeros_like(z), z], axis=-1)
        return pts, 2 * np.pi * r**2 * w
    if isinstance(m, Interval):
        z, w = leggauss(q)
        L = m.length
        return (0.5 * L * (z + 1))[:, None], 0.5 * L * w
    raise TypeError(type(m).__name__)


def _galerkin(m, V, t, x, u0, order, a=0.0):
    B = spectral_basis(m, order)
    pts, w = _quadrature_nodes(m, order)
    phi = B.evaluate(pts)
    lam = B.eigenvalues
    if a:
        if not isinstance(m, FlatTorus):
            raise TypeError("magnetic references are defined on the circle")
        L = m.sides[0]
        k = np.arange(-order, order + 1)
        lam = 0.5 * (2 * np.pi * k / L + a) ** 2
    Vq = np.zeros(len(w)) if V is None else np.asarray(V(pts), dtype=float) * np.ones(len(w))
    H = np.diag(lam).astype(phi.dtype) + (phi.conj().T * (w * Vq)) @ phi
    c0 = phi.conj().T @ (w * np.asarray(u0(pts)) * np.ones(len(w)))
    ct = expm(-t * H) @ c0
    val = B.evaluate(np.asarray(x, dtype=float)[None, :]) @ ct
    val = complex(val[0])
    return val.real if abs(val.imag) < 1e-13 * max(1.0, abs(val)) else val


def fk_reference(m: ManifoldSpec, V, t: float, x, u0, order: int = 16, a: float = 0.0, check: bool = True):
    """``(e^{-t H} u0)(x)`` with ``H = 1/2 Delta + V`` by a Galerkin matrix exponential.

    ``a`` adds the constant connection ``i a d theta`` on the circle.  The
    value is recomputed with twice the modes; a change above ``1e-8`` raises a
    TruncationWarning.
    """
    val = _galerkin(m, V, t, x, u0, order, a)
    if check:
        val2 = _galerkin(m, V, t, x, u0, 2 * order, a)
        if abs(val2 - val) > 1e-8 * max(1.0, abs(val2)):
            warnings.warn(f"Galerkin doubling changed the value by {abs(val2 - val):.2e}", TruncationWarning, stacklevel=2)
    return val


def _crank_nicolson(V, t, u0, half_width, h, steps):
    z = np.arange(-half_width, half_width + h / 2, h)[1:-1]
    n = z.size
    dt = t / steps
    Vz = np.asarray(V(z[:, None]), dtype=float) * np.ones(n)
    # H = -1/2 d^2 + V with zero far-field values
    main = 1.0 / h**2 + Vz
    off = -0.5 / h**2 * np.ones(n - 1)
    ab = np.zeros((3, n))
    ab[0, 1:] = 0.5 * dt * off
    ab[1] = 1.0 + 0.5 * dt * main
    ab[2, :-1] = 0.5 * dt * off
    u = np.asarray(u0(z[:, None]), dtype=float) * np.ones(n)
    for _ in range(steps):
        rhs = (1.0 - 0.5 * dt * main) * u
        rhs[1:] -= 0.5 * dt * off * u[:-1]
        rhs[:-1] -= 0.5 * dt * off * u[1:]
        u = solve_banded((1, 1), ab, rhs)
    return z, u


def fk_reference_line(V, t: float, x: float, u0, half_width: float = 10.0, h: float = 0.01, steps: int = 2000):
    """``(e^{-t H} u0)(x)`` on the real line by Crank-Nicolson, Richardson-combined.

    Runs at ``(h, dt)`` and ``(h/2, dt/2)`` and extrapolates the second-order error.
    """
    z1, u1 = _crank_nicolson(V, t, u0, half_width, h, steps)
    z2, u2 = _crank_nicolson(V, t, u0, half_width, h / 2, 2 * steps)
    a = np.interp(x, z1, u1)
    b = np.interp(x, z2, u2)
    return (4 * b - a) / 3

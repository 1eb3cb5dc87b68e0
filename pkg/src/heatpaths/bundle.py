"""Path-ordered exponentials along piecewise geodesic paths.

``P`` solves ``nabla_s P = V(gamma(s)) P`` with ``P(0) = id`` in a trivialized
bundle.  With a connection one-form ``A`` the covariant derivative is
``d/ds + A(gamma')`` so the ODE reads ``P' = (V - A(gamma')) P``.  The magnetic
line bundle uses ``A = i omega``.  Feynman-Kac weights are ``P^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .pathspace import GAUSS_ORDER, integrate_along

__all__ = [
    "IntegratorStepError",
    "ScalarWeight",
    "MagneticWeight",
    "EndomorphismWeight",
    "TransportValue",
    "path_ordered_exponential",
    "magnetic_weight",
    "scalar_weight",
    "compose_transport",
    "identity_transport",
    "inverse_transport",
    "weight_from_preset",
]

RK4_STEPS = 16
STEP_TOL = 1e-10
MAX_REFINE = 4


class IntegratorStepError(RuntimeError):
    """Step halving could not bring the per-segment error below tolerance."""


def _zero(points):
    return np.zeros(np.shape(points)[:-1])


@dataclass(frozen=True)
class ScalarWeight:
    V: Callable = _zero
    rank = 1
    dtype = float


@dataclass(frozen=True)
class MagneticWeight:
    """Line bundle with connection ``i omega``; ``omega(points)`` returns covectors."""

    omega: Callable
    V: Callable = _zero
    rank = 1
    dtype = complex


@dataclass(frozen=True)
class EndomorphismWeight:
    """Symmetric ``k x k`` potential on a trivial rank-``k`` bundle.

    ``connection(points, velocity)`` returns the skew matrix ``A(gamma')`` of a
    metric connection; ``None`` means the product connection.
    """

    k: int
    V: Callable
    connection: Optional[Callable] = None
    dtype = float

    @property
    def rank(self) -> int:
        return self.k


@dataclass(frozen=True)
class TransportValue:
    value: np.ndarray
    kind: str

    @property
    def rank(self) -> int:
        return 1 if self.kind != "endomorphism" else self.value.shape[-1]

    def apply(self, v):
        if self.kind == "endomorphism":
            return np.einsum("...ij,...j->...i", self.value, v)
        return self.value * v


def _kind(w) -> str:
    if isinstance(w, ScalarWeight):
        return "scalar"
    if isinstance(w, MagneticWeight):
        return "magnetic"
    if isinstance(w, EndomorphismWeight):
        return "endomorphism"
    raise TypeError(f"unsupported weight {type(w).__name__}")


def _generator(path, w, fractions):
    """Generator matrices ``V - A(gamma')`` at local fractions, shape ``(..., N, q, k, k)``."""
    pts, vel = path.points_along(fractions)
    if isinstance(w, ScalarWeight):
        return np.asarray(w.V(pts), dtype=float)[..., None, None]
    if isinstance(w, MagneticWeight):
        om = np.sum(np.asarray(w.omega(pts)) * vel, axis=-1)
        return (np.asarray(w.V(pts)) - 1j * om)[..., None, None]
    G = np.asarray(w.V(pts), dtype=float)
    if w.connection is not None:
        G = G - np.asarray(w.connection(pts, vel))
    return G


def _rk4(G, h):
    """Integrate ``P' = G P`` from samples at half-step nodes; returns ``(..., N, k, k)``."""
    steps = (G.shape[-3] - 1) // 2
    k = G.shape[-1]
    P = np.broadcast_to(np.eye(k, dtype=G.dtype), G.shape[:-3] + (k, k)).copy()
    h = h[..., None, None]
    for i in range(steps):
        A0, Am, A1 = G[..., 2 * i, :, :], G[..., 2 * i + 1, :, :], G[..., 2 * i + 2, :, :]
        k1 = A0 @ P
        k2 = Am @ (P + 0.5 * h * k1)
        k3 = Am @ (P + 0.5 * h * k2)
        k4 = A1 @ (P + h * k3)
        P = P + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return P


def _segment_transports(path, w, steps: int, tol: float):
    inc = path.partition.increments
    G = _generator(path, w, np.linspace(0.0, 1.0, 4 * steps + 1))
    coarse = _rk4(G[..., ::2, :, :], inc / steps)
    for _ in range(MAX_REFINE + 1):
        fine = _rk4(G, inc / (2 * steps))
        scale = np.maximum(1.0, np.abs(fine).max(axis=(-2, -1)))
        err = np.abs(fine - coarse).max(axis=(-2, -1)) / scale
        if np.all(err <= tol):
            return fine
        steps *= 2
        coarse = fine
        G = _generator(path, w, np.linspace(0.0, 1.0, 4 * steps + 1))
    raise IntegratorStepError(f"per-segment RK4 error {err.max():.3e} exceeds {tol:.1e}")


def path_ordered_exponential(path, w, steps: int = RK4_STEPS, tol: float = STEP_TOL) -> TransportValue:
    """``P(t)`` along a (possibly batched) piecewise geodesic path."""
    kind = _kind(w)
    seg = _segment_transports(path, w, steps, tol)
    P = seg[..., 0, :, :]
    for j in range(1, seg.shape[-3]):
        P = seg[..., j, :, :] @ P
    if kind == "endomorphism":
        return TransportValue(P, kind)
    return TransportValue(P[..., 0, 0], kind)


def scalar_weight(path, V, quad_order: int = GAUSS_ORDER) -> np.ndarray:
    """``exp(-int V)`` by per-segment Gauss-Legendre quadrature."""
    return np.exp(-integrate_along(path, lambda p, _v: V(p), quad_order))


def magnetic_weight(path, omega, V=None, quad_order: int = GAUSS_ORDER) -> np.ndarray:
    """``exp(int (i omega(gamma') - V(gamma)))`` by per-segment quadrature."""

    def f(p, v):
        out = 1j * np.sum(np.asarray(omega(p)) * v, axis=-1)
        if V is not None:
            out = out - V(p)
        return out

    return np.exp(integrate_along(path, f, quad_order))


def identity_transport(kind: str = "scalar", k: int = 1) -> TransportValue:
    if kind == "endomorphism":
        return TransportValue(np.eye(k), kind)
    return TransportValue(np.array(1.0 + (0j if kind == "magnetic" else 0.0)), kind)


def compose_transport(a: TransportValue, b: TransportValue) -> TransportValue:
    """Transport along ``b`` followed by ``a``: ``compose(a, b) v = a(b v)``."""
    if a.kind != b.kind and "endomorphism" in (a.kind, b.kind):
        raise ValueError(f"cannot compose {a.kind} with {b.kind}")
    if a.kind == "endomorphism":
        if a.value.shape[-1] != b.value.shape[-1]:
            raise ValueError(f"rank mismatch: {a.value.shape[-1]} vs {b.value.shape[-1]}")
        return TransportValue(a.value @ b.value, a.kind)
    kind = "magnetic" if "magnetic" in (a.kind, b.kind) else "scalar"
    return TransportValue(a.value * b.value, kind)


def inverse_transport(a: TransportValue) -> TransportValue:
    if a.kind == "endomorphism":
        return TransportValue(np.linalg.inv(a.value), a.kind)
    return TransportValue(1.0 / a.value, a.kind)


def weight_from_preset(name: str, m, **params):
    """Named weights used by the CLI: constant, cosine, harmonic, magnetic-a, lichnerowicz."""
    name = name.lower()
    if name == "none":
        return ScalarWeight()
    if name == "constant":
        c = float(params.get("c", 1.0))
        return ScalarWeight(lambda p: np.full(np.shape(p)[:-1], c))
    if name == "cosine":
        amp = float(params.get("amplitude", 1.0))
        return ScalarWeight(lambda p: amp * np.cos(p[..., 0]))
    if name == "harmonic":
        w2 = float(params.get("omega", 1.0)) ** 2
        return ScalarWeight(lambda p: 0.5 * w2 * np.sum(p**2, axis=-1))
    if name == "magnetic-a":
        a = float(params.get("a", 0.3))
        gauge = float(params.get("gauge", 0.0))
        return MagneticWeight(lambda p: a + gauge * np.cos(p))
    if name == "lichnerowicz":
        return ScalarWeight(lambda p: m.scal(p) / 8.0)
    raise ValueError(f"unknown weight preset {name!r}")

"""Closed-form Riemannian geometry for the manifold catalog.

Every manifold works on numpy arrays of points with a trailing coordinate
axis, so all maps broadcast over arbitrary leading batch dimensions.  Sphere
points are embedding coordinates in R^3, torus points are canonical
representatives in ``[0, L_i)`` and interval points are ``(..., 1)`` arrays.

Curvature convention: ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z
- nabla_[X,Y] Z``.  With it the Jacobi endomorphism ``w -> R(v, w)v`` is
negative semi-definite on the round sphere, and the action Hessian along a
unit-sphere geodesic of speed ``d`` has eigenvalues ``(k pi)^2 - d^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "CutLocusError",
    "ManifoldSpec",
    "Euclidean",
    "FlatTorus",
    "Sphere",
    "Interval",
    "GeodesicSegment",
    "CurvatureData",
    "fold_interval",
    "manifold_from_config",
    "manifold_label",
]

# Relative distance to the cut locus below which minimizers count as non-unique.
CUT_TOL = 1e-9


class CutLocusError(ValueError):
    """The minimizing geodesic between two points is not unique."""


class CurvatureData(NamedTuple):
    scal: np.ndarray
    ric_vv: np.ndarray
    jacobi_endo: np.ndarray


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing axis of length {dim}, got shape {x.shape}")
    return x


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def fold_interval(length: float, s):
    """Fold real numbers onto ``[0, length]`` by reflections at 0 and ``length``."""
    r = np.mod(np.asarray(s, dtype=float), 2.0 * length)
    return np.where(r > length, 2.0 * length - r, r)


class ManifoldSpec:
    """Base class of the catalog manifolds.

    Subclasses are frozen dataclasses and therefore immutable and hashable.
    """

    kind: str = ""
    flat: bool = True

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def ambient_dim(self) -> int:
        return self.dim

    def volume(self) -> float:
        raise NotImplementedError

    def injectivity_radius(self, x=None) -> float:
        raise NotImplementedError

    def canonical(self, x) -> np.ndarray:
        return _as_points(x, self.ambient_dim)

    def exp_map(self, x, v) -> np.ndarray:
        raise NotImplementedError

    def log_map(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def geodesic(self, x, u, s):
        """Point and velocity at time ``s`` of the geodesic with initial velocity ``u``."""
        x = _as_points(x, self.ambient_dim)
        u = _as_points(u, self.ambient_dim)
        s = np.asarray(s, dtype=float)[..., None]
        return self.exp_map(x, s * u), np.broadcast_to(u, np.broadcast_shapes(u.shape, s.shape)).copy()

    def parallel_transport(self, seg: "GeodesicSegment", v) -> np.ndarray:
        return np.array(_as_points(v, self.ambient_dim), copy=True)

    def exp_jacobian(self, x, y) -> np.ndarray:
        self.log_map(x, y)
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.ones(shape)

    def curvature_data(self, x, v) -> CurvatureData:
        v = _as_points(v, self.ambient_dim)
        shape = v.shape[:-1]
        zero = np.zeros(shape)
        return CurvatureData(zero, zero.copy(), np.zeros(shape + (self.ambient_dim,) * 2))

    def scal(self, x) -> np.ndarray:
        return np.zeros(_as_points(x, self.ambient_dim).shape[:-1])

    def tangent_frame(self, x) -> np.ndarray:
        """Orthonormal basis of ``T_x M`` as rows, shape ``(..., dim, ambient_dim)``."""
        x = _as_points(x, self.ambient_dim)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()


@dataclass(frozen=True)
class Euclidean(ManifoldSpec):
    n: int = 1
    kind = "euclidean"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.n

    def volume(self) -> float:
        return math.inf

    def injectivity_radius(self, x=None) -> float:
        return math.inf

    def exp_map(self, x, v):
        return _as_points(x, self.n) + _as_points(v, self.n)

    def log_map(self, x, y):
        return _as_points(y, self.n) - _as_points(x, self.n)

    def distance(self, x, y):
        return np.linalg.norm(self.log_map(x, y), axis=-1)


@dataclass(frozen=True)
class FlatTorus(ManifoldSpec):
    n: int = 1
    sides: tuple = (1.0,)
    kind = "torus"

    def __post_init__(self):
        sides = tuple(float(s) for s in np.atleast_1d(self.sides))
        object.__setattr__(self, "sides", sides)
        if self.n < 1 or len(sides) != self.n:
            raise ValueError("torus needs one side length per dimension")
        if min(sides) <= 0:
            raise ValueError("torus side lengths must be positive")

    @property
    def dim(self) -> int:
        return self.n

    @property
    def _L(self) -> np.ndarray:
        return np.asarray(self.sides)

    def volume(self) -> float:
        return float(np.prod(self.sides))

    def injectivity_radius(self, x=None) -> float:
        return min(self.sides) / 2.0

    def canonical(self, x):
        x = _as_points(x, self.n)
        r = np.mod(x, self._L)
        return np.where(r >= self._L, 0.0, r)

    def exp_map(self, x, v):
        return self.canonical(_as_points(x, self.n) + _as_points(v, self.n))

    def _raw_log(self, x, y):
        d = _as_points(y, self.n) - _as_points(x, self.n)
        return d - self._L * np.round(d / self._L)

    def log_map(self, x, y):
        d = self._raw_log(x, y)
        if np.any(np.abs(np.abs(d) - self._L / 2) <= CUT_TOL * self._L):
            raise CutLocusError("points are half a period apart: minimizer not unique")
        return d

    def distance(self, x, y):
        return np.linalg.norm(self._raw_log(x, y), axis=-1)


@dataclass(frozen=True)
class Sphere(ManifoldSpec):
    """Round 2-sphere of the given radius, embedded in R^3."""

    radius: float = 1.0
    kind = "sphere"
    flat = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return 2

    @property
    def ambient_dim(self) -> int:
        return 3

    def volume(self) -> float:
        return 4.0 * math.pi * self.radius**2

    def injectivity_radius(self, x=None) -> float:
        return math.pi * self.radius

    def canonical(self, x):
        x = _as_points(x, 3)
        return self.radius * x / np.linalg.norm(x, axis=-1, keepdims=True)

    def _angle(self, x, y):
        x = _as_points(x, 3)
        y = _as_points(y, 3)
        r2 = self.radius**2
        c = _dot(x, y) / r2
        s = np.linalg.norm(np.cross(x, y), axis=-1) / r2
        return np.arctan2(s, c), c

    def exp_map(self, x, v):
        x = _as_points(x, 3)
        v = _as_points(v, 3)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        th = nv / self.radius
        # sin(th)/th stays finite at th = 0
        y = np.cos(th) * x + np.sinc(th / np.pi) * v
        return self.canonical(y)

    def log_map(self, x, y):
        x = _as_points(x, 3)
        y = _as_points(y, 3)
        th, c = self._angle(x, y)
        if np.any(math.pi - th <= CUT_TOL * math.pi):
            raise CutLocusError("antipodal points: minimizing geodesic not unique")
        w = y - c[..., None] * x
        return w / np.sinc(th / np.pi)[..., None]

    def distance(self, x, y):
        return self.radius * self._angle(x, y)[0]

    def geodesic(self, x, u, s):
        x = _as_points(x, 3)
        u = _as_points(u, 3)
        s = np.asarray(s, dtype=float)[..., None]
        speed = np.linalg.norm(u, axis=-1, keepdims=True)
        safe = np.where(speed > 0, speed, 1.0)
        uhat = u / safe
        th = s * speed / self.radius
        point = np.cos(th) * x + self.radius * np.sin(th) * uhat
        vel = speed * (np.cos(th) * uhat - np.sin(th) * x / self.radius)
        return self.canonical(point), vel

    def parallel_transport(self, seg, v):
        v = _as_points(v, 3)
        x = _as_points(seg.start, 3)
        u = _as_points(seg.initial_velocity, 3)
        speed = np.linalg.norm(u, axis=-1, keepdims=True)
        uhat = u / np.where(speed > 0, speed, 1.0)
        th = seg.duration * speed / self.radius
        a = _dot(v, uhat)[..., None]
        return v - a * uhat + a * (np.cos(th) * uhat - np.sin(th) * x / self.radius)

    def exp_jacobian(self, x, y):
        self.log_map(x, y)
        th = self._angle(x, y)[0]
        return np.sinc(th / np.pi)

    def scal(self, x):
        return np.full(_as_points(x, 3).shape[:-1], 2.0 / self.radius**2)

    def curvature_data(self, x, v):
        x = _as_points(x, 3)
        v = _as_points(v, 3)
        k = 1.0 / self.radius**2
        v2 = _dot(v, v)
        shape = np.broadcast_shapes(x.shape, v.shape)
        proj = np.eye(3) - x[..., :, None] * x[..., None, :] / self.radius**2
        endo = -k * (v2[..., None, None] * proj - v[..., :, None] * v[..., None, :])
        scal = np.broadcast_to(2.0 * k, shape[:-1]).copy()
        return CurvatureData(scal, k * v2, endo)

    def tangent_frame(self, x):
        x = _as_points(x, 3)
        p = x / np.linalg.norm(x, axis=-1, keepdims=True)
        a = np.where(np.abs(p[..., 2:3]) < 0.9, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
        e1 = a - _dot(a, p)[..., None] * p
        e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
        e2 = np.cross(p, e1)
        return np.stack([e1, e2], axis=-2)


@dataclass(frozen=True)
class Interval(ManifoldSpec):
    """Closed interval ``[0, length]`` with a Dirichlet or Neumann boundary."""

    length: float = 1.0
    bc: str = "dirichlet"
    kind = "interval"

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("length must be positive")
        bc = self.bc.lower()
        if bc not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        object.__setattr__(self, "bc", bc)

    @property
    def dim(self) -> int:
        return 1

    def volume(self) -> float:
        return self.length

    def injectivity_radius(self, x=None) -> float:
        if x is None:
            return self.length / 2.0
        x = float(np.asarray(x).reshape(-1)[0])
        return min(x, self.length - x)

    def canonical(self, x):
        return fold_interval(self.length, _as_points(x, 1))

    def exp_map(self, x, v):
        # reflected geodesic flow
        return fold_interval(self.length, _as_points(x, 1) + _as_points(v, 1))

    def log_map(self, x, y):
        return _as_points(y, 1) - _as_points(x, 1)

    def distance(self, x, y):
        return np.abs(self.log_map(x, y))[..., 0]

    def geodesic(self, x, u, s):
        # straight segment; callers fold when it leaves the interval
        x = _as_points(x, 1)
        u = _as_points(u, 1)
        s = np.asarray(s, dtype=float)[..., None]
        return x + s * u, np.broadcast_to(u, np.broadcast_shapes(u.shape, s.shape)).copy()


@dataclass(frozen=True)
class GeodesicSegment:
    start: np.ndarray
    end: np.ndarray
    duration: float
    initial_velocity: np.ndarray

    @classmethod
    def between(cls, m: ManifoldSpec, x, y, duration: float) -> "GeodesicSegment":
        if not duration > 0:
            raise ValueError("segment duration must be positive")
        u = m.log_map(x, y) / duration
        return cls(m.canonical(x), m.canonical(y), float(duration), u)

    def check(self, m: ManifoldSpec, tol: float = 1e-10) -> bool:
        end = m.exp_map(self.start, self.duration * self.initial_velocity)
        return bool(np.all(m.distance(end, self.end) <= tol))


def manifold_from_config(kind: str, **params) -> ManifoldSpec:
    """Build a catalog manifold from a kind string and numeric parameters."""
    kind = kind.lower().replace("_", "-")
    if kind in ("euclidean", "r", "rn"):
        return Euclidean(int(params.get("dim", 1)))
    if kind in ("torus", "flat-torus", "circle"):
        if kind == "circle":
            return FlatTorus(1, (float(params.get("circumference", 2 * math.pi)),))
        sides = params.get("sides", [1.0])
        sides = tuple(float(s) for s in np.atleast_1d(sides))
        return FlatTorus(int(params.get("dim", len(sides))), sides)
    if kind == "sphere":
        return Sphere(float(params.get("radius", 1.0)))
    if kind == "interval":
        return Interval(float(params.get("length", math.pi)), str(params.get("bc", "dirichlet")))
    raise ValueError(f"unknown manifold kind {kind!r}")


def manifold_label(m: ManifoldSpec) -> str:
    """Short stable label used in CSV rows."""
    if isinstance(m, Euclidean):
        return f"euclidean{m.n}"
    if isinstance(m, FlatTorus):
        return "torus(" + ";".join(f"{s:g}" for s in m.sides) + ")"
    if isinstance(m, Sphere):
        return f"sphere({m.radius:g})"
    if isinstance(m, Interval):
        return f"interval({m.length:g};{m.bc})"
    return type(m).__name__.lower()

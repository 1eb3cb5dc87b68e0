"""Heat kernels from piecewise geodesic path integrals on a small manifold catalog."""

from .geom import CutLocusError, Euclidean, FlatTorus, Interval, Sphere, manifold_from_config
from .pathspace import Partition, PiecewiseGeodesicPath, make_partition

__version__ = "0.1.0"

__all__ = [
    "CutLocusError",
    "Euclidean",
    "FlatTorus",
    "Interval",
    "Sphere",
    "manifold_from_config",
    "Partition",
    "PiecewiseGeodesicPath",
    "make_partition",
]

"""Parallel-friendly 2D triangular mesh generation from signed distance fields."""

import os

# numba fixes its thread pool size at import time; reserve room so callers can
# request more threads than cores (results never depend on the count).
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

from .exceptions import (  # noqa: E402
    DegenerateCell,
    DegenerateDomain,
    DegenerateTriangle,
    EmptyContour,
    EmptyList,
    EmptyMedialAxis,
    EmptyTriangulation,
    MeshingError,
    NewtonDiverged,
    NoConvergence,
    NotBoundaryCell,
    ParseError,
    ProjectionStarvation,
    ValidationError,
    ZeroDensityCell,
)
from .sdf import (  # noqa: E402
    Circle,
    Combined,
    Contour,
    Rectangle,
    UserFunction,
    difference,
    intersection,
    union,
)
from .config import Config, parse_config  # noqa: E402
from .pipeline import MeshResult, run_pipeline  # noqa: E402
from .estimator import TriangularMesher  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Circle",
    "Combined",
    "Config",
    "Contour",
    "MeshResult",
    "Rectangle",
    "TriangularMesher",
    "UserFunction",
    "difference",
    "intersection",
    "parse_config",
    "run_pipeline",
    "union",
    "DegenerateCell",
    "DegenerateDomain",
    "DegenerateTriangle",
    "EmptyContour",
    "EmptyList",
    "EmptyMedialAxis",
    "EmptyTriangulation",
    "MeshingError",
    "NewtonDiverged",
    "NoConvergence",
    "NotBoundaryCell",
    "ParseError",
    "ProjectionStarvation",
    "ValidationError",
    "ZeroDensityCell",
]

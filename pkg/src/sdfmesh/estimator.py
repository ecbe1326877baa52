"""scikit-learn style wrapper around :func:`run_pipeline`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import Config, validate_config
from .exceptions import ValidationError
from .pipeline import run_pipeline
from .sdf import Shape


def check_points(points, name="points"):
    """Return a finite float64 ``(n, 2)`` array or raise ValidationError."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_triangles(triangles, n_points):
    tris = np.asarray(triangles)
    if tris.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    if tris.ndim != 2 or tris.shape[1] != 3 or not np.issubdtype(tris.dtype, np.integer):
        raise ValidationError("triangles must be an integer array of shape (m, 3)")
    if tris.min() < 0 or tris.max() >= n_points:
        raise ValidationError("triangle index out of range")
    return tris.astype(np.int64)


class TriangularMesher(BaseEstimator):
    """Mesh a 2D shape.

    Constructor arguments mirror the most used :class:`Config` fields;
    ``params`` carries any other config field by name.

    >>> m = TriangularMesher(n_total=500, shape="rect 0 1 0 1").fit()
    >>> m.triangles_.shape[1]
    3
    """

    def __init__(self, n_total=1000, shape="circle 0.5 0.5 0.4", sizing="constant", K=0.005,
                 algorithm="hybrid", domain=(0.0, 1.0, 0.0, 1.0), seed=0, threads=1,
                 max_iter=2000, params=None):
        self.n_total = n_total
        self.shape = shape
        self.sizing = sizing
        self.K = K
        self.algorithm = algorithm
        self.domain = domain
        self.seed = seed
        self.threads = threads
        self.max_iter = max_iter
        self.params = params

    def make_config(self) -> Config:
        shape = self.shape if isinstance(self.shape, str) else "rect 0 1 0 1"
        kw = dict(n_total=self.n_total, shape=shape, sizing=self.sizing, K=self.K,
                  algorithm=self.algorithm, domain=tuple(self.domain), seed=self.seed,
                  threads=self.threads, max_iter=self.max_iter)
        kw.update(self.params or {})
        try:
            cfg = Config(**kw)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None
        return validate_config(cfg)

    def fit(self, X=None, y=None, sizing_function=None):
        """Run the mesher. ``X`` may be a :class:`Shape` that overrides ``shape``."""
        cfg = self.make_config()
        shape = X if isinstance(X, Shape) else None
        if shape is None and not isinstance(self.shape, str):
            if not isinstance(self.shape, Shape):
                raise ValidationError("shape must be a shape expression or a Shape instance")
            shape = self.shape
        result = run_pipeline(cfg, shape=shape, sizing=sizing_function)
        self.result_ = result
        self.points_ = result.points
        self.categories_ = result.category
        self.triangles_ = result.triangles
        self.alpha_ = result.alpha
        self.beta_ = result.beta
        self.stats_ = result.summary()
        self.history_ = result.history
        self.n_iter_ = result.n_iter
        self.termination_reason_ = result.termination_reason
        return self

    def quality(self):
        check_is_fitted(self, "triangles_")
        return self.stats_

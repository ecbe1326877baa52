"""Point initialization by error diffusion, point insertion and triangle quality."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateTriangle, EmptyList
from .grid import BOUNDARY, INNER, OUTER, rescale_on_addition
from .treatment import newton_project_batch

logger = logging.getLogger(__name__)

MAX_RESAMPLE_ROUNDS = 50


@dataclass
class MeshState:
    points: np.ndarray
    category: np.ndarray
    n_total: int
    n_init: int
    frozen: np.ndarray | None = None
    prev_move: np.ndarray | None = None
    snapshot: np.ndarray | None = None
    triangles: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.int64))
    history: list = field(default_factory=list)
    iteration: int = 0

    def __post_init__(self):
        n = len(self.points)
        if self.frozen is None:
            self.frozen = np.zeros(n, dtype=bool)
        if self.prev_move is None:
            self.prev_move = np.full(n, np.inf)
        if self.snapshot is None:
            self.snapshot = self.points.copy()

    @property
    def n_current(self):
        return len(self.points)


# ------------------------------------------------------------- quality ------

def half_mean(values) -> float:
    """Power mean with exponent 1/2: ``(mean(sqrt(x)))**2``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyList("half_mean of an empty list")
    return float(np.mean(np.sqrt(v)) ** 2)


def triangle_metrics(a, b, c):
    """Vectorized per-triangle measures from vertex arrays ``(m, 2)``.

    Returns a dict with aspect ratio ``alpha``, edge ratio ``beta``,
    ``r_circum``, ``r_in``, ``l_max``, ``l_min`` and ``area``.
    """
    la = np.hypot(*(b - c).T)
    lb = np.hypot(*(c - a).T)
    lc = np.hypot(*(a - b).T)
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                        - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    s = 0.5 * (la + lb + lc)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_circum = la * lb * lc / (4.0 * area)
        r_in = area / s
        alpha = r_circum / (2.0 * r_in)
        l_max = np.maximum(np.maximum(la, lb), lc)
        l_min = np.minimum(np.minimum(la, lb), lc)
        beta = l_max / l_min
    return {"alpha": alpha, "beta": beta, "r_circum": r_circum, "r_in": r_in,
            "l_max": l_max, "l_min": l_min, "area": area}


def triangle_quality(t):
    """Aspect ratio and edge ratio of one triangle given as three vertices."""
    t = np.asarray(t, dtype=float).reshape(3, 2)
    m = triangle_metrics(t[0:1], t[1:2], t[2:3])
    if not m["area"][0] > 1e-300:
        raise DegenerateTriangle("triangle has zero area")
    return float(m["alpha"][0]), float(m["beta"][0])


def mesh_quality(points, tris):
    """``alpha`` and ``beta`` arrays for a triangle list."""
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    m = triangle_metrics(points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]])
    return m["alpha"], m["beta"]


def quality_stats(points, tris):
    """Per-iteration statistics: half-mean alpha, half-mean beta, max alpha."""
    alpha, beta = mesh_quality(points, tris)
    if len(alpha) == 0:
        raise EmptyList("no triangles to evaluate")
    return half_mean(alpha), half_mean(beta), float(np.max(alpha))


def relative_change(new, old):
    return abs(new - old) / abs(old)


# ----------------------------------------------------------- dithering ------

def dither_counts(expected, valid, nx, ny, target):
    """Integer counts per cell by serpentine-free Floyd-Steinberg error diffusion.

    Scans rows from top to bottom and cells left to right. Each cell rounds
    its expected count plus incoming residual, then spreads the residual in
    equal shares over the valid cells among right, lower-left, lower and
    lower-right. Finally counts are repaired so that they sum to ``target``.
    """
    e = np.where(valid, np.asarray(expected, dtype=float), 0.0).reshape(ny, nx).copy()
    valid2 = np.asarray(valid, dtype=bool).reshape(ny, nx)
    counts = np.zeros((ny, nx), dtype=np.int64)
    for iy in range(ny - 1, -1, -1):
        for ix in range(nx):
            if not valid2[iy, ix]:
                continue
            v = e[iy, ix]
            k = max(int(math.floor(v + 0.5)), 0)
            counts[iy, ix] = k
            residual = v - k
            targets = []
            if ix + 1 < nx and valid2[iy, ix + 1]:
                targets.append((iy, ix + 1))
            if iy - 1 >= 0:
                for jx in (ix - 1, ix, ix + 1):
                    if 0 <= jx < nx and valid2[iy - 1, jx]:
                        targets.append((iy - 1, jx))
            if targets and residual != 0.0:
                w = residual / len(targets)
                for t in targets:
                    e[t] += w
    counts = counts.ravel()
    return repair_counts(counts, expected, valid, target)


def repair_counts(counts, density, valid, target):
    """Add to the densest or remove from the sparsest occupied cells until the sum matches."""
    counts = counts.copy()
    diff = int(target - counts.sum())
    if diff == 0:
        return counts
    cells = np.flatnonzero(valid)
    order = cells[np.argsort(-np.asarray(density)[cells], kind="stable")]
    if diff > 0:
        k = 0
        while diff > 0:
            counts[order[k % len(order)]] += 1
            diff -= 1
            k += 1
    else:
        for c in order[::-1]:
            while diff < 0 and counts[c] > 0:
                counts[c] -= 1
                diff += 1
            if diff == 0:
                break
    return counts


def _uniform_in_cells(grid, cells, rng):
    x0, _, y0, _ = grid.cell_bounds(cells)
    u = rng.random((len(cells), 2))
    return np.column_stack([x0 + u[:, 0] * grid.dx, y0 + u[:, 1] * grid.dy])


def init_points(grid, rho_norm, n_init, shape, rng, damping=1.0, newton_steps=10):
    """Place ``n_init`` points proportionally to ``rho_norm`` over valid cells.

    Points in selected boundary cells that fall outside the shape by more than
    the local tolerance are projected onto the boundary; failed projections are
    redrawn in the same cell.
    """
    valid = grid.valid
    expected = np.asarray(rho_norm, dtype=float) * n_init
    counts = dither_counts(expected, valid, grid.nx, grid.ny, n_init)
    cells = np.repeat(np.arange(grid.n_cells), counts)
    pts = _uniform_in_cells(grid, cells, rng)
    pending = np.flatnonzero(grid.category[cells] == BOUNDARY)
    for _ in range(MAX_RESAMPLE_ROUNDS):
        if len(pending) == 0:
            break
        cat = grid.classify(pts[pending])
        outside = pending[cat == OUTER]
        if len(outside) == 0:
            break
        proj, ok = newton_project_batch(pts[outside], shape, grid.geps[cells[outside]],
                                        grid.deps[cells[outside]], damping, newton_steps)
        pts[outside[ok]] = proj[ok]
        # projected points must classify as usable; the rest are redrawn
        recheck = outside[ok]
        bad = recheck[grid.classify(pts[recheck]) == OUTER] if len(recheck) else recheck
        redo = np.concatenate([outside[~ok], bad])
        if len(redo):
            pts[redo] = _uniform_in_cells(grid, cells[redo], rng)
        pending = np.sort(redo)
    else:
        raise RuntimeError("could not place initial boundary points")
    category = grid.classify(pts)
    if np.any(category == OUTER):
        raise RuntimeError("initial point left in an unusable location")
    return pts, category


def expected_n_init(n_total, fac_init):
    return max(3, min(n_total, int(round(fac_init * n_total))))


# ------------------------------------------------------------ addition ------

def points_to_add(n_current, n_total, fac_add):
    return int(min(math.floor(fac_add * n_current), n_total - n_current))


def should_add_points(history, n_current, n_total, t_add):
    if n_current >= n_total or len(history) < 2:
        return False
    (a1, b1, _), (a0, b0, _) = history[-1], history[-2]
    return relative_change(a1, a0) < t_add and relative_change(b1, b0) < t_add


def addition_sites(points, tris, grid, n_add):
    """Centroids of the ``n_add`` triangles with the largest circumradius relative to ``h``."""
    a, b, c = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    m = triangle_metrics(a, b, c)
    cen = (a + b + c) / 3.0
    cell = grid.cell_index(cen)
    h = np.where(cell >= 0, grid.h[np.maximum(cell, 0)], np.nan)
    score = m["r_circum"] / h
    score = np.where(np.isfinite(score), score, -np.inf)
    order = np.argsort(-score, kind="stable")[:n_add]
    order = order[np.isfinite(score[order])]
    return cen[order]


def maybe_add_points(state: MeshState, grid, fac_add=0.6, t_add=0.002):
    """Insert points at the worst-sized triangles once quality stalls. Returns True if added."""
    if not should_add_points(state.history, state.n_current, state.n_total, t_add):
        return False
    n_old = state.n_current
    n_add = points_to_add(n_old, state.n_total, fac_add)
    if n_add <= 0 or len(state.triangles) == 0:
        return False
    sites = addition_sites(state.points, state.triangles, grid, n_add)
    cat = grid.classify(sites)
    sites = sites[cat != OUTER]
    cat = cat[cat != OUTER]
    if len(sites) == 0:
        return False
    k = len(sites)
    state.points = np.vstack([state.points, sites])
    state.category = np.concatenate([state.category, cat])
    state.frozen = np.concatenate([state.frozen, np.zeros(k, dtype=bool)])
    state.prev_move = np.concatenate([state.prev_move, np.full(k, np.inf)])
    state.snapshot = state.points.copy()
    rescale_on_addition(grid, n_old, state.n_current)
    logger.info("added %d points (%d -> %d)", k, n_old, state.n_current)
    return True


__all__ = [
    "MeshState",
    "half_mean",
    "triangle_quality",
    "triangle_metrics",
    "mesh_quality",
    "quality_stats",
    "dither_counts",
    "init_points",
    "maybe_add_points",
    "INNER",
    "BOUNDARY",
]

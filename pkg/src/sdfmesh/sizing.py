"""Automatic sizing field from boundary samples, medial axis and local feature size.

The sizing value at ``x`` is ``min_s K*|s - x| + lfs(s)`` over boundary samples
``s``, where ``lfs(s)`` is the distance from ``s`` to the approximate medial
axis. Density is ``1 / sizing**2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from scipy.spatial import cKDTree

from .exceptions import EmptyMedialAxis, ProjectionStarvation
from .grid import BOUNDARY, MACHINE_EPS, OUTER
from .sdf import Contour
from .treatment import newton_project_batch
from .voronoi import compute_diagram

logger = logging.getLogger(__name__)


@dataclass
class SizingModel:
    mu: np.ndarray                 # per cell, NaN where undefined
    rho: np.ndarray                # per cell, 1 / mu**2
    K: float = 0.0
    d_s: float = float("nan")
    S: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    M: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    lfs: np.ndarray = field(default_factory=lambda: np.empty(0))

    def dump(self, path_prefix):
        """Write S, M, lfs and the per-cell fields as plain-text tables."""
        np.savetxt(f"{path_prefix}_boundary.txt", np.column_stack([self.S, self.lfs]) if len(self.S) else np.empty((0, 3)),
                   header="x y lfs")
        np.savetxt(f"{path_prefix}_medial.txt", self.M, header="x y")
        np.savetxt(f"{path_prefix}_cells.txt", np.column_stack([self.mu, self.rho]), header="mu rho")


def _subdivide_segments(seg, d_s):
    """Segment start points plus evenly spaced interior points with spacing below ``d_s``."""
    out = []
    for x1, y1, x2, y2 in seg:
        length = math.hypot(x2 - x1, y2 - y1)
        k = int(math.floor(length / d_s)) + 1 if length >= d_s else 1
        t = np.arange(k) / k
        out.append(np.column_stack([x1 + t * (x2 - x1), y1 + t * (y2 - y1)]))
    return np.vstack(out) if out else np.empty((0, 2))


def generate_boundary_points(shape, grid, fac_s=0.5, n_grid=5, rng=None, fac_geps=0.01):
    """Dense boundary samples; all returned points satisfy ``|sdf| <= ghat``."""
    d_s = fac_s * min(grid.dx, grid.dy)
    s = min(grid.dx, grid.dy)
    ghat = fac_geps * s
    dhat = math.sqrt(MACHINE_EPS) * s
    if isinstance(shape, Contour):
        pts = _subdivide_segments(shape.segments, d_s)
    else:
        rng = np.random.default_rng() if rng is None else rng
        cells = np.repeat(np.flatnonzero(grid.category == BOUNDARY), n_grid)
        x0, _, y0, _ = grid.cell_bounds(cells)
        u = rng.random((len(cells), 2))
        pts = np.column_stack([x0 + u[:, 0] * grid.dx, y0 + u[:, 1] * grid.dy])
        d = shape.evaluate(pts)
        far = np.abs(d) > ghat
        if np.any(far):
            proj, _ = newton_project_batch(pts[far], shape, ghat, dhat)
            pts[far] = proj
        # polylines known to lie on the boundary (rectangle edges, contour children)
        seg = shape.contour_segments()
        if len(seg):
            pts = np.vstack([pts, _subdivide_segments(seg, d_s)])
    ax, bx, ay, by = grid.domain
    inside_box = (pts[:, 0] >= ax) & (pts[:, 0] <= bx) & (pts[:, 1] >= ay) & (pts[:, 1] <= by)
    pts = pts[inside_box & np.isfinite(pts).all(axis=1)]
    if len(pts):
        pts = pts[np.abs(shape.evaluate(np.ascontiguousarray(pts))) <= ghat]
    if len(pts) < 3:
        raise ProjectionStarvation(f"only {len(pts)} boundary points survived projection")
    return pts


def trim_boundary_points(pts, shape, d_s, ghat):
    """Merge boundary samples closer than ``d_s`` that lie on the same boundary feature.

    A neighbor counts only if the midpoint with it is itself on the boundary
    (``|sdf(mid)| <= ghat``), which keeps samples on opposite sides of thin
    features apart. Each pass walks points in index order; a merged pair
    becomes its midpoint and both are frozen until the next pass.
    """
    pts = np.array(pts, dtype=float)
    while True:
        tree = cKDTree(pts)
        pairs = tree.query_pairs(d_s, output_type="ndarray")
        if len(pairs) == 0:
            return pts
        dist = np.hypot(*(pts[pairs[:, 0]] - pts[pairs[:, 1]]).T)
        pairs = pairs[dist < d_s]
        mid = 0.5 * (pts[pairs[:, 0]] + pts[pairs[:, 1]])
        ok = np.abs(shape.evaluate(mid)) <= ghat
        pairs = pairs[ok]
        if len(pairs) == 0:
            return pts
        dist = np.hypot(*(pts[pairs[:, 0]] - pts[pairs[:, 1]]).T)
        # per point, candidate partners sorted by (distance, index)
        both = np.concatenate([pairs, pairs[:, ::-1]])
        dd = np.concatenate([dist, dist])
        order = np.lexsort((both[:, 1], dd, both[:, 0]))
        both = both[order]
        starts = np.searchsorted(both[:, 0], np.arange(len(pts) + 1))
        deleted = np.zeros(len(pts), dtype=bool)
        touched = np.zeros(len(pts), dtype=bool)
        new_pts = pts.copy()
        merged = 0
        for i in np.unique(both[:, 0]):
            if deleted[i] or touched[i]:
                continue
            for k in range(starts[i], starts[i + 1]):
                j = both[k, 1]
                if deleted[j]:
                    continue
                if touched[j]:
                    # nearest valid neighbor is busy this pass; revisit next pass
                    break
                new_pts[i] = 0.5 * (pts[i] + pts[j])
                deleted[j] = True
                touched[i] = True
                merged += 1
                break
        pts = new_pts[~deleted]
        if merged == 0:
            return pts


def medial_axis_points(S, domain):
    """Approximate medial axis: the farthest Voronoi vertex per sample, plus the farthest on the opposite side.

    The diagram is computed on the domain box grown by its own size in every
    direction so that cells are effectively unbounded; vertices outside the
    original domain are discarded.
    """
    S = np.asarray(S, dtype=float)
    ax, bx, ay, by = domain
    lx, ly = bx - ax, by - ay
    big = (ax - lx, bx + lx, ay - ly, by + ly)
    span = 4.0 * math.hypot(lx, ly)
    diagram = compute_diagram(S, span, big)
    out = _medial_kernel(S, diagram.nv, diagram.vx, diagram.vy)
    keep = np.isfinite(out[:, 0])
    m = out[keep]
    inside = (m[:, 0] >= ax) & (m[:, 0] <= bx) & (m[:, 1] >= ay) & (m[:, 1] <= by)
    return m[inside]


@njit(parallel=True, cache=True)
def _medial_kernel(S, nv, vx, vy):
    n = S.shape[0]
    out = np.full((2 * n, 2), np.nan)
    for i in prange(n):
        sx = S[i, 0]
        sy = S[i, 1]
        best = -1.0
        kb = -1
        for k in range(nv[i]):
            d2 = (vx[i, k] - sx) ** 2 + (vy[i, k] - sy) ** 2
            if d2 > best:
                best = d2
                kb = k
        if kb < 0:
            continue
        ux = vx[i, kb] - sx
        uy = vy[i, kb] - sy
        out[2 * i, 0] = vx[i, kb]
        out[2 * i, 1] = vy[i, kb]
        best2 = -1.0
        k2 = -1
        for k in range(nv[i]):
            wx = vx[i, k] - sx
            wy = vy[i, k] - sy
            if wx * ux + wy * uy < 0.0:
                d2 = wx * wx + wy * wy
                if d2 > best2:
                    best2 = d2
                    k2 = k
        if k2 >= 0:
            out[2 * i + 1, 0] = vx[i, k2]
            out[2 * i + 1, 1] = vy[i, k2]
    return out


def trim_medial_points(M, d_s, n_nei_thres=3, fac_nei=2):
    """Drop medial points with fewer than ``n_nei_thres`` others within ``fac_nei*n_nei_thres*d_s``."""
    M = np.asarray(M, dtype=float).reshape(-1, 2)
    if len(M) == 0:
        return M
    r = fac_nei * n_nei_thres * d_s
    counts = cKDTree(M).query_ball_point(M, r, return_length=True) - 1
    return M[counts >= n_nei_thres]


def compute_lfs(S, M, diag=None):
    """Distance from each boundary sample to the nearest medial point."""
    M = np.asarray(M, dtype=float).reshape(-1, 2)
    if len(M) == 0:
        raise EmptyMedialAxis("no medial-axis points left after trimming")
    lfs, _ = cKDTree(M).query(np.asarray(S, dtype=float))
    if diag is not None:
        small = lfs < 1e-12 * diag
        if np.any(small):
            k = int(np.flatnonzero(small)[0])
            raise ValueError(f"local feature size vanishes at boundary point {S[k].tolist()}")
    return lfs


@njit(parallel=True, cache=True)
def _sizing_kernel(mids, S, lfs, K, out):
    for c in prange(mids.shape[0]):
        mx = mids[c, 0]
        my = mids[c, 1]
        best = np.inf
        for s in range(S.shape[0]):
            v = K * math.sqrt((S[s, 0] - mx) ** 2 + (S[s, 1] - my) ** 2) + lfs[s]
            if v < best:
                best = v
        out[c] = best


def sizing_and_density(grid, S, lfs, K, include_outer=True):
    """Per-cell sizing ``mu`` and density ``rho = 1/mu**2``."""
    cells = np.arange(grid.n_cells) if include_outer else np.flatnonzero(grid.category != OUTER)
    mids = np.ascontiguousarray(grid.midpoints()[cells])
    vals = np.empty(len(cells))
    _sizing_kernel(mids, np.ascontiguousarray(S, dtype=float), np.ascontiguousarray(lfs, dtype=float),
                   float(K), vals)
    mu = np.full(grid.n_cells, np.nan)
    mu[cells] = vals
    return mu, 1.0 / mu**2


def automatic_sizing(shape, grid, K, fac_s=0.5, n_grid=5, n_nei_thres=3, fac_nei=2,
                     fac_geps=0.01, rng=None, include_outer=True) -> SizingModel:
    """Full chain: boundary samples, trimming, medial axis, lfs and sizing."""
    d_s = fac_s * min(grid.dx, grid.dy)
    ghat = fac_geps * min(grid.dx, grid.dy)
    S = generate_boundary_points(shape, grid, fac_s, n_grid, rng, fac_geps)
    S = trim_boundary_points(S, shape, d_s, ghat)
    M = medial_axis_points(S, grid.domain)
    M = trim_medial_points(M, d_s, n_nei_thres, fac_nei)
    ax, bx, ay, by = grid.domain
    lfs = compute_lfs(S, M, diag=math.hypot(bx - ax, by - ay))
    mu, rho = sizing_and_density(grid, S, lfs, K, include_outer)
    logger.info("sizing: %d boundary samples, %d medial points, lfs in [%.3g, %.3g]",
                len(S), len(M), lfs.min(), lfs.max())
    return SizingModel(mu=mu, rho=rho, K=float(K), d_s=d_s, S=S, M=M, lfs=lfs)


def constant_sizing(grid) -> SizingModel:
    mu = np.ones(grid.n_cells)
    return SizingModel(mu=mu, rho=np.ones(grid.n_cells))


def field_sizing(grid, func) -> SizingModel:
    """Sizing from a user callable ``func(pts) -> mu`` evaluated at cell midpoints.

    Values on outer cells are clamped below by the smallest value over inner
    and boundary cells so that the density stays finite everywhere.
    """
    mu = np.asarray(func(grid.midpoints()), dtype=float).reshape(grid.n_cells)
    active = grid.category != OUTER
    if not np.all(mu[active] > 0):
        raise ValueError("sizing function must be positive on inner and boundary cells")
    floor = float(np.min(mu[active]))
    mu = np.where(active, mu, np.maximum(mu, floor))
    return SizingModel(mu=mu, rho=1.0 / mu**2)

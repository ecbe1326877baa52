"""Background lattice of inner/boundary/outer cells with per-cell size targets.

Boundary cells also carry an adaptive distance field: a quadtree of bilinear
patches that reproduces the signed distance to a per-cell tolerance and is far
cheaper to query than the original shape.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .exceptions import DegenerateDomain, NotBoundaryCell, ZeroDensityCell

INNER = 0
BOUNDARY = 1
OUTER = 2

MACHINE_EPS = 2.0 ** -52


def grid_shape(domain, n_total, n_opt=3.3, fac_grid=5):
    """Cell counts ``(nx, ny)`` giving about ``n_opt`` points per coarse cell."""
    ax, bx, ay, by = domain
    if not (bx > ax and by > ay):
        raise DegenerateDomain(f"invalid domain box {domain}")
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    lam = math.sqrt(n_total / (n_opt * (bx - ax) * (by - ay)))
    nx = fac_grid * max(1, math.ceil(lam * (bx - ax)))
    ny = fac_grid * max(1, math.ceil(lam * (by - ay)))
    return int(nx), int(ny)


class GeometryGrid:
    """Cell lattice over ``domain = (ax, bx, ay, by)``.

    Cells are numbered row-major from the bottom-left: ``c = iy * nx + ix``.
    Per-cell arrays have length ``nx * ny``; quantities that are undefined on
    a cell are NaN.
    """

    def __init__(self, domain, nx, ny):
        ax, bx, ay, by = (float(v) for v in domain)
        if not (bx > ax and by > ay):
            raise DegenerateDomain(f"invalid domain box {domain}")
        self.domain = (ax, bx, ay, by)
        self.nx = int(nx)
        self.ny = int(ny)
        self.dx = (bx - ax) / self.nx
        self.dy = (by - ay) / self.ny
        self.l_diag = math.hypot(self.dx, self.dy)
        n = self.nx * self.ny
        self.category = np.full(n, OUTER, dtype=np.int8)
        self.mid_sdf = np.full(n, np.nan)
        self.selected = np.zeros(n, dtype=bool)
        self.h = np.full(n, np.nan)
        self.h_avg = float("nan")
        self.t_retria = np.full(n, np.nan)
        self.t_end = np.full(n, np.nan)
        self.t_pt = np.full(n, np.nan)
        self.geps = np.full(n, np.nan)
        self.deps = np.full(n, np.nan)
        self.adf: Adf | None = None
        self.factors = {"retria": 0.1, "end": 0.001, "pt": 0.4, "geps": 0.01}

    @property
    def n_cells(self):
        return self.nx * self.ny

    def midpoints(self):
        ax, _, ay, _ = self.domain
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        xs = ax + (ix + 0.5) * self.dx
        ys = ay + (iy + 0.5) * self.dy
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_bounds(self, cells):
        cells = np.asarray(cells)
        ax, _, ay, _ = self.domain
        ix = cells % self.nx
        iy = cells // self.nx
        return (ax + ix * self.dx, ax + (ix + 1) * self.dx,
                ay + iy * self.dy, ay + (iy + 1) * self.dy)

    def cell_index(self, pts):
        """Flat cell index per point; -1 for points outside the domain box."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ax, bx, ay, by = self.domain
        ix = np.floor((pts[:, 0] - ax) / self.dx).astype(np.int64)
        iy = np.floor((pts[:, 1] - ay) / self.dy).astype(np.int64)
        # points exactly on the far walls belong to the last cell
        ix = np.where(pts[:, 0] == bx, self.nx - 1, ix)
        iy = np.where(pts[:, 1] == by, self.ny - 1, iy)
        ok = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        ok &= np.isfinite(pts[:, 0]) & np.isfinite(pts[:, 1])
        return np.where(ok, iy * self.nx + ix, -1)

    def point_category(self, pts):
        """Cell category per point; points outside the box count as outer."""
        c = self.cell_index(pts)
        cat = np.full(len(c), OUTER, dtype=np.int8)
        ok = c >= 0
        cat[ok] = self.category[c[ok]]
        return cat

    @property
    def valid(self):
        """Cells that receive points: inner plus selected boundary cells."""
        return (self.category == INNER) | self.selected

    def select_boundary_cells(self, eta):
        """Boundary cells whose midpoint lies no further than ``eta*min(dx, dy)`` outside."""
        thresh = eta * min(self.dx, self.dy)
        self.selected = (self.category == BOUNDARY) & (self.mid_sdf <= thresh)
        return self.selected

    def classify(self, pts):
        """Point category from cell type and ADF: INNER, BOUNDARY, or OUTER when unusable.

        A point in a boundary cell is a boundary point if ``|adf| <= geps``,
        inner if ``adf < -geps`` and unusable if ``adf > geps``.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        cell = self.cell_index(pts)
        cat = np.full(len(pts), OUTER, dtype=np.int8)
        ok = cell >= 0
        cat[ok] = self.category[cell[ok]]
        bnd = np.flatnonzero(cat == BOUNDARY)
        if len(bnd):
            a = self.adf_values(pts[bnd])
            g = self.geps[cell[bnd]]
            cat[bnd[a < -g]] = INNER
            cat[bnd[~(a <= g)]] = OUTER
        return cat

    def adf_query(self, pts):
        """ADF value per point. Raises NotBoundaryCell if any point is not in a boundary cell."""
        vals = self.adf_values(pts)
        if np.any(np.isnan(vals)):
            raise NotBoundaryCell("query point is not inside a boundary cell")
        return vals

    def adf_values(self, pts):
        """ADF value per point, NaN where the point is not in a boundary cell."""
        if self.adf is None:
            raise RuntimeError("ADF not built")
        return self.adf.query(self, pts)


def build_grid(shape, n_total, domain, n_opt=3.3, fac_grid=5):
    """Size the lattice from ``n_total`` and classify every cell by its midpoint."""
    nx, ny = grid_shape(domain, n_total, n_opt, fac_grid)
    grid = GeometryGrid(domain, nx, ny)
    d = shape.evaluate(grid.midpoints())
    grid.mid_sdf = d
    cat = np.where(d < 0, INNER, OUTER).astype(np.int8)
    cat[np.abs(d) <= grid.l_diag] = BOUNDARY
    grid.category = cat
    return grid


def compute_adaptive_quantities(grid, rho_norm, n_current, fac_retria=0.1, fac_end=0.001,
                                fac_pt=0.4, fac_geps=0.01):
    """Fill desired edge length ``h`` and the thresholds derived from it.

    ``rho_norm`` is the per-cell density normalized so that it sums to one over
    the valid cells; it must be defined on all inner and boundary cells.
    """
    active = grid.category != OUTER
    expected = np.asarray(rho_norm, dtype=float) * n_current
    inner = grid.category == INNER
    if np.any(~(expected[inner] > 0)):
        bad = int(np.flatnonzero(inner & ~(expected > 0))[0])
        raise ZeroDensityCell(f"expected point count is zero on inner cell {bad}")
    h = np.full(grid.n_cells, np.nan)
    with np.errstate(divide="ignore"):
        h[active] = np.sqrt(grid.dx * grid.dy / expected[active])
    h[active & ~np.isfinite(h)] = np.nan
    grid.h = h
    valid = grid.valid
    grid.h_avg = float(np.mean(h[valid]))
    grid.factors = {"retria": fac_retria, "end": fac_end, "pt": fac_pt, "geps": fac_geps}
    _refresh_thresholds(grid)
    return grid


def _refresh_thresholds(grid):
    f = grid.factors
    h = grid.h
    grid.t_retria = f["retria"] * h
    grid.t_end = f["end"] * h
    grid.t_pt = f["pt"] * h
    hmin = np.minimum(h, grid.h_avg)
    grid.geps = f["geps"] * hmin
    grid.deps = math.sqrt(MACHINE_EPS) * hmin


def rescale_on_addition(grid, n_old, n_current):
    """Shrink ``h`` and all derived lengths after the point count grew."""
    factor = math.sqrt(n_old / n_current)
    grid.h = grid.h * factor
    grid.h_avg = grid.h_avg * factor
    _refresh_thresholds(grid)
    return grid


# ---------------------------------------------------------------- ADF --------

class Adf:
    """Flat quadtree storage for all boundary cells.

    Node arrays hold the box ``x0 x1 y0 y1``, corner values ``c00 c10 c01 c11``
    (lower-left, lower-right, upper-left, upper-right), depth and the index of
    the first of four children (-1 for leaves). Children are ordered
    lower-left, lower-right, upper-left, upper-right.
    """

    def __init__(self, root, box, corners, depth, child, e_tol):
        self.root = root
        self.box = box
        self.corners = corners
        self.depth = depth
        self.child = child
        self.e_tol = e_tol

    @property
    def n_nodes(self):
        return len(self.depth)

    def evaluate(self, grid, pts):
        """Interpolated value and leaf depth per point (NaN / -1 off boundary cells)."""
        pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
        out = np.empty(len(pts))
        depth = np.empty(len(pts), dtype=np.int64)
        ax, _, ay, _ = grid.domain
        _adf_eval(pts, ax, ay, grid.dx, grid.dy, grid.nx, grid.ny, self.root, self.box,
                  self.corners, self.child, self.depth, out, depth)
        return out, depth

    def query(self, grid, pts):
        return self.evaluate(grid, pts)[0]


@njit(cache=True)
def _adf_eval(pts, ax, ay, dx, dy, nx, ny, root, box, corners, child, node_depth, out, depth):
    for k in range(pts.shape[0]):
        px = pts[k, 0]
        py = pts[k, 1]
        fx = math.floor((px - ax) / dx)
        fy = math.floor((py - ay) / dy)
        # far walls belong to the last cell
        if fx == nx and px == ax + nx * dx:
            fx = nx - 1
        if fy == ny and py == ay + ny * dy:
            fy = ny - 1
        if not (fx >= 0 and fx < nx and fy >= 0 and fy < ny):
            out[k] = np.nan
            depth[k] = -1
            continue
        node = root[int(fy) * nx + int(fx)]
        if node < 0:
            out[k] = np.nan
            depth[k] = -1
            continue
        while child[node] >= 0:
            xm = 0.5 * (box[node, 0] + box[node, 1])
            ym = 0.5 * (box[node, 2] + box[node, 3])
            q = 0
            if px >= xm:
                q += 1
            if py >= ym:
                q += 2
            node = child[node] + q
        u = (px - box[node, 0]) / (box[node, 1] - box[node, 0])
        v = (py - box[node, 2]) / (box[node, 3] - box[node, 2])
        out[k] = (corners[node, 0] * (1.0 - u) * (1.0 - v) + corners[node, 1] * u * (1.0 - v)
                  + corners[node, 2] * (1.0 - u) * v + corners[node, 3] * u * v)
        depth[k] = node_depth[node]


def build_adf(grid, shape, e_tol, max_depth=10):
    """Build the quadtree of every boundary cell.

    ``e_tol`` is the per-cell tolerance (array over all cells or a scalar). A
    node splits while the worst bilinear error at its four edge midpoints and
    centroid exceeds the tolerance and its depth is below ``max_depth``.
    """
    cells = np.flatnonzero(grid.category == BOUNDARY)
    e_tol_cells = np.broadcast_to(np.asarray(e_tol, dtype=float), (grid.n_cells,))
    root = np.full(grid.n_cells, -1, dtype=np.int64)
    if len(cells) == 0:
        grid.adf = Adf(root, np.empty((0, 4)), np.empty((0, 4)), np.empty(0, np.int64),
                       np.empty(0, np.int64), np.array(e_tol_cells, dtype=float))
        return grid

    x0, x1, y0, y1 = grid.cell_bounds(cells)
    n0 = len(cells)
    cp = np.column_stack([np.concatenate([x0, x1, x0, x1]), np.concatenate([y0, y0, y1, y1])])
    cv = shape.evaluate(cp).reshape(4, n0).T

    boxes = [np.column_stack([x0, x1, y0, y1])]
    corners = [cv]
    depths = [np.zeros(n0, dtype=np.int64)]
    tol = [e_tol_cells[cells]]
    childs = [np.full(n0, -1, dtype=np.int64)]
    root[cells] = np.arange(n0)

    level_box, level_c, level_tol = boxes[0], cv, tol[0]
    total = n0
    for level in range(max_depth):
        bx0, bx1, by0, by1 = level_box.T
        xm = 0.5 * (bx0 + bx1)
        ym = 0.5 * (by0 + by1)
        m = len(level_box)
        # bottom, left, centroid, right, top
        probe = np.column_stack([
            np.concatenate([xm, bx0, xm, bx1, xm]),
            np.concatenate([by0, ym, ym, ym, by1]),
        ])
        s = shape.evaluate(probe).reshape(5, m)
        c00, c10, c01, c11 = level_c.T
        interp = np.vstack([
            0.5 * (c00 + c10),
            0.5 * (c00 + c01),
            0.25 * (c00 + c10 + c01 + c11),
            0.5 * (c10 + c11),
            0.5 * (c01 + c11),
        ])
        err = np.max(np.abs(interp - s), axis=0)
        split = err > level_tol
        if not np.any(split):
            break
        idx = np.flatnonzero(split)
        k = len(idx)
        first = total + 4 * np.arange(k)
        childs[-1][idx] = first
        sb, sl, sc, sr, st = s[:, idx]
        p00, p10, p01, p11 = c00[idx], c10[idx], c01[idx], c11[idx]
        X0, X1, Y0, Y1, XM, YM = bx0[idx], bx1[idx], by0[idx], by1[idx], xm[idx], ym[idx]
        nb = np.empty((k, 4, 4))
        nb[:, 0] = np.column_stack([X0, XM, Y0, YM])
        nb[:, 1] = np.column_stack([XM, X1, Y0, YM])
        nb[:, 2] = np.column_stack([X0, XM, YM, Y1])
        nb[:, 3] = np.column_stack([XM, X1, YM, Y1])
        nc = np.empty((k, 4, 4))
        nc[:, 0] = np.column_stack([p00, sb, sl, sc])
        nc[:, 1] = np.column_stack([sb, p10, sc, sr])
        nc[:, 2] = np.column_stack([sl, sc, p01, st])
        nc[:, 3] = np.column_stack([sc, sr, st, p11])
        ntol = np.repeat(level_tol[idx], 4)
        level_box = nb.reshape(4 * k, 4)
        level_c = nc.reshape(4 * k, 4)
        level_tol = ntol
        boxes.append(level_box)
        corners.append(level_c)
        depths.append(np.full(4 * k, level + 1, dtype=np.int64))
        tol.append(ntol)
        childs.append(np.full(4 * k, -1, dtype=np.int64))
        total += 4 * k

    grid.adf = Adf(
        root,
        np.ascontiguousarray(np.vstack(boxes)),
        np.ascontiguousarray(np.vstack(corners)),
        np.concatenate(depths),
        np.concatenate(childs),
        np.array(e_tol_cells, dtype=float),
    )
    return grid

"""Signed distance fields: primitives, boolean combinations and polyline contours.

All fields follow the convention negative inside, positive outside and zero on
the boundary. Every shape is callable on a single point ``(2,)`` or a batch
``(..., 2)`` of points.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .exceptions import EmptyContour

logger = logging.getLogger(__name__)

__all__ = [
    "Shape",
    "Circle",
    "Rectangle",
    "Contour",
    "Combined",
    "UserFunction",
    "union",
    "difference",
    "intersection",
    "boolean_sdf",
    "closest_on_segment",
    "sdf_gradient",
    "read_contour_file",
]


class Shape:
    """Base class for signed distance fields."""

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        """Signed distance for an ``(n, 2)`` float array."""
        raise NotImplementedError

    def bounds(self):
        """Axis-aligned bounding box ``(x0, x1, y0, y1)`` of the shape."""
        raise NotImplementedError

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            return float(self.evaluate(p.reshape(1, 2))[0])
        flat = np.ascontiguousarray(p.reshape(-1, 2))
        return self.evaluate(flat).reshape(p.shape[:-1])

    def contour_segments(self):
        """Polyline segments ``(m, 4)`` that trace part of the boundary, if known."""
        return np.empty((0, 4))


class Circle(Shape):
    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.radius = float(radius)
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")

    def evaluate(self, pts):
        return np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) - self.radius

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def __repr__(self):
        return f"Circle(center=({self.center[0]!r}, {self.center[1]!r}), radius={self.radius!r})"


class Rectangle(Shape):
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]`` with exact distance."""

    def __init__(self, x0, x1, y0, y1):
        self.x0, self.x1, self.y0, self.y1 = float(x0), float(x1), float(y0), float(y1)
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("rectangle needs x0 < x1 and y0 < y1")

    def evaluate(self, pts):
        cx = 0.5 * (self.x0 + self.x1)
        cy = 0.5 * (self.y0 + self.y1)
        qx = np.abs(pts[:, 0] - cx) - 0.5 * (self.x1 - self.x0)
        qy = np.abs(pts[:, 1] - cy) - 0.5 * (self.y1 - self.y0)
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return outside + inside

    def bounds(self):
        return (self.x0, self.x1, self.y0, self.y1)

    def contour_segments(self):
        x0, x1, y0, y1 = self.x0, self.x1, self.y0, self.y1
        # clockwise
        return np.array([[x0, y0, x0, y1], [x0, y1, x1, y1], [x1, y1, x1, y0], [x1, y0, x0, y0]])

    def __repr__(self):
        return f"Rectangle({self.x0!r}, {self.x1!r}, {self.y0!r}, {self.y1!r})"


class UserFunction(Shape):
    """Wraps a vectorized callable ``f(pts: (n, 2)) -> (n,)``."""

    def __init__(self, func, bounds=None):
        self.func = func
        self._bounds = bounds

    def evaluate(self, pts):
        return np.asarray(self.func(pts), dtype=float).reshape(len(pts))

    def bounds(self):
        if self._bounds is None:
            raise ValueError("UserFunction has no bounds; pass bounds= or set a domain")
        return tuple(self._bounds)


def boolean_sdf(op: str, da, db):
    """Combine two signed distances. ``difference`` means A minus B."""
    if op == "union":
        return np.minimum(da, db)
    if op == "difference":
        return np.maximum(da, -db)
    if op == "intersection":
        return np.maximum(da, db)
    raise ValueError(f"unknown boolean operation {op!r}")


class Combined(Shape):
    OPS = ("union", "difference", "intersection")

    def __init__(self, op, left: Shape, right: Shape):
        if op not in self.OPS:
            raise ValueError(f"unknown boolean operation {op!r}")
        self.op = op
        self.left = left
        self.right = right

    def evaluate(self, pts):
        return boolean_sdf(self.op, self.left.evaluate(pts), self.right.evaluate(pts))

    def bounds(self):
        a = self.left.bounds()
        if self.op == "union":
            b = self.right.bounds()
            return (min(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), max(a[3], b[3]))
        if self.op == "intersection":
            b = self.right.bounds()
            return (max(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), min(a[3], b[3]))
        return a

    def contour_segments(self):
        return np.vstack([self.left.contour_segments(), self.right.contour_segments()])

    def __repr__(self):
        return f"Combined({self.op!r}, {self.left!r}, {self.right!r})"


def union(a, b):
    return Combined("union", a, b)


def difference(a, b):
    return Combined("difference", a, b)


def intersection(a, b):
    return Combined("intersection", a, b)


@njit(cache=True)
def _closest_on_segment(px, py, x1, y1, x2, y2):
    # returns qx, qy, where: 0 start vertex, 1 interior, 2 end vertex
    ex = x2 - x1
    ey = y2 - y1
    t = ((px - x1) * ex + (py - y1) * ey) / (ex * ex + ey * ey)
    if t <= 0.0:
        return x1, y1, 0
    if t >= 1.0:
        return x2, y2, 2
    return x1 + t * ex, y1 + t * ey, 1


def closest_on_segment(p, seg):
    """Nearest point of the closed segment ``((x1, y1), (x2, y2))`` to ``p`` and its distance."""
    (x1, y1), (x2, y2) = seg
    qx, qy, _ = _closest_on_segment(float(p[0]), float(p[1]), float(x1), float(y1), float(x2), float(y2))
    q = np.array([qx, qy])
    return q, float(math.hypot(p[0] - qx, p[1] - qy))


@njit(cache=True)
def _scan_cell(px, py, c, seg, cell_start, cell_items, best, bseg, bqx, bqy, bwhere):
    for k in range(cell_start[c], cell_start[c + 1]):
        s = cell_items[k]
        qx, qy, w = _closest_on_segment(px, py, seg[s, 0], seg[s, 1], seg[s, 2], seg[s, 3])
        d2 = (px - qx) ** 2 + (py - qy) ** 2
        if d2 < best or (d2 == best and s < bseg):
            best = d2
            bseg = s
            bqx = qx
            bqy = qy
            bwhere = w
    return best, bseg, bqx, bqy, bwhere


@njit(cache=True)
def _contour_query(pts, seg, nrm, nrm_start, nrm_end, x0, y0, dx, dy, nx, ny,
                   cell_start, cell_items, out_d, out_q, out_n):
    n = pts.shape[0]
    for i in range(n):
        px = pts[i, 0]
        py = pts[i, 1]
        ix = int(math.floor((px - x0) / dx))
        iy = int(math.floor((py - y0) / dy))
        ix = min(max(ix, 0), nx - 1)
        iy = min(max(iy, 0), ny - 1)
        best = np.inf
        bseg = -1
        bqx = 0.0
        bqy = 0.0
        bwhere = 1
        for layer in range(max(nx, ny) + 1):
            for jy in range(iy - layer, iy + layer + 1):
                if jy < 0 or jy >= ny:
                    continue
                on_row = jy == iy - layer or jy == iy + layer
                step = 1 if on_row else 2 * layer
                jx = ix - layer
                while jx <= ix + layer:
                    if jx >= 0 and jx < nx:
                        best, bseg, bqx, bqy, bwhere = _scan_cell(
                            px, py, jy * nx + jx, seg, cell_start, cell_items,
                            best, bseg, bqx, bqy, bwhere)
                    if step == 0:
                        break
                    jx += step
            if bseg >= 0:
                break
        if bseg < 0:
            out_d[i] = np.nan
            continue
        # any closer segment must touch the box of half-width r around p
        r = math.sqrt(best)
        ax0 = min(max(int(math.floor((px - r - x0) / dx)), 0), nx - 1)
        ax1 = min(max(int(math.floor((px + r - x0) / dx)), 0), nx - 1)
        ay0 = min(max(int(math.floor((py - r - y0) / dy)), 0), ny - 1)
        ay1 = min(max(int(math.floor((py + r - y0) / dy)), 0), ny - 1)
        for jy in range(ay0, ay1 + 1):
            for jx in range(ax0, ax1 + 1):
                best, bseg, bqx, bqy, bwhere = _scan_cell(
                    px, py, jy * nx + jx, seg, cell_start, cell_items,
                    best, bseg, bqx, bqy, bwhere)
        if bwhere == 0:
            nxv = nrm_start[bseg, 0]
            nyv = nrm_start[bseg, 1]
        elif bwhere == 2:
            nxv = nrm_end[bseg, 0]
            nyv = nrm_end[bseg, 1]
        else:
            nxv = nrm[bseg, 0]
            nyv = nrm[bseg, 1]
        dist = math.sqrt(best)
        side = (px - bqx) * nxv + (py - bqy) * nyv
        out_d[i] = -dist if side > 0.0 else dist
        out_q[i, 0] = bqx
        out_q[i, 1] = bqy
        out_n[i, 0] = nxv
        out_n[i, 1] = nyv


def _segment_touches_box(x1, y1, x2, y2, bx0, bx1, by0, by1):
    """Vectorized segment vs axis-aligned box overlap (boxes as arrays)."""
    ex = x2 - x1
    ey = y2 - y1
    # side of each box corner relative to the segment's supporting line
    c1 = ex * (by0 - y1) - ey * (bx0 - x1)
    c2 = ex * (by0 - y1) - ey * (bx1 - x1)
    c3 = ex * (by1 - y1) - ey * (bx0 - x1)
    c4 = ex * (by1 - y1) - ey * (bx1 - x1)
    all_pos = (c1 > 0) & (c2 > 0) & (c3 > 0) & (c4 > 0)
    all_neg = (c1 < 0) & (c2 < 0) & (c3 < 0) & (c4 < 0)
    return ~(all_pos | all_neg)


class SegmentGrid:
    """Uniform bins over a rectangle; each bin lists the segments crossing it."""

    def __init__(self, seg: np.ndarray, box):
        x0, x1, y0, y1 = box
        lengths = np.hypot(seg[:, 2] - seg[:, 0], seg[:, 3] - seg[:, 1])
        mean_len = float(lengths.mean())
        lx, ly = x1 - x0, y1 - y0
        self.nx = max(1, int(math.ceil(lx / mean_len)))
        self.ny = max(1, int(math.ceil(ly / mean_len)))
        self.x0, self.y0 = float(x0), float(y0)
        self.dx = lx / self.nx
        self.dy = ly / self.ny
        pad_x = 1e-12 * max(lx, 1.0)
        pad_y = 1e-12 * max(ly, 1.0)
        bins = [[] for _ in range(self.nx * self.ny)]
        for s in range(len(seg)):
            sx0, sy0, sx1, sy1 = seg[s]
            i0 = int(np.clip(math.floor((min(sx0, sx1) - x0) / self.dx), 0, self.nx - 1))
            i1 = int(np.clip(math.floor((max(sx0, sx1) - x0) / self.dx), 0, self.nx - 1))
            j0 = int(np.clip(math.floor((min(sy0, sy1) - y0) / self.dy), 0, self.ny - 1))
            j1 = int(np.clip(math.floor((max(sy0, sy1) - y0) / self.dy), 0, self.ny - 1))
            ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
            ii = ii.ravel()
            jj = jj.ravel()
            bx0 = x0 + ii * self.dx - pad_x
            by0 = y0 + jj * self.dy - pad_y
            hit = _segment_touches_box(sx0, sy0, sx1, sy1, bx0, bx0 + self.dx + 2 * pad_x,
                                       by0, by0 + self.dy + 2 * pad_y)
            for c in (jj[hit] * self.nx + ii[hit]):
                bins[c].append(s)
        counts = np.array([len(b) for b in bins], dtype=np.int64)
        self.cell_start = np.zeros(len(bins) + 1, dtype=np.int64)
        np.cumsum(counts, out=self.cell_start[1:])
        self.cell_items = np.array([s for b in bins for s in b], dtype=np.int64)

    def segments_in_cell(self, ix, iy):
        c = iy * self.nx + ix
        return self.cell_items[self.cell_start[c]:self.cell_start[c + 1]]


class Contour(Shape):
    """Closed clockwise polyline loops with a bin grid for closest-point search.

    ``segments`` is an ``(m, 4)`` array of ``x1 y1 x2 y2`` rows. The inward
    normal of a segment is its direction rotated clockwise by 90 degrees.
    """

    def __init__(self, segments, box=None):
        seg = np.ascontiguousarray(np.asarray(segments, dtype=float).reshape(-1, 4))
        if len(seg) == 0:
            raise EmptyContour("contour has no segments")
        d = seg[:, 2:] - seg[:, :2]
        length = np.hypot(d[:, 0], d[:, 1])
        if np.any(length <= 0):
            raise ValueError("contour contains zero-length segments")
        self.segments = seg
        self.normals = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        xs = np.concatenate([seg[:, 0], seg[:, 2]])
        ys = np.concatenate([seg[:, 1], seg[:, 3]])
        self._bounds = (xs.min(), xs.max(), ys.min(), ys.max())
        diag = math.hypot(self._bounds[1] - self._bounds[0], self._bounds[3] - self._bounds[2])
        tol = 1e-12 * max(diag, 1e-300)

        # successor / predecessor by matching endpoints
        tree = cKDTree(seg[:, :2])
        dist, succ = tree.query(seg[:, 2:], k=1)
        if np.any(dist > tol):
            raise ValueError("contour loops are not closed")
        self.next = succ.astype(np.int64)
        self.prev = np.empty_like(self.next)
        self.prev[self.next] = np.arange(len(seg))
        area2 = np.sum(seg[:, 0] * seg[:, 3] - seg[:, 2] * seg[:, 1])
        if area2 > 0:
            raise ValueError("contour must be oriented clockwise")

        self.normals_end = self.normals + self.normals[self.next]
        self.normals_end /= np.hypot(self.normals_end[:, 0], self.normals_end[:, 1])[:, None]
        self.normals_start = np.ascontiguousarray(self.normals_end[self.prev])
        self.normals_end = np.ascontiguousarray(self.normals_end)

        if box is None:
            box = self._bounds
        else:
            box = (min(box[0], self._bounds[0]), max(box[1], self._bounds[1]),
                   min(box[2], self._bounds[2]), max(box[3], self._bounds[3]))
        self.grid = SegmentGrid(seg, box)

    @classmethod
    def from_polygon(cls, vertices, box=None):
        """Build a single loop from polygon vertices in any orientation."""
        v = np.asarray(vertices, dtype=float)
        area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area2 > 0:
            v = v[::-1]
        seg = np.hstack([v, np.roll(v, -1, axis=0)])
        return cls(seg, box=box)

    @classmethod
    def from_file(cls, path, box=None):
        return cls(read_contour_file(path), box=box)

    def bounds(self):
        return self._bounds

    def contour_segments(self):
        return self.segments

    def query(self, pts):
        """Signed distance, closest boundary point and inward normal per point."""
        pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
        n = len(pts)
        out_d = np.empty(n)
        out_q = np.empty((n, 2))
        out_n = np.empty((n, 2))
        g = self.grid
        _contour_query(pts, self.segments, self.normals, self.normals_start, self.normals_end,
                       g.x0, g.y0, g.dx, g.dy, g.nx, g.ny, g.cell_start, g.cell_items,
                       out_d, out_q, out_n)
        return out_d, out_q, out_n

    def evaluate(self, pts):
        return self.query(pts)[0]

    def __repr__(self):
        return f"Contour(<{len(self.segments)} segments>)"


def read_contour_file(path) -> np.ndarray:
    """Read ``x1 y1 x2 y2`` rows; blank lines and ``#`` comments are skipped."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 numbers, got {len(parts)}")
        rows.append([float(t) for t in parts])
    if not rows:
        raise EmptyContour(f"{path}: no segments")
    return np.array(rows)


def write_contour_file(path, segments):
    with open(path, "w") as fh:
        for row in np.asarray(segments, dtype=float):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def sdf_gradient(shape: Shape, p, step: float):
    """Central-difference gradient; works for one point or an ``(n, 2)`` batch."""
    if not step > 0:
        raise ValueError("step must be positive")
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p.reshape(-1, 2)
    n = len(pts)
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    stencil = np.empty((4 * n, 2))
    stencil[0::4] = pts
    stencil[0::4, 0] += step
    stencil[1::4] = pts
    stencil[1::4, 0] -= step
    stencil[2::4] = pts
    stencil[2::4, 1] += step
    stencil[3::4] = pts
    stencil[3::4, 1] -= step
    f = shape.evaluate(stencil)
    g = np.column_stack([(f[0::4] - f[1::4]) / (2 * step), (f[2::4] - f[3::4]) / (2 * step)])
    return g[0] if single else g

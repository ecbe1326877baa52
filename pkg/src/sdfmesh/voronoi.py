"""Bounded Voronoi cells by half-plane clipping, dual Delaunay triangles and validity tests.

Every cell starts as an octagon around its generator (circumradius ``span``),
is cut to the domain box, and is then clipped by the perpendicular bisectors
of nearby generators found through an outward search over point bins. Cells
are independent, so the diagram is computed in parallel; each cell is a pure
function of its inputs, which makes the result independent of thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .grid import BOUNDARY, INNER, OUTER

# edge labels; non-negative labels are generator indices
WALL_OCTAGON = -1
WALL_LEFT = -2
WALL_RIGHT = -3
WALL_BOTTOM = -4
WALL_TOP = -5

MAX_WORK = 256   # vertex capacity while clipping
MAX_OUT = 48     # stored vertices per finished cell
CHUNK = 64       # cells per parallel work item

_OCT_COS = np.cos(np.deg2rad(22.5 + 45.0 * np.arange(8)))
_OCT_SIN = np.sin(np.deg2rad(22.5 + 45.0 * np.arange(8)))


@dataclass
class PointBins:
    """Points sorted into a uniform lattice; bin ``b`` holds ``items[start[b]:start[b+1]]``."""

    domain: tuple
    nx: int
    ny: int
    bw: float
    bh: float
    start: np.ndarray
    items: np.ndarray


def build_bins(points, domain, n_opt=3.3) -> PointBins:
    ax, bx, ay, by = domain
    n = max(len(points), 1)
    lam = math.sqrt(n / (n_opt * (bx - ax) * (by - ay)))
    nx = max(1, math.ceil(lam * (bx - ax)))
    ny = max(1, math.ceil(lam * (by - ay)))
    bw = (bx - ax) / nx
    bh = (by - ay) / ny
    ix = np.clip(np.floor((points[:, 0] - ax) / bw).astype(np.int64), 0, nx - 1)
    iy = np.clip(np.floor((points[:, 1] - ay) / bh).astype(np.int64), 0, ny - 1)
    b = iy * nx + ix
    items = np.argsort(b, kind="stable").astype(np.int64)
    start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.cumsum(np.bincount(b, minlength=nx * ny), out=start[1:])
    return PointBins(tuple(float(v) for v in domain), nx, ny, bw, bh, start, items)


@njit(cache=True)
def _clip(vx, vy, lab, nv, a, b, c, label, wx, wy, wl, d, tol):
    """Keep the part of the polygon where ``a*x + b*y <= c``; ``(a, b)`` is a unit normal."""
    cut = False
    for k in range(nv):
        d[k] = a * vx[k] + b * vy[k] - c
        if d[k] > tol:
            cut = True
    if not cut:
        return nv
    m = 0
    for k in range(nv):
        k2 = k + 1
        if k2 == nv:
            k2 = 0
        dk = d[k]
        dk2 = d[k2]
        if dk <= tol:
            wx[m] = vx[k]
            wy[m] = vy[k]
            if dk2 > tol:
                if dk < -tol:
                    wl[m] = lab[k]
                    m += 1
                    t = dk / (dk - dk2)
                    wx[m] = vx[k] + t * (vx[k2] - vx[k])
                    wy[m] = vy[k] + t * (vy[k2] - vy[k])
                    wl[m] = label
                else:
                    wl[m] = label
            else:
                wl[m] = lab[k]
            m += 1
        elif dk2 < -tol:
            t = dk / (dk - dk2)
            wx[m] = vx[k] + t * (vx[k2] - vx[k])
            wy[m] = vy[k] + t * (vy[k2] - vy[k])
            wl[m] = lab[k]
            m += 1
        if m >= vx.shape[0] - 2:
            return -1
    for k in range(m):
        vx[k] = wx[k]
        vy[k] = wy[k]
        lab[k] = wl[k]
    return m


@njit(cache=True)
def _init_cell(px, py, span, ax, bx, ay, by, ocos, osin, vx, vy, lab, wx, wy, wl, d, tol):
    for k in range(8):
        vx[k] = px + span * ocos[k]
        vy[k] = py + span * osin[k]
        lab[k] = WALL_OCTAGON
    nv = 8
    nv = _clip(vx, vy, lab, nv, -1.0, 0.0, -ax, WALL_LEFT, wx, wy, wl, d, tol)
    nv = _clip(vx, vy, lab, nv, 1.0, 0.0, bx, WALL_RIGHT, wx, wy, wl, d, tol)
    nv = _clip(vx, vy, lab, nv, 0.0, -1.0, -ay, WALL_BOTTOM, wx, wy, wl, d, tol)
    nv = _clip(vx, vy, lab, nv, 0.0, 1.0, by, WALL_TOP, wx, wy, wl, d, tol)
    return nv


@njit(cache=True)
def _clip_by_point(i, j, pts, vx, vy, lab, nv, wx, wy, wl, d, tol):
    px = pts[i, 0]
    py = pts[i, 1]
    ex = pts[j, 0] - px
    ey = pts[j, 1] - py
    dist = math.sqrt(ex * ex + ey * ey)
    if dist == 0.0:
        return nv
    a = ex / dist
    b = ey / dist
    c = a * (px + 0.5 * ex) + b * (py + 0.5 * ey)
    return _clip(vx, vy, lab, nv, a, b, c, j, wx, wy, wl, d, tol)


@njit(cache=True)
def _max_radius(px, py, vx, vy, nv):
    r2 = 0.0
    for k in range(nv):
        t = (vx[k] - px) ** 2 + (vy[k] - py) ** 2
        if t > r2:
            r2 = t
    return math.sqrt(r2)


@njit(cache=True)
def _cell_kernel(i, pts, span, ax, bx, ay, by, bnx, bny, bw, bh, bstart, bitems,
                 ocos, osin, vx, vy, lab, wx, wy, wl, d, tol):
    px = pts[i, 0]
    py = pts[i, 1]
    nv = _init_cell(px, py, span, ax, bx, ay, by, ocos, osin, vx, vy, lab, wx, wy, wl, d, tol)
    bix = min(max(int(math.floor((px - ax) / bw)), 0), bnx - 1)
    biy = min(max(int(math.floor((py - ay) / bh)), 0), bny - 1)
    bmin = min(bw, bh)
    max_layer = max(max(bix, bnx - 1 - bix), max(biy, bny - 1 - biy))
    for layer in range(max_layer + 1):
        rmax = _max_radius(px, py, vx, vy, nv)
        # generators in this ring are at least (layer - 1) bins away
        if (layer - 1) * bmin >= 2.0 * rmax:
            break
        for jy in range(biy - layer, biy + layer + 1):
            if jy < 0 or jy >= bny:
                continue
            edge_row = jy == biy - layer or jy == biy + layer
            step = 1 if edge_row else 2 * layer
            jx = bix - layer
            while jx <= bix + layer:
                if jx >= 0 and jx < bnx:
                    b = jy * bnx + jx
                    for q in range(bstart[b], bstart[b + 1]):
                        j = bitems[q]
                        if j == i:
                            continue
                        ex = pts[j, 0] - px
                        ey = pts[j, 1] - py
                        if ex * ex + ey * ey >= 4.0 * rmax * rmax:
                            continue
                        nv = _clip_by_point(i, j, pts, vx, vy, lab, nv, wx, wy, wl, d, tol)
                        if nv < 0:
                            return -1
                        rmax = _max_radius(px, py, vx, vy, nv)
                if step == 0:
                    break
                jx += step
    return nv


@njit(parallel=True, cache=True)
def _diagram_kernel(pts, spans, ax, bx, ay, by, bnx, bny, bw, bh, bstart, bitems,
                    ocos, osin, tol, out_nv, out_x, out_y, out_lab):
    n = pts.shape[0]
    nchunks = (n + CHUNK - 1) // CHUNK
    for ch in prange(nchunks):
        vx = np.empty(MAX_WORK)
        vy = np.empty(MAX_WORK)
        lab = np.empty(MAX_WORK, dtype=np.int64)
        wx = np.empty(MAX_WORK)
        wy = np.empty(MAX_WORK)
        wl = np.empty(MAX_WORK, dtype=np.int64)
        d = np.empty(MAX_WORK)
        for i in range(ch * CHUNK, min(n, (ch + 1) * CHUNK)):
            nv = _cell_kernel(i, pts, spans[i], ax, bx, ay, by, bnx, bny, bw, bh, bstart,
                              bitems, ocos, osin, vx, vy, lab, wx, wy, wl, d, tol)
            if nv < 0 or nv > out_x.shape[1]:
                out_nv[i] = -1
                continue
            out_nv[i] = nv
            for k in range(nv):
                out_x[i, k] = vx[k]
                out_y[i, k] = vy[k]
                out_lab[i, k] = lab[k]


@dataclass
class VoronoiCell:
    generator: int
    vertices: np.ndarray   # (m, 2), counterclockwise
    neighbors: np.ndarray  # (m,), label of the edge from vertex k to k+1

    @property
    def area(self):
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def size(self):
        return math.sqrt(self.area)


class VoronoiDiagram:
    """All cells of one point set, stored in padded arrays."""

    def __init__(self, points, domain, nv, vx, vy, lab):
        self.points = points
        self.domain = domain
        self.nv = nv
        self.vx = vx
        self.vy = vy
        self.lab = lab

    def __len__(self):
        return len(self.nv)

    def cell(self, i) -> VoronoiCell:
        m = self.nv[i]
        return VoronoiCell(int(i), np.column_stack([self.vx[i, :m], self.vy[i, :m]]),
                           self.lab[i, :m].copy())

    def areas(self):
        x, y = self.vx, self.vy
        cols = np.arange(x.shape[1])
        nxt = (cols[None, :] + 1) % np.maximum(self.nv[:, None], 1)
        mask = cols[None, :] < self.nv[:, None]
        xn = np.take_along_axis(x, nxt, axis=1)
        yn = np.take_along_axis(y, nxt, axis=1)
        cross = np.where(mask, x * yn - xn * y, 0.0)
        return 0.5 * cross.sum(axis=1)


def _tolerance(domain):
    ax, bx, ay, by = domain
    return 1e-13 * max(bx - ax, by - ay, abs(ax), abs(bx), abs(ay), abs(by))


def compute_diagram(points, spans, domain, n_opt=3.3, bins: PointBins | None = None) -> VoronoiDiagram:
    """Bounded Voronoi diagram of ``points`` (``(n, 2)``) with per-point octagon spans."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    n = len(pts)
    spans = np.ascontiguousarray(np.broadcast_to(np.asarray(spans, dtype=float), (n,)))
    if bins is None:
        bins = build_bins(pts, domain, n_opt)
    ax, bx, ay, by = (float(v) for v in domain)
    out_nv = np.zeros(n, dtype=np.int64)
    out_x = np.zeros((n, MAX_OUT))
    out_y = np.zeros((n, MAX_OUT))
    out_lab = np.full((n, MAX_OUT), WALL_OCTAGON, dtype=np.int64)
    if n:
        _diagram_kernel(pts, spans, ax, bx, ay, by, bins.nx, bins.ny, bins.bw, bins.bh,
                        bins.start, bins.items, _OCT_COS, _OCT_SIN, _tolerance(domain),
                        out_nv, out_x, out_y, out_lab)
    if np.any(out_nv < 0):
        bad = int(np.flatnonzero(out_nv < 0)[0])
        raise RuntimeError(f"Voronoi cell {bad} exceeded the vertex capacity")
    return VoronoiDiagram(pts, (ax, bx, ay, by), out_nv, out_x, out_y, out_lab)


def compute_bounded_cell(i, points, span, domain, bins: PointBins | None = None, n_opt=3.3) -> VoronoiCell:
    """Single cell ``i``; same arithmetic as :func:`compute_diagram`."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    if bins is None:
        bins = build_bins(pts, domain, n_opt)
    ax, bx, ay, by = (float(v) for v in domain)
    vx = np.empty(MAX_WORK)
    vy = np.empty(MAX_WORK)
    lab = np.empty(MAX_WORK, dtype=np.int64)
    wx = np.empty(MAX_WORK)
    wy = np.empty(MAX_WORK)
    wl = np.empty(MAX_WORK, dtype=np.int64)
    d = np.empty(MAX_WORK)
    nv = _cell_kernel(int(i), pts, float(span), ax, bx, ay, by, bins.nx, bins.ny, bins.bw,
                      bins.bh, bins.start, bins.items, _OCT_COS, _OCT_SIN, vx, vy, lab, wx,
                      wy, wl, d, _tolerance(domain))
    if nv < 0:
        raise RuntimeError(f"Voronoi cell {i} exceeded the vertex capacity")
    return VoronoiCell(int(i), np.column_stack([vx[:nv], vy[:nv]]), lab[:nv].copy())


# ------------------------------------------------------------ Delaunay ------

@njit(cache=True)
def _is_neighbor(lab, nv, i, j):
    for k in range(nv[i]):
        if lab[i, k] == j:
            return True
    return False


@njit(cache=True)
def _candidates(nv, lab):
    """Triangles from consecutive mutual neighbors: rows (emitter, a, b)."""
    n = nv.shape[0]
    cap = 0
    for i in range(n):
        cap += nv[i]
    out = np.empty((cap, 3), dtype=np.int64)
    m = 0
    seq = np.empty(lab.shape[1], dtype=np.int64)
    for i in range(n):
        s = 0
        for k in range(nv[i]):
            j = lab[i, k]
            if j >= 0:
                if _is_neighbor(lab, nv, j, i):
                    seq[s] = j
                    s += 1
            else:
                seq[s] = -1
                s += 1
        if s < 2:
            continue
        last = s if s > 2 else 1
        for k in range(last):
            a = seq[k]
            b = seq[(k + 1) % s]
            if a >= 0 and b >= 0 and a != b:
                out[m, 0] = i
                out[m, 1] = a
                out[m, 2] = b
                m += 1
    return out[:m]


def _orient_ccw(tris, pts):
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    out = tris.copy()
    flip = cross < 0
    out[flip, 1], out[flip, 2] = tris[flip, 2], tris[flip, 1]
    return out


def circumcircles(tris, pts):
    """Circumcenters ``(m, 2)`` and circumradii ``(m,)``."""
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    bx, by = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    cx, cy = c[:, 0] - a[:, 0], c[:, 1] - a[:, 1]
    d = 2.0 * (bx * cy - by * cx)
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = (cy * b2 - by * c2) / d
        uy = (bx * c2 - cx * b2) / d
    center = np.column_stack([a[:, 0] + ux, a[:, 1] + uy])
    return center, np.hypot(ux, uy)


def _fan_patch(verts, pts):
    """Triangulate a convex cocircular vertex set by a fan from its smallest index."""
    verts = np.asarray(sorted(verts), dtype=np.int64)
    p = pts[verts]
    c = p.mean(axis=0)
    ang = np.arctan2(p[:, 1] - c[1], p[:, 0] - c[0])
    order = verts[np.argsort(ang, kind="stable")]
    k0 = int(np.flatnonzero(order == verts[0])[0])
    order = np.roll(order, -k0)
    return [(order[0], order[k], order[k + 1]) for k in range(1, len(order) - 1)]


def extract_delaunay(diagram: VoronoiDiagram, cocircular_rtol=1e-9) -> np.ndarray:
    """Counterclockwise triangles ``(m, 3)`` dual to the diagram, sorted lexicographically."""
    pts = diagram.points
    cand = _candidates(diagram.nv, diagram.lab)
    if len(cand) == 0:
        return np.empty((0, 3), dtype=np.int64)
    tri = np.sort(cand, axis=1)
    # distinct (emitter, triangle) pairs, then count emitters per triangle;
    # emitter is always a vertex, so pairs are (triangle, slot of emitter)
    slot = np.argmax(tri == cand[:, :1], axis=1)
    tkey = _pack(tri, len(pts))
    if tkey is None:
        key = np.unique(np.column_stack([tri, cand[:, 0]]), axis=0)
        uniq, counts = np.unique(key[:, :3], axis=0, return_counts=True)
    else:
        pair = np.unique(tkey * 3 + slot)
        ukey, counts = np.unique(pair // 3, return_counts=True)
        uniq = _unpack(ukey, len(pts))
    good = counts >= 3
    result = [uniq[good]]
    weak = uniq[~good]
    if len(weak):
        result.append(_resolve_weak(weak, uniq[good], diagram, cocircular_rtol, result))
    tris = np.sort(np.vstack(result), axis=1)
    tkey = _pack(tris, len(pts))
    tris = np.unique(tris, axis=0) if tkey is None else _unpack(np.unique(tkey), len(pts))
    return _orient_ccw(tris, pts)


def _pack(tri, n):
    """Sorted triangles as scalar int64 keys, or None when they would overflow."""
    if n ** 3 * 3 >= 2 ** 62:
        return None
    tri = tri.astype(np.int64)
    return (tri[:, 0] * n + tri[:, 1]) * n + tri[:, 2]


def _unpack(key, n):
    out = np.empty((len(key), 3), dtype=np.int64)
    out[:, 2] = key % n
    key = key // n
    out[:, 1] = key % n
    out[:, 0] = key // n
    return out


def _resolve_weak(weak, strong, diagram, rtol, result):
    """Handle triangles seen by fewer than three cells.

    They come from cells truncated by their octagon or the box (genuine
    triangles), or from cocircular point groups whose tiny Voronoi edges were
    resolved inconsistently. Cocircular groups are re-triangulated as a fan.
    """
    pts = diagram.points
    nv, lab = diagram.nv, diagram.lab
    all_tris = np.vstack([weak, strong])
    n_weak = len(weak)
    center, radius = circumcircles(all_tris, pts)
    # edge -> triangles lookup
    edge_map = {}
    for t, (a, b, c) in enumerate(all_tris):
        for e in ((a, b), (a, c), (b, c)):
            edge_map.setdefault(e, []).append(t)
    parent = list(range(len(all_tris)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in range(n_weak):
        a, b, c = all_tris[t]
        for e in ((a, b), (a, c), (b, c)):
            for u in edge_map[e]:
                if u == t:
                    continue
                tol = rtol * max(radius[t], radius[u])
                if abs(radius[t] - radius[u]) <= tol and np.hypot(*(center[t] - center[u])) <= tol:
                    parent[find(u)] = find(t)

    groups = {}
    for t in range(len(all_tris)):
        groups.setdefault(find(t), []).append(t)
    out = []
    drop_strong = set()
    for members in groups.values():
        if not any(m < n_weak for m in members):
            continue
        verts = set()
        for m in members:
            verts.update(int(v) for v in all_tris[m])
        if len(verts) >= 4:
            out.extend(_fan_patch(verts, pts))
            drop_strong.update(m - n_weak for m in members if m >= n_weak)
        else:
            a, b, c = all_tris[members[0]]
            mutual = all(
                _is_neighbor(lab, nv, u, v) and _is_neighbor(lab, nv, v, u)
                for u, v in ((a, b), (a, c), (b, c))
            )
            if mutual:
                out.append((a, b, c))
    if drop_strong:
        keep = np.ones(len(strong), dtype=bool)
        keep[list(drop_strong)] = False
        result[0] = strong[keep]
    if not out:
        return np.empty((0, 3), dtype=np.int64)
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def delaunay_from_points(points, domain, spans=None, n_opt=3.3):
    """Convenience: diagram plus triangles. ``spans`` defaults to twice the box diagonal."""
    pts = np.asarray(points, dtype=float)
    if spans is None:
        ax, bx, ay, by = domain
        spans = 2.0 * math.hypot(bx - ax, by - ay)
    diagram = compute_diagram(pts, spans, domain, n_opt)
    return diagram, extract_delaunay(diagram)


# ------------------------------------------------------------ validity ------

def triangle_valid(tris, points, grid, shape, t_ccircum=0.4):
    """Boolean mask of triangles that belong to the shape (centroid, midpoint, circumcenter tests)."""
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    pts = np.asarray(points, dtype=float)
    m = len(tris)
    valid = np.zeros(m, dtype=bool)
    if m == 0:
        return valid
    undecided = np.ones(m, dtype=bool)
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]

    # test 1: centroid
    cen = (a + b + c) / 3.0
    cc = grid.cell_index(cen)
    ccat = np.where(cc >= 0, grid.category[np.maximum(cc, 0)], OUTER)
    valid[ccat == INNER] = True
    undecided[ccat != BOUNDARY] = False
    bnd = np.flatnonzero(undecided)
    if len(bnd):
        adf = grid.adf_values(cen[bnd])
        out = adf > grid.geps[cc[bnd]]
        undecided[bnd[out]] = False

    # test 2: edge midpoints
    idx = np.flatnonzero(undecided)
    if len(idx):
        mids = np.concatenate([(a[idx] + b[idx]) / 2, (b[idx] + c[idx]) / 2, (a[idx] + c[idx]) / 2])
        mc = grid.cell_index(mids)
        mcat = np.where(mc >= 0, grid.category[np.maximum(mc, 0)], OUTER)
        inside = mcat == INNER
        unsure = mc < 0
        nb = np.flatnonzero(mcat == BOUNDARY)
        if len(nb):
            ok = grid.adf_values(mids[nb]) <= grid.geps[mc[nb]]
            inside[nb[ok]] = True
            unsure[nb[~ok]] = True
        k = len(idx)
        count = inside.reshape(3, k).sum(axis=0)
        any_unsure = unsure.reshape(3, k).any(axis=0)
        keep = count >= 2
        valid[idx[keep]] = True
        undecided[idx[keep]] = False
        reject = (~keep) & (~any_unsure)
        undecided[idx[reject]] = False

    # test 3: circumcenter distance relative to circumradius
    idx = np.flatnonzero(undecided)
    if len(idx):
        center, radius = circumcircles(tris[idx], pts)
        d = np.empty(len(idx))
        ci = grid.cell_index(center)
        in_bnd = (ci >= 0) & (grid.category[np.maximum(ci, 0)] == BOUNDARY)
        if np.any(in_bnd):
            d[in_bnd] = grid.adf_values(center[in_bnd])
        if np.any(~in_bnd):
            d[~in_bnd] = shape.evaluate(np.ascontiguousarray(center[~in_bnd]))
        valid[idx] = np.abs(d) / radius <= t_ccircum
    return valid

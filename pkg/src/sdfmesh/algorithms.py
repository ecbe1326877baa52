"""Point update rules: spring forces, Lloyd relaxation with adaptive quadrature, and the hybrid switch."""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .exceptions import DegenerateCell, EmptyTriangulation
from .grid import INNER
from .points import relative_change

DM = "dm"
CVD = "cvd"
HYBRID = "hybrid"
ALGORITHMS = (DM, CVD, HYBRID)

MAX_QUAD_LEVEL = 10
CHUNK = 64


# ------------------------------------------------------------ DistMesh ------

def unique_edges(tris):
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [0, 2]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def spring_forces(points, edges, mu_edge, k=1.0, fac_f=1.2):
    """Net repulsive spring force per point.

    Rest lengths are the edge sizing values scaled so that their quadratic
    sum matches the current edge lengths, times ``fac_f``. Only compressed
    edges (length below rest length) push.
    Returns ``(forces, rest_length, edge_force)``.
    """
    pi = points[edges[:, 0]]
    pj = points[edges[:, 1]]
    vec = pi - pj
    length = np.hypot(vec[:, 0], vec[:, 1])
    fac_mu = math.sqrt(np.sum(length**2) / np.sum(mu_edge**2))
    l0 = mu_edge * fac_f * fac_mu
    f = np.where(length < l0, k * (l0 - length), 0.0)
    push = vec * (f / length)[:, None]
    n = len(points)
    fx = np.bincount(edges[:, 0], push[:, 0], n) - np.bincount(edges[:, 1], push[:, 0], n)
    fy = np.bincount(edges[:, 0], push[:, 1], n) - np.bincount(edges[:, 1], push[:, 1], n)
    return np.column_stack([fx, fy]), l0, f


def edge_sizing(points, edges, grid, mu):
    mid = 0.5 * (points[edges[:, 0]] + points[edges[:, 1]])
    cell = grid.cell_index(mid)
    cell = np.where(cell >= 0, cell, grid.cell_index(np.clip(mid, [grid.domain[0], grid.domain[2]],
                                                              [grid.domain[1], grid.domain[3]])))
    return mu[cell]


def distmesh_step(points, tris, grid, mu, k=1.0, dt=0.2, fac_f=1.2):
    """Forward Euler step of the spring system built from the triangle edges."""
    if len(tris) == 0:
        raise EmptyTriangulation("no triangles to build springs from")
    edges = unique_edges(tris)
    mu_e = edge_sizing(points, edges, grid, mu)
    force, _, _ = spring_forces(points, edges, mu_e, k, fac_f)
    return points + dt * force


def needs_retriangulation(points, snapshot, grid):
    """True if any point drifted from its last-triangulation position by more than its threshold."""
    d = np.hypot(*(points - snapshot).T)
    cell = grid.cell_index(points)
    return bool(np.any(d > grid.t_retria[cell]))


# ----------------------------------------------------------------- CVD ------

def _longest_edge_split(tri):
    """Split triangles ``(m, 3, 2)`` at the midpoint of their longest edge."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    lab = np.hypot(*(a - b).T)
    lbc = np.hypot(*(b - c).T)
    lca = np.hypot(*(c - a).T)
    out = np.empty((2 * len(tri), 3, 2))
    for i in range(len(tri)):
        A, B, C = a[i], b[i], c[i]
        if lbc[i] >= lab[i] and lbc[i] >= lca[i]:
            A, B, C = A, B, C
        elif lca[i] >= lab[i]:
            A, B, C = B, C, A
        else:
            A, B, C = C, A, B
        M = 0.5 * (B + C)
        out[2 * i] = (A, B, M)
        out[2 * i + 1] = (A, M, C)
    return out


def _weighted_estimate(tri, density):
    q = tri.mean(axis=1)
    area = 0.5 * np.abs((tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
                        - (tri[:, 1, 1] - tri[:, 0, 1]) * (tri[:, 2, 0] - tri[:, 0, 0]))
    w = area * density(q)
    total = w.sum()
    if not total > 0:
        raise DegenerateCell("cell has zero weighted area")
    return (w[:, None] * q).sum(axis=0) / total


def cvd_centroid(vertices, generator, density, e_thres, max_level=MAX_QUAD_LEVEL):
    """Density-weighted cell centroid by adaptive one-point quadrature.

    Reference implementation; ``density`` maps ``(m, 2)`` points to weights.
    The cell is fanned into triangles from the generator and refined by
    longest-edge bisection until successive estimates differ by less than
    ``e_thres``. Returns ``(centroid, level)``.
    """
    v = np.asarray(vertices, dtype=float)
    g = np.asarray(generator, dtype=float)
    n = len(v)
    tri = np.stack([np.broadcast_to(g, (n, 2)), v, np.roll(v, -1, axis=0)], axis=1)
    prev = g
    cur = _weighted_estimate(tri, density)
    level = 1
    while np.hypot(*(cur - prev)) >= e_thres and level < max_level:
        tri = _longest_edge_split(tri)
        prev, cur = cur, _weighted_estimate(tri, density)
        level += 1
    return cur, level


@njit(cache=True)
def _rho_at(x, y, rho, ax, ay, dx, dy, nx, ny):
    ix = min(max(int(math.floor((x - ax) / dx)), 0), nx - 1)
    iy = min(max(int(math.floor((y - ay) / dy)), 0), ny - 1)
    return rho[iy * nx + ix]


@njit(cache=True)
def _estimate(buf, m, rho, ax, ay, dx, dy, nx, ny):
    sw = 0.0
    sx = 0.0
    sy = 0.0
    for t in range(m):
        qx = (buf[t, 0] + buf[t, 2] + buf[t, 4]) / 3.0
        qy = (buf[t, 1] + buf[t, 3] + buf[t, 5]) / 3.0
        area = 0.5 * abs((buf[t, 2] - buf[t, 0]) * (buf[t, 5] - buf[t, 1])
                         - (buf[t, 3] - buf[t, 1]) * (buf[t, 4] - buf[t, 0]))
        w = area * _rho_at(qx, qy, rho, ax, ay, dx, dy, nx, ny)
        sw += w
        sx += w * qx
        sy += w * qy
    return sw, sx, sy


@njit(cache=True)
def _split_all(buf, m):
    for t in range(m):
        ax_ = buf[t, 0]
        ay_ = buf[t, 1]
        bx_ = buf[t, 2]
        by_ = buf[t, 3]
        cx_ = buf[t, 4]
        cy_ = buf[t, 5]
        lab = (ax_ - bx_) ** 2 + (ay_ - by_) ** 2
        lbc = (bx_ - cx_) ** 2 + (by_ - cy_) ** 2
        lca = (cx_ - ax_) ** 2 + (cy_ - ay_) ** 2
        if lbc >= lab and lbc >= lca:
            A0, A1, B0, B1, C0, C1 = ax_, ay_, bx_, by_, cx_, cy_
        elif lca >= lab:
            A0, A1, B0, B1, C0, C1 = bx_, by_, cx_, cy_, ax_, ay_
        else:
            A0, A1, B0, B1, C0, C1 = cx_, cy_, ax_, ay_, bx_, by_
        M0 = 0.5 * (B0 + C0)
        M1 = 0.5 * (B1 + C1)
        buf[t, 0] = A0
        buf[t, 1] = A1
        buf[t, 2] = B0
        buf[t, 3] = B1
        buf[t, 4] = M0
        buf[t, 5] = M1
        buf[m + t, 0] = A0
        buf[m + t, 1] = A1
        buf[m + t, 2] = M0
        buf[m + t, 3] = M1
        buf[m + t, 4] = C0
        buf[m + t, 5] = C1
    return 2 * m


@njit(parallel=True, cache=True)
def _cvd_kernel(pts, nv, vx, vy, e_scale, rho, ax, ay, dx, dy, nx, ny, max_level, out, levels):
    n = pts.shape[0]
    cap = vx.shape[1] * (1 << (max_level - 1))
    nchunks = (n + CHUNK - 1) // CHUNK
    for ch in prange(nchunks):
        buf = np.empty((cap, 6))
        for i in range(ch * CHUNK, min(n, (ch + 1) * CHUNK)):
            gx = pts[i, 0]
            gy = pts[i, 1]
            m = nv[i]
            area = 0.0
            for k in range(m):
                k2 = (k + 1) % m
                buf[k, 0] = gx
                buf[k, 1] = gy
                buf[k, 2] = vx[i, k]
                buf[k, 3] = vy[i, k]
                buf[k, 4] = vx[i, k2]
                buf[k, 5] = vy[i, k2]
                area += vx[i, k] * vy[i, k2] - vx[i, k2] * vy[i, k]
            area *= 0.5
            e_thres = math.sqrt(max(area, 0.0)) * e_scale[i]
            sw, sx, sy = _estimate(buf, m, rho, ax, ay, dx, dy, nx, ny)
            if not sw > 0.0:
                out[i, 0] = gx
                out[i, 1] = gy
                levels[i] = -1
                continue
            cx = sx / sw
            cy = sy / sw
            px = gx
            py = gy
            level = 1
            while math.sqrt((cx - px) ** 2 + (cy - py) ** 2) >= e_thres and level < max_level:
                m = _split_all(buf, m)
                px = cx
                py = cy
                sw, sx, sy = _estimate(buf, m, rho, ax, ay, dx, dy, nx, ny)
                cx = sx / sw
                cy = sy / sw
                level += 1
            out[i, 0] = cx
            out[i, 1] = cy
            levels[i] = level


def cvd_step(points, diagram, grid, rho, prev_move, fac_end=0.001, max_level=MAX_QUAD_LEVEL):
    """Move every generator to the density-weighted centroid of its cell.

    The quadrature tolerance for a cell is ``sqrt(area) * max(d_prev / h, fac_end)``
    with ``d_prev`` the point's previous displacement.
    Returns ``(proposals, levels)``.
    """
    pts = np.ascontiguousarray(points, dtype=float)
    cell = grid.cell_index(pts)
    h = grid.h[cell]
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.maximum(np.asarray(prev_move, dtype=float) / h, fac_end)
    scale = np.where(np.isnan(scale), np.inf, scale)
    out = np.empty_like(pts)
    levels = np.empty(len(pts), dtype=np.int64)
    ax, _, ay, _ = grid.domain
    _cvd_kernel(pts, diagram.nv, diagram.vx, diagram.vy, np.ascontiguousarray(scale),
                np.ascontiguousarray(rho, dtype=float), ax, ay, grid.dx, grid.dy, grid.nx,
                grid.ny, int(max_level), out, levels)
    return out, levels


def lloyd_energy(points, samples, weights, area):
    """Monte Carlo estimate of sum_i int_{V_i} rho |x - x_i|^2 from uniform samples."""
    from scipy.spatial import cKDTree

    d, _ = cKDTree(points).query(samples)
    return float(area * np.mean(weights * d**2))


# ------------------------------------------------------- control logic ------

def hybrid_decide(phase, history, n_current, n_total, t_switch=0.0015):
    """Phase for the next iteration; switches from DistMesh to CVD once and stays there."""
    if phase == CVD:
        return CVD
    if n_current != n_total or len(history) < 2:
        return DM
    if relative_change(history[-1][0], history[-2][0]) < t_switch:
        return CVD
    return DM


def check_termination(history, n_current, n_total, prev_move, category, t_end,
                      t_end_quality=0.001, t_end_alpha_max=0.005):
    """Return ``(stop, reason)``; ``t_end`` is the per-point movement threshold."""
    if n_current == n_total and len(history) >= 2:
        (a1, b1, m1), (a0, b0, m0) = history[-1], history[-2]
        if (relative_change(a1, a0) < t_end_quality and relative_change(b1, b0) < t_end_quality
                and relative_change(m1, m0) < t_end_alpha_max):
            return True, "quality"
    prev_move = np.asarray(prev_move)
    inner = np.asarray(category) == INNER
    sel = inner if np.any(inner) else np.ones(len(prev_move), dtype=bool)
    if len(prev_move) and np.all(prev_move[sel] < np.asarray(t_end)[sel]):
        return True, "movement"
    return False, ""

"""Turn proposed point positions into accepted ones.

A proposed move is shortened to the local movement threshold, pulled back out
of outer cells, classified with the ADF, and finally repaired onto the
boundary when it ended up outside: sphere tracing for points that started in
the interior, damped Newton projection for points that started on the
boundary. Anything that cannot be repaired stays where it was.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NewtonDiverged, NoConvergence
from .grid import BOUNDARY, INNER, MACHINE_EPS, OUTER

SPHERE_TRACE_MAX_STEPS = 100
BISECTION_STEPS = 40


def sphere_trace_batch(p_old, p_new, shape, tol, max_steps=SPHERE_TRACE_MAX_STEPS):
    """March from ``p_old`` towards ``p_new`` by ``|sdf|`` until ``|sdf| <= tol``.

    Returns ``(points, ok)``; every returned point lies on its segment.
    """
    p_old = np.asarray(p_old, dtype=float).reshape(-1, 2)
    p_new = np.asarray(p_new, dtype=float).reshape(-1, 2)
    n = len(p_old)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (n,))
    seg = p_new - p_old
    length = np.hypot(seg[:, 0], seg[:, 1])
    t = np.zeros(n)
    ok = np.zeros(n, dtype=bool)
    active = np.arange(n)
    for _ in range(max_steps + 1):
        if len(active) == 0:
            break
        cur = p_old[active] + t[active, None] * seg[active]
        r = np.abs(shape.evaluate(np.ascontiguousarray(cur)))
        hit = r <= tol[active]
        ok[active[hit]] = True
        active = active[~hit]
        r = r[~hit]
        if len(active) == 0:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(length[active] > 0, r / length[active], np.inf)
        stuck = t[active] >= 1.0
        t[active] = np.minimum(t[active] + dt, 1.0)
        # already sitting at p_new and still not within tolerance
        active = active[~stuck]
    out = p_old + t[:, None] * seg
    return out, ok


def sphere_trace(p_old, p_new, shape, tol, max_steps=SPHERE_TRACE_MAX_STEPS):
    """Single-segment sphere tracing; raises NoConvergence on failure."""
    pts, ok = sphere_trace_batch(np.asarray(p_old, float)[None], np.asarray(p_new, float)[None],
                                 shape, tol, max_steps)
    if not ok[0]:
        raise NoConvergence("sphere tracing did not reach the boundary")
    return pts[0]


def _derivatives(shape, p, h1, h2):
    """f, f_x, f_y with step ``h1`` and f_xx, f_yy, f_xy with step ``h2``."""
    n = len(p)
    offs1 = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    offs2 = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]],
                     dtype=float)
    s1 = p[:, None, :] + offs1[None] * h1[:, None, None]
    s2 = p[:, None, :] + offs2[None] * h2[:, None, None]
    stencil = np.concatenate([s1, s2], axis=1).reshape(-1, 2)
    v = shape.evaluate(np.ascontiguousarray(stencil)).reshape(n, 13)
    f = v[:, 0]
    fx = (v[:, 1] - v[:, 2]) / (2 * h1)
    fy = (v[:, 3] - v[:, 4]) / (2 * h1)
    h2sq = h2 * h2
    fxx = (v[:, 5] - 2 * f + v[:, 6]) / h2sq
    fyy = (v[:, 7] - 2 * f + v[:, 8]) / h2sq
    fxy = (v[:, 9] - v[:, 10] - v[:, 11] + v[:, 12]) / (4 * h2sq)
    return f, fx, fy, fxx, fyy, fxy


def newton_project_batch(p_new, shape, geps, deps, damping=1.0, max_steps=10):
    """Project points onto the zero level set by damped Newton iterations.

    Solves ``sdf(p) = 0`` together with ``(p - p_new) x grad sdf(p) = 0``.
    Returns ``(points, ok)`` where ``ok`` marks results with ``|sdf| <= geps``.
    """
    p_new = np.asarray(p_new, dtype=float).reshape(-1, 2)
    n = len(p_new)
    geps = np.broadcast_to(np.asarray(geps, dtype=float), (n,))
    deps = np.broadcast_to(np.asarray(deps, dtype=float), (n,))
    # second differences need a wider step to stay clear of cancellation
    h2 = deps * MACHINE_EPS ** -0.25
    p = p_new.copy()
    f0 = shape.evaluate(np.ascontiguousarray(p))
    ok = np.abs(f0) <= geps
    active = np.flatnonzero(~ok)
    for _ in range(max_steps):
        if len(active) == 0:
            break
        q = p[active]
        f, fx, fy, fxx, fyy, fxy = _derivatives(shape, q, deps[active], h2[active])
        rx = q[:, 0] - p_new[active, 0]
        ry = q[:, 1] - p_new[active, 1]
        l1 = f
        l2 = rx * fy - ry * fx
        j11, j12 = fx, fy
        j21 = fy + rx * fxy - ry * fxx
        j22 = -fx - ry * fxy + rx * fyy
        det = j11 * j22 - j12 * j21
        good = np.isfinite(det) & (np.abs(det) > 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            sx = (j22 * l1 - j12 * l2) / det
            sy = (-j21 * l1 + j11 * l2) / det
        q_next = q - damping * np.column_stack([sx, sy])
        good &= np.isfinite(q_next).all(axis=1)
        q_next[~good] = q[~good]
        p[active] = q_next
        fn = np.full(len(active), np.inf)
        if np.any(good):
            fn[good] = shape.evaluate(np.ascontiguousarray(q_next[good]))
        done = np.abs(fn) <= geps[active]
        ok[active[done]] = True
        active = active[~done & good]
    return p, ok


def newton_project(p_new, shape, geps, deps, damping=1.0, max_steps=10):
    """Single-point projection; raises NewtonDiverged on failure."""
    pts, ok = newton_project_batch(np.asarray(p_new, float)[None], shape, geps, deps, damping,
                                   max_steps)
    if not ok[0]:
        raise NewtonDiverged("Newton projection did not reach the boundary")
    return pts[0]


def _pull_back_from_outer(p_old, p_new, grid):
    """Largest prefix of each move that ends in a non-outer cell (bisection)."""
    lo = np.zeros(len(p_old))
    hi = np.ones(len(p_old))
    seg = p_new - p_old
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        cat = grid.point_category(p_old + mid[:, None] * seg)
        inside = cat != OUTER
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return p_old + lo[:, None] * seg


def treat_positions(p_old, cat_old, p_new, grid, shape, damping=1.0, newton_steps=10,
                    frozen=None):
    """Accepted positions and categories for a batch of proposed moves.

    ``cat_old`` uses the grid codes (INNER / BOUNDARY). Points flagged in
    ``frozen`` never move.
    """
    p_old = np.asarray(p_old, dtype=float).reshape(-1, 2)
    p_new = np.array(p_new, dtype=float).reshape(-1, 2)
    cat_old = np.asarray(cat_old, dtype=np.int8)
    n = len(p_old)
    if frozen is not None:
        p_new[frozen] = p_old[frozen]

    # clamp the move length
    c_old = grid.cell_index(p_old)
    limit = grid.t_pt[c_old]
    move = p_new - p_old
    length = np.hypot(move[:, 0], move[:, 1])
    long_move = length > limit
    if np.any(long_move):
        p_new[long_move] = p_old[long_move] + move[long_move] * (limit[long_move] / length[long_move])[:, None]

    # no landing in outer cells
    outer = grid.point_category(p_new) == OUTER
    if np.any(outer):
        p_new[outer] = _pull_back_from_outer(p_old[outer], p_new[outer], grid)

    p_final = p_new.copy()
    cat_new = np.full(n, INNER, dtype=np.int8)
    cell = grid.cell_index(p_new)
    ccat = grid.category[cell]
    bnd = np.flatnonzero(ccat == BOUNDARY)
    repair = np.zeros(0, dtype=np.int64)
    if len(bnd):
        a = grid.adf_values(p_new[bnd])
        g = grid.geps[cell[bnd]]
        inside = a <= g
        cat_new[bnd[inside & (np.abs(a) <= g)]] = BOUNDARY
        repair = bnd[~inside]

    if len(repair):
        geps_r = grid.geps[cell[repair]]
        from_inner = cat_old[repair] == INNER
        fixed = np.empty((len(repair), 2))
        ok = np.zeros(len(repair), dtype=bool)
        ii = np.flatnonzero(from_inner)
        if len(ii):
            fixed[ii], ok[ii] = sphere_trace_batch(p_old[repair[ii]], p_new[repair[ii]], shape,
                                                   geps_r[ii])
        bb = np.flatnonzero(~from_inner)
        if len(bb):
            fixed[bb], ok[bb] = newton_project_batch(p_new[repair[bb]], shape, geps_r[bb],
                                                     grid.deps[cell[repair[bb]]], damping,
                                                     newton_steps)
        # the repaired point must itself classify as usable
        cat_fix = np.full(len(repair), OUTER, dtype=np.int8)
        if np.any(ok):
            cat_fix[ok] = grid.classify(fixed[ok])
        ok &= cat_fix != OUTER
        p_final[repair[ok]] = fixed[ok]
        cat_new[repair[ok]] = cat_fix[ok]
        failed = repair[~ok]
        p_final[failed] = p_old[failed]
        cat_new[failed] = cat_old[failed]

    if frozen is not None:
        p_final[frozen] = p_old[frozen]
        cat_new[frozen] = cat_old[frozen]
    return p_final, cat_new


def treat_new_position(p_old, cat_old, p_new, grid, shape, damping=1.0, newton_steps=10):
    """Single-point form of :func:`treat_positions`."""
    pf, cf = treat_positions(np.asarray(p_old, float)[None], np.array([cat_old], dtype=np.int8),
                             np.asarray(p_new, float)[None], grid, shape, damping, newton_steps)
    return pf[0], int(cf[0])

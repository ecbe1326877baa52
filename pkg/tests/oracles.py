"""Slow, independent reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def clip_polygon(poly, a, b, c):
    """Keep the part of ``poly`` with ``a*x + b*y <= c`` (Sutherland-Hodgman)."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def brute_cell(i, points, span, domain):
    """Octagon around point ``i``, cut by the box and by every bisector."""
    px, py = points[i]
    ang = np.deg2rad(22.5 + 45.0 * np.arange(8))
    poly = [(px + span * math.cos(t), py + span * math.sin(t)) for t in ang]
    ax, bx, ay, by = domain
    for a, b, c in [(-1, 0, -ax), (1, 0, bx), (0, -1, -ay), (0, 1, by)]:
        poly = clip_polygon(poly, a, b, c)
    for j, (qx, qy) in enumerate(points):
        if j == i:
            continue
        a, b = qx - px, qy - py
        c = 0.5 * (qx * qx + qy * qy - px * px - py * py)
        poly = clip_polygon(poly, a, b, c)
    return dedupe(np.array(poly).reshape(-1, 2))


def dedupe(v, tol=1e-12):
    keep = []
    for p in v:
        if not any(math.dist(p, q) <= tol for q in keep):
            keep.append(p)
    return np.array(keep).reshape(-1, 2)


def vertex_sets_match(a, b, tol):
    """Every vertex of ``a`` has a partner in ``b`` within ``tol`` and vice versa."""
    if len(a) == 0 or len(b) == 0:
        return len(a) == len(b)
    d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    return bool(d.min(axis=1).max() <= tol and d.min(axis=0).max() <= tol)


def brute_delaunay(points, domain, rtol=1e-9):
    """Triangles with an empty circumcircle whose circumcenter lies in ``domain``.

    Exhaustive over all triples; returns a sorted ``(m, 3)`` array of sorted rows.
    """
    ax, bx, ay, by = domain
    n = len(points)
    found = []
    for i, j, k in itertools.combinations(range(n), 3):
        a, b, c = points[i], points[j], points[k]
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-14:
            continue
        a2, b2, c2 = a @ a, b @ b, c @ c
        ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d
        uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d
        if not (ax <= ux <= bx and ay <= uy <= by):
            continue
        r = math.hypot(a[0] - ux, a[1] - uy)
        dist = np.hypot(points[:, 0] - ux, points[:, 1] - uy)
        dist[[i, j, k]] = np.inf
        if np.all(dist >= r * (1 - rtol)):
            found.append((i, j, k))
    return np.array(sorted(found), dtype=np.int64).reshape(-1, 3)


def canonical(tris):
    t = np.sort(np.asarray(tris, dtype=np.int64).reshape(-1, 3), axis=1)
    return t[np.lexsort(t.T[::-1])]

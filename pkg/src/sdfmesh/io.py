"""Mesh, SVG and statistics files."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .pipeline import quality_summary

SUMMARY_COLUMNS = [
    "count", "alpha_median", "alpha_mean", "alpha_max", "alpha_std",
    "beta_median", "beta_mean", "beta_max", "beta_std", "pct_alpha_lt_1_2", "pct_alpha_lt_2",
]


def _num(v):
    return repr(float(v))


def format_mesh(points, category, triangles) -> str:
    """Header ``N_points N_triangles``, then ``x y category`` rows, then ``i j k`` rows."""
    points = np.asarray(points, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    lines = [f"{len(points)} {len(triangles)}"]
    lines.extend(f"{_num(x)} {_num(y)} {int(c)}" for (x, y), c in zip(points, category))
    lines.extend(f"{i} {j} {k}" for i, j, k in triangles)
    return "\n".join(lines) + "\n"


def write_mesh(path, points, category, triangles):
    try:
        Path(path).write_text(format_mesh(points, category, triangles))
    except OSError as exc:
        raise OSError(f"cannot write mesh file {path}: {exc}") from exc


def read_mesh(path):
    """Inverse of :func:`write_mesh`: ``(points, category, triangles)``."""
    lines = Path(path).read_text().splitlines()
    n_pts, n_tri = (int(v) for v in lines[0].split())
    pts = np.empty((n_pts, 2))
    cat = np.empty(n_pts, dtype=np.int8)
    for k in range(n_pts):
        x, y, c = lines[1 + k].split()
        pts[k] = float(x), float(y)
        cat[k] = int(c)
    tris = np.array([[int(v) for v in lines[1 + n_pts + k].split()] for k in range(n_tri)],
                    dtype=np.int64).reshape(-1, 3)
    return pts, cat, tris


def format_svg(points, triangles, domain, contour=None, width=800):
    """Stroke-only SVG of the triangles; y axis points up as in the mesh coordinates."""
    ax, bx, ay, by = domain
    scale = width / (bx - ax)
    height = int(math.ceil((by - ay) * scale))

    def xy(p):
        return f"{(p[0] - ax) * scale:.3f},{(by - p[1]) * scale:.3f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<g fill="none" stroke="black" stroke-width="0.5">',
    ]
    points = np.asarray(points, dtype=float)
    for t in np.asarray(triangles, dtype=np.int64).reshape(-1, 3):
        out.append(f'<polygon points="{xy(points[t[0]])} {xy(points[t[1]])} {xy(points[t[2]])}"/>')
    out.append("</g>")
    if contour is not None and len(contour):
        out.append('<g fill="none" stroke="red" stroke-width="1">')
        for x1, y1, x2, y2 in np.asarray(contour, dtype=float):
            a = xy((x1, y1)).split(",")
            b = xy((x2, y2)).split(",")
            out.append(f'<line x1="{a[0]}" y1="{a[1]}" x2="{b[0]}" y2="{b[1]}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, points, triangles, domain, contour=None):
    try:
        Path(path).write_text(format_svg(points, triangles, domain, contour))
    except OSError as exc:
        raise OSError(f"cannot write SVG file {path}: {exc}") from exc


def format_stats(history, alpha, beta) -> str:
    lines = ["# iteration half_mean_alpha half_mean_beta max_alpha"]
    for k, (a, b, m) in enumerate(history):
        lines.append(f"{k} {_num(a)} {_num(b)} {_num(m)}")
    summary = quality_summary(alpha, beta)
    lines.append("# summary")
    lines.append(" ".join(SUMMARY_COLUMNS))
    lines.append(" ".join(str(summary[c]) if c == "count" else _num(summary[c])
                          for c in SUMMARY_COLUMNS))
    return "\n".join(lines) + "\n"


def read_stats(path):
    """Parse a statistics file into ``(history, summary)``."""
    lines = Path(path).read_text().splitlines()
    k = lines.index("# summary")
    history = [tuple(float(v) for v in ln.split()[1:]) for ln in lines[1:k]]
    cols = lines[k + 1].split()
    vals = lines[k + 2].split()
    summary = {c: (int(v) if c == "count" else float(v)) for c, v in zip(cols, vals)}
    return history, summary


def write_outputs(result, out_dir, prefix="mesh"):
    """Write ``<prefix>.txt``, ``<prefix>.svg`` and ``<prefix>_stats.txt``; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    mesh_path = out / f"{prefix}.txt"
    svg_path = out / f"{prefix}.svg"
    stats_path = out / f"{prefix}_stats.txt"
    write_mesh(mesh_path, result.points, result.category, result.triangles)
    contour = result.shape.contour_segments() if result.shape is not None else None
    write_svg(svg_path, result.points, result.triangles, result.grid.domain, contour)
    try:
        stats_path.write_text(format_stats(result.history, result.alpha, result.beta))
    except OSError as exc:
        raise OSError(f"cannot write statistics file {stats_path}: {exc}") from exc
    return {"mesh": mesh_path, "svg": svg_path, "stats": stats_path}

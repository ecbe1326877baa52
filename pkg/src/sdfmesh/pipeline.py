"""End-to-end meshing run: setup, iteration loop and final mesh."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from . import algorithms as alg
from .config import Config, parse_sizing, validate_config
from .exceptions import EmptyTriangulation, ValidationError
from .grid import OUTER, build_adf, build_grid, compute_adaptive_quantities
from .points import MeshState, expected_n_init, init_points, maybe_add_points, mesh_quality, quality_stats
from .sizing import SizingModel, automatic_sizing, constant_sizing, field_sizing
from .treatment import treat_positions
from .voronoi import compute_diagram, extract_delaunay, triangle_valid

logger = logging.getLogger(__name__)


@dataclass
class MeshResult:
    points: np.ndarray
    category: np.ndarray
    triangles: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    history: list
    n_iter: int
    termination_reason: str
    phases: list = field(default_factory=list)
    n_triangulations: int = 0
    config: Config | None = None
    shape: object = None
    grid: object = None
    sizing: SizingModel | None = None
    timings: dict = field(default_factory=dict)

    def summary(self):
        """Final quality summary with the columns of the report file."""
        return quality_summary(self.alpha, self.beta)


def quality_summary(alpha, beta):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    n = len(alpha)
    if n == 0:
        nan = float("nan")
        return {"count": 0, "alpha_median": nan, "alpha_mean": nan, "alpha_max": nan,
                "alpha_std": nan, "beta_median": nan, "beta_mean": nan, "beta_max": nan,
                "beta_std": nan, "pct_alpha_lt_1_2": nan, "pct_alpha_lt_2": nan}
    return {
        "count": n,
        "alpha_median": float(np.median(alpha)),
        "alpha_mean": float(np.mean(alpha)),
        "alpha_max": float(np.max(alpha)),
        "alpha_std": float(np.std(alpha)),
        "beta_median": float(np.median(beta)),
        "beta_mean": float(np.mean(beta)),
        "beta_max": float(np.max(beta)),
        "beta_std": float(np.std(beta)),
        "pct_alpha_lt_1_2": float(100.0 * np.mean(alpha < 1.2)),
        "pct_alpha_lt_2": float(100.0 * np.mean(alpha < 2.0)),
    }


def set_threads(n):
    """Clamp to the pool size numba was started with and apply."""
    n = int(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    numba.set_num_threads(n)
    return n


class Mesher:
    """Holds the per-run objects; :meth:`run` executes the whole loop."""

    def __init__(self, cfg: Config, shape=None, sizing=None, snapshot=None):
        validate_config(cfg)
        self.cfg = cfg
        self.shape = shape if shape is not None else cfg.build_shape()
        self.user_sizing = sizing
        self.snapshot = snapshot
        self.rng = np.random.default_rng(cfg.seed)
        self.timings = {}

    # ------------------------------------------------------------ setup ----
    def _sizing_model(self, grid):
        cfg = self.cfg
        if self.user_sizing is not None:
            return field_sizing(grid, self.user_sizing)
        kind, params = parse_sizing(cfg.sizing, cfg.base_dir, cfg.domain)
        if kind == "constant":
            return constant_sizing(grid)
        if kind == "linear":
            a, b, sh = params["A"], params["B"], params["shape"]
            return field_sizing(grid, lambda p: a + b * sh.evaluate(np.ascontiguousarray(p)))
        return automatic_sizing(self.shape, grid, params.get("K", cfg.K), cfg.fac_s, cfg.n_grid,
                                cfg.n_nei_thres, cfg.fac_nei, cfg.fac_geps, self.rng)

    def setup(self):
        cfg = self.cfg
        t0 = time.perf_counter()
        grid = build_grid(self.shape, cfg.n_total, cfg.domain, cfg.n_opt, cfg.fac_grid)
        if not np.any(grid.category != OUTER):
            raise ValidationError("shape does not intersect the domain")
        model = self._sizing_model(grid)
        self.timings["sizing"] = time.perf_counter() - t0
        grid.select_boundary_cells(cfg.eta)
        valid = grid.valid
        if not np.any(valid):
            raise ValidationError("no cells available for points")
        rho_norm = model.rho / np.sum(model.rho[valid])
        n_fixed = len(cfg.fixed_points)
        n_init = expected_n_init(cfg.n_total, cfg.resolved_fac_init())
        n_init_free = max(3, n_init - n_fixed)
        compute_adaptive_quantities(grid, rho_norm, n_init_free + n_fixed, cfg.fac_retria,
                                    cfg.fac_end, cfg.fac_pt, cfg.fac_geps)
        e_tol = cfg.fac_etol_adf * grid.geps * math.sqrt((n_init_free + n_fixed) / cfg.n_total)
        build_adf(grid, self.shape, np.where(np.isfinite(e_tol), e_tol, 0.0), cfg.t_depth_adf)
        pts, cat = init_points(grid, rho_norm, n_init_free, self.shape, self.rng, cfg.damping,
                               cfg.t_newton_ct)
        frozen = np.zeros(len(pts), dtype=bool)
        if n_fixed:
            fp = np.array(cfg.fixed_points, dtype=float).reshape(-1, 2)
            fcat = grid.classify(fp)
            if np.any(fcat == OUTER):
                raise ValidationError("fixed points must lie inside the shape or on its boundary")
            pts = np.vstack([pts, fp])
            cat = np.concatenate([cat, fcat])
            frozen = np.concatenate([frozen, np.ones(n_fixed, dtype=bool)])
        self.grid = grid
        self.model = model
        self.state = MeshState(points=pts, category=cat, n_total=max(cfg.n_total, len(pts)),
                               n_init=len(pts), frozen=frozen)
        self.timings["setup"] = time.perf_counter() - t0
        logger.info("grid %dx%d, %d initial points of %d", grid.nx, grid.ny, len(pts), cfg.n_total)

    # ------------------------------------------------------- primitives ----
    def triangulate(self, points):
        grid = self.grid
        spans = self.cfg.fac_voro_bound * grid.h[grid.cell_index(points)]
        diagram = compute_diagram(points, spans, grid.domain, self.cfg.n_opt)
        tris = extract_delaunay(diagram)
        ok = triangle_valid(tris, points, grid, self.shape, self.cfg.t_tria_ccircum)
        return diagram, tris[ok]

    def _emit(self, iteration, tris):
        if self.snapshot is not None:
            s = self.state
            self.snapshot(iteration, s.points.copy(), s.category.copy(), tris.copy())

    # -------------------------------------------------------------- loop ----
    def run(self) -> MeshResult:
        cfg = self.cfg
        set_threads(cfg.threads)
        if not hasattr(self, "state"):
            self.setup()
        grid, s = self.grid, self.state
        rho = self.model.rho
        mu = self.model.mu
        phase = alg.CVD if cfg.algorithm == alg.CVD else alg.DM
        phases = []
        need_tri = True
        diagram = None
        tris = None
        n_tri = 0
        reason = "max_iter"
        t_loop = time.perf_counter()
        it = 0
        while True:
            if cfg.algorithm == alg.HYBRID:
                phase = alg.hybrid_decide(phase, s.history, s.n_current, s.n_total,
                                          cfg.t_switch_quality)
            if need_tri or phase == alg.CVD:
                diagram, tris = self.triangulate(s.points)
                s.snapshot = s.points.copy()
                need_tri = False
                n_tri += 1
            if len(tris) == 0:
                raise EmptyTriangulation(f"no valid triangles at iteration {it}")
            s.triangles = tris
            s.history.append(quality_stats(s.points, tris))
            if it == 0 and cfg.output_interval == -1:
                self._emit(it, tris)
            elif cfg.output_interval > 0 and it % cfg.output_interval == 0:
                self._emit(it, tris)

            if maybe_add_points(s, grid, cfg.fac_add, cfg.t_add_quality):
                need_tri = True
                it += 1
                if it >= cfg.max_iter:
                    break
                continue
            stop, why = alg.check_termination(s.history, s.n_current, s.n_total, s.prev_move,
                                              s.category, grid.t_end[grid.cell_index(s.points)],
                                              cfg.t_end_quality, cfg.t_end_alpha_max)
            if stop:
                reason = why
                break
            if it >= cfg.max_iter:
                break

            if phase == alg.CVD:
                proposal, _ = alg.cvd_step(s.points, diagram, grid, rho, s.prev_move, cfg.fac_end)
            else:
                proposal = alg.distmesh_step(s.points, tris, grid, mu, cfg.k_spring, cfg.dt,
                                             cfg.fac_f)
            phases.append(phase)
            new_pts, new_cat = treat_positions(s.points, s.category, proposal, grid, self.shape,
                                               cfg.damping, cfg.t_newton_ct, s.frozen)
            s.prev_move = np.hypot(*(new_pts - s.points).T)
            s.points = new_pts
            s.category = new_cat
            if phase == alg.DM:
                need_tri = alg.needs_retriangulation(s.points, s.snapshot, grid)
            it += 1
        self.timings["loop"] = time.perf_counter() - t_loop

        _, final = self.triangulate(s.points)
        s.triangles = final
        if cfg.output_interval == -1:
            self._emit(it, final)
        alpha, beta = mesh_quality(s.points, final)
        s.iteration = it
        logger.info("finished after %d iterations (%s), %d points, %d triangles", it, reason,
                    s.n_current, len(final))
        return MeshResult(points=s.points, category=s.category, triangles=final, alpha=alpha,
                          beta=beta, history=list(s.history), n_iter=it,
                          termination_reason=reason, phases=phases, n_triangulations=n_tri,
                          config=cfg, shape=self.shape, grid=grid, sizing=self.model,
                          timings=dict(self.timings))


def run_pipeline(cfg: Config, shape=None, sizing=None, snapshot=None) -> MeshResult:
    """Mesh the configured shape.

    ``shape`` overrides the shape expression, ``sizing`` is an optional
    callable ``mu(pts)`` that replaces the configured sizing, and ``snapshot``
    is called as ``snapshot(iteration, points, category, triangles)`` whenever
    the output interval asks for intermediate meshes.
    """
    return Mesher(cfg, shape=shape, sizing=sizing, snapshot=snapshot).run()

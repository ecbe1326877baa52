import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sdfmesh.exceptions import NewtonDiverged, NoConvergence
from sdfmesh.grid import BOUNDARY, INNER, OUTER, build_adf, build_grid, compute_adaptive_quantities
from sdfmesh.sdf import Circle, Rectangle
from sdfmesh.treatment import (newton_project, newton_project_batch, sphere_trace,
                               sphere_trace_batch, treat_new_position, treat_positions)


def first_crossing(shape, a, b, steps=60):
    """Parameter of the inside-to-outside crossing on segment ``a -> b`` by bisection."""
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if shape(a + mid * (b - a)) < 0:
            lo = mid
        else:
            hi = mid
    return lo


class TestSphereTrace:
    def test_circle_example(self):
        q = sphere_trace((0.5, 0.5), (0.7, 0.5), Circle((0.5, 0.5), 0.1), 1e-9)
        assert np.allclose(q, (0.6, 0.5), atol=1e-9)

    def test_no_crossing(self):
        with pytest.raises(NoConvergence):
            sphere_trace((0.5, 0.5), (0.55, 0.5), Circle((0.5, 0.5), 0.1), 1e-9)

    @given(st.integers(0, 2**31 - 1))
    def test_square_against_bisection(self, seed):
        r = np.random.default_rng(seed)
        sq = Rectangle(0.2, 0.8, 0.2, 0.8)
        a = r.uniform(0.25, 0.75, (20, 2))
        ang = r.uniform(0, 2 * np.pi, 20)
        b = a + 0.8 * np.column_stack([np.cos(ang), np.sin(ang)])
        tol = 1e-6
        hit, ok = sphere_trace_batch(a, b, sq, tol)
        assert ok.all()
        for k in range(20):
            seg = b[k] - a[k]
            t = np.dot(hit[k] - a[k], seg) / np.dot(seg, seg)
            # the hit lies on the segment and never past the first crossing
            assert np.allclose(hit[k], a[k] + t * seg, atol=1e-12)
            assert t <= first_crossing(sq, a[k], b[k]) + 1e-12
            assert -tol <= sq(hit[k]) <= tol


class TestNewton:
    def test_projects_radially(self):
        q = newton_project((0.65, 0.5), Circle((0.5, 0.5), 0.1), 1e-10, 1e-6)
        assert np.allclose(q, (0.6, 0.5), atol=1e-9)

    def test_already_on_boundary(self):
        p = np.array([[0.6, 0.5]])
        q, ok = newton_project_batch(p, Circle((0.5, 0.5), 0.1), 1e-10, 1e-6, max_steps=0)
        assert ok[0] and np.array_equal(q, p)

    @given(st.floats(0, 2 * np.pi), st.floats(-0.02, 0.02))
    def test_circle_projection_is_closest_point(self, ang, off):
        c = Circle((0.5, 0.5), 0.2)
        p = (0.5 + (0.2 + off) * math.cos(ang), 0.5 + (0.2 + off) * math.sin(ang))
        q = newton_project(p, c, 1e-10, 1e-6)
        assert np.allclose(q, (0.5 + 0.2 * math.cos(ang), 0.5 + 0.2 * math.sin(ang)), atol=1e-8)

    def test_failure(self):
        with pytest.raises(NewtonDiverged):
            newton_project((0.9, 0.5), Circle((0.5, 0.5), 0.1), 1e-14, 1e-6, max_steps=0)


def circle_setup(n_total=2000):
    shape = Circle((0.5, 0.5), 0.4)
    g = build_grid(shape, n_total, (0, 1, 0, 1))
    g.select_boundary_cells(0.5)
    rho = np.where(g.valid, 1.0, 0.0)
    compute_adaptive_quantities(g, rho / rho.sum(), n_total)
    build_adf(g, shape, 0.1 * g.geps)
    return shape, g


class TestTreatment:
    def test_clamp(self):
        shape, g = circle_setup()
        p_old = np.array([0.5, 0.5])
        limit = g.t_pt[g.cell_index(p_old)[0]]
        q, cat = treat_new_position(p_old, INNER, (0.6, 0.5), g, shape)
        assert q[0] - 0.5 == pytest.approx(limit)
        assert cat == INNER

    def test_short_move_unchanged(self):
        shape, g = circle_setup()
        q, cat = treat_new_position((0.5, 0.5), INNER, (0.501, 0.5), g, shape)
        assert np.array_equal(q, (0.501, 0.5))

    def test_inner_point_leaving_lands_on_boundary(self):
        shape, g = circle_setup()
        r = 0.4 - 0.3 * np.nanmax(g.t_pt)
        q, cat = treat_new_position((0.5 + r, 0.5), INNER, (0.5 + 0.4 + 0.001, 0.5), g, shape)
        c = g.cell_index(q)[0]
        assert abs(shape(q)) <= g.geps[c]
        assert cat == BOUNDARY
        assert q[1] == 0.5 and 0.5 + r < q[0] < 0.9 + g.geps[c]

    def test_boundary_point_projected(self):
        shape, g = circle_setup()
        p_old = (0.5, 0.9)
        q, cat = treat_new_position(p_old, BOUNDARY, (0.51, 0.9 + 0.001), g, shape)
        assert abs(shape(q)) <= g.geps[g.cell_index(q)[0]]
        assert cat == BOUNDARY

    def test_far_outside_never_outer(self, rng):
        shape, g = circle_setup()
        p_old = np.array([[0.5, 0.88]])
        q, cat = treat_positions(p_old, np.array([INNER], np.int8), [[0.5, 1.0]], g, shape)
        assert g.point_category(q)[0] != OUTER

    def test_frozen(self, rng):
        shape, g = circle_setup()
        p = np.array([(0.5, 0.5), (0.4, 0.5)])
        q, cat = treat_positions(p, np.array([INNER, INNER], np.int8), p + 0.001, g, shape,
                                 frozen=np.array([True, False]))
        assert np.array_equal(q[0], p[0])
        assert np.allclose(q[1], p[1] + 0.001)

    def test_idempotent(self, rng):
        shape, g = circle_setup()
        ang = rng.uniform(0, 2 * np.pi, 200)
        rad = rng.uniform(0, 0.41, 200)
        p_old = 0.5 + 0.8 * np.column_stack([np.cos(ang), np.sin(ang)]) * 0.45
        p_old = p_old[g.classify(p_old) != OUTER]
        cat_old = g.classify(p_old)
        p_new = 0.5 + rad[:len(p_old), None] * np.column_stack([np.cos(ang), np.sin(ang)])[:len(p_old)]
        q, cat = treat_positions(p_old, cat_old, p_new, g, shape)
        q2, cat2 = treat_positions(q, cat, q, g, shape)
        assert np.array_equal(q, q2) and np.array_equal(cat, cat2)

    @given(st.integers(0, 2**31 - 1))
    def test_accepted_positions_usable(self, seed):
        shape, g = SETUP
        r = np.random.default_rng(seed)
        p_old = r.random((300, 2))
        p_old = p_old[g.classify(p_old) != OUTER]
        cat_old = g.classify(p_old)
        p_new = p_old + r.normal(0, 0.02, p_old.shape)
        q, cat = treat_positions(p_old, cat_old, p_new, g, shape)
        assert np.all(g.point_category(q) != OUTER)
        assert set(np.unique(cat)) <= {INNER, BOUNDARY}
        moved = np.hypot(*(q - p_old).T) > 0
        bnd = moved & (cat == BOUNDARY)
        geps = g.geps[g.cell_index(q[bnd])]
        assert np.all(np.abs(g.adf_values(q[bnd])) <= geps)
        # the ADF was built with a tolerance of 0.1 * geps
        assert np.all(np.abs(shape(q[bnd])) <= 1.1 * geps)


SETUP = circle_setup()

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sdfmesh.algorithms import (CVD, DM, check_termination, cvd_centroid, cvd_step,
                                distmesh_step, hybrid_decide, lloyd_energy,
                                needs_retriangulation, spring_forces, unique_edges)
from sdfmesh.exceptions import EmptyTriangulation
from sdfmesh.grid import BOUNDARY, INNER, GeometryGrid, compute_adaptive_quantities
from sdfmesh.voronoi import compute_diagram, delaunay_from_points

UNIT = (0.0, 1.0, 0.0, 1.0)


def inner_grid(n=4, n_points=16):
    g = GeometryGrid(UNIT, n, n)
    g.category[:] = INNER
    compute_adaptive_quantities(g, np.full(n * n, 1.0 / (n * n)), n_points)
    return g


def random_mesh(seed, n=80):
    r = np.random.default_rng(seed)
    pts = r.random((n, 2))
    _, tris = delaunay_from_points(pts, UNIT)
    return pts, unique_edges(tris), r


class TestSprings:
    def test_single_edge(self):
        pts = np.array([(0.0, 0.0), (1.0, 0.0)])
        f, l0, fe = spring_forces(pts, np.array([[0, 1]]), np.array([1.0]))
        assert l0[0] == pytest.approx(1.2)
        assert fe[0] == pytest.approx(0.2)
        assert np.allclose(f, [(-0.2, 0.0), (0.2, 0.0)])

    def test_rest_length_when_sizing_matches(self):
        pts, edges, _ = random_mesh(0)
        length = np.hypot(*(pts[edges[:, 0]] - pts[edges[:, 1]]).T)
        _, l0, fe = spring_forces(pts, edges, length)
        assert np.allclose(l0, 1.2 * length, rtol=1e-14)
        assert np.allclose(fe, 0.2 * length, rtol=1e-12)

    @given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
    def test_identities(self, seed, scale):
        pts, edges, r = random_mesh(seed)
        mu = r.uniform(0.5, 2.0, len(edges))
        f, l0, fe = spring_forces(pts, edges, mu, k=r.uniform(0.1, 10))
        total = np.abs(f.sum(axis=0)).max()
        assert total <= 1e-10 * max(np.abs(f).sum(), 1e-300)
        length = np.hypot(*(pts[edges[:, 0]] - pts[edges[:, 1]]).T)
        assert np.all(fe[length >= l0] == 0)
        assert np.all(fe >= 0)
        _, l0s, _ = spring_forces(pts, edges, scale * mu)
        assert np.allclose(l0s, l0, rtol=1e-12)

    def test_distmesh_step_pushes_apart(self):
        pts = np.array([(0.45, 0.5), (0.55, 0.5), (0.5, 0.6)])
        g = inner_grid()
        mu = np.ones(g.n_cells)
        new = distmesh_step(pts, np.array([[0, 1, 2]]), g, mu)
        # equal rest lengths on an isoceles triangle: the base widens
        assert new[0, 0] < 0.45 and new[1, 0] > 0.55
        assert np.allclose(new.sum(axis=0), pts.sum(axis=0))

    def test_empty(self):
        with pytest.raises(EmptyTriangulation):
            distmesh_step(np.zeros((3, 2)), np.empty((0, 3), int), inner_grid(), np.ones(16))

    def test_retriangulation(self):
        g = inner_grid()  # h = 0.25, t_retria = 0.025
        snap = np.array([(0.1, 0.1), (0.6, 0.6)])
        assert not needs_retriangulation(snap + 0.01, snap, g)
        moved = snap.copy()
        moved[1, 0] += 0.03
        assert needs_retriangulation(moved, snap, g)


class TestCvd:
    def test_constant_density_exact(self, rng):
        # fan quadrature with one point per triangle is exact for constant density
        d = compute_diagram(rng.random((30, 2)), 2.0, UNIT)
        for i in range(30):
            c = d.cell(i)
            got, level = cvd_centroid(c.vertices, d.points[i], lambda q: np.ones(len(q)), 1.0)
            x, y = c.vertices.T
            xn, yn = np.roll(x, -1), np.roll(y, -1)
            cr = x * yn - xn * y
            a = cr.sum() / 2
            ref = np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6 * a)
            assert np.allclose(got, ref, atol=1e-14)

    def test_linear_density(self):
        sq = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float)
        got, level = cvd_centroid(sq, (0.5, 0.5), lambda q: 1 + q[:, 0], 1e-9)
        assert level == 10
        assert got[0] == pytest.approx(5 / 9, abs=1e-4)
        assert got[1] == pytest.approx(0.5, abs=1e-12)

    def test_refinement_converges(self):
        sq = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float)
        errs = [abs(cvd_centroid(sq, (0.5, 0.5), lambda q: 1 + q[:, 0], 0, max_level=k)[0][0] - 5 / 9)
                for k in (2, 4, 6, 8)]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_single_point_moves_to_center(self):
        g = inner_grid()
        d = compute_diagram(np.array([[0.2, 0.7]]), 2.0, UNIT)
        out, levels = cvd_step(d.points, d, g, np.ones(16), np.array([np.inf]))
        assert np.allclose(out, [(0.5, 0.5)], atol=1e-14)
        assert levels[0] == 1

    def test_kernel_matches_reference(self, rng):
        g = inner_grid(8, 64)
        rho = rng.uniform(0.5, 2.0, 64)
        pts = rng.random((40, 2))
        d = compute_diagram(pts, 2.0, UNIT)
        prev = rng.uniform(0, 0.05, 40)
        out, levels = cvd_step(pts, d, g, rho, prev)

        def density(q):
            return rho[g.cell_index(np.clip(q, 0, 1 - 1e-15))]

        for i in range(40):
            c = d.cell(i)
            h = g.h[g.cell_index(pts[i])[0]]
            e = math.sqrt(c.area) * max(prev[i] / h, 0.001)
            ref, lev = cvd_centroid(c.vertices, pts[i], density, e)
            assert lev == levels[i]
            assert np.allclose(out[i], ref, atol=1e-12)

    def test_lloyd_energy_decreases(self, rng):
        g = inner_grid(10, 100)
        pts = rng.random((100, 2))
        samples = rng.random((200000, 2))
        w = np.ones(len(samples))
        energy = [lloyd_energy(pts, samples, w, 1.0)]
        for _ in range(10):
            d = compute_diagram(pts, 2.0, UNIT)
            pts, _ = cvd_step(pts, d, g, np.ones(100), np.full(100, np.inf))
            energy.append(lloyd_energy(pts, samples, w, 1.0))
        assert all(b <= a + 1e-6 * energy[0] for a, b in zip(energy, energy[1:]))
        assert energy[-1] < 0.8 * energy[0]


class TestControl:
    def test_hybrid_switch(self):
        hist = [(1.1, 1.2, 3.0), (1.1001, 1.2, 3.0)]
        assert hybrid_decide(DM, hist, 100, 100) == CVD
        assert hybrid_decide(DM, hist, 90, 100) == DM
        assert hybrid_decide(DM, hist[:1], 100, 100) == DM
        slow = [(1.1, 1.2, 3.0), (1.2, 1.2, 3.0)]
        assert hybrid_decide(DM, slow, 100, 100) == DM

    def test_hybrid_latches(self):
        slow = [(1.1, 1.2, 3.0), (1.5, 1.2, 3.0)]
        assert hybrid_decide(CVD, slow, 90, 100) == CVD

    def test_quality_termination(self):
        hist = [(1.05, 1.2, 2.0), (1.0505, 1.2005, 2.005)]
        n = 10
        stop, why = check_termination(hist, n, n, np.ones(n), np.full(n, INNER), np.zeros(n))
        assert (stop, why) == (True, "quality")
        # all three ratios must be small
        hist2 = [(1.05, 1.2, 2.0), (1.0505, 1.2005, 2.02)]
        assert not check_termination(hist2, n, n, np.ones(n), np.full(n, INNER), np.zeros(n))[0]
        # never on quality while points are still missing
        assert not check_termination(hist, n, n + 1, np.ones(n), np.full(n, INNER), np.zeros(n))[0]

    def test_movement_termination(self):
        cat = np.array([INNER, INNER, BOUNDARY])
        t_end = np.full(3, 1e-3)
        hist = [(1.0, 1.0, 1.0), (2.0, 2.0, 2.0)]
        stop, why = check_termination(hist, 3, 5, np.array([1e-4, 5e-4, 1.0]), cat, t_end)
        assert (stop, why) == (True, "movement")
        assert not check_termination(hist, 3, 5, np.array([1e-4, 2e-3, 0]), cat, t_end)[0]

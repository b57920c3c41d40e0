"""Geometry: reflection vectors, cones, and the vertex-attraction predicate."""

import math

import numpy as np
import pytest

from wedge_rbm import (
    GeometryError,
    RegimeError,
    boundary_cone,
    build_wedge,
    cone_hull,
    vertex_attraction_condition,
    wedge_contains,
)
from wedge_rbm.geometry import (
    CONE_FULL_PLANE,
    CONE_HALF_PLANE,
    CONE_LINE,
    CONE_RAY,
    CONE_SECTOR,
    CONE_ZERO,
    boundary_distance,
    set_distance,
)

TWO_PI = 2.0 * math.pi


def signed_angle_from(n, v):
    """Signed angle of v measured from n (positive toward the vertex side)."""
    return math.atan2(n[0] * v[1] - n[1] * v[0], n[0] * v[0] + n[1] * v[1])


class TestBuildWedge:
    def test_normal_reflection(self):
        g = build_wedge(math.pi / 2, 0.0, 0.0)
        assert np.allclose(g.v1, [0.0, 1.0], atol=1e-12)
        assert np.allclose(g.v2, [1.0, 0.0], atol=1e-12)
        assert g.alpha == 0.0
        assert g.regime == "nonpositive"

    def test_alpha_one_opposite_vectors(self):
        g = build_wedge(math.pi / 2, math.pi / 4, math.pi / 4)
        assert np.allclose(g.v1, [-1.0, 1.0], atol=1e-12)
        assert np.allclose(g.v2, [1.0, -1.0], atol=1e-12)
        assert g.alpha == 1.0
        # oracle: v_i . n_i = 1 and the signed angle from n_i equals theta_i
        for n, v, th in ((g.n1, g.v1, g.theta1), (g.n2, g.v2, g.theta2)):
            assert abs(float(np.dot(n, v)) - 1.0) < 1e-12
            # t_i points toward the vertex: positive theta tilts v toward it
            assert abs(abs(signed_angle_from(n, v)) - th) < 1e-12
        assert cone_hull([g.v1, g.v2]).kind == CONE_LINE

    def test_alpha_two(self):
        g = build_wedge(math.pi / 4, math.pi / 4, math.pi / 4)
        assert g.alpha == 2.0
        assert g.regime == "at_least_two"

    def test_domain_errors(self):
        with pytest.raises(GeometryError):
            build_wedge(0.0, 0.0, 0.0)
        with pytest.raises(GeometryError):
            build_wedge(TWO_PI, 0.0, 0.0)
        with pytest.raises(GeometryError):
            build_wedge(math.pi / 2, math.pi / 2, 0.0)
        with pytest.raises(GeometryError):
            build_wedge(math.pi / 2, 0.0, -math.pi / 2)

    def test_normals_unit_and_columns_of_R(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            xi = rng.uniform(0.05, TWO_PI - 0.05)
            th1, th2 = rng.uniform(-1.5, 1.5, 2)
            g = build_wedge(xi, th1, th2)
            assert abs(np.hypot(*g.n1) - 1.0) < 1e-12
            assert abs(np.hypot(*g.n2) - 1.0) < 1e-12
            assert np.array_equal(g.R[:, 0], g.v1)
            assert np.array_equal(g.R[:, 1], g.v2)
            assert abs(float(g.n1 @ g.v1) - 1.0) < 1e-12
            assert abs(float(g.n2 @ g.v2) - 1.0) < 1e-12

    def test_alpha_one_iff_singular_R(self):
        # along theta1 + theta2 = xi the matrix R is singular and v2 = -c v1
        rng = np.random.default_rng(5)
        for _ in range(200):
            xi = rng.uniform(0.3, 0.95 * math.pi)
            th1 = rng.uniform(max(-1.5, xi - 1.5), min(1.5, xi + 1.5))
            th2 = xi - th1
            if abs(th1) >= math.pi / 2 - 0.02 or abs(th2) >= math.pi / 2 - 0.02:
                continue
            g = build_wedge(xi, th1, th2)
            assert abs(g.det_R) < 1e-10
            c = -g.v2[0] / g.v1[0] if g.v1[0] != 0 else -g.v2[1] / g.v1[1]
            assert c > 0
            assert np.allclose(g.v2, -c * g.v1, atol=1e-9)

    def test_alpha_above_one_negated_cone_contains_wedge(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            xi = rng.uniform(0.3, 1.2)
            alpha = rng.uniform(1.05, 1.9)
            s = alpha * xi
            th1 = rng.uniform(max(0.05, s - 1.5), min(1.5, s - 0.05))
            th2 = s - th1
            if abs(th1) >= 1.55 or abs(th2) >= 1.55:
                continue
            g = build_wedge(xi, th1, th2)
            cone = cone_hull([-g.v1, -g.v2])
            for ang in np.linspace(0.0, xi, 60):
                assert cone.contains((math.cos(ang), math.sin(ang)), tol=1e-8)


class TestWedgeContains:
    def test_examples(self):
        g = build_wedge(math.pi / 2, 0.1, -0.2)
        assert wedge_contains(g, (1, 1))
        assert not wedge_contains(g, (1, -0.001))
        assert wedge_contains(g, (0, 0))

    def test_vertex_in_every_wedge(self):
        for xi in (0.3, math.pi / 2, math.pi, 4.0, 6.0):
            g = build_wedge(xi, 0.0, 0.0)
            assert wedge_contains(g, (0.0, 0.0))

    def test_matches_polar_angle_test(self):
        rng = np.random.default_rng(11)
        for xi in (0.4, math.pi / 2, 2.0, math.pi, 4.5):
            g = build_wedge(xi, 0.0, 0.0)
            pts = rng.normal(size=(500, 2))
            for p in pts:
                ang = math.atan2(p[1], p[0]) % TWO_PI
                # skip knife-edge points where trig rounding decides
                if min(abs(ang - xi), abs(ang), abs(ang - TWO_PI)) < 1e-9:
                    continue
                assert wedge_contains(g, p) == (ang <= xi)

    def test_reflex_wedge(self):
        g = build_wedge(3 * math.pi / 2, 0.0, 0.0)
        assert wedge_contains(g, (-1.0, 0.5))
        assert wedge_contains(g, (-1.0, -0.5))  # angle just over pi
        assert not wedge_contains(g, (0.5, -0.5))


class TestDistances:
    def test_boundary_distance_interior(self):
        g = build_wedge(math.pi / 2, 0.0, 0.0)
        assert boundary_distance(g, np.array([1.0, 2.0])) == pytest.approx(1.0)
        assert boundary_distance(g, np.array([3.0, 1.0])) == pytest.approx(1.0)

    def test_set_distance(self):
        g = build_wedge(math.pi / 2, 0.0, 0.0)
        assert set_distance(g, np.array([1.0, 1.0])) == 0.0
        assert set_distance(g, np.array([1.0, -0.5])) == pytest.approx(0.5)
        assert set_distance(g, np.array([-3.0, -4.0])) == pytest.approx(5.0)


def cone_membership_oracle(generators, p, tol=1e-9):
    """Brute-force two-variable feasibility: is p a non-negative combination?

    In the plane every cone element is a non-negative combination of at most
    two generators, so trying all pairs (and single rays) is exact.
    """
    gens = np.asarray([g for g in generators if np.hypot(*g) > 0], dtype=float)
    p = np.asarray(p, dtype=float)
    pn = float(np.hypot(*p))
    if pn <= tol:
        return True
    scale = max(1.0, pn)
    for i in range(len(gens)):
        gi = gens[i]
        cross = gi[0] * p[1] - gi[1] * p[0]
        if abs(cross) <= tol * scale and float(gi @ p) > 0.0:
            return True
        for j in range(i + 1, len(gens)):
            gj = gens[j]
            det = gi[0] * gj[1] - gi[1] * gj[0]
            if abs(det) <= 1e-14:
                continue
            a = (p[0] * gj[1] - p[1] * gj[0]) / det
            b = (gi[0] * p[1] - gi[1] * p[0]) / det
            if a >= -tol and b >= -tol:
                return True
    return False


class TestConeHull:
    def test_examples(self):
        assert cone_hull([(1, 0)]).kind == CONE_RAY
        assert cone_hull([(-1, 1), (1, -1)]).kind == CONE_LINE
        assert cone_hull([(1, 0), (0, 1), (-1, -1)]).kind == CONE_FULL_PLANE
        assert cone_hull([]).kind == CONE_ZERO
        assert cone_hull([(0, 0)]).kind == CONE_ZERO
        assert cone_hull([(1, 0), (0, 1)]).kind == CONE_SECTOR
        assert cone_hull([(1, 0), (-1, 0)]).kind == CONE_LINE
        assert cone_hull([(1, 0), (0, 1), (-1, 0)]).kind == CONE_HALF_PLANE

    def test_full_plane_by_dense_grid(self):
        # oracle: every direction on a dense grid is a non-negative combination
        gens = [(1, 0), (0, 1), (-1, -1)]
        for ang in np.linspace(0, TWO_PI, 73)[:-1]:
            assert cone_membership_oracle(gens, (math.cos(ang), math.sin(ang)))

    def test_agrees_with_nnls_oracle(self):
        rng = np.random.default_rng(13)
        checked = 0
        for _ in range(1000):
            k = rng.integers(0, 5)
            gens = rng.normal(size=(k, 2))
            if k and rng.random() < 0.2:
                gens[rng.integers(0, k)] = 0.0
            cone = cone_hull(gens)
            for ang in rng.uniform(0.0, TWO_PI, 8):
                p = np.array([math.cos(ang), math.sin(ang)])
                want = cone_membership_oracle(gens, p)
                # skip probes within an angular guard band of the cone edges
                if cone.kind in (CONE_RAY, CONE_LINE, CONE_SECTOR, CONE_HALF_PLANE):
                    a, b = cone.angular_interval
                    dists = [
                        min((ang - c) % TWO_PI, (c - ang) % TWO_PI)
                        for c in (a, b, a + math.pi, b + math.pi)
                    ]
                    if min(dists) < 1e-6:
                        continue
                assert cone.contains(p) == want, (gens, p, cone)
                checked += 1
        assert checked > 5000


class TestVertexAttraction:
    def test_zero_drift_true_for_alpha_ge_one(self):
        for xi, th in ((math.pi / 4, math.pi / 4), (math.pi / 3, math.pi / 3 * 0.8)):
            g = build_wedge(xi, th, th)
            assert g.alpha >= 1.0
            assert vertex_attraction_condition(g, (0.0, 0.0))

    def test_interior_drift_false(self):
        g = build_wedge(math.pi / 4, math.pi / 4, math.pi / 4)
        mu = (math.cos(math.pi / 8), math.sin(math.pi / 8))
        assert not vertex_attraction_condition(g, mu)

    def test_precondition(self):
        g = build_wedge(math.pi / 2, 0.0, 0.0)
        with pytest.raises(RegimeError):
            vertex_attraction_condition(g, (1.0, 0.0))

    def test_scaling_invariance(self):
        g = build_wedge(math.pi / 4, 0.22 * math.pi, 0.22 * math.pi)
        rng = np.random.default_rng(17)
        for _ in range(50):
            mu = rng.normal(size=2)
            base = vertex_attraction_condition(g, mu)
            for c in (0.01, 7.3):
                assert vertex_attraction_condition(g, c * mu) == base

    def test_algebraic_equivalence_alpha_above_one(self):
        # oracle: direct 2x2 solve; condition <=> R^{-1} mu has a component >= 0
        rng = np.random.default_rng(19)
        agree = 0
        while agree < 100:
            xi = rng.uniform(0.3, 1.2)
            alpha = rng.uniform(1.05, 1.9)
            s = alpha * xi
            th1 = rng.uniform(max(0.05, s - 1.5), min(1.5, s - 0.05))
            th2 = s - th1
            if abs(th1) >= 1.55 or abs(th2) >= 1.55:
                continue
            g = build_wedge(xi, th1, th2)
            mu = rng.normal(size=2)
            lam = np.linalg.solve(g.R, mu)
            assert vertex_attraction_condition(g, mu) == bool((lam >= 0.0).any())
            agree += 1


class TestBoundaryCone:
    def test_edge_rays_and_vertex(self):
        g = build_wedge(math.pi / 2, 0.1, 0.3)
        c1 = boundary_cone(g, (1.0, 0.0))
        assert c1.kind == CONE_RAY
        assert c1.contains(g.v1)
        c2 = boundary_cone(g, (0.0, 1.0))
        assert c2.kind == CONE_RAY
        assert c2.contains(g.v2)
        assert boundary_cone(g, (0.0, 0.0)).kind == CONE_FULL_PLANE
        assert boundary_cone(g, (0.5, 0.5)).kind == CONE_ZERO

    def test_outside_point_rejected(self):
        g = build_wedge(math.pi / 2, 0.0, 0.0)
        with pytest.raises(GeometryError):
            boundary_cone(g, (1.0, -1.0))

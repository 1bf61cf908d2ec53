import numpy as np
import pytest

from bdie import quadrature as Q


def bary_monomial_integral_triangle(p, q, r):
    # int over reference triangle of l0^p l1^q l2^r = 2A p! q! r! / (p+q+r+2)!
    from math import factorial
    return (2 * 0.5 * factorial(p) * factorial(q) * factorial(r)
            / factorial(p + q + r + 2))


def bary_monomial_integral_tet(p, q, r, s):
    from math import factorial
    return (6 * (1 / 6) * factorial(p) * factorial(q) * factorial(r) * factorial(s)
            / factorial(p + q + r + s + 3))


@pytest.mark.parametrize("degree", range(1, 11))
def test_triangle_rule_exactness(degree):
    rule = Q.gauss_rule_triangle(degree)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-13)
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            r = 0
            exact = bary_monomial_integral_triangle(p, q, r)
            got = np.sum(rule.weights * rule.points[:, 0] ** p
                         * rule.points[:, 1] ** q)
            assert got == pytest.approx(exact, rel=1e-12), (p, q)


@pytest.mark.parametrize("degree", range(1, 11))
def test_tet_rule_exactness(degree):
    rule = Q.gauss_rule_tet(degree)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(1 / 6, rel=1e-13)
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            for r in range(degree + 1 - p - q):
                exact = bary_monomial_integral_tet(p, q, r, 0)
                got = np.sum(rule.weights * rule.points[:, 0] ** p
                             * rule.points[:, 1] ** q * rule.points[:, 2] ** r)
                assert got == pytest.approx(exact, rel=1e-12), (p, q, r)


def test_triangle_first_moment():
    rule = Q.gauss_rule_triangle(2)
    got = np.sum(rule.weights * rule.points[:, 1])
    assert got == pytest.approx(1 / 6)


def test_rule_degree_bounds():
    with pytest.raises(ValueError):
        Q.gauss_rule_triangle(0)
    with pytest.raises(ValueError):
        Q.gauss_rule_tet(11)


def test_map_triangle_area_and_tet_volume():
    tri = np.array([[0, 0, 0], [2, 0, 0], [0, 3, 0]], float)
    pts, w = Q.map_triangle(Q.gauss_rule_triangle(4), tri)
    assert w.sum() == pytest.approx(3.0)
    tet = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 2]], float)
    pts, w = Q.map_tet(Q.gauss_rule_tet(4), tet)
    assert w.sum() == pytest.approx(2 / 6)


def test_duffy_triangle_inverse_distance():
    # unit right triangle, kernel 1/|x - y|, y at the right-angle vertex
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    kernel = lambda x, y: 1.0 / np.linalg.norm(x - y)
    got = Q.duffy_triangle_singular(tri, 0, kernel)
    exact = np.sqrt(2.0) * np.log(1.0 + np.sqrt(2.0))
    assert got == pytest.approx(exact, rel=1e-8)
    assert got == pytest.approx(1.246450, rel=1e-6)


def test_duffy_triangle_constant_kernel_gives_area():
    tri = np.array([[0.3, 0.1, 0.0], [1.2, 0.4, 0.3], [0.2, 1.1, -0.2]])
    got = Q.duffy_triangle_singular(tri, 1, lambda x, y: 1.0)
    assert got == pytest.approx(Q.triangle_area(tri), rel=1e-12)


def test_duffy_triangle_scaling():
    kernel = lambda x, y: 1.0 / np.linalg.norm(x - y)
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    base = Q.duffy_triangle_singular(tri, 0, kernel)
    for t in (0.5, 2.0):
        got = Q.duffy_triangle_singular(t * tri, 0, kernel)
        assert got == pytest.approx(t * base, rel=1e-10)


def test_duffy_triangle_rejects_bad_vertex():
    tri = np.eye(3)
    with pytest.raises(ValueError):
        Q.duffy_triangle_singular(tri, 3, lambda x, y: 1.0)


def test_singular_tet_constant_kernel_gives_volume():
    tet = np.array([[0, 0, 0], [1, 0.1, 0], [0.2, 1, 0], [0, 0.3, 1.2]])
    got = Q.singular_tet_integral(tet, 2, lambda x, y: 1.0)
    assert got == pytest.approx(abs(Q.tet_volume(tet)), rel=1e-12)


def _ball_radial_integrals(level):
    from bdie.geometry import build_ball_mesh
    dom, _ = build_ball_mesh(level)
    k1 = lambda x, y: 1.0 / np.linalg.norm(x - y)
    k2 = lambda x, y: 1.0 / np.linalg.norm(x - y) ** 2
    tot1 = tot2 = 0.0
    center_tets = 0
    for tet in dom.tets:
        verts = dom.vertices[tet]
        if (tet == 0).any():
            iv = int(np.nonzero(tet == 0)[0][0])
            tot1 += Q.singular_tet_integral(verts, iv, k1)
            tot2 += Q.singular_tet_integral(verts, iv, k2)
            center_tets += 1
        else:
            pts, w = Q.map_tet(Q.gauss_rule_tet(4), verts)
            r = np.linalg.norm(pts, axis=1)
            tot1 += np.dot(w, 1.0 / r)
            tot2 += np.dot(w, 1.0 / r**2)
    assert center_tets > 0
    return tot1, tot2


def test_singular_tet_ball_oracles():
    # int over the ball of 1/r = 2 pi and 1/r^2 = 4 pi; at level 2 the
    # faceted surface dominates the error, one refinement shrinks it ~4x
    tot1, tot2 = _ball_radial_integrals(2)
    assert tot1 == pytest.approx(2 * np.pi, rel=0.1)
    assert tot2 == pytest.approx(4 * np.pi, rel=0.1)
    tot1b, tot2b = _ball_radial_integrals(3)
    assert abs(tot1b - 2 * np.pi) < 0.5 * abs(tot1 - 2 * np.pi)
    assert abs(tot2b - 4 * np.pi) < 0.5 * abs(tot2 - 4 * np.pi)


def test_singular_tet_matches_graded_oracle():
    # independent check: Duffy vs dyadically graded regular quadrature
    rng = np.random.default_rng(7)
    rule = Q.gauss_rule_tet(6)
    for _ in range(3):
        tet = rng.uniform(-1, 1, size=(4, 3))
        if Q.tet_volume(tet) < 0:
            tet[[0, 1]] = tet[[1, 0]]
        y = tet[0].copy()
        kern = lambda x, _y: 1.0 / np.linalg.norm(x - y)
        got = Q.singular_tet_integral(tet, 0, kern)
        pts, w = Q.tet_points_graded(tet, y, rule, levels=4)
        keep = np.linalg.norm(pts - y, axis=1) > 1e-12
        oracle = np.dot(w[keep], 1.0 / np.linalg.norm(pts[keep] - y, axis=1))
        assert got == pytest.approx(oracle, rel=2e-2)


def test_graded_tet_points_integrate_smooth_function():
    tet = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    rule = Q.gauss_rule_tet(4)
    target = np.array([0.05, 0.05, 0.05])
    pts, w = Q.tet_points_graded(tet, target, rule, levels=2)
    got = np.dot(w, pts[:, 0])
    assert got == pytest.approx(1 / 24, rel=1e-12)
    assert w.sum() == pytest.approx(1 / 6, rel=1e-12)

"""Quadrature rules on reference simplices and singular Duffy transforms.

Regular rules are symmetric low-point rules for small degrees and collapsed
Gauss-Legendre product rules (always positive weights) for higher degrees.
Points are stored in barycentric coordinates; weights sum to the reference
measure (1/2 for the triangle, 1/6 for the tetrahedron).

The Duffy transforms remove point singularities at a simplex vertex: the
radial Jacobian cancels 1/r on the triangle and up to 1/r^2 on the tet.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (n, d+1) and weights (n,) on a reference simplex."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def npoints(self) -> int:
        return len(self.weights)


def _gauss_legendre_01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _collapsed_triangle(degree: int) -> QuadratureRule:
    # Duffy map (u, v) -> (u, v(1-u)); Jacobian (1-u) raises the u-degree by 1.
    nu = (degree + 2) // 2 + 1
    nv = (degree + 1) // 2 + 1
    xu, wu = _gauss_legendre_01(nu)
    xv, wv = _gauss_legendre_01(nv)
    pts, wts = [], []
    for u, cu in zip(xu, wu):
        for v, cv in zip(xv, wv):
            x = u
            y = v * (1.0 - u)
            pts.append((1.0 - x - y, x, y))
            wts.append(cu * cv * (1.0 - u))
    return QuadratureRule(np.array(pts), np.array(wts), degree)


def _collapsed_tet(degree: int) -> QuadratureRule:
    nu = (degree + 3) // 2 + 1
    nv = (degree + 2) // 2 + 1
    nw = (degree + 1) // 2 + 1
    xu, wu = _gauss_legendre_01(nu)
    xv, wv = _gauss_legendre_01(nv)
    xw, ww = _gauss_legendre_01(nw)
    pts, wts = [], []
    for u, cu in zip(xu, wu):
        for v, cv in zip(xv, wv):
            for w, cw in zip(xw, ww):
                x = u
                y = v * (1.0 - u)
                z = w * (1.0 - u) * (1.0 - v)
                pts.append((1.0 - x - y - z, x, y, z))
                wts.append(cu * cv * cw * (1.0 - u) ** 2 * (1.0 - v))
    return QuadratureRule(np.array(pts), np.array(wts), degree)


@lru_cache(maxsize=None)
def gauss_rule_triangle(degree: int) -> QuadratureRule:
    """Rule exact for polynomials up to ``degree`` on the reference triangle."""
    if not 1 <= degree <= 10:
        raise ValueError("triangle rules support degrees 1..10")
    if degree == 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([0.5]), 1)
    if degree == 2:
        pts = np.array([
            [2 / 3, 1 / 6, 1 / 6],
            [1 / 6, 2 / 3, 1 / 6],
            [1 / 6, 1 / 6, 2 / 3],
        ])
        return QuadratureRule(pts, np.full(3, 1 / 6), 2)
    if degree in (3, 4, 5):
        # 7-point degree-5 rule; positive weights.
        a = (6.0 + np.sqrt(15.0)) / 21.0
        b = (6.0 - np.sqrt(15.0)) / 21.0
        wa = (155.0 + np.sqrt(15.0)) / 2400.0
        wb = (155.0 - np.sqrt(15.0)) / 2400.0
        pts = [[1 / 3, 1 / 3, 1 / 3]]
        wts = [9.0 / 80.0]
        for (c, wc) in ((a, wa), (b, wb)):
            for i in range(3):
                p = [c, c, c]
                p[i] = 1.0 - 2.0 * c
                pts.append(p)
                wts.append(wc)
        return QuadratureRule(np.array(pts), np.array(wts), 5)
    return _collapsed_triangle(degree)


@lru_cache(maxsize=None)
def gauss_rule_tet(degree: int) -> QuadratureRule:
    """Rule exact for polynomials up to ``degree`` on the reference tet."""
    if not 1 <= degree <= 10:
        raise ValueError("tet rules support degrees 1..10")
    if degree == 1:
        return QuadratureRule(np.full((1, 4), 0.25), np.array([1 / 6]), 1)
    if degree == 2:
        a = (5.0 - np.sqrt(5.0)) / 20.0
        b = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
        pts = []
        for i in range(4):
            p = [a, a, a, a]
            p[i] = b
            pts.append(p)
        return QuadratureRule(np.array(pts), np.full(4, 1 / 24), 2)
    return _collapsed_tet(degree)


# ---------------------------------------------------------------------------
# mapping helpers


def map_triangle(rule: QuadratureRule, verts: np.ndarray):
    """Physical quadrature points and weights for a flat triangle (3, 3)."""
    verts = np.asarray(verts, float)
    pts = rule.points @ verts
    area = 0.5 * np.linalg.norm(np.cross(verts[1] - verts[0], verts[2] - verts[0]))
    return pts, rule.weights * (area / 0.5)


def map_tet(rule: QuadratureRule, verts: np.ndarray):
    """Physical quadrature points and weights for a tet (4, 3)."""
    verts = np.asarray(verts, float)
    pts = rule.points @ verts
    vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6.0
    return pts, rule.weights * (vol / (1 / 6))


def triangle_area(verts: np.ndarray) -> float:
    verts = np.asarray(verts, float)
    return 0.5 * np.linalg.norm(np.cross(verts[1] - verts[0], verts[2] - verts[0]))


def tet_volume(verts: np.ndarray) -> float:
    verts = np.asarray(verts, float)
    return float(np.linalg.det(verts[1:] - verts[0])) / 6.0


def subdivide_triangle(verts: np.ndarray):
    """Uniform 4-way split of a triangle."""
    v = np.asarray(verts, float)
    m01, m12, m20 = 0.5 * (v[0] + v[1]), 0.5 * (v[1] + v[2]), 0.5 * (v[2] + v[0])
    return [
        np.array([v[0], m01, m20]),
        np.array([m01, v[1], m12]),
        np.array([m20, m12, v[2]]),
        np.array([m01, m12, m20]),
    ]


def subdivide_tet(verts: np.ndarray):
    """8-way split of a tet (4 corner tets + 4 from the inner octahedron)."""
    v = np.asarray(verts, float)
    m = {(i, j): 0.5 * (v[i] + v[j]) for i in range(4) for j in range(i + 1, 4)}

    def mid(i, j):
        return m[(i, j)] if (i, j) in m else m[(j, i)]

    tets = [
        np.array([v[0], mid(0, 1), mid(0, 2), mid(0, 3)]),
        np.array([v[1], mid(0, 1), mid(1, 2), mid(1, 3)]),
        np.array([v[2], mid(0, 2), mid(1, 2), mid(2, 3)]),
        np.array([v[3], mid(0, 3), mid(1, 3), mid(2, 3)]),
        # inner octahedron split along the (01)-(23) diagonal
        np.array([mid(0, 1), mid(2, 3), mid(0, 2), mid(0, 3)]),
        np.array([mid(0, 1), mid(2, 3), mid(0, 3), mid(1, 3)]),
        np.array([mid(0, 1), mid(2, 3), mid(1, 3), mid(1, 2)]),
        np.array([mid(0, 1), mid(2, 3), mid(1, 2), mid(0, 2)]),
    ]
    return tets


# ---------------------------------------------------------------------------
# singular integration


def duffy_points_triangle(verts: np.ndarray, singular_vertex: int, n: int = 8):
    """Quadrature points/weights on a triangle, graded into its vertex.

    Radial coordinate t in [0,1] toward the opposite edge; the surface
    element contributes a factor t that cancels a 1/|x-y| singularity.
    """
    v = np.asarray(verts, float)
    if singular_vertex not in (0, 1, 2):
        raise ValueError("singular vertex index must be 0, 1 or 2")
    y = v[singular_vertex]
    e = np.delete(v, singular_vertex, axis=0)  # opposite edge endpoints
    xt, wt = _gauss_legendre_01(n)
    xs, ws = _gauss_legendre_01(n)
    # x = y + t * (edge(s) - y); dS = t * |cross| ds dt with the full-.
    edge_pts = e[0][None, :] + xs[:, None] * (e[1] - e[0])[None, :]
    area2 = np.linalg.norm(np.cross(e[0] - y, e[1] - y))  # = 2*area
    pts, wts = [], []
    for t, ct in zip(xt, wt):
        pts.append(y[None, :] + t * (edge_pts - y[None, :]))
        wts.append(ct * ws * t * area2)
    return np.concatenate(pts, axis=0), np.concatenate(wts)


def duffy_triangle_singular(verts: np.ndarray, singular_vertex: int, kernel,
                            n: int = 12) -> float:
    """Integrate kernel(x, y) over the triangle, y at ``singular_vertex``.

    Removes integrable singularities up to O(1/|x-y|).
    """
    v = np.asarray(verts, float)
    if singular_vertex not in (0, 1, 2):
        raise ValueError("singular vertex index must be 0, 1 or 2")
    y = v[singular_vertex]
    pts, wts = duffy_points_triangle(v, singular_vertex, n=n)
    vals = np.array([kernel(p, y) for p in pts])
    return float(np.dot(wts, vals))


def duffy_points_tet(verts: np.ndarray, singular_vertex: int, n_rad: int = 6,
                     face_degree: int = 6):
    """Quadrature points/weights on a tet, graded into its vertex.

    The radial Jacobian t^2 cancels singularities up to O(1/|x-y|^2).
    """
    v = np.asarray(verts, float)
    if singular_vertex not in (0, 1, 2, 3):
        raise ValueError("singular vertex index must be in 0..3")
    y = v[singular_vertex]
    face = np.delete(v, singular_vertex, axis=0)
    rule = gauss_rule_triangle(face_degree)
    fpts, fwts = map_triangle(rule, face)
    # height of y over the opposite face
    n_face = np.cross(face[1] - face[0], face[2] - face[0])
    n_face /= np.linalg.norm(n_face)
    h = abs(float(np.dot(y - face[0], n_face)))
    xt, wt = _gauss_legendre_01(n_rad)
    pts, wts = [], []
    for t, ct in zip(xt, wt):
        pts.append(y[None, :] + t * (fpts - y[None, :]))
        wts.append(ct * fwts * t**2 * h)
    return np.concatenate(pts, axis=0), np.concatenate(wts)


def singular_tet_integral(verts: np.ndarray, singular_vertex: int, kernel,
                          n_rad: int = 8, face_degree: int = 6) -> float:
    """Integrate kernel(x, y) over the tet, y at ``singular_vertex``."""
    v = np.asarray(verts, float)
    y = v[singular_vertex]
    pts, wts = duffy_points_tet(v, singular_vertex, n_rad=n_rad,
                                face_degree=face_degree)
    vals = np.array([kernel(p, y) for p in pts])
    return float(np.dot(wts, vals))


def tet_points_graded(verts: np.ndarray, target: np.ndarray, rule: QuadratureRule,
                      levels: int = 2):
    """Points/weights on a tet dyadically subdivided toward a nearby target.

    Used for near-singular volume integrands: subdivide ``levels`` times,
    refining only the children that remain close to the target.
    """
    v = np.asarray(verts, float)
    target = np.asarray(target, float)
    pieces = [v]
    for _ in range(levels):
        nxt = []
        for t in pieces:
            diam = max(np.linalg.norm(t[i] - t[j]) for i in range(4) for j in range(i + 1, 4))
            d = np.linalg.norm(t.mean(axis=0) - target)
            if d < 1.5 * diam:
                nxt.extend(subdivide_tet(t))
            else:
                nxt.append(t)
        pieces = nxt
    pts, wts = [], []
    for t in pieces:
        p, w = map_tet(rule, t)
        pts.append(p)
        wts.append(w)
    return np.concatenate(pts, axis=0), np.concatenate(wts)

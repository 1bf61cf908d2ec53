"""Continuous piecewise-linear element structures on the two meshes.

Both the domain field u and the boundary densities live in P1 vertex spaces.
This module assembles the (dense, desk-scale) mass and stiffness matrices,
weighted stiffness variants used by the weak conormal derivatives, load
vectors, boundary liftings, and vertex normal data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoundaryMesh, DomainMesh
from .kernels import Coefficient
from .quadrature import gauss_rule_tet, map_tet


def tet_gradients(dom: DomainMesh):
    """Constant P1 basis gradients per tet: (ntet, 4, 3)."""
    v = dom.vertices[dom.tets]
    grads = np.zeros((len(dom.tets), 4, 3))
    for t in range(len(dom.tets)):
        mat = np.hstack([np.ones((4, 1)), v[t]])
        inv = np.linalg.inv(mat)
        grads[t] = inv[1:, :].T
    return grads


def stiffness_matrix(dom: DomainMesh, weight=None, degree: int = 3):
    """K[i,j] = int w(x) grad chi_i . grad chi_j dx (w=1 if no weight)."""
    n = dom.n_vertices
    K = np.zeros((n, n))
    grads = tet_gradients(dom)
    rule = gauss_rule_tet(degree)
    for t, tet in enumerate(dom.tets):
        if weight is None:
            wint = dom.volumes[t]
        else:
            pts, wq = map_tet(rule, dom.vertices[tet])
            wint = float(np.dot(wq, weight(pts)))
        local = wint * (grads[t] @ grads[t].T)
        K[np.ix_(tet, tet)] += local
    return K


def mixed_gradient_matrix(dom: DomainMesh, a: Coefficient, degree: int = 3,
                          over_a: bool = False):
    """G[i,j] = int chi_j (w . grad chi_i) dx, w = grad a (or grad a / a).

    Realizes the weak drift operator u -> -div(E0(u grad a)) tested with
    chi_i, i.e. <. , chi_i> = int u grad a . grad chi_i.
    """
    n = dom.n_vertices
    G = np.zeros((n, n))
    grads = tet_gradients(dom)
    rule = gauss_rule_tet(degree)
    for t, tet in enumerate(dom.tets):
        pts, wq = map_tet(rule, dom.vertices[tet])
        ga = a.grad(pts)                                # (q, 3)
        if over_a:
            ga = ga / a.eval(pts)[:, None]
        bary = _barycentric(dom.vertices[tet], pts)     # (q, 4)
        flux = ga @ grads[t].T                          # (q, 4) test index
        local = np.einsum("q,qi,qj->ij", wq, flux, bary)
        G[np.ix_(tet, tet)] += local
    return G


def drift_load_matrix(dom: DomainMesh, a: Coefficient, degree: int = 3):
    """Q[i,j] = int (-grad chi_j . grad a - chi_j lap a) chi_i dx.

    Load matrix of the pointwise function -div(u grad a) for P1 u, used for
    canonical (zero-extension) conormal derivatives of the remainder field.
    """
    n = dom.n_vertices
    Q = np.zeros((n, n))
    grads = tet_gradients(dom)
    rule = gauss_rule_tet(degree)
    for t, tet in enumerate(dom.tets):
        pts, wq = map_tet(rule, dom.vertices[tet])
        ga = a.grad(pts)
        la = a.laplacian(pts)
        bary = _barycentric(dom.vertices[tet], pts)
        src = -(ga @ grads[t].T) - la[:, None] * bary   # (q, 4) density index
        local = np.einsum("q,qj,qi->ij", wq, src, bary)
        Q[np.ix_(tet, tet)] += local
    return Q


def _barycentric(verts, pts):
    mat = np.hstack([np.ones((4, 1)), verts])
    inv = np.linalg.inv(mat)
    return np.hstack([np.ones((len(pts), 1)), pts]) @ inv


def domain_mass_matrix(dom: DomainMesh):
    """Exact P1 mass matrix on tets."""
    n = dom.n_vertices
    M = np.zeros((n, n))
    base = (np.ones((4, 4)) + np.eye(4)) / 20.0
    for t, tet in enumerate(dom.tets):
        M[np.ix_(tet, tet)] += dom.volumes[t] * base
    return M


def load_vector(dom: DomainMesh, values_at_quad, degree: int = 4):
    """l[i] = int f chi_i dx with f given by a callable on points."""
    n = dom.n_vertices
    ell = np.zeros(n)
    rule = gauss_rule_tet(degree)
    for t, tet in enumerate(dom.tets):
        pts, wq = map_tet(rule, dom.vertices[tet])
        f = values_at_quad(pts)
        bary = _barycentric(dom.vertices[tet], pts)
        ell[tet] += bary.T @ (wq * f)
    return ell


@dataclass
class BoundarySpace:
    """P1 trace space data tied to one (domain, boundary) mesh pair."""

    dom: DomainMesh
    bnd: BoundaryMesh
    b2d: np.ndarray          # boundary dof -> domain vertex id
    d2b: dict                # domain vertex id -> boundary dof
    mass: np.ndarray         # boundary P1 mass matrix (nb, nb)
    vertex_normals: np.ndarray
    vertex_areas: np.ndarray

    @property
    def n(self) -> int:
        return len(self.b2d)

    def trace(self, u_nodal: np.ndarray) -> np.ndarray:
        return np.asarray(u_nodal)[..., self.b2d]

    def local_triangles(self) -> np.ndarray:
        """Boundary triangles in boundary-dof numbering."""
        return np.vectorize(self.d2b.__getitem__)(self.bnd.triangles)


def weighted_boundary_mass(space: BoundarySpace, weight_fn,
                           degree: int = 4) -> np.ndarray:
    """Mw[j,l] = sum_T int_T w(x, nu_T) z_j z_l dS with per-panel normals.

    Keeps coefficient flux weights exact on each flat panel; vertex-averaged
    normals would smear them at edges and corners.
    """
    from .quadrature import gauss_rule_triangle, map_triangle
    rule = gauss_rule_triangle(degree)
    bnd = space.bnd
    loc = space.local_triangles()
    Mw = np.zeros((space.n, space.n))
    for t in range(bnd.n_triangles):
        qp, qw = map_triangle(rule, bnd.vertices[bnd.triangles[t]])
        w = weight_fn(qp, bnd.normals[t])
        local = np.einsum("q,qi,qj->ij", qw * w, rule.points, rule.points)
        Mw[np.ix_(loc[t], loc[t])] += local
    return Mw


def boundary_space(dom: DomainMesh, bnd: BoundaryMesh) -> BoundarySpace:
    b2d = dom.boundary_vertex_ids
    d2b = {int(g): i for i, g in enumerate(b2d)}
    nb = len(b2d)
    M = np.zeros((nb, nb))
    base = (np.ones((3, 3)) + np.eye(3)) / 24.0
    vn = np.zeros((nb, 3))
    va = np.zeros(nb)
    for t, tri in enumerate(bnd.triangles):
        loc = [d2b[int(i)] for i in tri]
        M[np.ix_(loc, loc)] += 2.0 * bnd.areas[t] * base
        for i in loc:
            vn[i] += bnd.areas[t] * bnd.normals[t]
            va[i] += bnd.areas[t] / 3.0
    vn /= np.linalg.norm(vn, axis=1)[:, None]
    return BoundarySpace(dom, bnd, b2d, d2b, M, vn, va)


# ---------------------------------------------------------------------------
# liftings (discrete right inverses of the trace)


class Lifting:
    """Maps boundary nodal data to a domain field with that trace."""

    id: str

    def apply(self, space: BoundarySpace, w_bnd: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, space: BoundarySpace) -> np.ndarray:
        """(n_dom, n_bnd) dense lifting matrix."""
        n, nb = space.dom.n_vertices, space.n
        L = np.zeros((n, nb))
        for j in range(nb):
            e = np.zeros(nb)
            e[j] = 1.0
            L[:, j] = self.apply(space, e)
        return L


class HatLifting(Lifting):
    """Boundary values at boundary vertices, zero at interior vertices."""

    id = "hat"

    def apply(self, space, w_bnd):
        u = np.zeros(space.dom.n_vertices)
        u[space.b2d] = w_bnd
        return u

    def matrix(self, space):
        L = np.zeros((space.dom.n_vertices, space.n))
        L[space.b2d, np.arange(space.n)] = 1.0
        return L


class HarmonicLifting(Lifting):
    """Discrete harmonic extension wrt the Laplace stiffness matrix."""

    id = "harmonic"

    def __init__(self):
        self._cache = {}

    def apply(self, space, w_bnd):
        key = id(space)
        if key not in self._cache:
            K = stiffness_matrix(space.dom)
            ii = space.dom.interior_vertex_ids
            bb = space.b2d
            kii = K[np.ix_(ii, ii)]
            kib = K[np.ix_(ii, bb)]
            self._cache[key] = (ii, bb, np.linalg.inv(kii) @ kib)
        ii, bb, sol = self._cache[key]
        u = np.zeros(space.dom.n_vertices)
        u[bb] = w_bnd
        if len(ii):
            u[ii] = -sol @ w_bnd
        return u


def lifting_by_id(name: str) -> Lifting:
    if name == "hat":
        return HatLifting()
    if name == "harmonic":
        return HarmonicLifting()
    raise KeyError(f"unknown lifting {name!r}")

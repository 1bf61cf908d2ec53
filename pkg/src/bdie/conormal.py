"""Traces, classical and weak conormal derivatives, Green-identity residuals.

The weak (generalised) conormal derivative of a field u with PDE right-hand
side extension f~ is the boundary functional

    <T(f~; u), w> = <f~, Lw> + int_Omega a grad u . grad(Lw)

for any lifting L with trace w; its value is lifting-independent in the
limit.  Outputs are dual vectors against the boundary P1 basis; nodal
representatives go through the boundary mass matrix.

The source f~ is always the zero extension of a function given at the
domain quadrature nodes, optionally plus a boundary-supported part g*mu
carried as a P1 density mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fem import (BoundarySpace, Lifting, domain_mass_matrix,
                  drift_load_matrix, load_vector, mixed_gradient_matrix,
                  stiffness_matrix, tet_gradients)
from .geometry import DomainMesh
from .kernels import FOUR_PI, Coefficient
from .potentials import (VOLUME_DEGREE, _bary_at, _graded_tet, _VolumeGrid,
                         laplace_single_layer_matrix)
from .quadrature import duffy_points_tet, gauss_rule_tet, map_tet


@dataclass
class SourceData:
    """PDE right-hand side payload: f at quadrature nodes, zero-extended.

    ``fn`` optionally provides the analytic field for resampling inside
    singular or subdivided tets; without it a per-tet linear fit of the
    stored values is used.  ``boundary_density`` mu adds the boundary
    functional g*mu to the extension (the generalised-extension tests).
    """

    dom: DomainMesh
    f_quad: np.ndarray                      # (ntet, q)
    quad_pts: np.ndarray                    # (ntet, q, 3)
    quad_wts: np.ndarray                    # (ntet, q)
    extension_tag: str = "zero"
    fn: Optional[Callable] = None
    boundary_density: Optional[np.ndarray] = None

    def resample(self, tet_id: int, pts: np.ndarray) -> np.ndarray:
        if self.fn is not None:
            return self.fn(pts)
        # least-squares linear fit on this tet's quadrature values
        base = self.quad_pts[tet_id]
        A = np.hstack([np.ones((len(base), 1)), base])
        coef, *_ = np.linalg.lstsq(A, self.f_quad[tet_id], rcond=None)
        return np.hstack([np.ones((len(pts), 1)), pts]) @ coef

    def total(self) -> float:
        """<f~, 1> including the boundary part."""
        tot = float(np.sum(self.quad_wts * self.f_quad))
        return tot

    def is_zero(self) -> bool:
        return (not np.any(self.f_quad)) and (
            self.boundary_density is None or not np.any(self.boundary_density))


def source_from_function(dom: DomainMesh, fn, degree: int = VOLUME_DEGREE,
                         boundary_density=None) -> SourceData:
    rule = gauss_rule_tet(degree)
    verts = dom.vertices[dom.tets]
    pts = np.einsum("qv,tvk->tqk", rule.points, verts)
    wts = rule.weights[None, :] * (dom.volumes[:, None] / (1 / 6))
    vals = fn(pts.reshape(-1, 3)).reshape(pts.shape[:2])
    return SourceData(dom, vals, pts, wts, fn=fn,
                      boundary_density=boundary_density)


def zero_source(dom: DomainMesh, degree: int = VOLUME_DEGREE,
                boundary_density=None) -> SourceData:
    return source_from_function(dom, lambda p: np.zeros(len(p)), degree,
                                boundary_density)


def source_load_vector(space: BoundarySpace, src: SourceData) -> np.ndarray:
    """l[i] = <f~, chi_i> over all domain vertices i."""
    dom = src.dom
    ell = np.zeros(dom.n_vertices)
    for t, tet in enumerate(dom.tets):
        bar = _bary_at(dom.vertices[tet], src.quad_pts[t])
        ell[tet] += bar.T @ (src.quad_wts[t] * src.f_quad[t])
    if src.boundary_density is not None:
        ell[space.b2d] += space.mass @ src.boundary_density
    return ell


def source_volume_potential(space: BoundarySpace, src: SourceData, eval_pts,
                            parametrix_coeff: Optional[Coefficient] = None
                            ) -> np.ndarray:
    """Values of the Newtonian potential of f~ at points.

    With ``parametrix_coeff`` the result is scaled by 1/a(y) (the
    parametrix-based potential).  A boundary-supported part g*mu of the
    source contributes -V_L mu by the layer-potential identity.
    """
    dom = src.dom
    eval_pts = np.atleast_2d(np.asarray(eval_pts, float))
    grid = _VolumeGrid(dom)
    out = np.zeros(len(eval_pts))

    def kern(xs, y):
        r = np.linalg.norm(xs - y[None, :], axis=1)
        return -1.0 / (FOUR_PI * r)

    for p, y in enumerate(eval_pts):
        regular, near_ids, sing, contain = grid.classify(y)
        tot = 0.0
        if len(regular):
            xs = src.quad_pts[regular].reshape(-1, 3)
            kv = kern(xs, y).reshape(len(regular), -1)
            tot += float(np.sum(src.quad_wts[regular] * src.f_quad[regular]
                                * kv))

        def add(t, pts, wts):
            nonlocal tot
            tot += float(np.dot(wts * kern(pts, y), src.resample(t, pts)))

        for t in near_ids:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = _graded_tet(verts, y, grid.rule)
            add(t, pts, wts)
        for (t, iv) in sing:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = duffy_points_tet(verts, iv, n_rad=8, face_degree=6)
            add(t, pts, wts)
        for t in contain:
            verts = dom.vertices[dom.tets[t]]
            for f in range(4):
                sub = np.vstack([y[None, :], np.delete(verts, f, axis=0)])
                if abs(np.linalg.det(sub[1:] - sub[0])) < 1e-15:
                    continue
                pts, wts = duffy_points_tet(sub, 0, n_rad=8, face_degree=6)
                add(t, pts, wts)
        out[p] = tot

    if src.boundary_density is not None:
        VL = laplace_single_layer_matrix(space.bnd, eval_pts, space)
        out -= VL.apply(src.boundary_density)
    if parametrix_coeff is not None:
        out /= parametrix_coeff.eval(eval_pts)
    return out


def source_remainder_adjoint_values(space: BoundarySpace, src: SourceData,
                                    eval_pts, a: Coefficient) -> np.ndarray:
    """Values of the adjoint remainder potential of f~ at points."""
    if src.boundary_density is not None and np.any(src.boundary_density):
        raise NotImplementedError(
            "adjoint remainder of boundary-supported extensions")
    dom = src.dom
    eval_pts = np.atleast_2d(np.asarray(eval_pts, float))
    grid = _VolumeGrid(dom)
    out = np.zeros(len(eval_pts))
    for p, y in enumerate(eval_pts):
        ay = float(a.eval(y))
        gy = a.grad(y)
        lly = float(a.log_laplacian(y))

        def kern(xs):
            rel = xs - y[None, :]
            r = np.linalg.norm(rel, axis=1)
            return lly / (FOUR_PI * r) - (rel @ gy) / (FOUR_PI * ay * r**3)

        regular, near_ids, sing, contain = grid.classify(y)
        tot = 0.0
        if len(regular):
            xs = src.quad_pts[regular].reshape(-1, 3)
            kv = kern(xs).reshape(len(regular), -1)
            tot += float(np.sum(src.quad_wts[regular] * src.f_quad[regular]
                                * kv))
        def add(t, pts, wts):
            nonlocal tot
            tot += float(np.dot(wts * kern(pts), src.resample(t, pts)))
        for t in near_ids:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = _graded_tet(verts, y, grid.rule)
            add(t, pts, wts)
        for (t, iv) in sing:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = duffy_points_tet(verts, iv, n_rad=8, face_degree=6)
            add(t, pts, wts)
        for t in contain:
            verts = dom.vertices[dom.tets[t]]
            for f in range(4):
                sub = np.vstack([y[None, :], np.delete(verts, f, axis=0)])
                if abs(np.linalg.det(sub[1:] - sub[0])) < 1e-15:
                    continue
                pts, wts = duffy_points_tet(sub, 0, n_rad=8, face_degree=6)
                add(t, pts, wts)
        out[p] = tot
    return out


# ---------------------------------------------------------------------------
# conormal derivatives


def classical_conormal(space: BoundarySpace, a: Coefficient, grad_fn=None,
                       u_nodal=None) -> np.ndarray:
    """T^c u = a nu . grad u at boundary vertices, panel-averaged.

    Either an analytic gradient field or a P1 nodal field (one-sided tet
    gradients) must be supplied.
    """
    if (grad_fn is None) == (u_nodal is None):
        raise ValueError("supply exactly one of grad_fn, u_nodal")
    dom, bnd = space.dom, space.bnd
    loc = space.local_triangles()
    acc = np.zeros(space.n)
    wsum = np.zeros(space.n)
    if u_nodal is not None:
        face_tet = _boundary_face_tets(dom, bnd)
        grads = tet_gradients(dom)
    for t in range(bnd.n_triangles):
        nu = bnd.normals[t]
        w = bnd.areas[t] / 3.0
        for k in range(3):
            j = loc[t, k]
            x = dom.vertices[space.b2d[j]]
            if grad_fn is not None:
                g = np.asarray(grad_fn(x), float)
            else:
                tt = face_tet[t]
                g = grads[tt].T @ np.asarray(u_nodal)[dom.tets[tt]]
            acc[j] += w * float(a.eval(x)) * float(nu @ g)
            wsum[j] += w
    return acc / wsum


def _boundary_face_tets(dom: DomainMesh, bnd) -> np.ndarray:
    owner = {}
    for t, tet in enumerate(dom.tets):
        for kk in range(4):
            f = tuple(sorted(np.delete(tet, kk)))
            owner.setdefault(f, []).append(t)
    out = np.zeros(bnd.n_triangles, dtype=int)
    for i, tri in enumerate(bnd.triangles):
        key = tuple(sorted(tri))
        out[i] = owner[key][0]
    return out


@dataclass
class WeakConormalAssembler:
    """Caches the element matrices entering the weak conormal derivatives."""

    space: BoundarySpace
    a: Coefficient
    stiff_a: np.ndarray = field(init=False)
    stiff_lap: np.ndarray = field(init=False)
    mixed_grad: np.ndarray = field(init=False)
    drift_load: np.ndarray = field(init=False)
    mass_dom: np.ndarray = field(init=False)

    def __post_init__(self):
        dom = self.space.dom
        self.stiff_a = stiffness_matrix(dom, weight=self.a.eval)
        self.stiff_lap = stiffness_matrix(dom)
        self.mixed_grad = mixed_gradient_matrix(dom, self.a)
        self.drift_load = drift_load_matrix(dom, self.a)
        self.mass_dom = domain_mass_matrix(dom)

    def weak_conormal(self, src: SourceData, u_nodal, lifting: Lifting,
                      laplace_form: bool = False) -> np.ndarray:
        """Dual vector of T(f~; u); with ``laplace_form`` uses a = 1."""
        L = lifting.matrix(self.space)
        K = self.stiff_lap if laplace_form else self.stiff_a
        ell = source_load_vector(self.space, src)
        return L.T @ (ell + K @ np.asarray(u_nodal, float))

    def weak_conormal_aux(self, u_nodal, lifting: Lifting,
                          remainder_rows: np.ndarray) -> np.ndarray:
        """Dual vector of the drift-extension normal derivative of a R u.

        ``remainder_rows`` are collocated values of R u at all domain
        vertices (one-sided at the boundary).
        """
        u = np.asarray(u_nodal, float)
        a_nodes = self.a.eval(self.space.dom.vertices)
        aru = a_nodes * (remainder_rows @ u)
        L = lifting.matrix(self.space)
        return L.T @ (self.mixed_grad @ u + self.stiff_lap @ aru)

    def canonical_conormal_scaled_remainder(self, u_nodal, lifting: Lifting,
                                            remainder_rows: np.ndarray
                                            ) -> np.ndarray:
        """Dual vector of the canonical normal derivative of a R u."""
        u = np.asarray(u_nodal, float)
        a_nodes = self.a.eval(self.space.dom.vertices)
        aru = a_nodes * (remainder_rows @ u)
        L = lifting.matrix(self.space)
        return L.T @ (self.drift_load @ u + self.stiff_lap @ aru)

    def conormal_of_remainder(self, u_nodal, lifting: Lifting,
                              remainder_rows: np.ndarray) -> np.ndarray:
        """Dual vector of T(R u): conormal (coefficient-weighted) derivative.

        Uses T(R u) = T_L(a R u) - (d_nu a) gamma(R u) with the canonical
        Laplace-form derivative of the scaled remainder field.
        """
        u = np.asarray(u_nodal, float)
        t = self.canonical_conormal_scaled_remainder(u, lifting,
                                                     remainder_rows)
        bverts = self.space.dom.vertices[self.space.b2d]
        dnu_a = self.a.normal_derivative(bverts, self.space.vertex_normals)
        tr = (remainder_rows @ u)[self.space.b2d]
        return t - self.space.mass @ (dnu_a * tr)

    def nodal(self, dual_vec: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.space.mass, dual_vec)


# ---------------------------------------------------------------------------
# Green identity residuals


def first_green_residual(asm: WeakConormalAssembler, src: SourceData,
                         u_nodal, v_nodal, lifting: Lifting) -> float:
    """Residual of <f~, v> + E(u, v) - <T(f~;u), gamma v>."""
    space = asm.space
    ell = source_load_vector(space, src)
    t = asm.weak_conormal(src, u_nodal, lifting)
    v = np.asarray(v_nodal, float)
    lhs = float(ell @ v) + float(np.asarray(u_nodal) @ (asm.stiff_a @ v))
    rhs = float(t @ v[space.b2d])
    return lhs - rhs


def second_green_residual(asm: WeakConormalAssembler, src_u: SourceData,
                          u_nodal, src_v: SourceData, v_nodal,
                          lifting: Lifting) -> float:
    """Antisymmetrized second Green identity residual."""
    r_uv = first_green_residual(asm, src_u, u_nodal, v_nodal, lifting)
    r_vu = first_green_residual(asm, src_v, v_nodal, u_nodal, lifting)
    return r_uv - r_vu


def interpolate_p1(dom: DomainMesh, u_nodal, pts) -> np.ndarray:
    """Evaluate a P1 nodal field at arbitrary interior points."""
    pts = np.atleast_2d(np.asarray(pts, float))
    u = np.asarray(u_nodal, float)
    out = np.zeros(len(pts))
    verts = dom.vertices[dom.tets]
    for p, y in enumerate(pts):
        found = False
        for t in range(len(dom.tets)):
            lam = _bary_at(verts[t], y[None, :])[0]
            if np.all(lam > -1e-9):
                out[p] = float(lam @ u[dom.tets[t]])
                found = True
                break
        if not found:
            raise ValueError(f"point {y} not inside the domain mesh")
    return out


def third_green_residual(asm: WeakConormalAssembler, src: SourceData,
                         u_nodal, eval_pts, lifting: Lifting) -> np.ndarray:
    """r(y) = u + R u - V T(f~;u) + W gamma u - P f~ at interior points."""
    from .potentials import (assemble_double_layer, assemble_remainder,
                             assemble_single_layer)

    space = asm.space
    dom, bnd, a = space.dom, space.bnd, asm.a
    pts = np.atleast_2d(np.asarray(eval_pts, float))
    u = np.asarray(u_nodal, float)
    psi = asm.nodal(asm.weak_conormal(src, u, lifting))
    gamma_u = u[space.b2d]
    ru = assemble_remainder(dom, pts, a).apply(u)
    v_psi = assemble_single_layer(bnd, pts, a, space).apply(psi)
    w_gu = assemble_double_layer(bnd, pts, a, space).apply(gamma_u)
    p_f = source_volume_potential(space, src, pts, parametrix_coeff=a)
    u_at = interpolate_p1(dom, u, pts)
    return u_at + ru - v_psi + w_gu - p_f

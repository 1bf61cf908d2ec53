"""Discrete volume and layer potentials and the direct boundary operators.

Everything variable-coefficient routes through the constant-coefficient
(Laplace) operators by the exact algebraic transfer relations

    P g   = (1/a) P_L g            V psi = (1/a) V_L psi
    W phi = (1/a) W_L (a phi)      and their boundary-trace analogues,

realized as nodal diagonal scalings, so those relations hold entrywise to
round-off by construction.  The two remainder potentials use their explicit
kernels directly.

Surface integrals use exact per-panel formulas (:mod:`bdie.panels`); volume
integrals use tet quadrature with Duffy grading at singular points and
dyadic subdivision within two panel diameters.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import panels
from .fem import BoundarySpace
from .geometry import BoundaryMesh, DomainMesh
from .kernels import FOUR_PI, Coefficient
from .quadrature import (duffy_points_tet, gauss_rule_tet,
                         gauss_rule_triangle, map_tet, map_triangle,
                         subdivide_tet, subdivide_triangle)

VOLUME_DEGREE = 4
NEAR_FIELD_FACTOR = 2.0


@dataclass
class PotentialMatrix:
    """Dense operator from nodal densities to row functionals or values."""

    entries: np.ndarray
    op_tag: str
    row_kind: str = "points"      # "points" | "galerkin" | "nodal"

    @property
    def shape(self):
        return self.entries.shape

    def apply(self, density: np.ndarray) -> np.ndarray:
        return self.entries @ np.asarray(density, float)


# ---------------------------------------------------------------------------
# binary dump (header + row-major little-endian float64)


def save_matrix(path, mat: PotentialMatrix):
    entries = np.ascontiguousarray(mat.entries, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(f"bdiemat 1 {mat.op_tag} {entries.shape[0]} "
                 f"{entries.shape[1]}\n".encode())
        fh.write(entries.tobytes())


def load_matrix(path) -> PotentialMatrix:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        if len(header) != 5 or header[:2] != ["bdiemat", "1"]:
            raise ValueError("bad matrix file header")
        tag, rows, cols = header[2], int(header[3]), int(header[4])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError("matrix payload size mismatch")
    return PotentialMatrix(data.reshape(rows, cols).astype(float), tag)


# ---------------------------------------------------------------------------
# volume potentials (collocation at arbitrary points)


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("BDIE_THREADS", "1")))
    except ValueError:
        return 1


class _VolumeGrid:
    """Precomputed regular quadrature data for one domain mesh."""

    def __init__(self, dom: DomainMesh, degree: int = VOLUME_DEGREE):
        self.dom = dom
        rule = gauss_rule_tet(degree)
        verts = dom.vertices[dom.tets]                     # (nt, 4, 3)
        self.bary = rule.points                            # (q, 4)
        self.pts = np.einsum("qv,tvk->tqk", rule.points, verts)
        self.wts = rule.weights[None, :] * (dom.volumes[:, None] / (1 / 6))
        self.diam = dom.tet_diameters()
        self.centers = verts.mean(axis=1)
        self.rule = rule

    def classify(self, y: np.ndarray):
        """Split tets into (regular, near, singular-with-vertex, containing)."""
        dom = self.dom
        dist = np.linalg.norm(self.centers - y[None, :], axis=1)
        near = dist < NEAR_FIELD_FACTOR * self.diam
        vert_match = np.linalg.norm(dom.vertices - y[None, :], axis=1) < 1e-12
        vid = int(np.nonzero(vert_match)[0][0]) if vert_match.any() else -1
        sing, contain, near_ids = [], [], []
        for t in np.nonzero(near)[0]:
            tet = dom.tets[t]
            if vid >= 0 and vid in tet:
                sing.append((t, int(np.nonzero(tet == vid)[0][0])))
                continue
            lam = _bary_coords(dom.vertices[tet], y)
            if np.all(lam > -1e-12) and vid < 0:
                contain.append(t)
            else:
                near_ids.append(t)
        regular = np.nonzero(~near)[0]
        return regular, np.array(near_ids, dtype=int), sing, contain


def _bary_coords(verts, y):
    mat = np.hstack([np.ones((4, 1)), verts])
    rhs = np.concatenate([[1.0], y])
    return np.linalg.solve(mat.T, rhs)


def _bary_at(verts, pts):
    mat = np.hstack([np.ones((4, 1)), verts])
    inv = np.linalg.inv(mat)
    return np.hstack([np.ones((len(pts), 1)), pts]) @ inv


def volume_collocation_matrices(dom: DomainMesh, eval_pts, kernels,
                                degree: int = VOLUME_DEGREE) -> np.ndarray:
    """Rows: int_Omega k(x, y_p) chi_j(x) dx for P1 hats chi_j; (nk, np, n).

    Each ``kernel(xs, y)`` must be vectorized over the first argument and may
    be singular up to O(|x-y|^-2) at x = y; singular tets are handled by
    Duffy grading (at mesh vertices or interior points), near tets by dyadic
    subdivision.  Evaluation points must not graze tet faces from outside.
    """
    eval_pts = np.atleast_2d(np.asarray(eval_pts, float))
    grid = _VolumeGrid(dom, degree)
    n = dom.n_vertices
    nk = len(kernels)
    out = np.zeros((nk, len(eval_pts), n))

    def row(p):
        y = eval_pts[p]
        acc = np.zeros((nk, n))
        regular, near_ids, sing, contain = grid.classify(y)
        if len(regular):
            xs = grid.pts[regular].reshape(-1, 3)
            for k, kernel in enumerate(kernels):
                kv = kernel(xs, y).reshape(len(regular), -1)
                contrib = np.einsum("tq,tq,qv->tv", grid.wts[regular], kv,
                                    grid.bary)
                np.add.at(acc[k], dom.tets[regular].ravel(), contrib.ravel())

        def add_piece(t, pts, wts):
            bar = _bary_at(dom.vertices[dom.tets[t]], pts)
            for k, kernel in enumerate(kernels):
                kv = kernel(pts, y)
                acc[k][dom.tets[t]] += (wts * kv) @ bar

        for t in near_ids:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = _graded_tet(verts, y, grid.rule)
            add_piece(t, pts, wts)
        for (t, iv) in sing:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = duffy_points_tet(verts, iv, n_rad=8, face_degree=6)
            add_piece(t, pts, wts)
        for t in contain:
            verts = dom.vertices[dom.tets[t]]
            for f in range(4):
                sub = np.vstack([y[None, :], np.delete(verts, f, axis=0)])
                if abs(np.linalg.det(sub[1:] - sub[0])) < 1e-15:
                    continue
                pts, wts = duffy_points_tet(sub, 0, n_rad=8, face_degree=6)
                add_piece(t, pts, wts)
        return acc

    nthreads = _n_threads()
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            for p, acc in enumerate(pool.map(row, range(len(eval_pts)))):
                out[:, p] = acc
    else:
        for p in range(len(eval_pts)):
            out[:, p] = row(p)
    return out


def volume_collocation_matrix(dom: DomainMesh, eval_pts, kernel,
                              degree: int = VOLUME_DEGREE) -> np.ndarray:
    return volume_collocation_matrices(dom, eval_pts, [kernel], degree)[0]


def remainder_kernel_factory(a: Coefficient):
    def kern(xs, y):
        rel = xs - y[None, :]
        r = np.linalg.norm(rel, axis=1)
        ga = a.grad(xs)
        ay = float(a.eval(y))
        return np.einsum("ij,ij->i", rel, ga) / (FOUR_PI * ay * r**3)
    return kern


def remainder_adjoint_kernel_factory(a: Coefficient):
    def kern(xs, y):
        rel = xs - y[None, :]
        r = np.linalg.norm(rel, axis=1)
        ay = float(a.eval(y))
        gy = a.grad(y)
        lead = float(a.log_laplacian(y)) / (FOUR_PI * r)
        drift = (rel @ gy) / (FOUR_PI * ay * r**3)
        return lead - drift
    return kern


def laplace_volume_kernel(xs, y):
    r = np.linalg.norm(xs - y[None, :], axis=1)
    return -1.0 / (FOUR_PI * r)


def _graded_tet(verts, target, rule, levels: int = 2):
    pieces = [verts]
    for _ in range(levels):
        nxt = []
        for t in pieces:
            diam = max(np.linalg.norm(t[i] - t[j])
                       for i in range(4) for j in range(i + 1, 4))
            if np.linalg.norm(t.mean(axis=0) - target) < NEAR_FIELD_FACTOR * diam:
                nxt.extend(subdivide_tet(t))
            else:
                nxt.append(t)
        pieces = nxt
    pts, wts = [], []
    for t in pieces:
        p, w = map_tet(rule, t)
        pts.append(p)
        wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)


def laplace_volume_matrix(dom: DomainMesh, eval_pts) -> PotentialMatrix:
    """Newtonian volume potential with kernel -1/(4 pi r)."""
    return PotentialMatrix(
        volume_collocation_matrix(dom, eval_pts, laplace_volume_kernel),
        "volume_laplace")


def assemble_volume_potential(dom: DomainMesh, eval_pts,
                              a: Coefficient) -> PotentialMatrix:
    """Parametrix volume potential: (1/a(y)) times the Laplace one."""
    base = laplace_volume_matrix(dom, eval_pts)
    scale = 1.0 / a.eval(np.atleast_2d(np.asarray(eval_pts, float)))
    return PotentialMatrix(scale[:, None] * base.entries, "volume")


def assemble_remainder(dom: DomainMesh, eval_pts,
                       a: Coefficient) -> PotentialMatrix:
    """Remainder potential with kernel (x-y).grad a(x) / (4 pi a(y) r^3)."""
    kern = remainder_kernel_factory(a)
    return PotentialMatrix(volume_collocation_matrix(dom, eval_pts, kern),
                           "remainder")


def assemble_remainder_adjoint(dom: DomainMesh, eval_pts,
                               a: Coefficient) -> PotentialMatrix:
    """Adjoint-side remainder potential (operator acting in y)."""
    kern = remainder_adjoint_kernel_factory(a)
    return PotentialMatrix(volume_collocation_matrix(dom, eval_pts, kern),
                           "remainder_adjoint")


def weak_gradient_volume_values(dom: DomainMesh, eval_pts,
                                cell_vectors: np.ndarray) -> np.ndarray:
    """values(y) = int_Omega c_t(x) . (x-y)/(4 pi r^3) dx, c piecewise const.

    This is the weak action of the Laplace volume potential on div-form data
    -div(E0 h) with grad h = c per tet.
    """
    eval_pts = np.atleast_2d(np.asarray(eval_pts, float))
    cell_vectors = np.asarray(cell_vectors, float)
    grid = _VolumeGrid(dom)
    out = np.zeros(len(eval_pts))
    for p, y in enumerate(eval_pts):
        regular, near_ids, sing, contain = grid.classify(y)
        tot = 0.0
        if len(regular):
            xs = grid.pts[regular].reshape(-1, 3)
            rel = xs - y[None, :]
            r3 = np.linalg.norm(rel, axis=1) ** 3
            cv = np.repeat(cell_vectors[regular], grid.pts.shape[1], axis=0)
            kv = np.einsum("ij,ij->i", cv, rel) / (FOUR_PI * r3)
            tot += float(np.dot(grid.wts[regular].ravel(), kv))
        def piece(pts, wts, t):
            rel = pts - y[None, :]
            r3 = np.linalg.norm(rel, axis=1) ** 3
            kv = (rel @ cell_vectors[t]) / (FOUR_PI * r3)
            return float(np.dot(wts, kv))
        for t in near_ids:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = _graded_tet(verts, y, grid.rule)
            tot += piece(pts, wts, t)
        for (t, iv) in sing:
            verts = dom.vertices[dom.tets[t]]
            pts, wts = duffy_points_tet(verts, iv, n_rad=8, face_degree=6)
            tot += piece(pts, wts, t)
        for t in contain:
            verts = dom.vertices[dom.tets[t]]
            for f in range(4):
                sub = np.vstack([y[None, :], np.delete(verts, f, axis=0)])
                if abs(np.linalg.det(sub[1:] - sub[0])) < 1e-15:
                    continue
                pts, wts = duffy_points_tet(sub, 0, n_rad=8, face_degree=6)
                tot += piece(pts, wts, t)
        out[p] = tot
    return out


# ---------------------------------------------------------------------------
# layer potentials at arbitrary evaluation points (exact panel integrals)


def _panel_pairs(bnd: BoundaryMesh, pts: np.ndarray):
    nt = bnd.n_triangles
    npts = len(pts)
    tris = bnd.vertices[bnd.triangles]
    rep_t = np.repeat(np.arange(nt), npts)
    rep_p = np.tile(np.arange(npts), nt)
    return tris[rep_t], pts[rep_p], rep_t, rep_p


def laplace_single_layer_matrix(bnd: BoundaryMesh, pts,
                                space: BoundarySpace) -> PotentialMatrix:
    """V_L psi(y) = + int psi(x)/(4 pi |x-y|) dS; exact per panel."""
    pts = np.atleast_2d(np.asarray(pts, float))
    tri_arr, pt_arr, rep_t, rep_p = _panel_pairs(bnd, pts)
    vals = panels.single_layer_p1(tri_arr, pt_arr) / FOUR_PI
    out = np.zeros((len(pts), space.n))
    loc = space.local_triangles()
    for k in range(3):
        np.add.at(out, (rep_p, loc[rep_t, k]), vals[:, k])
    return PotentialMatrix(out, "single_layer_laplace")


def laplace_double_layer_matrix(bnd: BoundaryMesh, pts,
                                space: BoundarySpace) -> PotentialMatrix:
    """W_L phi(y) = - int phi(x) nu(x).(x-y)/(4 pi r^3) dS; exact per panel.

    For y in a panel plane the panel's contribution is the principal value
    (zero), so on-surface rows give the PV part only.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    tri_arr, pt_arr, rep_t, rep_p = _panel_pairs(bnd, pts)
    vals = -panels.double_layer_p1(tri_arr, pt_arr) / FOUR_PI
    out = np.zeros((len(pts), space.n))
    loc = space.local_triangles()
    for k in range(3):
        np.add.at(out, (rep_p, loc[rep_t, k]), vals[:, k])
    return PotentialMatrix(out, "double_layer_laplace")


def quad_single_layer_matrix(bnd: BoundaryMesh, pts, space: BoundarySpace,
                             degree: int = 4) -> PotentialMatrix:
    """Plain-quadrature single layer, for cross-checks at far points."""
    pts = np.atleast_2d(np.asarray(pts, float))
    rule = gauss_rule_triangle(degree)
    out = np.zeros((len(pts), space.n))
    loc = space.local_triangles()
    for t in range(bnd.n_triangles):
        qp, qw = map_triangle(rule, bnd.vertices[bnd.triangles[t]])
        for p, y in enumerate(pts):
            r = np.linalg.norm(qp - y[None, :], axis=1)
            contrib = (qw / (FOUR_PI * r)) @ rule.points
            out[p, loc[t]] += contrib
    return PotentialMatrix(out, "single_layer_laplace_quad")


def quad_double_layer_matrix(bnd: BoundaryMesh, pts, space: BoundarySpace,
                             degree: int = 4) -> PotentialMatrix:
    pts = np.atleast_2d(np.asarray(pts, float))
    rule = gauss_rule_triangle(degree)
    out = np.zeros((len(pts), space.n))
    loc = space.local_triangles()
    for t in range(bnd.n_triangles):
        qp, qw = map_triangle(rule, bnd.vertices[bnd.triangles[t]])
        nu = bnd.normals[t]
        for p, y in enumerate(pts):
            rel = qp - y[None, :]
            r3 = np.linalg.norm(rel, axis=1) ** 3
            kern = -(rel @ nu) / (FOUR_PI * r3)
            out[p, loc[t]] += (qw * kern) @ rule.points
    return PotentialMatrix(out, "double_layer_laplace_quad")


# variable-coefficient wrappers (exact transfer relations)


def assemble_single_layer(bnd: BoundaryMesh, pts, a: Coefficient,
                          space: BoundarySpace) -> PotentialMatrix:
    base = laplace_single_layer_matrix(bnd, pts, space)
    scale = 1.0 / a.eval(np.atleast_2d(np.asarray(pts, float)))
    return PotentialMatrix(scale[:, None] * base.entries, "single_layer")


def assemble_double_layer(bnd: BoundaryMesh, pts, a: Coefficient,
                          space: BoundarySpace) -> PotentialMatrix:
    base = laplace_double_layer_matrix(bnd, pts, space)
    pts2 = np.atleast_2d(np.asarray(pts, float))
    scale = 1.0 / a.eval(pts2)
    a_bnd = a.eval(space.dom.vertices[space.b2d])
    return PotentialMatrix(scale[:, None] * base.entries * a_bnd[None, :],
                           "double_layer")


# ---------------------------------------------------------------------------
# on-surface collocated operators


def single_layer_trace_matrix(space: BoundarySpace) -> np.ndarray:
    """V_L collocated at boundary vertices (both traces coincide)."""
    bpts = space.dom.vertices[space.b2d]
    return laplace_single_layer_matrix(space.bnd, bpts, space).entries


def double_layer_interior_trace_matrix(space: BoundarySpace) -> np.ndarray:
    """gamma^+ W_L collocated at boundary vertices.

    Off-diagonal couplings are principal-value panel integrals (exact);
    the diagonal free term is fixed by the solid-angle identity
    gamma^+ W_L[1] = -1, which is exact for closed polyhedral surfaces and
    yields the correct free-term coefficient at edges and corners.
    """
    bpts = space.dom.vertices[space.b2d]
    K = laplace_double_layer_matrix(space.bnd, bpts, space).entries
    rowsum = K.sum(axis=1)
    K[np.arange(space.n), np.arange(space.n)] += -1.0 - rowsum
    return K


# ---------------------------------------------------------------------------
# Galerkin boundary operators


def _adjacency(bnd: BoundaryMesh):
    """Pairs of panels sharing at least one vertex."""
    nt = bnd.n_triangles
    by_vertex = {}
    for t, tri in enumerate(bnd.triangles):
        for v in tri:
            by_vertex.setdefault(int(v), []).append(t)
    adj = [set() for _ in range(nt)]
    for ts in by_vertex.values():
        for i in ts:
            for j in ts:
                adj[i].add(j)
    return adj


def _outer_points(bnd: BoundaryMesh, degree: int, split: bool):
    """Outer Gauss points, weights, P1 values per panel."""
    rule = gauss_rule_triangle(degree)
    tris = bnd.vertices[bnd.triangles]
    if not split:
        pts = np.einsum("qv,tvk->tqk", rule.points, tris)
        wts = rule.weights[None, :] * (bnd.areas[:, None] / 0.5)
        zeta = np.broadcast_to(rule.points, (len(tris),) + rule.points.shape)
        return pts, wts, zeta
    all_pts, all_wts, all_zeta = [], [], []
    for t in range(len(tris)):
        ps, ws, zs = [], [], []
        for sub in subdivide_triangle(tris[t]):
            p, w = map_triangle(rule, sub)
            ps.append(p)
            ws.append(w)
            zs.append(_tri_bary(tris[t], p))
        all_pts.append(np.concatenate(ps))
        all_wts.append(np.concatenate(ws))
        all_zeta.append(np.concatenate(zs))
    return np.array(all_pts), np.array(all_wts), np.array(all_zeta)


def _tri_bary(tri, pts):
    v1, v2, v3 = tri
    d1, d2 = v2 - v1, v3 - v1
    rel = pts - v1
    a11, a12, a22 = d1 @ d1, d1 @ d2, d2 @ d2
    det = a11 * a22 - a12 * a12
    b1, b2 = rel @ d1, rel @ d2
    xi = (a22 * b1 - a12 * b2) / det
    eta = (a11 * b2 - a12 * b1) / det
    return np.stack([1 - xi - eta, xi, eta], axis=1)


class BoundaryOperators:
    """Galerkin and collocated Laplace boundary operators on one mesh.

    Attributes
    ----------
    single : Galerkin single-layer matrix (weakly singular, symmetric)
    double : Galerkin double-layer matrix (principal value)
    adjoint_double : exact transpose of ``double`` (adjoint kernel)
    hyper : Galerkin hypersingular matrix via the surface-curl weak form;
        symmetric, annihilates constants exactly
    trace_single : single layer collocated at boundary vertices
    trace_double_interior : interior trace of the double layer, collocated
    mass : boundary P1 mass matrix

    Inner panel integrals are exact; the outer quadrature is Gauss of
    ``outer_degree``, with one dyadic split on panels adjacent to the source
    panel.  Pure single-layer forms are swap-averaged, which makes ``single``
    and ``hyper`` exactly symmetric.
    """

    def __init__(self, space: BoundarySpace, outer_degree: int = 4,
                 chunk: int = 20000):
        self.space = space
        bnd = space.bnd
        nt = bnd.n_triangles
        nb = space.n
        loc = space.local_triangles()
        tris = bnd.vertices[bnd.triangles]
        adj = _adjacency(bnd)

        pts_far, wts_far, zeta_far = _outer_points(bnd, outer_degree, False)
        pts_adj, wts_adj, zeta_adj = _outer_points(bnd, outer_degree, True)

        adj_pairs = [(t, s) for t in range(nt) for s in sorted(adj[t])]
        adj_set = {p for p in adj_pairs}
        far_pairs = [(t, s) for t in range(nt) for s in range(nt)
                     if (t, s) not in adj_set]

        Vflat = np.zeros(nb * nb)
        Wflat = np.zeros(nb * nb)
        Lpair = np.zeros(nt * nt)

        def process(pairs, opts, owts, ozeta):
            q = opts.shape[1]
            for lo in range(0, len(pairs), chunk):
                sel = np.asarray(pairs[lo:lo + chunk])
                ti, si = sel[:, 0], sel[:, 1]
                c = len(sel)
                tri_arr = np.repeat(tris[si], q, axis=0)
                pt_arr = opts[ti].reshape(-1, 3)
                sl, dl, sl0 = panels.single_double_p1_and_p0(tri_arr, pt_arr)
                sl = sl.reshape(c, q, 3) / FOUR_PI
                dl = -dl.reshape(c, q, 3) / FOUR_PI
                sl0 = sl0.reshape(c, q) / FOUR_PI
                tw = owts[ti][:, :, None] * ozeta[ti]            # (c, q, 3)
                blockV = np.einsum("cqt,cqs->cts", tw, sl)
                blockW = np.einsum("cqt,cqs->cts", tw, dl)
                gt = loc[ti]                                     # (c, 3)
                gs = loc[si]
                idx = (gt[:, :, None] * nb + gs[:, None, :]).ravel()
                Vflat[:] += np.bincount(idx, weights=blockV.ravel(),
                                        minlength=nb * nb)
                Wflat[:] += np.bincount(idx, weights=blockW.ravel(),
                                        minlength=nb * nb)
                pair_idx = ti * nt + si
                Lpair[:] += np.bincount(pair_idx,
                                        weights=np.einsum("cq,cq->c",
                                                          owts[ti], sl0),
                                        minlength=nt * nt)

        process(far_pairs, pts_far, wts_far, zeta_far)
        process(adj_pairs, pts_adj, wts_adj, zeta_adj)

        Vg = Vflat.reshape(nb, nb)
        Wg = Wflat.reshape(nb, nb)
        Lpair = Lpair.reshape(nt, nt)

        # symmetrize the swap-averaged pure-single-layer forms
        Vg = 0.5 * (Vg + Vg.T)
        Lpair = 0.5 * (Lpair + Lpair.T)

        curls = self._surface_curls(bnd)
        Lflat = np.zeros(nb * nb)
        all_pairs = np.indices((nt, nt)).reshape(2, -1).T
        for lo in range(0, len(all_pairs), chunk):
            sel = all_pairs[lo:lo + chunk]
            ti, si = sel[:, 0], sel[:, 1]
            coef = np.einsum("ctk,csk->cts", curls[ti], curls[si])
            vals = -coef * Lpair[ti, si][:, None, None]
            idx = (loc[ti][:, :, None] * nb + loc[si][:, None, :]).ravel()
            Lflat[:] += np.bincount(idx, weights=vals.ravel(),
                                    minlength=nb * nb)
        Lg = Lflat.reshape(nb, nb)

        self.single = Vg
        self.double = Wg
        self.adjoint_double = Wg.T.copy()
        self.hyper = Lg
        self.mass = space.mass
        self.trace_single = single_layer_trace_matrix(space)
        self.trace_double_interior = double_layer_interior_trace_matrix(space)

    @staticmethod
    def _surface_curls(bnd: BoundaryMesh):
        """n x grad of the three hats per panel: (nt, 3verts, 3)."""
        tris = bnd.vertices[bnd.triangles]
        out = np.zeros((bnd.n_triangles, 3, 3))
        for t in range(bnd.n_triangles):
            v = tris[t]
            n = bnd.normals[t]
            for k in range(3):
                e = v[(k + 2) % 3] - v[(k + 1) % 3]    # edge opposite vertex k
                grad = np.cross(n, e) / (2.0 * bnd.areas[t])
                out[t, k] = np.cross(n, grad)
        return out

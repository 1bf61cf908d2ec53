"""Assembly of the segregated boundary-domain integral equation systems.

Six systems are provided, three per boundary value problem.  The unknown
vector stacks the domain field u (all mesh vertices, boundary values are
independent unknowns) over the segregated boundary density (conormal
derivative psi for Dirichlet, trace phi for Neumann).

Discretization: the domain equation is collocated at every vertex; at
boundary vertices the collocation row is the one-sided interior limit, so
the trace relation between the two block rows holds exactly.  Boundary
equations of the "first kind in psi" systems (d1, n2) reuse the collocated
trace rows; those involving weak conormal derivatives or the hypersingular
operator (d2delta, d2, n1delta, n1) are Galerkin-tested with the boundary
P1 basis and converted to nodal form through the boundary mass matrix.

The Neumann operators have the constant pair (1, 1) in their kernel; the
rank-one stabilizations make them invertible while preserving zero-mean
solutions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cases import ManufacturedCase
from .conormal import (SourceData, WeakConormalAssembler,
                       source_load_vector, source_volume_potential,
                       zero_source)
from .fem import BoundarySpace, HatLifting, Lifting, boundary_space
from .geometry import BoundaryMesh, DomainMesh
from .kernels import Coefficient
from .potentials import (BoundaryOperators, assemble_remainder,
                         laplace_single_layer_matrix,
                         weak_gradient_volume_values)


class SystemKind(enum.Enum):
    D1 = "d1"
    D2DELTA = "d2delta"
    D2 = "d2"
    N1DELTA = "n1delta"
    N1 = "n1"
    N2 = "n2"
    N1DELTA_HAT = "n1delta_hat"
    N1_HAT = "n1_hat"
    N2_HAT = "n2_hat"

    @property
    def is_dirichlet(self) -> bool:
        return self in (SystemKind.D1, SystemKind.D2DELTA, SystemKind.D2)

    @property
    def is_neumann(self) -> bool:
        return not self.is_dirichlet

    @property
    def is_hat(self) -> bool:
        return self.value.endswith("_hat")

    @property
    def hat(self) -> "SystemKind":
        if self.is_hat:
            return self
        if self.is_dirichlet:
            raise ValueError("only Neumann systems have stabilized variants")
        return SystemKind(self.value + "_hat")


def kind_from_string(s: str) -> SystemKind:
    try:
        return SystemKind(s.lower())
    except ValueError:
        raise ValueError(f"unknown system kind {s!r}") from None


@dataclass
class BlockOperator:
    kind: SystemKind
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray

    def matrix(self) -> np.ndarray:
        top = np.hstack([self.A11, self.A12])
        bot = np.hstack([self.A21, self.A22])
        return np.vstack([top, bot])

    def apply(self, u, density) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, float)
        density = np.asarray(density, float)
        return (self.A11 @ u + self.A12 @ density,
                self.A21 @ u + self.A22 @ density)


@dataclass
class RhsAssembly:
    kind: SystemKind
    F1: np.ndarray
    F2: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.F1, self.F2])


class SystemWorkspace:
    """Caches every operator needed by the six systems on one mesh pair."""

    def __init__(self, dom: DomainMesh, bnd: BoundaryMesh, a: Coefficient,
                 lifting: Optional[Lifting] = None):
        self.dom = dom
        self.bnd = bnd
        self.a = a
        self.space = boundary_space(dom, bnd)
        # the discrete harmonic lifting extends constants exactly, which
        # keeps the compatibility (cokernel) structure of the weak conormal
        # rows exact at the quadrature level
        from .fem import HarmonicLifting
        self.lifting = lifting if lifting is not None else HarmonicLifting()
        space = self.space

        self.ops = BoundaryOperators(space)
        self.asm = WeakConormalAssembler(space, a)

        verts = dom.vertices
        self.a_dom = a.eval(verts)
        self.a_bnd = self.a_dom[space.b2d]
        bverts = verts[space.b2d]
        self.dnu_a = a.normal_derivative(bverts, space.vertex_normals)

        # collocated volume remainder at all vertices (one-sided on boundary)
        self.R_c = assemble_remainder(dom, verts, a).entries

        # collocated layer potentials at all vertices; boundary rows of the
        # single layer are traces, double-layer boundary rows are replaced
        # by the interior-trace operator (free term included)
        VL = laplace_single_layer_matrix(bnd, verts, space).entries
        self.V_c = (1.0 / self.a_dom)[:, None] * VL
        from .potentials import laplace_double_layer_matrix
        WL = laplace_double_layer_matrix(bnd, verts, space).entries
        WL[space.b2d, :] = self.ops.trace_double_interior
        self.W_c = ((1.0 / self.a_dom)[:, None] * WL * self.a_bnd[None, :])

        n, nb = dom.n_vertices, space.n
        self.n, self.nb = n, nb
        self.mass_b = space.mass
        self.area = float(np.ones(nb) @ self.mass_b @ np.ones(nb))

        L = self.lifting.matrix(space)
        # coefficient-flux weighted boundary mass (exact per-panel normals;
        # nodal diagonal scalings would smear edges and corners), and its
        # 1/a-scaled companion used for every (dnu_a / a) pairing so that
        # the solvability cancellations hold at the matrix level
        from .fem import mixed_gradient_matrix, weighted_boundary_mass
        self.Mw_dnua = weighted_boundary_mass(
            space, lambda x, nu: a.grad(x) @ nu)
        self.Mw_frac = self.Mw_dnua * (1.0 / self.a_bnd)[None, :]
        self.mixed_grad_frac = mixed_gradient_matrix(dom, a, over_a=True)

        # Galerkin rows of the weak conormal operators acting on u
        DaR = self.a_dom[:, None] * self.R_c
        self.TDg = L.T @ (self.asm.mixed_grad + self.asm.stiff_lap @ DaR)
        self.TRg = (L.T @ (self.asm.drift_load + self.asm.stiff_lap @ DaR)
                    - self.Mw_dnua @ self.R_c[space.b2d, :])

        ops = self.ops
        # variable-coefficient Galerkin boundary operators via the exact
        # transfer relations; the (dnu_a / a) corrections pair the weighted
        # mass with collocated traces
        self.Vg = ops.single
        self.Wg = ops.double
        self.Wpg = ops.adjoint_double
        self.Lg = ops.hyper
        traceW = ops.trace_double_interior + 0.5 * np.eye(nb)
        self.Wpg_a = self.Wpg - self.Mw_frac @ ops.trace_single
        self.Lg_a = (self.Lg * self.a_bnd[None, :]
                     - self.Mw_frac @ (traceW * self.a_bnd[None, :]))
        self.Kplus_a = ((1.0 / self.a_bnd)[:, None]
                        * ops.trace_double_interior * self.a_bnd[None, :])

    def minv(self, x):
        return np.linalg.solve(self.mass_b, x)


def assemble_system(kind: SystemKind, ws: SystemWorkspace) -> BlockOperator:
    """Block operator of the requested system in nodal row form."""
    if isinstance(kind, str):
        kind = kind_from_string(kind)
    if kind.is_hat:
        return perturb_neumann(assemble_system(SystemKind(
            kind.value[:-4]), ws), ws)
    n, nb = ws.n, ws.nb
    B = ws.space.b2d
    eye_n = np.eye(n)
    A11 = eye_n + ws.R_c
    if kind.is_dirichlet:
        A12 = -ws.V_c
    else:
        A12 = ws.W_c.copy()

    if kind == SystemKind.D1:
        A21 = ws.R_c[B, :].copy()
        A22 = -ws.V_c[B, :].copy()
    elif kind == SystemKind.D2DELTA:
        A21 = ws.minv(ws.TDg)
        A22 = 0.5 * np.eye(nb) - ws.minv(ws.Wpg)
    elif kind == SystemKind.D2:
        A21 = ws.minv(ws.TRg)
        A22 = 0.5 * np.eye(nb) - ws.minv(ws.Wpg_a)
    elif kind == SystemKind.N1DELTA:
        A21 = ws.minv(ws.TDg)
        A22 = ws.minv(ws.Lg * ws.a_bnd[None, :])
    elif kind == SystemKind.N1:
        A21 = ws.minv(ws.TRg)
        A22 = ws.minv(0.5 * ws.Mw_dnua + ws.Lg_a)
    elif kind == SystemKind.N2:
        A21 = ws.R_c[B, :].copy()
        A22 = np.eye(nb) + ws.Kplus_a
    else:
        raise ValueError(f"unsupported kind {kind}")
    return BlockOperator(kind, A11, A12, A21, A22)


def assemble_rhs(kind: SystemKind, ws: SystemWorkspace, src: SourceData,
                 boundary_data: np.ndarray) -> RhsAssembly:
    """Right-hand side for Dirichlet data phi0 or Neumann data psi0."""
    if isinstance(kind, str):
        kind = kind_from_string(kind)
    base = SystemKind(kind.value[:-4]) if kind.is_hat else kind
    space, a = ws.space, ws.a
    B = space.b2d
    lift = ws.lifting
    data = np.asarray(boundary_data, float)

    p_param = source_volume_potential(space, src, ws.dom.vertices,
                                      parametrix_coeff=a)
    if base.is_dirichlet:
        phi0 = data
        F1 = p_param - ws.W_c @ phi0
    else:
        psi0 = data
        F1 = p_param + ws.V_c @ psi0

    if base in (SystemKind.D1, SystemKind.N2):
        F2 = F1[B].copy()
        if base == SystemKind.D1:
            F2 -= phi0
        return RhsAssembly(kind, F1, F2)

    if base in (SystemKind.D2DELTA, SystemKind.N1DELTA):
        p_lap = source_volume_potential(space, src, ws.dom.vertices)
        ell = source_load_vector(space, src)
        L = lift.matrix(space)
        t = L.T @ (ell + ws.asm.stiff_lap @ p_lap)
        if base == SystemKind.D2DELTA:
            t = t - (ws.Lg * ws.a_bnd[None, :]) @ phi0
        else:
            t = t - 0.5 * ws.mass_b @ psi0 + ws.Wpg @ psi0
        return RhsAssembly(kind, F1, ws.minv(t))

    # d2 / n1: conormal of the parametrix potential with the adjoint
    # remainder correction in the extension.  The load of E0(R* f~) is
    # paired by exact integration by parts against the interpolated
    # Newtonian potential, which keeps the cokernel cancellations exact:
    # <E0 R* f~, v> = int (grad a / a) P_L f~ . grad v
    #                 - int_bnd (dnu a / a) P_L f~ v dS
    p_lap_nodal = ws.a_dom * p_param
    ell_rstar = ws.mixed_grad_frac @ p_lap_nodal
    ell_rstar[space.b2d] -= ws.Mw_frac @ p_lap_nodal[space.b2d]
    ell = source_load_vector(space, src) + ell_rstar
    L = lift.matrix(space)
    t = L.T @ (ell + ws.asm.stiff_a @ p_param)
    if base == SystemKind.D2:
        t = t - (0.5 * ws.Mw_dnua @ phi0 + ws.Lg_a @ phi0)
    else:
        t = t - 0.5 * ws.mass_b @ psi0 + ws.Wpg_a @ psi0
    return RhsAssembly(kind, F1, ws.minv(t))


def perturb_neumann(op: BlockOperator, ws: SystemWorkspace) -> BlockOperator:
    """Add the rank-one stabilization; returns the hat-kind operator."""
    if op.kind.is_dirichlet:
        raise ValueError("perturbation applies to Neumann kinds only")
    if op.kind.is_hat:
        raise ValueError("operator is already stabilized")
    mean_w = (ws.mass_b @ np.ones(ws.nb)) / ws.area     # g0 weights
    A11 = op.A11.copy()
    A12 = op.A12.copy()
    A21 = op.A21.copy()
    A22 = op.A22.copy()
    if op.kind in (SystemKind.N1DELTA, SystemKind.N1):
        A22 += np.outer(np.ones(ws.nb), mean_w)
    else:   # n2: direction (1/a, trace of 1/a)
        A12 += np.outer(1.0 / ws.a_dom, mean_w)
        A22 += np.outer(1.0 / ws.a_bnd, mean_w)
    return BlockOperator(op.kind.hat, A11, A12, A21, A22)


def mean_boundary(ws: SystemWorkspace, phi: np.ndarray) -> float:
    return float(np.ones(ws.nb) @ (ws.mass_b @ phi)) / ws.area


# ---------------------------------------------------------------------------
# cokernel (solvability) functionals


def cokernel_g1delta(F: RhsAssembly, ws: SystemWorkspace) -> float:
    """<F2, 1> over the boundary; annihilates the n1delta range."""
    return float(np.ones(ws.nb) @ (ws.mass_b @ F.F2))


def cokernel_g1(F: RhsAssembly, ws: SystemWorkspace) -> float:
    """<(gamma F1) dnu_a + F2, 1>; annihilates the n1 range."""
    tr = F.F1[ws.space.b2d]
    return float(np.ones(ws.nb) @ (ws.Mw_dnua @ tr + ws.mass_b @ F.F2))


def cokernel_g2(F: RhsAssembly, ws: SystemWorkspace) -> float:
    """Equilibrium-density functional annihilating the n2 range."""
    rhs = ws.mass_b @ np.ones(ws.nb)
    q = np.linalg.solve(ws.Vg, rhs)            # V_L q = 1 weakly
    t1 = 0.5 * ws.mass_b @ q + ws.Wpg @ q
    t2 = 0.5 * ws.mass_b @ q - ws.Wpg @ q
    tr = F.F1[ws.space.b2d]
    return -(float(t1 @ (ws.a_bnd * tr)) + float(t2 @ (ws.a_bnd * F.F2)))


def cokernel_value(kind: SystemKind, F: RhsAssembly,
                   ws: SystemWorkspace) -> float:
    if isinstance(kind, str):
        kind = kind_from_string(kind)
    base = SystemKind(kind.value[:-4]) if kind.is_hat else kind
    if base == SystemKind.N1DELTA:
        return cokernel_g1delta(F, ws)
    if base == SystemKind.N1:
        return cokernel_g1(F, ws)
    if base == SystemKind.N2:
        return cokernel_g2(F, ws)
    raise ValueError("cokernel functionals exist for Neumann kinds only")


# ---------------------------------------------------------------------------
# inverse of the volume potential (round-trip ansatz)


@dataclass
class InverseVolumeData:
    """Weak representation of the inverse volume-potential ansatz.

    The functional is Delta E0(h) - gamma* q with h a zero-trace P1 field
    and q a boundary density; its weak pairing with a P1 test field v is
    -int grad h . grad v - <q, gamma v>.
    """

    h: np.ndarray           # (n,) zero-trace nodal field
    q: np.ndarray           # (nb,) boundary density

    def dual_vector(self, ws: SystemWorkspace) -> np.ndarray:
        out = -ws.asm.stiff_lap @ self.h
        out[ws.space.b2d] -= ws.mass_b @ self.q
        return out


def inverse_volume_ansatz(ws: SystemWorkspace, g_nodal) -> InverseVolumeData:
    """Invert the parametrix volume potential on a smooth field g."""
    g = np.asarray(g_nodal, float)
    ag = ws.a_dom * g
    B = ws.space.b2d
    rhs = ws.mass_b @ ag[B]
    q = np.linalg.solve(ws.Vg, rhs)
    VL = (ws.a_dom[:, None] * ws.V_c)        # Laplace single layer rows
    h = ag - VL @ q
    h[B] = 0.0                               # exact zero trace
    return InverseVolumeData(h, q)


def apply_volume_potential_to_inverse(ws: SystemWorkspace,
                                      inv: InverseVolumeData,
                                      eval_pts) -> np.ndarray:
    """Round trip: evaluate the parametrix potential of the ansatz output."""
    dom = ws.dom
    pts = np.atleast_2d(np.asarray(eval_pts, float))
    from .fem import tet_gradients
    grads = tet_gradients(dom)
    cell_vecs = np.einsum("tvk,tv->tk", grads, inv.h[dom.tets])
    # P_L(Delta E0 h) = -int grad h . grad_x P_L dx
    part_h = -weak_gradient_volume_values(dom, pts, cell_vecs)
    # P_L(-gamma* q) = +V_L q
    VL = laplace_single_layer_matrix(ws.bnd, pts, ws.space)
    part_q = VL.apply(inv.q)
    return (part_h + part_q) / ws.a.eval(pts)

"""Dense solves, smallest-singular-value probes, and BVP pipelines."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .cases import ManufacturedCase
from .conormal import SourceData, source_from_function
from .systems import (BlockOperator, RhsAssembly, SystemKind, SystemWorkspace,
                      assemble_rhs, assemble_system, cokernel_value,
                      kind_from_string, mean_boundary)


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def lu_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct solve with partial pivoting; rejects singular pivots."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    lu, piv = sla.lu_factor(A)
    diag = np.abs(np.diag(lu))
    if np.any(diag == 0.0):
        raise SingularMatrixError("exactly singular pivot in LU")
    return sla.lu_solve((lu, piv), b)


@dataclass
class SigmaEstimate:
    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return float(self.value)


def sigma_min(A: np.ndarray, rel_tol: float = 1e-3,
              max_iter: int = 500) -> SigmaEstimate:
    """Smallest singular value via inverse iteration on the normal equations.

    One LU factorization of A drives the iteration z <- A^-1 A^-T z whose
    dominant eigenvalue is 1/sigma_min^2.  The seed vector is fixed, so the
    estimate is deterministic.
    """
    A = np.asarray(A, float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("sigma_min needs a square matrix")
    lu, piv = sla.lu_factor(A)
    diag = np.abs(np.diag(lu))
    if np.any(diag == 0.0):
        return SigmaEstimate(0.0, True, 0)
    z = np.cos(np.arange(1, n + 1))          # fixed, generic seed
    z /= np.linalg.norm(z)
    lam_old = 0.0
    for it in range(1, max_iter + 1):
        w = sla.lu_solve((lu, piv), z, trans=1)
        v = sla.lu_solve((lu, piv), w)
        lam = float(np.linalg.norm(v))
        if not np.isfinite(lam) or lam == 0.0:
            return SigmaEstimate(0.0, True, it)
        z = v / lam
        if it > 1 and abs(lam - lam_old) <= 0.5 * rel_tol * lam:
            return SigmaEstimate(1.0 / np.sqrt(lam), True, it)
        lam_old = lam
    return SigmaEstimate(1.0 / np.sqrt(lam_old), False, max_iter)


def gmres_solve(A: np.ndarray, b: np.ndarray, tol: float = 1e-10,
                restart: int = 50, maxiter: int = 200):
    """Unpreconditioned restarted GMRES with an iteration count."""
    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    x, info = spla.gmres(A, b, rtol=tol, restart=restart, maxiter=maxiter,
                         callback=cb, callback_type="legacy")
    return x, count["n"], info


@dataclass
class SolveReport:
    kind: SystemKind
    residual_norm: float
    sigma_min_estimate: float
    wall_time: float
    solvability_values: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def csv_row(self) -> str:
        solv = ";".join(f"{k}={v:.6e}" for k, v in
                        self.solvability_values.items())
        det = ";".join(f"{k}={v:.6e}" for k, v in self.details.items())
        return (f"{self.kind.value},{self.residual_norm:.6e},"
                f"{self.sigma_min_estimate:.6e},{self.wall_time:.3f},"
                f"{solv},{det}")


def _relative_l2(ws: SystemWorkspace, u: np.ndarray, ref: np.ndarray) -> float:
    M = ws.asm.mass_dom
    diff = u - ref
    return float(np.sqrt((diff @ M @ diff) / max(ref @ M @ ref, 1e-300)))


def solve_dirichlet(kind, ws: SystemWorkspace, src: SourceData,
                    phi0: np.ndarray, case: Optional[ManufacturedCase] = None,
                    use_gmres: bool = False):
    """Solve one of the Dirichlet systems; returns (u, psi, report)."""
    kind = kind_from_string(kind) if isinstance(kind, str) else kind
    if not kind.is_dirichlet:
        raise ValueError("kind must be a Dirichlet system")
    t0 = time.time()
    op = assemble_system(kind, ws)
    rhs = assemble_rhs(kind, ws, src, phi0)
    A = op.matrix()
    b = rhs.stacked()
    if use_gmres:
        x, iters, info = gmres_solve(A, b)
        if info != 0:
            x = lu_solve(A, b)
    else:
        x = lu_solve(A, b)
        iters = 0
    n = ws.n
    u, psi = x[:n], x[n:]
    res = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
    sig = sigma_min(A)
    report = SolveReport(kind, res, float(sig), time.time() - t0)
    report.details["trace_gap"] = float(
        np.max(np.abs(u[ws.space.b2d] - phi0)))
    report.details["gmres_iters"] = float(iters)
    if case is not None:
        ref = case.nodal_u(ws.dom.vertices)
        report.details["rel_l2_u"] = _relative_l2(ws, u, ref)
    return u, psi, report


def solve_neumann(kind, ws: SystemWorkspace, src: SourceData,
                  psi0: np.ndarray, case: Optional[ManufacturedCase] = None,
                  stabilize: bool = True,
                  solvability_rel_tol: float = 1e-3):
    """Solve one of the Neumann systems; returns (u, phi, report).

    With stabilization the unique hat-system solution is normalized to a
    zero boundary mean by removing its component along the kernel pair
    (1, 1); without it a least-squares solve is reported.
    """
    kind = kind_from_string(kind) if isinstance(kind, str) else kind
    if kind.is_dirichlet:
        raise ValueError("kind must be a Neumann system")
    base = SystemKind(kind.value[:-4]) if kind.is_hat else kind
    t0 = time.time()
    op = assemble_system(base, ws)
    rhs = assemble_rhs(base, ws, src, psi0)
    gstar = cokernel_value(base, rhs, ws)
    A = op.matrix()
    b = rhs.stacked()
    scale = float(np.linalg.norm(rhs.F1) + np.linalg.norm(rhs.F2))
    compatible = abs(gstar) <= solvability_rel_tol * max(scale, 1e-300)

    n = ws.n
    if stabilize:
        hat = assemble_system(base.hat, ws)
        Ahat = hat.matrix()
        x = lu_solve(Ahat, b)
        u, phi = x[:n], x[n:]
        g0 = mean_boundary(ws, phi)
        u = u - g0
        phi = phi - g0
        x = np.concatenate([u, phi])
        res = float(np.linalg.norm(A @ x - b)
                    / max(np.linalg.norm(b), 1e-300))
        sig = sigma_min(Ahat)
    else:
        x, *_ = np.linalg.lstsq(A, b, rcond=None)
        u, phi = x[:n], x[n:]
        res = float(np.linalg.norm(A @ x - b)
                    / max(np.linalg.norm(b), 1e-300))
        sig = sigma_min(A)

    report = SolveReport(kind if not stabilize else base.hat, res, float(sig),
                         time.time() - t0,
                         solvability_values={f"gstar_{base.value}": gstar})
    report.details["mean_phi"] = mean_boundary(ws, phi)
    report.details["compatible"] = float(compatible)
    if not compatible:
        report.details["solvability_warning"] = 1.0
    if case is not None:
        ref = case.nodal_u(ws.dom.vertices)
        ref_shift = ref - mean_boundary(ws, ref[ws.space.b2d])
        u_shift = u - mean_boundary(ws, u[ws.space.b2d])
        report.details["rel_l2_u"] = _relative_l2(ws, u_shift, ref_shift)
    return u, phi, report


def dirichlet_pipeline(kind, case: ManufacturedCase, ws: SystemWorkspace,
                       use_gmres: bool = False):
    src = source_from_function(ws.dom, case.f)
    phi0 = case.dirichlet_data(ws.space)
    return solve_dirichlet(kind, ws, src, phi0, case=case,
                           use_gmres=use_gmres)


def neumann_pipeline(kind, case: ManufacturedCase, ws: SystemWorkspace,
                     stabilize: bool = True):
    src = source_from_function(ws.dom, case.f)
    psi0 = case.neumann_data(ws.space)
    return solve_neumann(kind, ws, src, psi0, case=case, stabilize=stabilize)

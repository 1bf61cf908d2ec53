"""Manufactured solutions: analytic (a, u, f, Dirichlet and Neumann data).

Each case carries u and grad u in closed form; f = div(a grad u) is worked
out by hand and cross-checked against finite differences in the tests.  The
Neumann datum is the classical conormal a nu . grad u, so the compatibility
integral identity holds analytically by the divergence theorem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fem import BoundarySpace
from .kernels import Coefficient, coefficient_by_id, constant_coefficient


@dataclass(frozen=True)
class ManufacturedCase:
    id: str
    a: Coefficient
    u: Callable[[np.ndarray], np.ndarray]
    grad_u: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]

    def dirichlet_data(self, space: BoundarySpace) -> np.ndarray:
        """phi0: trace of u at boundary vertices."""
        return self.u(space.dom.vertices[space.b2d])

    def neumann_data(self, space: BoundarySpace) -> np.ndarray:
        """psi0 = a nu . grad u as the L2 projection onto boundary P1.

        Projection (rather than vertex interpolation of face-averaged
        values) keeps the compatibility integral of the discrete datum
        exact for polynomial fluxes, edges and corners included.
        """
        from .quadrature import gauss_rule_triangle, map_triangle
        rule = gauss_rule_triangle(4)
        bnd = space.bnd
        loc = space.local_triangles()
        ell = np.zeros(space.n)
        for t in range(bnd.n_triangles):
            qp, qw = map_triangle(rule, bnd.vertices[bnd.triangles[t]])
            flux = (self.a.eval(qp)
                    * (self.grad_u(qp) @ bnd.normals[t]))
            ell[loc[t]] += rule.points.T @ (qw * flux)
        return np.linalg.solve(space.mass, ell)

    def neumann_data_pointwise(self, space: BoundarySpace) -> np.ndarray:
        """psi0 by panel-averaged vertex sampling (comparison variant)."""
        from .conormal import classical_conormal
        return classical_conormal(space, self.a, grad_fn=lambda x:
                                  self.grad_u(np.atleast_2d(x))[0])

    def nodal_u(self, vertices: np.ndarray) -> np.ndarray:
        return self.u(vertices)


def _m0() -> ManufacturedCase:
    x0 = np.array([2.0, 2.0, 2.0])

    def u(p):
        p = np.atleast_2d(np.asarray(p, float))
        return 1.0 / np.linalg.norm(p - x0, axis=-1)

    def grad_u(p):
        p = np.atleast_2d(np.asarray(p, float))
        rel = p - x0
        r = np.linalg.norm(rel, axis=-1)
        return -rel / r[..., None] ** 3

    def f(p):
        p = np.atleast_2d(np.asarray(p, float))
        return np.zeros(p.shape[0])

    return ManufacturedCase("M0", constant_coefficient(1.0), u, grad_u, f)


def _m1() -> ManufacturedCase:
    a = coefficient_by_id("affine")        # 2 + x1

    def u(p):
        p = np.atleast_2d(np.asarray(p, float))
        return p[..., 0] + p[..., 1] ** 2

    def grad_u(p):
        p = np.atleast_2d(np.asarray(p, float))
        g = np.zeros(p.shape)
        g[..., 0] = 1.0
        g[..., 1] = 2.0 * p[..., 1]
        return g

    def f(p):
        p = np.atleast_2d(np.asarray(p, float))
        return 5.0 + 2.0 * p[..., 0]

    return ManufacturedCase("M1", a, u, grad_u, f)


def _m2() -> ManufacturedCase:
    a = coefficient_by_id("exp")           # e^{x1}

    def u(p):
        p = np.atleast_2d(np.asarray(p, float))
        return p[..., 0] * p[..., 2]

    def grad_u(p):
        p = np.atleast_2d(np.asarray(p, float))
        g = np.zeros(p.shape)
        g[..., 0] = p[..., 2]
        g[..., 2] = p[..., 0]
        return g

    def f(p):
        p = np.atleast_2d(np.asarray(p, float))
        return np.exp(p[..., 0]) * p[..., 2]

    return ManufacturedCase("M2", a, u, grad_u, f)


_CASES = {"M0": _m0, "M1": _m1, "M2": _m2}


def builtin_cases() -> list[ManufacturedCase]:
    return [_CASES[k]() for k in ("M0", "M1", "M2")]


def case_by_id(name: str) -> ManufacturedCase:
    if name not in _CASES:
        raise KeyError(f"unknown case {name!r}; known: {sorted(_CASES)}")
    return _CASES[name]()

"""Variable coefficient fields and the point-pair kernels built from them.

The diffusion operator is A u = div(a grad u) on a unit-scale domain in R^3.
Its parametrix is the Laplace fundamental solution divided by the coefficient
at the second argument, and the two remainder kernels measure the defect of
that parametrix under A acting in the first or the second argument.  All
kernels here are plain functions of two points; the singular quadrature that
integrates them lives in :mod:`bdie.quadrature` and :mod:`bdie.potentials`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FOUR_PI = 4.0 * np.pi

# Pairs closer than this are treated as coincident and rejected: quadrature
# layers must never sample the kernel diagonal.
SINGULAR_GUARD = 1e-14


class SingularEvaluationError(ValueError):
    """Raised when a kernel is evaluated at (numerically) coincident points."""


def _as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite components")
    return p


@dataclass(frozen=True)
class Coefficient:
    """Scalar coefficient a(x) with analytic first and second derivatives.

    ``eval``/``grad``/``laplacian`` must be vectorizable over trailing point
    axes shaped (..., 3).  ``a_min``/``a_max`` bound the coefficient on the
    closed unit-scale domains this library works with; positivity of
    ``a_min`` is what makes the parametrix well defined.
    """

    id: str
    eval_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    laplacian_fn: Callable[[np.ndarray], np.ndarray]
    a_min: float
    a_max: float

    def __post_init__(self):
        if not (0.0 < self.a_min <= self.a_max):
            raise ValueError("coefficient bounds must satisfy 0 < a_min <= a_max")

    def eval(self, x) -> np.ndarray:
        return self.eval_fn(np.asarray(x, dtype=float))

    def grad(self, x) -> np.ndarray:
        return self.grad_fn(np.asarray(x, dtype=float))

    def laplacian(self, x) -> np.ndarray:
        return self.laplacian_fn(np.asarray(x, dtype=float))

    def log_laplacian(self, x) -> np.ndarray:
        """Laplacian of ln a:  Delta a / a - |grad a|^2 / a^2."""
        x = np.asarray(x, dtype=float)
        a = self.eval_fn(x)
        g = self.grad_fn(x)
        return self.laplacian_fn(x) / a - np.sum(g * g, axis=-1) / a**2

    def normal_derivative(self, x, nu) -> np.ndarray:
        """Directional derivative nu . grad a, used on boundary vertices."""
        return np.sum(np.asarray(nu, float) * self.grad(x), axis=-1)


def _const_coefficient(value: float = 1.0) -> Coefficient:
    v = float(value)
    return Coefficient(
        id=f"const{v:g}" if v != 1.0 else "one",
        eval_fn=lambda x: np.full(np.asarray(x).shape[:-1], v),
        grad_fn=lambda x: np.zeros(np.asarray(x).shape),
        laplacian_fn=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        a_min=v,
        a_max=v,
    )


def _affine_coefficient(alpha: float = 1.0) -> Coefficient:
    # a(x) = 2 + alpha*x1; positive on unit-scale domains for |alpha| < 2.
    al = float(alpha)
    if abs(al) >= 2.0:
        raise ValueError("affine coefficient needs |alpha| < 2 to stay positive")

    def grad(x):
        g = np.zeros(np.asarray(x).shape)
        g[..., 0] = al
        return g

    return Coefficient(
        id=f"affine{al:g}",
        eval_fn=lambda x: 2.0 + al * np.asarray(x, float)[..., 0],
        grad_fn=grad,
        laplacian_fn=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        a_min=2.0 - abs(al),
        a_max=2.0 + abs(al),
    )


def _exp_coefficient(alpha: float = 1.0) -> Coefficient:
    al = float(alpha)

    def ev(x):
        return np.exp(al * np.asarray(x, float)[..., 0])

    def grad(x):
        g = np.zeros(np.asarray(x).shape)
        g[..., 0] = al * ev(x)
        return g

    return Coefficient(
        id=f"exp{al:g}",
        eval_fn=ev,
        grad_fn=grad,
        laplacian_fn=lambda x: al**2 * ev(x),
        a_min=np.exp(-abs(al)),
        a_max=np.exp(abs(al)),
    )


def _prodpoly_coefficient() -> Coefficient:
    # a(x) = (2 + x1) * (2 + x2^2); genuinely three-term derivative data.
    def ev(x):
        x = np.asarray(x, float)
        return (2.0 + x[..., 0]) * (2.0 + x[..., 1] ** 2)

    def grad(x):
        x = np.asarray(x, float)
        g = np.zeros(x.shape)
        g[..., 0] = 2.0 + x[..., 1] ** 2
        g[..., 1] = (2.0 + x[..., 0]) * 2.0 * x[..., 1]
        return g

    def lap(x):
        x = np.asarray(x, float)
        return (2.0 + x[..., 0]) * 2.0

    return Coefficient(
        id="prodpoly", eval_fn=ev, grad_fn=grad, laplacian_fn=lap,
        a_min=1.0 * 2.0, a_max=3.0 * 3.0,
    )


_REGISTRY: dict[str, Callable[[], Coefficient]] = {
    "one": _const_coefficient,
    "affine": _affine_coefficient,
    "exp": _exp_coefficient,
    "prodpoly": _prodpoly_coefficient,
}


def coefficient_by_id(name: str) -> Coefficient:
    """Look up a built-in coefficient family by its string id."""
    if name not in _REGISTRY:
        raise KeyError(f"unknown coefficient id {name!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[name]()


def constant_coefficient(value: float = 1.0) -> Coefficient:
    return _const_coefficient(value)


def _checked_distance(x: np.ndarray, y: np.ndarray) -> float:
    r = float(np.linalg.norm(x - y))
    if r < SINGULAR_GUARD:
        raise SingularEvaluationError("kernel evaluated at coincident points")
    return r


def fundamental_solution(x, y) -> float:
    """Laplace fundamental solution in 3-D:  -1 / (4 pi |x-y|)."""
    x, y = _as_point(x), _as_point(y)
    return -1.0 / (FOUR_PI * _checked_distance(x, y))


def parametrix(x, y, a: Coefficient) -> float:
    """Levi function for div(a grad .): fundamental solution over a(y)."""
    x, y = _as_point(x), _as_point(y)
    return fundamental_solution(x, y) / float(a.eval(y))


def remainder_kernel(x, y, a: Coefficient) -> float:
    """Remainder of the parametrix under the operator acting in x.

    Equals grad a(x) . grad_x P(x, y); homogeneous of order -2 in |x-y|
    and identically zero for constant coefficients.
    """
    x, y = _as_point(x), _as_point(y)
    r = _checked_distance(x, y)
    return float(np.dot(x - y, a.grad(x))) / (FOUR_PI * float(a.eval(y)) * r**3)


def remainder_kernel_adjoint(x, y, a: Coefficient) -> float:
    """Remainder of the parametrix under the operator acting in y."""
    x, y = _as_point(x), _as_point(y)
    r = _checked_distance(x, y)
    lead = float(a.log_laplacian(y)) / (FOUR_PI * r)
    drift = float(np.dot(x - y, a.grad(y))) / (FOUR_PI * float(a.eval(y)) * r**3)
    return lead - drift


def double_layer_kernel(x, nu, y, a: Coefficient) -> float:
    """Conormal derivative (in x, direction nu) of the parametrix.

    a(x) nu . grad_x P(x,y) = a(x) (nu . (x-y)) / (4 pi a(y) |x-y|^3).
    """
    x, y = _as_point(x), _as_point(y)
    nu = np.asarray(nu, dtype=float)
    r = _checked_distance(x, y)
    return float(a.eval(x)) * float(np.dot(nu, x - y)) / (
        FOUR_PI * float(a.eval(y)) * r**3
    )


def grad_fundamental_solution(x, y) -> np.ndarray:
    """grad_x of the Laplace fundamental solution: (x-y) / (4 pi |x-y|^3)."""
    x, y = _as_point(x), _as_point(y)
    r = _checked_distance(x, y)
    return (x - y) / (FOUR_PI * r**3)

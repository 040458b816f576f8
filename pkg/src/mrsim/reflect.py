"""The constraint functional H(x, mu) = E_mu[h(x + U)] and its root at level 0.

The projection amount is the smallest nonnegative shift that puts the law
back on ``E[h] >= 0``. For the affine constraint families the root is
closed form; for the sine family it is bracketed by the bi-Lipschitz bounds
``m <= dH/dx <= M`` and bisected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measure import EmpiricalMeasure
from .model import ConstraintSpec

__all__ = [
    "ProjectionError",
    "ProjectionResult",
    "h_functional",
    "default_tol",
    "g0",
    "g0_bar",
    "projection_amount",
]

MAX_ITER = 200


class ProjectionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ProjectionResult:
    g0: float
    g0_bar: float
    residual: float
    iterations: int


def _samples(mu) -> np.ndarray:
    return mu.samples if isinstance(mu, EmpiricalMeasure) else np.asarray(mu, dtype=np.float64)


def _H(x: float, u: np.ndarray, c: ConstraintSpec) -> float:
    if c.is_affine:
        val = x + float(np.add.reduce(u)) / u.size + c.offset
    else:
        val = float(np.add.reduce(c.h(x + u))) / u.size
    if not math.isfinite(val):
        raise ProjectionError(f"non-finite constraint functional at x={x!r}")
    return val


def h_functional(x: float, mu, c: ConstraintSpec) -> float:
    """H(x, mu) = (1/n) sum_i h(x + u_i)."""
    return _H(float(x), _samples(mu), c)


def default_tol(h0: float, c: ConstraintSpec) -> float:
    return 1e-10 * max(1.0, abs(h0) / c.m)


def _root(u: np.ndarray, c: ConstraintSpec, h0: float, tol: float) -> ProjectionResult:
    if h0 == 0.0:
        return ProjectionResult(0.0, 0.0, 0.0, 0)
    if c.is_affine:
        x = -(float(np.add.reduce(u)) / u.size + c.offset)
        res = abs(_H(x, u, c))
        return ProjectionResult(max(0.0, x), x, res, 0)
    if h0 < 0:
        lo, hi = -h0 / c.M, -h0 / c.m
    else:
        lo, hi = -h0 / c.m, -h0 / c.M
    # width <= tol / M keeps |H(hi)| <= tol
    width = tol / c.M
    it = 0
    h_hi = _H(hi, u, c)
    while hi - lo > width and it < MAX_ITER:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        h_mid = _H(mid, u, c)
        it += 1
        if h_mid >= 0.0:
            hi, h_hi = mid, h_mid
        else:
            lo = mid
    return ProjectionResult(max(0.0, hi), hi, abs(h_hi), it)


def g0_bar(mu, c: ConstraintSpec, tol: Optional[float] = None) -> float:
    """Signed root of H(., mu); the smallest x with H(x, mu) >= 0."""
    u = _samples(mu)
    h0 = _H(0.0, u, c)
    if tol is None:
        tol = default_tol(h0, c)
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _root(u, c, h0, tol).g0_bar


def g0(mu, c: ConstraintSpec, tol: Optional[float] = None) -> ProjectionResult:
    """Projection amount ``max(0, g0_bar)`` with search diagnostics."""
    u = _samples(mu)
    h0 = _H(0.0, u, c)
    if tol is None:
        tol = default_tol(h0, c)
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _root(u, c, h0, tol)


def projection_amount(u: np.ndarray, c: ConstraintSpec, tol: Optional[float] = None) -> float:
    """Fast path used by the time stepper: 0 without a search when the constraint holds."""
    h0 = _H(0.0, u, c)
    if h0 >= 0.0:
        return 0.0
    if tol is None:
        tol = default_tol(h0, c)
    return _root(u, c, h0, tol).g0

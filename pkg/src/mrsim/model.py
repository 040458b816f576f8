"""Coefficient families for drift, diffusion and the mean constraint."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .measure import EmpiricalMeasure
from .rng import InitialLawSpec, sample_initial_many

__all__ = [
    "ConstraintSpec",
    "CoefficientSpec",
    "DissipativityBounds",
    "Diagnostics",
    "ModelError",
    "drift",
    "diffusion",
    "constraint_eval",
    "dissipativity",
    "validate",
]

HARNACK_MODES = (None, "log", "shift")


class ModelError(ValueError):
    """Raised for coefficient configurations outside the supported families."""


@dataclass(frozen=True)
class ConstraintSpec:
    """Constraint function ``h``.

    ``identity``: h(x) = x; ``affine``: h(x) = x - c; ``sine``: h(x) = x + k sin x
    with |k| < 1 so that h stays strictly increasing.
    """

    family: str = "identity"
    param: float = 0.0

    def __post_init__(self):
        if self.family not in ("identity", "affine", "sine"):
            raise ModelError(f"unknown constraint family {self.family!r}")
        if not np.isfinite(self.param):
            raise ModelError("constraint parameter must be finite")
        if self.family == "sine" and abs(self.param) >= 1:
            raise ModelError("sine constraint needs |kappa| < 1 (h must be increasing)")

    @property
    def m(self) -> float:
        return 1.0 - abs(self.param) if self.family == "sine" else 1.0

    @property
    def M(self) -> float:
        return 1.0 + abs(self.param) if self.family == "sine" else 1.0

    @property
    def is_affine(self) -> bool:
        return self.family != "sine"

    @property
    def offset(self) -> float:
        """``h(x) - x`` for the affine families."""
        return -self.param if self.family == "affine" else 0.0

    def h(self, x):
        if self.family == "identity":
            return x
        if self.family == "affine":
            return x - self.param
        return x + self.param * np.sin(x)

    def dh(self, x):
        if self.family == "sine":
            return 1.0 + self.param * np.cos(x)
        return np.ones_like(np.asarray(x, dtype=np.float64))

    def d2h(self, x):
        if self.family == "sine":
            return -self.param * np.sin(x)
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def zero(self) -> float:
        """The unique root of h."""
        return self.param if self.family == "affine" else 0.0


@dataclass(frozen=True)
class DissipativityBounds:
    C1: float
    C2: float

    @property
    def valid(self) -> bool:
        return self.C2 > self.C1

    @property
    def rate(self) -> float:
        """Contraction rate ``C2 - C1`` of the squared W2 distance."""
        return self.C2 - self.C1


@dataclass(frozen=True)
class CoefficientSpec:
    """b(x, mu) = th0 + th1 x + th2 mean(mu); sigma(x, mu) = et0 + et1 x + et2 mean(mu).

    ``noise_scale`` is the small-noise parameter eps; the diffusion enters the
    dynamics as ``sqrt(eps) * sigma``. ``harnack`` selects the restricted
    diffusion forms: ``"log"`` (sigma depends on x only) or ``"shift"``
    (sigma depends on the law only).
    """

    theta: tuple = (0.0, -1.0, 0.0)
    eta: tuple = (1.0, 0.0, 0.0)
    constraint: ConstraintSpec = field(default_factory=ConstraintSpec)
    initial: InitialLawSpec = field(default_factory=InitialLawSpec)
    noise_scale: float = 1.0
    state_free: bool = False
    harnack: Optional[str] = None
    state_box: tuple = (-10.0, 10.0)

    def __post_init__(self):
        theta = tuple(float(v) for v in self.theta)
        eta = tuple(float(v) for v in self.eta)
        if len(theta) != 3 or len(eta) != 3:
            raise ModelError("theta and eta need three entries each")
        if not all(np.isfinite(theta + eta)):
            raise ModelError("coefficients must be finite")
        if not (np.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ModelError("noise_scale must be a finite number >= 0")
        if self.harnack not in HARNACK_MODES:
            raise ModelError(f"unknown harnack mode {self.harnack!r}")
        if (self.state_free or self.harnack == "shift") and eta[1] != 0.0:
            raise ModelError("state-free diffusion requires eta1 = 0")
        if self.harnack == "log" and eta[2] != 0.0:
            raise ModelError("log-Harnack mode requires eta2 = 0 (sigma depends on x only)")
        lo, hi = (float(v) for v in self.state_box)
        if not lo < hi:
            raise ModelError("state_box needs lo < hi")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "state_box", (lo, hi))
        object.__setattr__(self, "noise_scale", float(self.noise_scale))

    @property
    def lipschitz(self) -> float:
        return sum(abs(v) for v in self.theta[1:]) + sum(abs(v) for v in self.eta[1:])

    @property
    def sigma_min(self) -> float:
        """min |sigma| with the state and the mean both ranging over ``state_box``.

        sigma is affine, so the extremes sit on the corners of the box.
        """
        lo, hi = self.state_box
        e0, e1, e2 = self.eta
        corners = [e0 + e1 * x + e2 * m for x in (lo, hi) for m in (lo, hi)]
        if min(corners) <= 0.0 <= max(corners):
            return 0.0
        return min(abs(c) for c in corners)

    def replace(self, **changes) -> "CoefficientSpec":
        return dataclasses.replace(self, **changes)


def _mean_of(mu: Union[EmpiricalMeasure, float]) -> float:
    return mu.mean if isinstance(mu, EmpiricalMeasure) else float(mu)


def drift(spec: CoefficientSpec, x, mu):
    t0, t1, t2 = spec.theta
    return t0 + t1 * x + t2 * _mean_of(mu)


def diffusion(spec: CoefficientSpec, x, mu):
    """sigma(x, mu) without the sqrt(eps) factor."""
    e0, e1, e2 = spec.eta
    val = e0 + e1 * x + e2 * _mean_of(mu)
    if e1 == 0.0 and np.ndim(x):
        return np.full(np.shape(x), val)
    return val


def constraint_eval(c: ConstraintSpec, x):
    return c.h(x), c.dh(x), c.d2h(x)


def dissipativity(spec: CoefficientSpec) -> DissipativityBounds:
    """Constants for 2(x-y)(b-b') + |sigma-sigma'|^2 <= C1 W2^2 - C2 |x-y|^2.

    With a = x - y and d = mean(mu) - mean(nu) (so |d| <= W2):
    2 th2 a d <= |th2| (a^2 + d^2) and (e1 a + e2 d)^2 <= (|e1|+|e2|)(|e1| a^2 + |e2| d^2).
    The diffusion term carries the noise scale eps.
    """
    _, t1, t2 = spec.theta
    _, e1, e2 = spec.eta
    s = spec.noise_scale * (abs(e1) + abs(e2))
    c2 = -2.0 * t1 - abs(t2) - abs(e1) * s
    c1 = abs(t2) + abs(e2) * s
    return DissipativityBounds(C1=c1, C2=c2)


@dataclass(frozen=True)
class Diagnostics:
    K: float
    m: float
    M: float
    dissipativity: DissipativityBounds
    sigma_min: float
    initial_mean_h: float
    initial_needs_projection: bool

    def as_dict(self) -> dict:
        return {
            "K": self.K,
            "m": self.m,
            "M": self.M,
            "C1": self.dissipativity.C1,
            "C2": self.dissipativity.C2,
            "dissipative": self.dissipativity.valid,
            "sigma_min": self.sigma_min,
            "initial_mean_h": self.initial_mean_h,
            "initial_needs_projection": self.initial_needs_projection,
        }


def validate(spec: CoefficientSpec, seed: int = 0, draws: int = 10_000) -> Diagnostics:
    """Derived constants plus a Monte-Carlo spot check of E[h(xi)].

    A negative E[h(xi)] is flagged, not rejected: the initial projection in
    :func:`mrsim.scheme.init_ensemble` moves the sample onto the constraint.
    """
    sigma_min = spec.sigma_min
    if spec.harnack is not None and sigma_min <= 0.0:
        raise ModelError("Harnack mode needs |sigma| bounded away from 0 on the state box")
    xi = sample_initial_many(spec.initial, seed, np.arange(draws))
    mean_h = float(np.add.reduce(spec.constraint.h(xi)) / draws)
    return Diagnostics(
        K=spec.lipschitz,
        m=spec.constraint.m,
        M=spec.constraint.M,
        dissipativity=dissipativity(spec),
        sigma_min=sigma_min,
        initial_mean_h=mean_h,
        initial_needs_projection=mean_h < 0,
    )

"""Density of dK with respect to Lebesgue measure, from ensemble statistics.

At times where the constraint binds, ``dK/dt = max(0, -E[A h(X)]) / E[h'(X)]``
with ``A f = b f' + (1/2) sigma^2 f''``. A finite-difference slope of the
simulated K path serves as the comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import CoefficientSpec, diffusion, drift
from .scheme import Ensemble, PathRecord

__all__ = ["DensityEstimate", "generator_h", "default_band", "density_estimate", "k_slope"]


@dataclass
class DensityEstimate:
    t: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    active: np.ndarray
    k: np.ndarray
    band_epsilon: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,numerator,denominator,active,k\n")
            for t, num, den, act, k in zip(self.t, self.numerator, self.denominator,
                                           self.active, self.k):
                fh.write(f"{t:.17g},{num:.17g},{den:.17g},{int(act)},{k:.17g}\n")


def generator_h(x, mu, model: CoefficientSpec):
    """A_mu h(x) = b(x, mu) h'(x) + (1/2) sigma(x, mu)^2 h''(x).

    sigma here includes the sqrt(eps) noise scale.
    """
    c = model.constraint
    sig2 = model.noise_scale * np.square(diffusion(model, x, mu))
    return drift(model, x, mu) * c.dh(x) + 0.5 * sig2 * c.d2h(x)


def default_band(model: CoefficientSpec, dt: float, n: int) -> float:
    M = model.constraint.M
    return 3.0 * (M * math.sqrt(dt) + M / math.sqrt(n))


def density_estimate(
    snapshots: Sequence[Ensemble],
    model: CoefficientSpec,
    band_epsilon: Optional[float] = None,
    dt: Optional[float] = None,
) -> DensityEstimate:
    """Evaluate the dK density at each snapshot.

    The exact-zero indicator on E[h(X_t)] is replaced by ``|E_n h| <= band_epsilon``.
    When ``band_epsilon`` is omitted it is derived from ``dt`` and the ensemble size.
    """
    if band_epsilon is None:
        if dt is None:
            raise ValueError("give band_epsilon or dt")
        band_epsilon = default_band(model, dt, snapshots[0].n)
    c = model.constraint
    rows = []
    for ens in snapshots:
        x = ens.particles
        n = x.size
        mean = float(np.add.reduce(x) / n)
        ah = float(np.add.reduce(np.broadcast_to(generator_h(x, mean, model), x.shape)) / n)
        den = float(np.add.reduce(np.broadcast_to(c.dh(x), x.shape)) / n)
        mean_h = float(np.add.reduce(c.h(x)) / n)
        num = max(0.0, -ah)
        active = abs(mean_h) <= band_epsilon
        rows.append((ens.time, num, den, active, num / den if active else 0.0))
    t, num, den, act, k = (np.array(col) for col in zip(*rows))
    return DensityEstimate(t, num, den, act.astype(bool), k, float(band_epsilon))


def k_slope(path: PathRecord, window: int = 1) -> np.ndarray:
    """Centered differences of K over ``window`` steps (one-sided at the ends).

    Returns an array of shape (len(t), 2) with columns (t, dK/dt).
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    t, K = path.t, path.K
    idx = np.arange(t.size)
    lo = np.maximum(idx - window, 0)
    hi = np.minimum(idx + window, t.size - 1)
    slope = (K[hi] - K[lo]) / (t[hi] - t[lo])
    return np.column_stack([t, slope])

"""Empirical measures on the real line and exact 1-D Wasserstein distances."""

from __future__ import annotations

from functools import cached_property

import numpy as np

__all__ = ["EmpiricalMeasure", "expectation", "wasserstein", "QUANTILES"]

QUANTILES = 1024


class EmpiricalMeasure:
    """Uniform measure ``(1/n) sum_i delta_{x_i}`` over a finite sample.

    Samples are copied and frozen on construction. Reductions go through
    ``np.add.reduce`` (pairwise, index order), so results do not depend on
    how the samples were produced.
    """

    def __init__(self, samples):
        arr = np.array(samples, dtype=np.float64).ravel()
        if arr.size == 0:
            raise ValueError("empirical measure needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("empirical measure samples must be finite")
        arr.setflags(write=False)
        self.samples = arr

    def __len__(self) -> int:
        return self.samples.size

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(n={len(self)}, mean={self.mean:.6g})"

    @cached_property
    def sorted_view(self) -> np.ndarray:
        s = np.sort(self.samples, kind="stable")
        s.setflags(write=False)
        return s

    @cached_property
    def mean(self) -> float:
        return float(np.add.reduce(self.samples) / self.samples.size)

    @cached_property
    def variance(self) -> float:
        d = self.samples - self.mean
        return float(np.add.reduce(d * d) / self.samples.size)

    def moment(self, p: float) -> float:
        return float(np.add.reduce(np.abs(self.samples) ** p) / self.samples.size)

    def quantiles(self, q: int = QUANTILES) -> np.ndarray:
        """Values of the quantile function at the ``q`` midpoints ``(k+1/2)/q``."""
        n = self.samples.size
        levels = (np.arange(q) + 0.5) / q
        idx = np.minimum((levels * n).astype(np.int64), n - 1)
        return self.sorted_view[idx]


def expectation(f, mu: EmpiricalMeasure) -> float:
    """``(1/n) sum f(x_i)``; ``f`` must accept a numpy array."""
    vals = np.asarray(f(mu.samples), dtype=np.float64)
    return float(np.add.reduce(vals) / mu.samples.size)


def wasserstein(p: int, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """W_p distance, ``p`` in {1, 2}.

    Equal sizes use the sorted (monotone) coupling, which is optimal on the
    line. Unequal sizes fall back to matching ``QUANTILES`` midpoint quantiles.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if len(mu) == len(nu):
        x, y = mu.sorted_view, nu.sorted_view
    else:
        x, y = mu.quantiles(), nu.quantiles()
    d = np.abs(x - y)
    if p == 1:
        return float(np.add.reduce(d) / d.size)
    return float(np.sqrt(np.add.reduce(d * d) / d.size))

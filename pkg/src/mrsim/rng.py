"""Counter-based Gaussian streams.

Every variate is a pure function of ``(master_seed, particle, step, channel)``,
so an n-particle run and a larger reference run share their first n noise
streams exactly, and the result never depends on how work is split across
threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "Channel",
    "StreamKey",
    "InitialLawSpec",
    "gaussian",
    "gaussians",
    "uniforms",
    "sample_initial",
    "sample_initial_many",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


class Channel(enum.IntEnum):
    INITIAL = 0
    BROWNIAN = 1
    AUXILIARY = 2


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    particle_index: int
    step_index: int
    channel: Channel = Channel.BROWNIAN


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _hash(seed: int, particles: np.ndarray, step: int, channel: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        base = _mix(np.uint64(seed & _MASK64) + _GOLDEN)
        base = _mix(base ^ (np.uint64(step & _MASK64) * _GOLDEN + np.uint64(channel + 1)))
        z = _mix(base + particles.astype(np.uint64) * _GOLDEN)
        return _mix(z ^ base)


def uniforms(seed: int, particles, step: int, channel: int = Channel.BROWNIAN) -> np.ndarray:
    """Uniforms on the open interval (0, 1), one per particle index."""
    idx = np.atleast_1d(np.asarray(particles, dtype=np.uint64))
    bits = _hash(int(seed), idx, int(step), int(channel)) >> _S11
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def gaussians(seed: int, particles, step: int, channel: int = Channel.BROWNIAN) -> np.ndarray:
    """Standard normals for an array of particle indices at one step."""
    return ndtri(uniforms(seed, particles, step, channel))


def gaussian(key: StreamKey) -> float:
    return float(gaussians(key.master_seed, [key.particle_index], key.step_index, key.channel)[0])


@dataclass(frozen=True)
class InitialLawSpec:
    """Law of the initial condition: ``point``, ``gaussian`` or ``uniform``."""

    kind: str = "point"
    params: tuple = (0.0,)

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if self.kind == "point":
            if len(params) != 1:
                raise ValueError("point law takes one parameter (location)")
        elif self.kind == "gaussian":
            if len(params) != 2:
                raise ValueError("gaussian law takes (mean, sd)")
            if params[1] < 0:
                raise ValueError("gaussian sd must be nonnegative")
        elif self.kind == "uniform":
            if len(params) != 2:
                raise ValueError("uniform law takes (lo, hi)")
            if params[0] > params[1]:
                raise ValueError("uniform law needs lo <= hi")
        else:
            raise ValueError(f"unknown initial law {self.kind!r}")
        if not all(np.isfinite(params)):
            raise ValueError("initial law parameters must be finite")

    @property
    def is_point(self) -> bool:
        return self.kind == "point" or (self.kind == "gaussian" and self.params[1] == 0.0)

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        return self.params[0]


def sample_initial_many(law: InitialLawSpec, seed: int, particles) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(particles, dtype=np.uint64))
    if law.kind == "point":
        return np.full(idx.shape, law.params[0])
    u = uniforms(seed, idx, 0, Channel.INITIAL)
    if law.kind == "gaussian":
        mean, sd = law.params
        return mean + sd * ndtri(u)
    lo, hi = law.params
    return lo + (hi - lo) * u


def sample_initial(law: InitialLawSpec, key: StreamKey) -> float:
    return float(sample_initial_many(law, key.master_seed, [key.particle_index])[0])

"""Euler-Maruyama time stepping with a per-step projection of the law.

Each step makes a plain Euler proposal ``U`` for every particle, then shifts
the whole cloud by the smallest ``dK >= 0`` that restores
``(1/n) sum h(X_i) >= 0``. The accumulated shifts form the reflecting
process ``K``.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy.integrate import trapezoid

from . import rng
from .model import CoefficientSpec, diffusion, drift
from .reflect import default_tol, projection_amount

__all__ = [
    "SimulationError",
    "TimeGrid",
    "Profile",
    "DriverSpec",
    "ControlPath",
    "Ensemble",
    "PathRecord",
    "init_ensemble",
    "step",
    "iterate",
    "simulate",
    "simulate_reflected_ode",
    "simulate_skeleton",
    "rate_action",
]

CSV_COLUMNS = ("t", "K", "dK", "mean_h", "mean", "var")
_MIN_CHUNK = 4096


class SimulationError(ArithmeticError):
    """Numerical abort: a particle left the finite reals."""


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    dt: float

    def __post_init__(self):
        if not (self.t_end > 0 and self.dt > 0):
            raise ValueError("t_end and dt must be positive")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if abs(self.steps * self.dt - self.t_end) > 1e-12:
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def time(self, k: int) -> float:
        return k * self.dt


@dataclass(frozen=True)
class Profile:
    """Bounded scalar profile of time: ``constant(c)``, ``ramp(a0, slope)`` or
    ``sinusoid(base, amp, freq)`` = base + amp sin(freq t)."""

    kind: str = "constant"
    params: tuple = (1.0,)

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        arity = {"constant": 1, "ramp": 2, "sinusoid": 3}
        if self.kind not in arity:
            raise ValueError(f"unknown profile {self.kind!r}")
        if len(params) != arity[self.kind]:
            raise ValueError(f"{self.kind} profile takes {arity[self.kind]} parameters")
        object.__setattr__(self, "params", params)

    def __call__(self, t: float) -> float:
        p = self.params
        if self.kind == "constant":
            return p[0]
        if self.kind == "ramp":
            return p[0] + p[1] * t
        return p[0] + p[1] * math.sin(p[2] * t)


@dataclass(frozen=True)
class DriverSpec:
    """Driver A_t = int a ds, M_t = int m dB replacing (t, B_t)."""

    a: Profile = field(default_factory=Profile)
    m: Profile = field(default_factory=Profile)

    @property
    def is_canonical(self) -> bool:
        return self.a == Profile() and self.m == Profile()


@dataclass(frozen=True)
class ControlPath:
    """Deterministic control h(t): ``zero``, ``constant(c)``,
    ``sinusoid(amp, freq)`` = amp sin(2 pi freq t), or ``table`` of grid values
    (linearly interpolated on ``[0, t_end]``)."""

    kind: str = "zero"
    params: tuple = ()
    t_end: float = 1.0

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        arity = {"zero": 0, "constant": 1, "sinusoid": 2}
        if self.kind == "table":
            if len(params) < 2:
                raise ValueError("table control needs at least two values")
        elif self.kind not in arity:
            raise ValueError(f"unknown control {self.kind!r}")
        elif len(params) != arity[self.kind]:
            raise ValueError(f"{self.kind} control takes {arity[self.kind]} parameters")
        if not all(math.isfinite(p) for p in params):
            raise ValueError("control values must be finite")
        object.__setattr__(self, "params", params)

    def __call__(self, t):
        p = self.params
        if self.kind == "zero":
            return 0.0 * np.asarray(t, dtype=np.float64)
        if self.kind == "constant":
            return p[0] + 0.0 * np.asarray(t, dtype=np.float64)
        if self.kind == "sinusoid":
            return p[0] * np.sin(2.0 * np.pi * p[1] * np.asarray(t, dtype=np.float64))
        knots = np.linspace(0.0, self.t_end, len(p))
        return np.interp(t, knots, p)


@dataclass
class Ensemble:
    time: float
    particles: np.ndarray
    k_accum: float
    model: CoefficientSpec
    seed: int
    step_index: int = 0

    @property
    def n(self) -> int:
        return self.particles.size

    def mean_h(self) -> float:
        return float(np.add.reduce(self.model.constraint.h(self.particles)) / self.n)


@dataclass
class PathRecord:
    """Per-step statistics; row 0 is the (projected) initial state."""

    t: np.ndarray
    K: np.ndarray
    dK: np.ndarray
    mean_h: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    tol: np.ndarray
    M: float = 1.0
    snapshots: list = field(default_factory=list)
    tracked: Optional[np.ndarray] = None

    @property
    def columns(self) -> dict:
        return {name: getattr(self, name) for name in CSV_COLUMNS}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            cols = [getattr(self, name) for name in CSV_COLUMNS]
            for row in zip(*cols):
                fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")

    def skorokhod_violations(self) -> list:
        """Row indices breaking monotonicity, feasibility or complementary slackness."""
        bad = []
        slack = self.M * self.tol
        for k in range(self.t.size):
            if self.K[k] < 0 or (k and self.K[k] < self.K[k - 1]):
                bad.append(k)
            elif self.mean_h[k] < -slack[k]:
                bad.append(k)
            elif self.dK[k] > self.tol[k] and abs(self.mean_h[k]) > slack[k]:
                bad.append(k)
        return bad


def _stats(x: np.ndarray, model: CoefficientSpec):
    n = x.size
    mean = float(np.add.reduce(x) / n)
    d = x - mean
    var = float(np.add.reduce(d * d) / n)
    mean_h = float(np.add.reduce(model.constraint.h(x)) / n)
    return mean, var, mean_h


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise SimulationError(f"non-finite particle value {where}")


def _project(u: np.ndarray, model: CoefficientSpec):
    c = model.constraint
    n = u.size
    h0 = float(np.add.reduce(c.h(u)) / n)
    tol = default_tol(h0, c)
    dk = projection_amount(u, c, tol)
    return dk, tol


def init_ensemble(model: CoefficientSpec, n: int, seed: int) -> Ensemble:
    """Draw xi^i and apply the initial projection dK_0 = G0(law of xi)."""
    return _init(model, n, seed)[0]


def _init(model, n, seed):
    if n < 1:
        raise ValueError("need at least one particle")
    xi = rng.sample_initial_many(model.initial, seed, np.arange(n))
    _check_finite(xi, "in the initial sample")
    dk, tol = _project(xi, model)
    return Ensemble(0.0, xi + dk, dk, model, seed, 0), tol


def _proposal(model, x, mean, z, t, dt, driver, control):
    # overflow surfaces as inf/nan and is caught by _check_finite
    with np.errstate(over="ignore", invalid="ignore"):
        return _euler(model, x, mean, z, t, dt, driver, control)


def _euler(model, x, mean, z, t, dt, driver, control):
    sig = diffusion(model, x, mean)
    if model.noise_scale != 1.0:
        sig = math.sqrt(model.noise_scale) * sig
    b = drift(model, x, mean)
    if driver is None:
        u = x + b * dt + sig * (math.sqrt(dt) * z)
    else:
        u = x + b * (driver.a(t) * dt) + sig * (driver.m(t) * math.sqrt(dt) * z)
    if control is not None:
        u = u + diffusion(model, x, mean) * (float(control(t)) * dt)
    return u


def step(
    ensemble: Ensemble,
    grid: TimeGrid,
    step_index: int,
    driver: Optional[DriverSpec] = None,
    control: Optional[ControlPath] = None,
    pool: Optional[ThreadPoolExecutor] = None,
):
    """Advance one step: Euler proposal, then the mean projection.

    Noise for particle i at this step is keyed by ``(seed, i, step_index)``,
    so the result does not depend on ``pool`` or on the ensemble size.
    Returns ``(new_ensemble, dK)``.
    """
    new, dk, _ = _advance(ensemble, grid, step_index, driver, control, pool)
    return new, dk


def _advance(ensemble, grid, step_index, driver, control, pool):
    model = ensemble.model
    x = ensemble.particles
    n = x.size
    t = grid.time(step_index)
    mean = float(np.add.reduce(x) / n)
    if pool is None or n < 2 * _MIN_CHUNK:
        z = rng.gaussians(ensemble.seed, np.arange(n), step_index)
        u = _proposal(model, x, mean, z, t, grid.dt, driver, control)
    else:
        bounds = np.linspace(0, n, max(2, n // _MIN_CHUNK) + 1).astype(int)

        def work(lo_hi):
            lo, hi = lo_hi
            z = rng.gaussians(ensemble.seed, np.arange(lo, hi), step_index)
            return _proposal(model, x[lo:hi], mean, z, t, grid.dt, driver, control)

        u = np.concatenate(list(pool.map(work, zip(bounds[:-1], bounds[1:]))))
    _check_finite(u, f"at step {step_index} (t={t:.6g})")
    dk, tol = _project(u, model)
    new = Ensemble(grid.time(step_index + 1), u + dk, ensemble.k_accum + dk, model,
                   ensemble.seed, step_index + 1)
    return new, dk, tol


def iterate(
    model: CoefficientSpec,
    grid: TimeGrid,
    n: int,
    seed: int,
    driver: Optional[DriverSpec] = None,
    control: Optional[ControlPath] = None,
    threads: int = 1,
) -> Iterator[tuple]:
    """Yield ``(ensemble, dK, tol)`` for the initial state and after each step."""
    ctx = ThreadPoolExecutor(threads) if threads > 1 else nullcontext()
    with ctx as pool:
        ens, tol = _init(model, n, seed)
        yield ens, ens.k_accum, tol
        for k in range(grid.steps):
            ens, dk, tol = _advance(ens, grid, k, driver, control, pool)
            yield ens, dk, tol


def _record(rows, model, snapshots=None, tracked=None) -> PathRecord:
    arr = np.array(rows, dtype=np.float64).reshape(-1, 7)
    return PathRecord(
        t=arr[:, 0], K=arr[:, 1], dK=arr[:, 2], mean_h=arr[:, 3], mean=arr[:, 4],
        var=arr[:, 5], tol=arr[:, 6], M=model.constraint.M,
        snapshots=snapshots if snapshots is not None else [],
        tracked=tracked,
    )


def simulate(
    model: CoefficientSpec,
    grid: TimeGrid,
    n: int,
    seed: int,
    driver: Optional[DriverSpec] = None,
    control: Optional[ControlPath] = None,
    threads: int = 1,
    snapshot_every: int = 0,
    track: int = 0,
) -> PathRecord:
    """Run the particle system over ``grid``.

    ``snapshot_every=k`` keeps a copy of the ensemble every k steps (and at the
    final step); ``track=j`` keeps full paths of particles ``0..j-1``.
    """
    rows, snaps, paths = [], [], []
    track = min(track, n)
    for ens, dk, tol in iterate(model, grid, n, seed, driver, control, threads):
        mean, var, mean_h = _stats(ens.particles, model)
        rows.append((ens.time, ens.k_accum, dk, mean_h, mean, var, tol))
        k = ens.step_index
        if snapshot_every and (k % snapshot_every == 0 or k == grid.steps):
            snaps.append(dataclasses.replace(ens, particles=ens.particles.copy()))
        if track:
            paths.append(ens.particles[:track].copy())
    tracked = np.array(paths) if track else None
    return _record(rows, model, snaps, tracked)


def _point_start(model: CoefficientSpec) -> float:
    if not model.initial.is_point:
        raise ValueError("the reflected ODE needs a deterministic initial point")
    return model.initial.params[0]


def _ode_path(model: CoefficientSpec, grid: TimeGrid) -> tuple:
    """Scalar reflected Euler scheme: returns (psi, dK) arrays on the grid."""
    c = model.constraint
    barrier = c.zero()
    psi = np.empty(grid.steps + 1)
    dks = np.empty(grid.steps + 1)
    y = _point_start(model)
    dk = max(0.0, barrier - y)
    y = y + dk
    psi[0], dks[0] = y, dk
    for k in range(grid.steps):
        u = y + drift(model, y, y) * grid.dt
        if not math.isfinite(u):
            raise SimulationError(f"non-finite ODE value at step {k}")
        dk = max(0.0, barrier - u)
        y = u + dk
        psi[k + 1], dks[k + 1] = y, dk
    return psi, dks


def _scalar_record(y: np.ndarray, dks: np.ndarray, grid: TimeGrid, model) -> PathRecord:
    c = model.constraint
    K = np.cumsum(dks)
    tol = np.array([default_tol(float(c.h(v - d)), c) for v, d in zip(y, dks)])
    return PathRecord(
        t=grid.times, K=K, dK=dks, mean_h=np.asarray(c.h(y), dtype=np.float64),
        mean=y.copy(), var=np.zeros_like(y), tol=tol, M=c.M,
    )


def simulate_reflected_ode(model: CoefficientSpec, grid: TimeGrid) -> PathRecord:
    """Deterministic reflected ODE psi' = b(psi, delta_psi) with h(psi) >= 0.

    With a point-mass law the projection is ``max(0, h^{-1}(0) - U)``.
    """
    psi, dks = _ode_path(model, grid)
    return _scalar_record(psi, dks, grid, model)


def simulate_skeleton(model: CoefficientSpec, grid: TimeGrid, control: ControlPath) -> PathRecord:
    """Controlled equation Y' = b(Y, delta_psi) + sigma(Y, delta_psi) h(t), reflected
    pathwise onto h(Y) >= 0, with psi the reflected ODE solution."""
    psi, _ = _ode_path(model, grid)
    barrier = model.constraint.zero()
    ctrl = np.asarray(control(grid.times), dtype=np.float64)
    ys = np.empty_like(psi)
    dks = np.empty_like(psi)
    y = _point_start(model)
    dk = max(0.0, barrier - y)
    y = y + dk
    ys[0], dks[0] = y, dk
    for k in range(grid.steps):
        p = psi[k]
        u = y + (drift(model, y, p) + diffusion(model, y, p) * ctrl[k]) * grid.dt
        if not math.isfinite(u):
            raise SimulationError(f"non-finite skeleton value at step {k}")
        dk = max(0.0, barrier - u)
        y = u + dk
        ys[k + 1], dks[k + 1] = y, dk
    return _scalar_record(ys, dks, grid, model)


def rate_action(control: ControlPath, grid: TimeGrid) -> float:
    """Trapezoidal (1/2) int_0^T h(t)^2 dt."""
    v = np.asarray(control(grid.times), dtype=np.float64)
    return float(0.5 * trapezoid(v * v, dx=grid.dt))

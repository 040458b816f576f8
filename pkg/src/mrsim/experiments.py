"""Verification harness: coupled-noise experiments, rate fits and Harnack checks.

Every experiment that compares two configurations drives them with the same
noise keys (synchronous coupling), so identical configurations give exactly
zero error and differences isolate the perturbation under study.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .measure import EmpiricalMeasure, wasserstein
from .model import CoefficientSpec, ModelError, dissipativity
from .rng import InitialLawSpec
from .scheme import (
    ControlPath,
    DriverSpec,
    TimeGrid,
    iterate,
    rate_action,
    simulate,
    simulate_reflected_ode,
    simulate_skeleton,
)

__all__ = [
    "RateTable",
    "HarnackReport",
    "InvariantReport",
    "TEST_FUNCTIONS",
    "fit_loglog_slope",
    "fit_exp_rate",
    "is_strictly_decreasing",
    "chaos_experiment",
    "stability_initial",
    "stability_coeffs",
    "stability_driver",
    "small_noise",
    "weak_control_continuity",
    "contraction",
    "invariant_measure",
    "phi",
    "log_harnack_check",
    "shift_harnack_check",
]


@dataclass
class RateTable:
    x: np.ndarray
    y: np.ndarray
    x_name: str = "x"
    y_name: str = "y"
    fitted_slope: Optional[float] = None
    fitted_intercept: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.shape != self.y.shape:
            raise ValueError("x and y must have the same length")
        if np.any(self.y < 0):
            raise ValueError("rate table errors must be nonnegative")

    def to_csv(self, path) -> None:
        cols = {self.x_name: self.x, self.y_name: self.y}
        for key, val in self.extra.items():
            if np.ndim(val) == 1 and len(val) == self.x.size:
                cols[key] = np.asarray(val, dtype=np.float64)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*cols.values()):
                fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")

    def summary(self) -> dict:
        out = {"fitted_slope": self.fitted_slope, "fitted_intercept": self.fitted_intercept}
        out.update({k: v for k, v in self.extra.items() if np.ndim(v) == 0})
        return out


def fit_loglog_slope(table: RateTable) -> tuple:
    """Least-squares line through (log x, log y); stores and returns (slope, intercept)."""
    x, y = table.x, table.y
    if x.size < 2:
        raise ValueError("need at least two rows to fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive x and y")
    lx = np.log(x)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate x: all values equal")
    slope, intercept = np.polyfit(lx, np.log(y), 1)
    table.fitted_slope, table.fitted_intercept = float(slope), float(intercept)
    return table.fitted_slope, table.fitted_intercept


def fit_exp_rate(table: RateTable) -> tuple:
    """Least-squares line through (x, log y) over rows with y > 0."""
    keep = table.y > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive rows to fit a rate")
    slope, intercept = np.polyfit(table.x[keep], np.log(table.y[keep]), 1)
    table.fitted_slope, table.fitted_intercept = float(slope), float(intercept)
    return table.fitted_slope, table.fitted_intercept


def is_strictly_decreasing(values) -> bool:
    v = np.asarray(values, dtype=np.float64)
    return bool(np.all(np.diff(v) < 0))


def _row_map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _with_point(model: CoefficientSpec, x0: float) -> CoefficientSpec:
    return model.replace(initial=InitialLawSpec("point", (x0,)))


def coupled_sup_sq(
    model_a: CoefficientSpec,
    model_b: CoefficientSpec,
    grid: TimeGrid,
    n: int,
    seed: int,
    driver_a: Optional[DriverSpec] = None,
    driver_b: Optional[DriverSpec] = None,
) -> float:
    """E_n[sup_t |X^a_t - X^b_t|^2] with both systems on the same noise keys."""
    run_a = iterate(model_a, grid, n, seed, driver_a)
    run_b = iterate(model_b, grid, n, seed, driver_b)
    sup = np.zeros(n)
    for (ea, _, _), (eb, _, _) in zip(run_a, run_b):
        np.maximum(sup, np.square(ea.particles - eb.particles), out=sup)
    return float(np.add.reduce(sup) / n)


def chaos_experiment(
    model: CoefficientSpec,
    grid: TimeGrid,
    sizes: Sequence[int],
    n_ref: int,
    seed: int,
    max_tracked: int = 256,
    replicates: int = 16,
    threads: int = 1,
) -> RateTable:
    """Coupled sup-error of an n-particle system against an n_ref reference.

    Particles ``0..n-1`` share their initial and Brownian keys with the same
    indices of the reference; the error averages over the first
    ``min(n, max_tracked)`` of them. The mean-field part of the error is common
    to all particles of one run, so the expectation is taken over
    ``replicates`` independent seeds ``seed, seed + 1, ...``.
    """
    sizes = sorted(int(n) for n in sizes)
    if n_ref < 4 * sizes[-1]:
        raise ValueError("n_ref must be at least 4 * max(sizes)")
    width = min(sizes[-1], max_tracked)

    def replicate(r):
        ref = simulate(model, grid, n_ref, seed + r, track=width).tracked
        ys = []
        for n in sizes:
            tracked = simulate(model, grid, n, seed + r, track=min(n, max_tracked)).tracked
            j = tracked.shape[1]
            ys.append(float(np.mean(np.max(np.square(tracked - ref[:, :j]), axis=0))))
        return ys

    per = np.array(_row_map(replicate, list(range(replicates)), threads))
    ys = per.mean(axis=0)
    table = RateTable(sizes, ys, "n", "sup_err2",
                      extra={"n_ref": n_ref, "replicates": replicates})
    if len(sizes) >= 2 and np.all(ys > 0):
        fit_loglog_slope(table)
    return table


def stability_initial(
    model: CoefficientSpec,
    grid: TimeGrid,
    base_point: float,
    deltas: Sequence[float],
    n: int = 1000,
    seed: int = 0,
    threads: int = 1,
) -> RateTable:
    """Sup-error between runs started at ``base_point`` and ``base_point + delta``."""
    base = _with_point(model, base_point)
    ys = _row_map(
        lambda d: coupled_sup_sq(base, _with_point(model, base_point + d), grid, n, seed),
        list(deltas), threads,
    )
    table = RateTable(np.abs(deltas), ys, "delta", "sup_err2")
    if len(ys) >= 2 and all(y > 0 for y in ys):
        fit_loglog_slope(table)
    return table


def perturb_coefficients(model: CoefficientSpec, lam: float, sigma: bool = True) -> CoefficientSpec:
    """b + lam and (unless ``sigma`` is False) sigma + lam."""
    t0, t1, t2 = model.theta
    e0, e1, e2 = model.eta
    eta = (e0 + lam, e1, e2) if sigma else model.eta
    return model.replace(theta=(t0 + lam, t1, t2), eta=eta)


def stability_coeffs(
    model: CoefficientSpec,
    grid: TimeGrid,
    perturbation: Sequence[float],
    n: int = 1000,
    seed: int = 0,
    threads: int = 1,
    perturb_sigma: bool = True,
) -> RateTable:
    """Sup-error between the model and its shifted coefficients b + lam, sigma + lam.

    ``perturb_sigma=False`` shifts the drift only, which keeps a noiseless
    model deterministic.
    """
    ys = _row_map(
        lambda lam: coupled_sup_sq(model, perturb_coefficients(model, lam, perturb_sigma),
                                   grid, n, seed),
        list(perturbation), threads,
    )
    return RateTable(perturbation, ys, "lambda", "sup_err2")


def driver_distance(driver: DriverSpec, grid: TimeGrid) -> float:
    """sup_t |a(t) - 1| + sup_t |m(t) - 1| on the grid."""
    ts = grid.times
    da = max(abs(driver.a(t) - 1.0) for t in ts)
    dm = max(abs(driver.m(t) - 1.0) for t in ts)
    return da + dm


def stability_driver(
    model: CoefficientSpec,
    grid: TimeGrid,
    driver_sequence: Sequence[DriverSpec],
    n: int = 1000,
    seed: int = 0,
    threads: int = 1,
) -> RateTable:
    """Sup-error between the canonical driver (a = m = 1) and each driver in turn."""
    ys = _row_map(
        lambda drv: coupled_sup_sq(model, model, grid, n, seed, None, drv),
        list(driver_sequence), threads,
    )
    xs = [driver_distance(d, grid) for d in driver_sequence]
    return RateTable(xs, ys, "driver_distance", "sup_err2",
                     extra={"index": np.arange(1, len(ys) + 1, dtype=np.float64)})


def small_noise(
    model: CoefficientSpec,
    grid: TimeGrid,
    eps_list: Sequence[float],
    n: int = 1000,
    seed: int = 0,
    threads: int = 1,
) -> RateTable:
    """E_n[sup_t |X^eps_t - psi_t|^2] against the reflected ODE psi."""
    psi = simulate_reflected_ode(model, grid).mean

    def row(eps):
        sup = np.zeros(n)
        for ens, _, _ in iterate(model.replace(noise_scale=eps), grid, n, seed):
            np.maximum(sup, np.square(ens.particles - psi[ens.step_index]), out=sup)
        return float(np.add.reduce(sup) / n)

    ys = _row_map(row, list(eps_list), threads)
    eps = np.asarray(eps_list, dtype=np.float64)
    ratio = np.divide(ys, eps, out=np.full(eps.size, np.nan), where=eps > 0)
    return RateTable(eps, ys, "eps", "sup_err2", extra={"ratio": ratio})


def weak_control_continuity(
    model: CoefficientSpec, grid: TimeGrid, freqs: Sequence[int]
) -> RateTable:
    """sup_t |Y^{h_f} - Y^0| for h_f(t) = sin(2 pi f t), plus the action of h_f."""
    base = simulate_skeleton(model, grid, ControlPath("zero", (), grid.t_end)).mean
    ys, actions = [], []
    for f in freqs:
        ctrl = ControlPath("sinusoid", (1.0, float(f)), grid.t_end)
        y = simulate_skeleton(model, grid, ctrl).mean
        ys.append(float(np.max(np.abs(y - base))))
        actions.append(rate_action(ctrl, grid))
    return RateTable(freqs, ys, "freq", "sup_dev", extra={"action": np.array(actions)})


def contraction(
    model: CoefficientSpec,
    grid: TimeGrid,
    init_a: float,
    init_b: float,
    n: int,
    seed: int,
) -> RateTable:
    """W2(mu_t, nu_t)^2 between ensembles from two point masses on shared noise.

    The fitted slope of log W2^2 against t is the empirical decay rate; the
    dissipativity bound -(C2 - C1) is stored alongside.
    """
    bounds = dissipativity(model)
    if not bounds.valid:
        raise ModelError(f"model is not dissipative (C1={bounds.C1}, C2={bounds.C2})")
    run_a = iterate(_with_point(model, init_a), grid, n, seed)
    run_b = iterate(_with_point(model, init_b), grid, n, seed)
    ts, ys = [], []
    for (ea, _, _), (eb, _, _) in zip(run_a, run_b):
        ts.append(ea.time)
        ys.append(wasserstein(2, EmpiricalMeasure(ea.particles), EmpiricalMeasure(eb.particles)) ** 2)
    table = RateTable(ts, ys, "t", "w2_sq", extra={"bound_rate": -bounds.rate})
    if ys[0] > 0:
        fit_exp_rate(table)
        envelope = 1.1 * ys[0] * np.exp(-bounds.rate * table.x)
        table.extra["envelope"] = envelope
        table.extra["bound_ok"] = bool(np.all(table.y <= envelope))
    return table


@dataclass
class InvariantReport:
    d_stat: float
    d_cross: float
    terminal_mean: float
    terminal_variance: float
    t_long: float
    n: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def invariant_measure(
    model: CoefficientSpec,
    grid_long: TimeGrid,
    n: int,
    seed: int,
    other_initial: Optional[InitialLawSpec] = None,
) -> InvariantReport:
    """Stationarity and uniqueness diagnostics after a long run.

    ``d_stat`` = W2 between the ensemble at T and at T + 1 (same run);
    ``d_cross`` = W2 at T between runs from ``model.initial`` and
    ``other_initial`` on independent noise (seed + 1).
    """
    if not dissipativity(model).valid:
        raise ModelError("invariant-measure run needs a dissipative model")
    T = grid_long.t_end
    extended = TimeGrid(T + 1.0, grid_long.dt)
    k_T = grid_long.steps
    at_T = at_end = None
    for ens, _, _ in iterate(model, extended, n, seed):
        if ens.step_index == k_T:
            at_T = ens.particles.copy()
        at_end = ens.particles
    if other_initial is None:
        other_initial = InitialLawSpec("point", (model.initial.mean + 2.0,))
    other = None
    for ens, _, _ in iterate(model.replace(initial=other_initial), grid_long, n, seed + 1):
        other = ens.particles
    mu_T = EmpiricalMeasure(at_T)
    return InvariantReport(
        d_stat=wasserstein(2, mu_T, EmpiricalMeasure(at_end)),
        d_cross=wasserstein(2, mu_T, EmpiricalMeasure(other)),
        terminal_mean=mu_T.mean,
        terminal_variance=mu_T.variance,
        t_long=T,
        n=n,
    )


def phi(s: float, t: float, lam: float, c1: float, c2: float) -> float:
    """Log-Harnack cost lam^2 (C1 / (1 - e^{-C1 (t-s)}) + t C2^2 e^{2 (C1+C2)(t-s)} / 2).

    At C1 = 0 the first term takes its limit 1 / (t - s).
    """
    if not t > s:
        raise ValueError("phi needs t > s")
    if c1 < 0 or lam <= 0:
        raise ValueError("phi needs c1 >= 0 and lambda > 0")
    gap = t - s
    first = 1.0 / gap if c1 == 0 else c1 / -math.expm1(-c1 * gap)
    second = t * c2 * c2 * math.exp(2.0 * (c1 + c2) * gap) / 2.0
    return lam * lam * (first + second)


TEST_FUNCTIONS: dict = {
    "shifted-tanh": lambda x: 2.0 + np.tanh(x),
    "gaussian-bump": lambda x: 1.0 + np.exp(-np.square(x)),
}


def _test_function(f) -> Callable:
    if callable(f):
        return f
    if isinstance(f, str) and f.startswith("constant:"):
        c = float(f.split(":", 1)[1])
        return lambda x: np.full(np.shape(x), c)
    try:
        return TEST_FUNCTIONS[f]
    except KeyError:
        raise ValueError(f"unknown test function {f!r}") from None


@dataclass
class HarnackReport:
    form: str
    lhs: float
    rhs: float
    mc_halfwidth: float
    satisfied: bool
    phi_value: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


_BATCHES = 20
_ROUNDING = 1e-12


def _batched(values: np.ndarray, stat: Callable) -> tuple:
    """Full-sample statistic and its 99% batch-means CI half-width."""
    full = stat(values)
    batches = np.array_split(values, _BATCHES)
    per = np.array([stat(b) for b in batches])
    q = stats.t.ppf(0.995, _BATCHES - 1)
    return full, float(q * np.std(per, ddof=1) / math.sqrt(_BATCHES))


def _report(form, lhs, hw_l, rhs, hw_r, phi_value) -> HarnackReport:
    hw = hw_l + hw_r
    ok = lhs <= rhs + hw + _ROUNDING * max(1.0, abs(rhs))
    return HarnackReport(form, float(lhs), float(rhs), hw, bool(ok), float(phi_value))


def _terminal(model, grid, x0, n, seed):
    rec = simulate(_with_point(model, x0), grid, n, seed, snapshot_every=grid.steps)
    return rec, rec.snapshots[-1].particles


def _mean(v):
    return float(np.add.reduce(v) / v.size)


def log_harnack_check(
    model: CoefficientSpec,
    grid: TimeGrid,
    x0: float,
    y0: float,
    f="shifted-tanh",
    n: int = 10_000,
    seed: int = 0,
) -> HarnackReport:
    """E[log f(X_T^{y0})] <= log E[f(X_T^{x0})] + phi(0, T) (x0 - y0)^2."""
    if model.harnack != "log":
        raise ModelError("log-Harnack check needs a model in 'log' mode")
    sig_min = math.sqrt(model.noise_scale) * model.sigma_min
    if sig_min <= 0:
        raise ModelError("log-Harnack check needs sigma bounded away from 0")
    fn = _test_function(f)
    b = dissipativity(model)
    phi_value = phi(0.0, grid.t_end, 1.0 / sig_min, b.C1, b.C2)
    _, xs = _terminal(model, grid, x0, n, seed)
    _, ys = _terminal(model, grid, y0, n, seed)
    lhs, hw_l = _batched(ys, lambda v: _mean(np.log(fn(v))))
    logmean, hw_r = _batched(xs, lambda v: math.log(_mean(fn(v))))
    rhs = logmean + phi_value * (x0 - y0) ** 2
    return _report("log", lhs, hw_l, rhs, hw_r, phi_value)


def shift_exponent_integral(sigmas: np.ndarray, grid: TimeGrid, v: float) -> float:
    """int_0^t sigma(mu_s)^{-2} (|v|/t + s |v|/t)^2 ds by trapezoid on the grid."""
    t = grid.t_end
    s = grid.times
    w = (abs(v) / t + s * abs(v) / t) ** 2
    return float(trapezoid(w / np.square(sigmas), dx=grid.dt))


def shift_harnack_check(
    model: CoefficientSpec,
    grid: TimeGrid,
    x0: float,
    v: float,
    p: float,
    f="shifted-tanh",
    n: int = 10_000,
    seed: int = 0,
) -> tuple:
    """Power and log forms of the shift Harnack inequality from point mass ``x0``.

    Power: (E f(X_T))^p <= E[f(v + X_T)^p] exp(p I / (2 (p - 1))).
    Log:   E[log f(X_T)] <= log E[f(v + X_T)] + I / 2,
    with I the exponent integral along the simulated law path.
    Returns ``(power_report, log_report)``.
    """
    if model.harnack != "shift":
        raise ModelError("shift-Harnack check needs a model in 'shift' mode")
    if not p > 1:
        raise ValueError("p must exceed 1")
    if math.sqrt(model.noise_scale) * model.sigma_min <= 0:
        raise ModelError("shift-Harnack check needs an invertible sigma(mu)")
    fn = _test_function(f)
    rec, xs = _terminal(model, grid, x0, n, seed)
    e0, _, e2 = model.eta
    sigmas = math.sqrt(model.noise_scale) * (e0 + e2 * rec.mean)
    integral = shift_exponent_integral(sigmas, grid, v)

    power_lhs, hw_pl = _batched(xs, lambda a: _mean(fn(a)) ** p)
    power_exp = math.exp(p * integral / (2.0 * (p - 1.0)))
    raw_rhs, hw_pr = _batched(xs, lambda a: _mean(fn(v + a) ** p))
    power = _report("power", power_lhs, hw_pl, raw_rhs * power_exp, hw_pr * power_exp, power_exp)

    log_lhs, hw_ll = _batched(xs, lambda a: _mean(np.log(fn(a))))
    log_rhs, hw_lr = _batched(xs, lambda a: math.log(_mean(fn(v + a))))
    logrep = _report("log", log_lhs, hw_ll, log_rhs + integral / 2.0, hw_lr, integral / 2.0)
    return power, logrep

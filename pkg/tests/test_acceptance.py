"""End-to-end acceptance run: one recorded pass/fail line per criterion."""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import point, record_criterion
from mrsim import CoefficientSpec, ConstraintSpec, InitialLawSpec, TimeGrid, simulate
from mrsim import experiments as ex
from mrsim.cli import run
from mrsim.density import density_estimate
from mrsim.scheme import DriverSpec, Profile

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _violations(rec):
    return len(rec.skorokhod_violations())


def holder_stat(rec):
    t, K = rec.t, rec.K
    gap = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gap, np.inf)
    return float(np.max(np.abs(K[:, None] - K[None, :]) / np.sqrt(gap)))


def test_criterion_01_closed_form(closed_form):
    start = time.perf_counter()
    grid = TimeGrid(1.0, 1e-3)
    rec = simulate(closed_form, grid, 8, 0, snapshot_every=1)
    est = density_estimate(rec.snapshots, closed_form, dt=grid.dt)
    elapsed = time.perf_counter() - start
    window = (est.t >= 0.1 - 1e-12) & (est.t <= 1.0 + 1e-12)
    k_err = float(np.max(np.abs(est.k[window] - 1.0)))
    k_err_T = abs(rec.K[-1] - 1.0)
    ok = (k_err_T <= 1e-9 and np.all(rec.mean == 0) and k_err <= 1e-6
          and elapsed < 1.0 and _violations(rec) == 0)
    record_criterion(1, ok, f"|K_T-1|={k_err_T:.2e} max|k-1|={k_err:.2e} "
                            f"max|mean|={np.max(np.abs(rec.mean)):.1e} runtime={elapsed:.2f}s")
    assert ok


def test_criterion_02_skorokhod_matrix(closed_form, ou, ou_meanfield, sine_model):
    affine = ou_meanfield.replace(theta=(-1.0, -1.0, 0.5),
                                  constraint=ConstraintSpec("affine", 0.7))
    models = {"closed_form": closed_form, "ou": ou, "ou_meanfield": ou_meanfield,
              "sine": sine_model, "affine": affine}
    initials = [point(0.0), point(-1.0), point(2.0),
                InitialLawSpec("gaussian", (1.0, 0.5)), InitialLawSpec("uniform", (-2.0, 1.0))]
    grid = TimeGrid(1.0, 0.01)
    runs = bad = 0
    for (name, model), law, n in itertools.product(models.items(), initials, (1, 10, 1000)):
        rec = simulate(model.replace(initial=law), grid, n, 7)
        runs += 1
        bad += _violations(rec)
    ok = bad == 0
    record_criterion(2, ok, f"{bad} violations over {runs} simulations")
    assert ok


def test_criterion_03_chaos(ou_meanfield):
    start = time.perf_counter()
    table = ex.chaos_experiment(ou_meanfield, TimeGrid(1.0, 0.01),
                                [64, 128, 256, 512, 1024, 2048, 4096], 16384, 0,
                                replicates=16, threads=4)
    elapsed = time.perf_counter() - start
    ratio = table.y[0] / table.y[-1]
    ok = table.fitted_slope <= -0.3 and ratio >= 4 and elapsed <= 600
    record_criterion(3, ok, f"slope={table.fitted_slope:.3f} ratio(64/4096)={ratio:.1f} "
                            f"runtime={elapsed:.1f}s")
    assert ok


def test_criterion_04_holder_refinement(ou_meanfield):
    # mean-field OU with a constant drift into the constraint, so K is active
    model = ou_meanfield.replace(theta=(-1.0, -1.0, 0.5))
    stats = []
    for dt in (1e-2, 5e-3):
        rec = simulate(model, TimeGrid(1.0, dt), 10000, 0)
        assert _violations(rec) == 0
        stats.append(holder_stat(rec))
    factor = max(stats) / min(stats)
    ok = min(stats) > 0 and factor < 2
    record_criterion(4, ok, f"stat(dt=1e-2)={stats[0]:.4f} stat(dt=5e-3)={stats[1]:.4f} "
                            f"factor={factor:.3f}")
    assert ok


def test_criterion_05_initial_stability(ou_meanfield):
    table = ex.stability_initial(ou_meanfield, TimeGrid(1.0, 0.01), 1.0,
                                 [0.4, 0.2, 0.1, 0.05], n=1000, seed=0)
    ok = 1.7 <= table.fitted_slope <= 2.3
    record_criterion(5, ok, f"slope={table.fitted_slope:.4f}")
    assert ok


def test_criterion_06_coefficient_and_driver(ou_meanfield):
    grid = TimeGrid(1.0, 0.01)
    noisy = ou_meanfield.replace(initial=point(1.0))
    lams = [0.2, 0.1, 0.05]
    coeff = ex.stability_coeffs(noisy, grid, lams, n=1000, seed=0)
    drivers = [DriverSpec(m=Profile("sinusoid", (1.0, 1.0 / k, 1.0))) for k in (1, 2, 4)]
    drv = ex.stability_driver(noisy, grid, drivers, n=1000, seed=0)

    still = CoefficientSpec(theta=(0, -1, 0), eta=(0, 0, 0), initial=point(1.0))
    c0 = ex.stability_coeffs(still, grid, lams, n=2, perturb_sigma=False)
    decay = 1 - (1 - grid.dt) ** grid.steps
    c_err = float(np.max(np.abs(c0.y - np.square(np.array(lams) * decay))))
    pinned = CoefficientSpec(theta=(-1, 0, 0), eta=(0, 0, 0), initial=point(2.0))
    d0 = ex.stability_driver(pinned, grid,
                             [DriverSpec(a=Profile("constant", (1 + 1 / k,))) for k in (1, 2, 4)], n=2)
    d_err = float(np.max(np.abs(d0.y - np.array([1.0, 0.25, 0.0625]))))

    ok = (ex.is_strictly_decreasing(coeff.y) and ex.is_strictly_decreasing(drv.y)
          and c_err <= 1e-10 and d_err <= 1e-10)
    record_criterion(6, ok, f"coeff={np.array2string(coeff.y, precision=4)} "
                            f"driver={np.array2string(drv.y, precision=4)} "
                            f"oracle errors {c_err:.1e}/{d_err:.1e}")
    assert ok


def test_criterion_07_small_noise(ou_meanfield):
    table = ex.small_noise(ou_meanfield.replace(initial=point(1.0)), TimeGrid(1.0, 0.01),
                           [0.1, 0.01, 0.001], n=1000, seed=0)
    ratio = table.extra["ratio"]
    spread = float(ratio.max() / ratio.min())
    ok = ex.is_strictly_decreasing(table.y) and spread <= 3
    record_criterion(7, ok, f"y={np.array2string(table.y, precision=3)} ratio spread={spread:.3f}")
    assert ok


def test_criterion_08_weak_control(ou_meanfield):
    table = ex.weak_control_continuity(ou_meanfield.replace(initial=point(1.0)),
                                       TimeGrid(1.0, 1e-3), [2, 4, 8, 16])
    err = float(np.max(np.abs(table.extra["action"] - 0.25)))
    ok = ex.is_strictly_decreasing(table.y) and err <= 1e-4
    record_criterion(8, ok, f"sup dev={np.array2string(table.y, precision=4)} "
                            f"max|action-0.25|={err:.1e}")
    assert ok


def test_criterion_09_contraction(ou):
    table = ex.contraction(ou, TimeGrid(2.0, 0.01), 2.0, 1.0, 2000, 0)
    bound = table.extra["bound_rate"]
    rel = abs(table.fitted_slope - bound) / abs(bound)
    ok = rel <= 0.25 and bool(table.extra["bound_ok"])
    record_criterion(9, ok, f"rate={table.fitted_slope:.3f} vs {bound:.1f} (rel {rel:.3f}) "
                            f"envelope ok={table.extra['bound_ok']}")
    assert ok


def test_criterion_10_invariant(ou):
    rep = ex.invariant_measure(ou.replace(initial=point(1.0)), TimeGrid(10.0, 0.01), 10000, 0)
    var_err = abs(rep.terminal_variance - 0.5) / 0.5
    ok = rep.d_stat <= 0.05 and rep.d_cross <= 0.05 and var_err <= 0.15
    record_criterion(10, ok, f"d_stat={rep.d_stat:.4f} d_cross={rep.d_cross:.4f} "
                             f"var={rep.terminal_variance:.4f}")
    assert ok


def test_criterion_11_harnack():
    grid = TimeGrid(1.0, 0.01)
    base = dict(theta=(0.0, -1.0, 0.5), eta=(1.0, 0.0, 0.0))
    log_model = CoefficientSpec(**base, harnack="log")
    shift_model = CoefficientSpec(**base, harnack="shift")
    lines, ok = [], True

    # degenerate cases, exact
    for f in ex.TEST_FUNCTIONS:
        r = ex.log_harnack_check(log_model, grid, 0.3, 0.3, f, n=4000, seed=2)
        ok &= r.lhs <= r.rhs + 1e-12
        p, lg = ex.shift_harnack_check(shift_model, grid, 0.0, 0.0, 2.0, f, n=4000, seed=2)
        ok &= p.lhs <= p.rhs * (1 + 1e-12) and lg.lhs <= lg.rhs + 1e-12
    const = ex.log_harnack_check(log_model, grid, 0.0, 0.5, "constant:3", n=500, seed=2)
    ok &= abs(const.lhs - np.log(3)) <= 1e-14 and const.lhs <= const.rhs
    lines.append(f"degenerate={'ok' if ok else 'violated'}")

    # Monte Carlo matrix: {log, shift-power, shift-log} x {shifted-tanh, gaussian-bump}
    refuted = 0
    for f in ex.TEST_FUNCTIONS:
        r = ex.log_harnack_check(log_model, grid, 0.0, 0.5, f, n=10000, seed=0)
        p, lg = ex.shift_harnack_check(shift_model, grid, 0.0, 0.5, 2.0, f, n=10000, seed=0)
        refuted += sum(not rep.satisfied for rep in (r, p, lg))
    ok &= refuted == 0
    lines.append(f"MC refutations {refuted}/6")
    record_criterion(11, ok, " ".join(lines))
    assert ok


def test_criterion_12_thread_determinism(tmp_path):
    cfg = json.loads((CONFIGS / "ou_meanfield.json").read_text())
    cfg["particles"] = 20000
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}"
        assert run(["simulate", "--config", str(path), "--out", str(out), "--threads", threads]) == 0
        outs.append((out / "simulate" / "simulate.csv").read_bytes())
    ok = outs[0] == outs[1]
    record_criterion(12, ok, f"threads 1 vs 8 CSV identical={ok} ({len(outs[0])} bytes)")
    assert ok

"""Command-line entry point: ``mrsim <subcommand> --config run.json``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 experiment verdict FAIL.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import (
    ConfigError,
    build_control,
    build_driver,
    build_grid,
    build_model,
    load_config,
)
from .density import density_estimate, k_slope
from .model import ModelError, validate
from .reflect import ProjectionError
from .rng import InitialLawSpec
from .scheme import (
    SimulationError,
    rate_action,
    simulate,
    simulate_reflected_ode,
    simulate_skeleton,
)

log = logging.getLogger("mrsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAIL = 0, 2, 3, 4

SUBCOMMANDS = (
    "simulate", "ode", "skeleton", "density", "chaos", "stability-init",
    "stability-coeff", "stability-driver", "small-noise", "ldp-control",
    "contraction", "invariant", "harnack-log", "harnack-shift", "validate",
)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _path_result(rec):
    bad = rec.skorokhod_violations()
    results = {"K_T": rec.K[-1], "mean_T": rec.mean[-1], "var_T": rec.var[-1],
               "skorokhod_violations": len(bad)}
    return rec, results, not bad, {"skorokhod": "K nondecreasing; mean_h >= -M tol; dK > tol => |mean_h| <= M tol"}


def run_simulate(cfg, model, grid, threads):
    sim = cfg["simulate"]
    rec = simulate(model, grid, cfg["particles"], cfg["seed"], threads=threads,
                   snapshot_every=sim["snapshot_every"], track=sim["track"])
    return _path_result(rec)


def run_ode(cfg, model, grid, threads):
    return _path_result(simulate_reflected_ode(model, grid))


def run_skeleton(cfg, model, grid, threads):
    control = build_control(cfg, grid)
    rec, results, ok, tol = _path_result(simulate_skeleton(model, grid, control))
    results["rate_action"] = rate_action(control, grid)
    return rec, results, ok, tol


def run_density(cfg, model, grid, threads):
    d = cfg["density"]
    rec = simulate(model, grid, cfg["particles"], cfg["seed"], threads=threads,
                   snapshot_every=d["snapshot_every"])
    est = density_estimate(rec.snapshots, model, d["band_epsilon"], dt=grid.dt)
    slope = k_slope(rec, d["window"])
    t_snap = est.t
    fd = np.interp(t_snap, slope[:, 0], slope[:, 1])
    results = {"band_epsilon": est.band_epsilon, "K_T": rec.K[-1],
               "mean_abs_dev_vs_slope": float(np.mean(np.abs(est.k - fd)))}
    ok = bool(np.all(est.k >= 0))
    return est, results, ok, {"k_nonnegative": True}


def run_chaos(cfg, model, grid, threads):
    c = cfg["chaos"]
    table = ex.chaos_experiment(model, grid, c["sizes"], c["n_ref"], cfg["seed"],
                                c["max_tracked"], c["replicates"], threads)
    ratio = table.y[0] / table.y[-1] if table.y[-1] > 0 else math.inf
    ok = table.fitted_slope is not None and table.fitted_slope <= -0.3 and ratio >= 4
    return table, {"first_over_last": ratio}, ok, {"max_slope": -0.3, "min_ratio": 4.0}


def run_stability_init(cfg, model, grid, threads):
    s = cfg["stability_init"]
    table = ex.stability_initial(model, grid, s["base_point"], s["deltas"],
                                 cfg["particles"], cfg["seed"], threads)
    slope = table.fitted_slope
    ok = slope is not None and 1.7 <= slope <= 2.3
    return table, {}, ok, {"slope_range": [1.7, 2.3]}


def run_stability_coeff(cfg, model, grid, threads):
    table = ex.stability_coeffs(model, grid, cfg["stability_coeff"]["lambdas"],
                                cfg["particles"], cfg["seed"], threads)
    return table, {}, ex.is_strictly_decreasing(table.y), {"strictly_decreasing": True}


def run_stability_driver(cfg, model, grid, threads):
    drivers = [build_driver(b, f"stability_driver.drivers.{i}")
               for i, b in enumerate(cfg["stability_driver"]["drivers"])]
    table = ex.stability_driver(model, grid, drivers, cfg["particles"], cfg["seed"], threads)
    return table, {}, ex.is_strictly_decreasing(table.y), {"strictly_decreasing": True}


def run_small_noise(cfg, model, grid, threads):
    table = ex.small_noise(model, grid, cfg["small_noise"]["eps_list"],
                           cfg["particles"], cfg["seed"], threads)
    ratio = table.extra["ratio"]
    ratio = ratio[np.isfinite(ratio)]
    spread = float(ratio.max() / ratio.min()) if ratio.size and ratio.min() > 0 else math.inf
    ok = ex.is_strictly_decreasing(table.y) and spread <= 3.0
    return table, {"ratio_spread": spread}, ok, {"strictly_decreasing": True, "max_ratio_spread": 3.0}


def run_ldp_control(cfg, model, grid, threads):
    table = ex.weak_control_continuity(model, grid, cfg["ldp_control"]["freqs"])
    action_err = float(np.max(np.abs(table.extra["action"] - 0.25)))
    ok = ex.is_strictly_decreasing(table.y) and action_err <= 1e-4
    return table, {"max_action_error": action_err}, ok, {"strictly_decreasing": True, "action_tol": 1e-4}


def run_contraction(cfg, model, grid, threads):
    c = cfg["contraction"]
    table = ex.contraction(model, grid, c["init_a"], c["init_b"], cfg["particles"], cfg["seed"])
    bound = table.extra["bound_rate"]
    ok = (table.fitted_slope is not None
          and abs(table.fitted_slope - bound) <= 0.25 * abs(bound)
          and table.extra.get("bound_ok", False))
    return table, {}, ok, {"rate_rel_tol": 0.25, "envelope_slack": 0.1}


def run_invariant(cfg, model, grid, threads):
    other = cfg["invariant"]["other_initial"]
    rep = ex.invariant_measure(model, grid, cfg["particles"], cfg["seed"],
                               InitialLawSpec(other["kind"], tuple(other["params"])))
    results = rep.as_dict()
    ok = rep.d_stat <= 0.05 and rep.d_cross <= 0.05
    tol = {"d_stat": 0.05, "d_cross": 0.05}
    _, t1, _ = model.theta
    _, e1, e2 = model.eta
    if e1 == 0 and e2 == 0 and t1 < 0:
        oracle = model.noise_scale * model.eta[0] ** 2 / (-2.0 * t1)
        results["stationary_variance_oracle"] = oracle
        ok = ok and abs(rep.terminal_variance - oracle) <= 0.15 * oracle
        tol["variance_rel_tol"] = 0.15
    return None, results, ok, tol


def run_harnack_log(cfg, model, grid, threads):
    h = cfg["harnack"]
    rep = ex.log_harnack_check(model, grid, h["x0"], h["y0"], h["f"], cfg["particles"], cfg["seed"])
    return None, {"log": rep.as_dict()}, rep.satisfied, {"ci": 0.99}


def run_harnack_shift(cfg, model, grid, threads):
    h = cfg["harnack"]
    power, logrep = ex.shift_harnack_check(model, grid, h["x0"], h["v"], h["p"], h["f"],
                                           cfg["particles"], cfg["seed"])
    return (None, {"power": power.as_dict(), "log": logrep.as_dict()},
            power.satisfied and logrep.satisfied, {"ci": 0.99})


def run_validate(cfg, model, grid, threads):
    diag = validate(model, cfg["seed"])
    print(json.dumps(_jsonable(diag.as_dict()), indent=2))
    return None, diag.as_dict(), True, {}


RUNNERS = {
    "simulate": run_simulate,
    "ode": run_ode,
    "skeleton": run_skeleton,
    "density": run_density,
    "chaos": run_chaos,
    "stability-init": run_stability_init,
    "stability-coeff": run_stability_coeff,
    "stability-driver": run_stability_driver,
    "small-noise": run_small_noise,
    "ldp-control": run_ldp_control,
    "contraction": run_contraction,
    "invariant": run_invariant,
    "harnack-log": run_harnack_log,
    "harnack-shift": run_harnack_shift,
    "validate": run_validate,
}


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("MRSIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer MRSIM_THREADS=%r", env)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrsim", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output root (default: config output_dir or ./mrsim-out)")
    parser.add_argument("--threads", type=int, help="worker threads (env MRSIM_THREADS)")
    parser.add_argument("--seed-override", type=int, help="replace the config seed")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg["seed"] = args.seed_override
        model = build_model(cfg)
        grid = build_grid(cfg)
    except ConfigError as exc:
        print(f"config error at {exc.field or '<root>'}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    threads = _threads(args.threads)
    try:
        artifact, results, ok, tolerances = RUNNERS[args.command](cfg, model, grid, threads)
    except ConfigError as exc:
        print(f"config error at {exc.field or '<root>'}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"config error at model: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, ProjectionError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    root = Path(args.out or cfg["output_dir"] or "mrsim-out")
    outdir = root / args.command
    outdir.mkdir(parents=True, exist_ok=True)
    if artifact is not None:
        artifact.to_csv(outdir / f"{args.command}.csv")
        if isinstance(artifact, ex.RateTable):
            results = {**artifact.summary(), **results}
    verdict = "PASS" if ok else "FAIL"
    summary = {
        "experiment": args.command,
        "params": {"threads": threads},
        "config": cfg,
        "results": results,
        "fitted_slope": getattr(artifact, "fitted_slope", None),
        "verdict": verdict,
        "tolerances": tolerances,
    }
    (outdir / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    print(f"{args.command}: {verdict} -> {outdir}")
    return EXIT_OK if ok else EXIT_FAIL


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()

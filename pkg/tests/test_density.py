import math

import numpy as np
import pytest

from conftest import point
from mrsim.density import default_band, density_estimate, generator_h, k_slope
from mrsim.model import CoefficientSpec, ConstraintSpec
from mrsim.scheme import TimeGrid, simulate, simulate_reflected_ode


def test_generator_examples():
    spec = CoefficientSpec(theta=(-1, 0, 0), eta=(3.0, 0, 0))
    assert generator_h(0.7, 0.0, spec) == -1
    spec = CoefficientSpec(theta=(0, 0, 0), eta=(2.0, 0, 0), constraint=ConstraintSpec("sine", 0.5))
    assert generator_h(math.pi / 2, 0.0, spec) == pytest.approx(-1.0)
    spec = CoefficientSpec(theta=(1, 0, 0), eta=(0, 0, 0))
    assert generator_h(5.0, 0.0, spec) == 1


def test_density_on_closed_form(closed_form):
    g = TimeGrid(1.0, 1e-3)
    rec = simulate(closed_form, g, 4, 0, snapshot_every=10)
    est = density_estimate(rec.snapshots, closed_form, dt=g.dt)
    assert np.all(est.active)
    assert np.allclose(est.k, 1.0, atol=1e-12)
    slope = k_slope(rec, 1)
    window = (slope[:, 0] >= 0.1)
    assert np.max(np.abs(slope[window, 1] - 1.0)) <= 1e-9
    fd = np.interp(est.t, slope[:, 0], slope[:, 1])
    keep = est.t >= 0.1
    assert np.mean(np.abs(est.k[keep] - fd[keep])) <= 0.05


def test_density_inactive_when_mean_above_band():
    spec = CoefficientSpec(theta=(1, 0, 0), eta=(0, 0, 0), initial=point(0.0))
    g = TimeGrid(1.0, 1e-3)
    rec = simulate(spec, g, 4, 0, snapshot_every=50)
    est = density_estimate(rec.snapshots, spec, band_epsilon=0.01)
    assert np.all(est.k[est.t > 0.01] == 0)
    assert not np.any(est.active[est.t > 0.011])


def test_density_zero_without_drift_and_curvature():
    spec = CoefficientSpec(theta=(0, 0, 0), eta=(1, 0, 0), initial=point(0.0))
    g = TimeGrid(1.0, 0.01)
    rec = simulate(spec, g, 500, 2, snapshot_every=5)
    est = density_estimate(rec.snapshots, spec, dt=g.dt)
    assert np.all(est.numerator == 0) and np.all(est.k == 0)


def test_density_invariants_on_sine_model(sine_model):
    g = TimeGrid(2.0, 1e-3)
    rec = simulate(sine_model, g, 5000, 3, snapshot_every=50)
    est = density_estimate(rec.snapshots, sine_model, band_epsilon=1e-3)
    assert np.all(est.k >= 0)
    assert np.all(est.denominator >= sine_model.constraint.m)
    # k > 0 only where the path is pushed in the same window
    for t, k in zip(est.t, est.k):
        if k > 0:
            i = int(round(t / g.dt))
            assert rec.dK[max(i - 50, 0): i + 51].max() > rec.tol.max()
    # once pinned, the estimate matches the finite-difference slope
    slope = k_slope(rec, 25)
    fd = np.interp(est.t, slope[:, 0], slope[:, 1])
    late = est.t >= 1.0
    assert np.all(est.active[late])
    assert np.mean(np.abs(est.k[late] - fd[late])) <= 0.1


def test_k_slope_examples():
    g = TimeGrid(1.0, 1e-2)
    flat = simulate(CoefficientSpec(theta=(1, 0, 0), eta=(0, 0, 0)), g, 2, 0)
    assert np.all(k_slope(flat, 3)[:, 1] == 0)
    spec = CoefficientSpec(theta=(-1, 0, 0), eta=(0, 0, 0), constraint=ConstraintSpec("affine", 0.5),
                           initial=point(1.0))
    rec = simulate_reflected_ode(spec, TimeGrid(1.0, 1e-3))
    sl = k_slope(rec, 5)
    w = 5 * 1e-3
    assert np.all(np.abs(sl[sl[:, 0] < 0.5 - w - 2e-3, 1]) < 1e-9)
    assert np.allclose(sl[sl[:, 0] > 0.5 + w + 2e-3, 1], 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        k_slope(rec, 0)


def test_default_band():
    spec = CoefficientSpec(constraint=ConstraintSpec("sine", 0.5))
    assert default_band(spec, 0.01, 100) == pytest.approx(3 * (1.5 * 0.1 + 1.5 * 0.1))


def test_density_csv(tmp_path, closed_form):
    g = TimeGrid(1.0, 0.1)
    rec = simulate(closed_form, g, 2, 0, snapshot_every=5)
    est = density_estimate(rec.snapshots, closed_form, dt=g.dt)
    est.to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,numerator,denominator,active,k" and len(lines) == 4

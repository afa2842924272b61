import math
import os

import numpy as np
import pytest

from dewet import diagnostics, model
from dewet import grid as gridmod
from dewet.diagnostics import (
    ConvergenceReport,
    FitFailed,
    NoCrossing,
    TipSeries,
    WindowTooNarrow,
    energy_stability_residual,
    fit_circle,
    manifest_hash,
    numerical_energy,
    run_cached,
    scaling_fit,
    tip_deviation,
    tip_position,
    wetting_angle,
)
from dewet.grid import Grid
from dewet.integrators import Schedule, State, run, step_first_order
from dewet.linalg import SolverConfig
from dewet.model import ModelParams, WettingParams


def params(**kw):
    return ModelParams(**{"epsilon": 0.1, "alpha": 9.0, **kw})


def step_film(x0=1.0, nx=64, ny=8, eps=0.1):
    g = Grid.from_domain(2.0, 0.4, nx, ny)
    x, _ = g.meshgrid()
    u = 0.5 * (1.0 - np.tanh(3.0 * (x - x0) / eps))
    return g, u


# ---------------------------------------------------------------------------
# Tip position
# ---------------------------------------------------------------------------

def test_tip_position_tanh_front():
    g, u = step_film(x0=1.0)
    assert tip_position(g, u, 0.2) == pytest.approx(1.0, abs=1e-10)


def test_tip_position_translates():
    g, u1 = step_film(x0=0.7)
    g, u2 = step_film(x0=1.2)
    t1 = tip_position(g, u1, 0.2)
    t2 = tip_position(g, u2, 0.2)
    # linear interpolation between nodes leaves an O(h^2) placement error
    assert t2 - t1 == pytest.approx(0.5, abs=5e-3)


def test_tip_position_subcell():
    # a front between nodes is located by interpolation, not snapped
    g, u = step_film(x0=1.0 + 0.4 * 2.0 / 63)
    tip = tip_position(g, u, 0.2)
    assert abs(tip - (1.0 + 0.4 * g.hx)) < 0.05 * g.hx


def test_tip_position_no_crossing():
    g, _ = step_film()
    with pytest.raises(NoCrossing):
        tip_position(g, np.zeros(g.shape), 0.2)
    with pytest.raises(NoCrossing):
        tip_position(g, np.ones(g.shape), 0.2)
    # ascending-only crossing (vapor at small x) does not count as a tip
    g2, u2 = step_film()
    with pytest.raises(NoCrossing):
        tip_position(g2, 1.0 - u2, 0.2)


# ---------------------------------------------------------------------------
# Energy identities
# ---------------------------------------------------------------------------

def test_energy_stability_residual_stationary():
    g = Grid.from_domain(1.0, 0.5, 16, 8)
    u = np.full(g.shape, 1.0)
    mu = np.zeros(g.shape)
    p = params()
    assert energy_stability_residual(g, u, u, mu, p, 0.1) == pytest.approx(0.0, abs=1e-14)


def test_energy_stability_residual_nonnegative_along_run():
    # the first-order scheme with g == 1 satisfies the discrete energy
    # law E_old - E_new >= (tau/eps) * dissipation at every step
    g, u = step_film(nx=40, ny=6)
    p = params(use_g=False)
    s = State(g, u, model.initial_chemical_potential(g, u, p))
    solver = SolverConfig(method="direct")
    for _ in range(20):
        s_new = step_first_order(s, p, 0.1, solver)
        r = energy_stability_residual(g, s.u, s_new.u, s_new.mu, p, 0.1)
        assert r >= -1e-10
        s = s_new


def test_numerical_energy_reduces_to_energy():
    g, u = step_film(nx=24, ny=6)
    p = params()
    f = numerical_energy(g, u, u, p)
    assert f == pytest.approx(model.energy(g, u, p), rel=1e-14)


def test_numerical_energy_penalizes_difference():
    g, u = step_film(nx=24, ny=6)
    p = params()
    rng = np.random.default_rng(3)
    d = 0.01 * rng.standard_normal(g.shape)
    f = numerical_energy(g, u + d, u, p)
    extra = (p.alpha / (2 * p.epsilon) * gridmod.integrate(g, d * d)
             + p.epsilon / 8.0 * gridmod.gradient_energy_density_integral(g, d))
    assert f == pytest.approx(model.energy(g, u + d, p) + extra, rel=1e-12)
    assert extra > 0


# ---------------------------------------------------------------------------
# Tip series and power-law fit
# ---------------------------------------------------------------------------

def test_tip_series_validation():
    with pytest.raises(ValueError):
        TipSeries([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        TipSeries([0.0, 1.0, 1.0], [0.0, 0.1, 0.2])
    s = TipSeries([0.0, 1.0, 2.0], [0.0, 0.1, 0.2])
    assert s.at_times([0.5])[0] == pytest.approx(0.05)


def test_tip_series_from_trajectory_drops_nan():
    from dewet.integrators import Trajectory
    traj = Trajectory()
    for k, (t, tip) in enumerate([(0.0, math.nan), (0.1, 1.0), (0.2, 1.1)]):
        traj.add(step=k, time=t, tau=0.1, energy=0.0, mass=1.0, tip_x=tip,
                 solver_iters=0, e_estimate=math.nan)
    s = TipSeries.from_trajectory(traj)
    assert s.times.tolist() == [0.1, 0.2]
    assert s.tips.tolist() == [1.0, 1.1]


def test_scaling_fit_recovers_half_power():
    t = np.logspace(-2, 1, 200)
    series = TipSeries(np.concatenate([[0.0], t]),
                       np.concatenate([[2.0], 2.0 - 0.3 * t ** 0.5]))
    slope = scaling_fit(series, (0.05, 5.0))
    assert slope == pytest.approx(0.5, abs=1e-9)


def test_scaling_fit_window_checks():
    t = np.logspace(-2, 1, 50)
    series = TipSeries(np.concatenate([[0.0], t]),
                       np.concatenate([[2.0], 2.0 - 0.3 * t ** 0.5]))
    with pytest.raises(WindowTooNarrow):
        scaling_fit(series, (1.0, 5.0))  # less than a decade
    with pytest.raises(WindowTooNarrow):
        scaling_fit(series, (11.0, 120.0))  # no samples inside


# ---------------------------------------------------------------------------
# Circle fit and wetting angle
# ---------------------------------------------------------------------------

def test_fit_circle_exact():
    phi = np.linspace(0.3, 2.8, 40)
    pts = np.column_stack([1.5 + 0.8 * np.cos(phi), -0.2 + 0.8 * np.sin(phi)])
    xc, yc, r, rms = fit_circle(pts)
    assert (xc, yc, r) == pytest.approx((1.5, -0.2, 0.8), abs=1e-12)
    assert rms < 1e-12


def test_fit_circle_noisy():
    rng = np.random.default_rng(7)
    phi = np.linspace(0.2, 2.9, 200)
    pts = np.column_stack([2.0 + 1.0 * np.cos(phi), 0.1 + 1.0 * np.sin(phi)])
    pts += 0.01 * rng.standard_normal(pts.shape)
    xc, yc, r, rms = fit_circle(pts)
    assert (xc, yc, r) == pytest.approx((2.0, 0.1, 1.0), abs=0.01)
    assert rms < 0.02


def cap_droplet(theta_deg, g, eps, xc=2.0, radius=0.9):
    x, y = g.meshgrid()
    th = math.radians(theta_deg)
    yc = -radius * math.cos(th)
    d = np.sqrt((x - xc) ** 2 + (y - yc) ** 2) - radius
    return 0.5 * (1.0 - np.tanh(3.0 * d / eps))


@pytest.mark.parametrize("theta", [60.0, 90.0, 120.0])
def test_wetting_angle_constructed_cap(theta):
    g = Grid.from_domain(4.0, 1.6, 161, 65)
    p = params(wetting=WettingParams(gamma_vs=0.3, gamma_fs=0.0, xi=0.1))
    u = cap_droplet(theta, g, p.epsilon)
    assert wetting_angle(g, u, p) == pytest.approx(theta, abs=1.0)


def test_wetting_angle_requires_wetting_params():
    g = Grid.from_domain(4.0, 1.6, 41, 17)
    with pytest.raises(ValueError):
        wetting_angle(g, np.zeros(g.shape), params())


def test_wetting_angle_rejects_non_circular():
    g = Grid.from_domain(4.0, 1.6, 161, 65)
    p = params(wetting=WettingParams(gamma_vs=0.3, gamma_fs=0.0, xi=0.1))
    x, y = g.meshgrid()
    # star-shaped blob: no circle fits its level set
    r = np.hypot(x - 2.0, y)
    phi = np.arctan2(y, x - 2.0)
    d = r - (0.7 + 0.25 * np.cos(5 * phi))
    u = 0.5 * (1.0 - np.tanh(3.0 * d / p.epsilon))
    with pytest.raises(FitFailed):
        wetting_angle(g, u, p)


def test_wetting_angle_too_few_points():
    g = Grid.from_domain(4.0, 1.6, 41, 17)
    p = params(wetting=WettingParams(gamma_vs=0.3, gamma_fs=0.0, xi=0.1))
    with pytest.raises(FitFailed):
        wetting_angle(g, np.zeros(g.shape), p)


# ---------------------------------------------------------------------------
# Convergence report
# ---------------------------------------------------------------------------

def test_convergence_report_validation():
    with pytest.raises(ValueError):
        ConvergenceReport("ros2", [0.1, 0.1], [1e-3, 1e-3], [False, False])
    with pytest.raises(ValueError):
        ConvergenceReport("ros2", [0.2, 0.1], [1e-3, -1e-3], [False, False])


def test_convergence_report_fit_slope():
    taus = np.array([0.4, 0.2, 0.1, 0.05])
    devs = 0.05 * taus  # exact slope 1
    rep = ConvergenceReport("semi_implicit", taus, devs,
                            np.zeros(4, dtype=bool)).fit()
    assert rep.fitted_order == pytest.approx(1.0, abs=1e-12)
    assert rep.stages == 1
    assert np.array_equal(rep.tau_eff, taus)


def test_convergence_report_effective_tau_and_wrong_runs():
    taus = np.array([0.4, 0.2, 0.1, 0.05])
    devs = np.array([0.6, 0.02, 0.01, 0.005])  # first point saturated/wrong
    failed = np.array([False, False, False, False])
    rep = ConvergenceReport("ros34pw2", taus, devs, failed).fit()
    assert rep.stages == 4
    assert rep.qualitatively_wrong.tolist() == [True, False, False, False]
    assert rep.max_stable_tau() == pytest.approx(0.2)
    assert rep.tau_at_error(0.01) == pytest.approx(0.1)
    assert rep.tau_eff_at_error(0.01) == pytest.approx(0.025)
    # same errors vs tau, so the per-stage fit has the same slope
    assert rep.fitted_order_eff == pytest.approx(rep.fitted_order, rel=1e-12)


def test_convergence_report_csv_and_summary(tmp_path):
    taus = np.array([0.2, 0.1])
    rep = ConvergenceReport("ros2", taus, np.array([0.02, 0.01]),
                            np.array([False, False])).fit()
    path = tmp_path / "report.csv"
    rep.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "tau,tau_eff,deviation,failed,qualitatively_wrong"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert float(first[0]) == 0.2
    assert float(first[1]) == 0.1  # ros2 runs two stages per step
    s = rep.summary()
    assert "fitted_order:" in s and "max_stable_tau:" in s


def test_tip_deviation():
    ref = TipSeries([0.0, 1.0, 2.0], [2.0, 1.8, 1.6])
    same = TipSeries([0.0, 1.0, 2.0], [2.0, 1.8, 1.6])
    assert tip_deviation(same, ref) == 0.0
    off = TipSeries([0.0, 1.0, 2.0], [2.0, 1.8 * 1.02, 1.6])
    assert tip_deviation(off, ref) == pytest.approx(0.02, rel=1e-12)


# ---------------------------------------------------------------------------
# Run cache
# ---------------------------------------------------------------------------

def test_manifest_hash_stable():
    h = manifest_hash("some manifest text")
    assert h == manifest_hash("some manifest text")
    assert h != manifest_hash("some manifest text ")
    assert len(h) == 16


def test_run_cached_round_trip(tmp_path):
    from dewet import cli
    text = """
[grid]
lx = 1.0
ly = 0.4
nx = 20
ny = 8

[model]
epsilon = 0.1
use_g = false

[init]
kind = retracting_step
film_height = 0.2
film_length = 0.5

[scheme]
scheme = ros2

[schedule]
mode = fixed
tau = 0.005
t_end = 0.02

[solver]
method = direct
"""
    m = cli.parse_manifest(text)
    cache = tmp_path / "cache"
    t1 = run_cached(m, cache_dir=str(cache))
    files = sorted(os.listdir(cache))
    assert len(files) == 1 and files[0].endswith(".csv")
    t2 = run_cached(m, cache_dir=str(cache))
    assert np.array_equal(t1.column("energy"), t2.column("energy"))
    assert np.array_equal(t1.column("time"), t2.column("time"))
    # cache entries are keyed by content: a changed parameter reruns
    m2 = cli.parse_manifest(text.replace("tau = 0.005", "tau = 0.01"))
    run_cached(m2, cache_dir=str(cache))
    assert len(os.listdir(cache)) == 2

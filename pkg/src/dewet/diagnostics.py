"""Observables and studies: tip position, energy-stability residual,
wetting angle, power-law fits, and tip-error convergence reports.

Reference trajectories are expensive, so runs launched through this
module are cached on disk keyed by a content hash of their resolved
manifest text.
"""

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from dewet import grid as gridmod
from dewet import model
from dewet.grid import Grid, integrate


class NoCrossing(Exception):
    """The u = 0.5 level set does not cross the probe row."""


class FitFailed(Exception):
    """Level-set points are not close enough to a circle."""


class WindowTooNarrow(Exception):
    """Power-law fit window spans less than a decade in t."""


# ---------------------------------------------------------------------------
# Tip position
# ---------------------------------------------------------------------------

def _probe_row(grid: Grid, u: np.ndarray, probe_height: float) -> np.ndarray:
    """u sampled along y = probe_height, linearly interpolated between rows."""
    s = (probe_height - grid.origin[1]) / grid.hy
    j0 = int(np.clip(math.floor(s), 0, grid.ny - 2))
    w = s - j0
    w = min(max(w, 0.0), 1.0)
    return (1.0 - w) * u[:, j0] + w * u[:, j0 + 1]


def tip_position(grid: Grid, u: np.ndarray, probe_height: float) -> float:
    """x-coordinate where u crosses 0.5 from film to vapor on the probe row.

    The film sits at small x, so the crossing is the first descending
    passage through 0.5 along increasing x.  Linear interpolation
    between the bracketing nodes gives sub-cell resolution.
    """
    row = _probe_row(grid, u, probe_height)
    above = row >= 0.5
    # descending crossing: node k at/above 0.5, node k+1 below
    idx = np.nonzero(above[:-1] & ~above[1:])[0]
    if idx.size == 0:
        raise NoCrossing(f"no film/vapor crossing at height {probe_height:g}")
    k = idx[0]
    frac = (row[k] - 0.5) / (row[k] - row[k + 1])
    return grid.origin[0] + (k + frac) * grid.hx


# ---------------------------------------------------------------------------
# Energy stability residual
# ---------------------------------------------------------------------------

def energy_stability_residual(grid: Grid, u_old: np.ndarray, u_new: np.ndarray,
                              mu_new: np.ndarray, params, tau: float) -> float:
    """Energy drop minus the explicit dissipation of one first-order step.

    Returns E[u_old] - E[u_new] - (tau/eps) * (M(u_old) grad mu, grad mu),
    the non-negative remainder of the step's energy identity.  The
    mobility-weighted inner product is evaluated through the same
    conservative flux operator the step uses, so the identity holds at
    round-off level for the scheme with g = 1.
    """
    e_old = model.energy(grid, u_old, params)
    e_new = model.energy(grid, u_new, params)
    m = model.mobility(u_old)
    # (M grad mu, grad mu) = -(mu, div(M grad mu)) under the discrete
    # quadrature; exact by the operator's self-adjointness.
    dissip = -integrate(grid, mu_new * gridmod.div_m_grad(grid, m, mu_new))
    return e_old - e_new - (tau / params.epsilon) * dissip


def numerical_energy(grid: Grid, u: np.ndarray, u_prev: np.ndarray,
                     params) -> float:
    """Two-level numerical energy of the second-order scheme.

    F[u, v] = E[u] + alpha/(2 eps) ||u - v||^2 + eps/8 ||grad(u - v)||^2.
    This is the quantity that is non-increasing step to step (weak
    energy stability), not E itself.  The difference coefficient is
    alpha/2 because the extrapolated concave term has curvature
    B_e'' = 2 alpha; testing the scheme with u - u_prev then yields the
    exact identity F_new + dissipation + remainder = F_old with a
    non-negative remainder.
    """
    eps = params.epsilon
    d = u - u_prev
    f = model.energy(grid, u, params)
    f += (params.alpha / (2.0 * eps)) * integrate(grid, d * d)
    f += (eps / 8.0) * gridmod.gradient_energy_density_integral(grid, d)
    return f


# ---------------------------------------------------------------------------
# Tip series and power-law fit
# ---------------------------------------------------------------------------

@dataclass
class TipSeries:
    """Tip-position samples over time plus run metadata."""

    times: np.ndarray
    tips: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.tips = np.asarray(self.tips, dtype=float)
        if self.times.size != self.tips.size:
            raise ValueError("times and tips must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @classmethod
    def from_trajectory(cls, traj, meta=None) -> "TipSeries":
        t = traj.column("time")
        x = traj.column("tip_x")
        keep = np.isfinite(x)
        # collapse duplicate times (rejected/zero-length steps never recorded,
        # but the t=0 record plus a ramped restart can repeat a time stamp)
        t, idx = np.unique(t[keep], return_index=True)
        return cls(t, x[keep][idx], dict(meta or {}))

    def at_times(self, t_query: np.ndarray) -> np.ndarray:
        """Tip positions linearly interpolated at the query times."""
        return np.interp(t_query, self.times, self.tips)


def scaling_fit(series: TipSeries, window) -> float:
    """Least-squares power-law exponent of tip displacement vs time.

    Fits log(tip(t) - tip(0)) against log(t) over the given (t0, t1)
    window, which must span at least a decade.
    """
    t0, t1 = window
    if t0 <= 0 or t1 / t0 < 10.0:
        raise WindowTooNarrow(f"window ({t0:g}, {t1:g}) spans < 1 decade")
    disp = np.abs(series.tips - series.tips[0])
    sel = (series.times >= t0) & (series.times <= t1) & (disp > 0)
    if np.count_nonzero(sel) < 3:
        raise WindowTooNarrow("fewer than 3 usable samples in window")
    slope, _ = np.polyfit(np.log(series.times[sel]), np.log(disp[sel]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Wetting angle
# ---------------------------------------------------------------------------

def _level_set_points(grid: Grid, u: np.ndarray, level: float = 0.5):
    """Points where u crosses the level on grid edges (both directions)."""
    X, Y = grid.meshgrid()
    pts = []
    for (a, b, xa, ya, xb, yb) in (
            (u[:-1, :], u[1:, :], X[:-1, :], Y[:-1, :], X[1:, :], Y[1:, :]),
            (u[:, :-1], u[:, 1:], X[:, :-1], Y[:, :-1], X[:, 1:], Y[:, 1:])):
        cross = (a - level) * (b - level) < 0
        frac = (a[cross] - level) / (a[cross] - b[cross])
        pts.append(np.column_stack([
            xa[cross] + frac * (xb[cross] - xa[cross]),
            ya[cross] + frac * (yb[cross] - ya[cross])]))
    return np.vstack(pts)


def fit_circle(points: np.ndarray):
    """Algebraic least-squares circle fit; returns (xc, yc, r, rms)."""
    x, y = points[:, 0], points[:, 1]
    a = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    sol, *_ = np.linalg.lstsq(a, x ** 2 + y ** 2, rcond=None)
    xc, yc, c = sol
    r = math.sqrt(max(c + xc ** 2 + yc ** 2, 0.0))
    rms = float(np.sqrt(np.mean((np.hypot(x - xc, y - yc) - r) ** 2)))
    return float(xc), float(yc), r, rms


def wetting_angle(grid: Grid, u: np.ndarray, params) -> float:
    """Contact angle (degrees) of a droplet via a circle fit.

    Fits a circle to the u = 0.5 level set above the smeared substrate
    band (z > 2*xi) and returns the circle's intersection angle with
    the substrate plane z = 0.
    """
    w = params.wetting
    if w is None:
        raise ValueError("wetting_angle needs WettingParams on the model")
    pts = _level_set_points(grid, u)
    z = w.height(pts[:, 0], pts[:, 1])
    pts = pts[z > 2.0 * params.xi]
    if pts.shape[0] < 5:
        raise FitFailed("too few level-set points above the substrate band")
    xc, yc, r, rms = fit_circle(pts)
    if r <= 0 or rms > 0.05 * r:
        raise FitFailed(f"circle-fit residual {rms:.3g} exceeds 5% of "
                        f"radius {r:.3g}")
    cosq = -yc / r
    cosq = min(max(cosq, -1.0), 1.0)
    return math.degrees(math.acos(cosq))


# ---------------------------------------------------------------------------
# Run cache
# ---------------------------------------------------------------------------

def default_cache_dir() -> str:
    return os.environ.get("DEWET_CACHE",
                          os.path.join(os.path.expanduser("~"), ".cache", "dewet"))


def manifest_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_cached(manifest, cache_dir=None, log_fn=None):
    """Execute a manifest, reusing a cached trajectory when available.

    The cache key is a content hash of the fully-resolved manifest, so
    any parameter change invalidates the entry.  Returns a Trajectory
    (records only when served from cache; no field snapshots).  Aborted
    runs are cached as well and re-raise RunAborted on replay.
    """
    from dewet import cli  # deferred: cli imports this module
    from dewet import integrators

    cache_dir = cache_dir or default_cache_dir()
    os.makedirs(cache_dir, exist_ok=True)
    key = manifest_hash(cli.emit_manifest(manifest))
    path = os.path.join(cache_dir, key + ".csv")
    if os.path.exists(path):
        return integrators.Trajectory.from_csv(path)
    marker = os.path.join(cache_dir, key + ".aborted")
    if os.path.exists(marker):
        with open(marker) as fh:
            raise integrators.RunAborted(fh.read().strip())
    try:
        traj = cli.execute_run(manifest, log_fn=log_fn)
    except integrators.RunAborted as exc:
        with open(marker, "w") as fh:
            fh.write(str(exc))
        raise
    tmp = path + ".tmp"
    traj.to_csv(tmp)
    os.replace(tmp, path)
    return traj


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------

SCHEME_STAGES = {"first_order": 1, "second_order": 1, "semi_implicit": 1,
                 "ros2": 2, "ros34pw2": 4}

WRONG_THRESHOLD = 0.10  # relative tip deviation marking a run as wrong
FIT_THRESHOLD = 0.50    # deviations beyond this saturate (the tip cannot
                        # lag by more than the domain) and bend the fit


@dataclass
class ConvergenceReport:
    """Per-tau tip-position deviations from a reference run."""

    scheme: str
    taus: np.ndarray            # strictly decreasing
    deviations: np.ndarray      # max relative tip deviation per tau
    failed: np.ndarray          # bool: run aborted or solver failed
    fitted_order: float = math.nan
    fitted_order_eff: float = math.nan

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.deviations = np.asarray(self.deviations, dtype=float)
        self.failed = np.asarray(self.failed, dtype=bool)
        if np.any(np.diff(self.taus) >= 0):
            raise ValueError("tau list must be strictly decreasing")
        if np.any(self.deviations[np.isfinite(self.deviations)] < 0):
            raise ValueError("deviations must be non-negative")

    @property
    def stages(self) -> int:
        return SCHEME_STAGES[self.scheme]

    @property
    def tau_eff(self) -> np.ndarray:
        return self.taus / self.stages

    @property
    def qualitatively_wrong(self) -> np.ndarray:
        return self.failed | (self.deviations > WRONG_THRESHOLD)

    def _fit_mask(self) -> np.ndarray:
        return (~self.failed & np.isfinite(self.deviations)
                & (self.deviations > 0) & (self.deviations <= FIT_THRESHOLD))

    def fit(self):
        """Fit log(error) slopes vs log(tau) on the unsaturated points."""
        ok = self._fit_mask()
        if np.count_nonzero(ok) >= 2:
            lt = np.log(self.taus[ok])
            le = np.log(self.deviations[ok])
            self.fitted_order = float(np.polyfit(lt, le, 1)[0])
            self.fitted_order_eff = float(
                np.polyfit(np.log(self.tau_eff[ok]), le, 1)[0])
        return self

    def max_stable_tau(self) -> float:
        ok = ~self.qualitatively_wrong
        return float(self.taus[ok].max()) if np.any(ok) else math.nan

    def tau_at_error(self, tol: float = 0.01) -> float:
        """Largest tau with deviation within tol.

        Interpolated on the fitted log-log line of the unsaturated
        points (and extrapolated when no sweep member reaches tol, which
        for a first-order scheme with a large error constant would need
        impractically many steps to sample directly).
        """
        ok = self._fit_mask()
        if np.count_nonzero(ok) < 2:
            ok = ~self.failed & (self.deviations <= tol)
            return float(self.taus[ok].max()) if np.any(ok) else math.nan
        slope, intercept = np.polyfit(np.log(self.taus[ok]),
                                      np.log(self.deviations[ok]), 1)
        return float(math.exp((math.log(tol) - intercept) / slope))

    def tau_eff_at_error(self, tol: float = 0.01) -> float:
        return self.tau_at_error(tol) / self.stages

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("tau,tau_eff,deviation,failed,qualitatively_wrong\n")
            for i in range(self.taus.size):
                fh.write("%.17g,%.17g,%.17g,%d,%d\n" % (
                    self.taus[i], self.tau_eff[i], self.deviations[i],
                    int(self.failed[i]), int(self.qualitatively_wrong[i])))

    def summary(self) -> str:
        lines = [
            f"scheme: {self.scheme}",
            f"stages: {self.stages}",
            f"fitted_order: {self.fitted_order:.4g}",
            f"fitted_order_eff: {self.fitted_order_eff:.4g}",
            f"max_stable_tau: {self.max_stable_tau():.6g}",
            f"tau_at_1pct_error: {self.tau_at_error():.6g}",
            f"tau_eff_at_1pct_error: {self.tau_eff_at_error():.6g}",
        ]
        return "\n".join(lines) + "\n"


def tip_deviation(series: TipSeries, reference: TipSeries) -> float:
    """Max relative tip deviation sampled at the reference output times.

    Restricted to the reference's dynamic window (up to its tip minimum):
    once retraction completes, the probe reads the stationary blob edge,
    where tiny shape differences register as persistent deviations.
    """
    t0 = max(series.times[0], reference.times[0])
    t1 = min(series.times[-1], reference.times[-1])
    t1 = min(t1, reference.times[int(np.argmin(reference.tips))])
    tq = reference.times[(reference.times >= t0) & (reference.times <= t1)]
    tq = tq[tq > 0]  # identical initial data carries no information
    ref = reference.at_times(tq)
    got = series.at_times(tq)
    return float(np.max(np.abs(got - ref) / np.abs(ref)))


def convergence_study(preset_name: str, scheme: str, tau_list,
                      reference_spec=None, cache_dir=None,
                      log_fn=None) -> ConvergenceReport:
    """Run a tau sweep of a preset and compare tip trajectories.

    The reference run uses a small fixed step, no splitting
    stabilization (alpha = 0) and a direct solver; reference_spec may
    override that manifest.  Every run is cached on disk.
    """
    from dewet import cli
    from dewet.integrators import RunAborted
    from dewet.linalg import SolverFailed

    taus = np.asarray(sorted(tau_list, reverse=True), dtype=float)
    ref_manifest = reference_spec or cli.reference_manifest(preset_name)
    ref_traj = run_cached(ref_manifest, cache_dir, log_fn=log_fn)
    reference = TipSeries.from_trajectory(ref_traj)

    devs = np.full(taus.size, np.inf)
    failed = np.zeros(taus.size, dtype=bool)
    for i, tau in enumerate(taus):
        m = cli.preset_run_manifest(preset_name, scheme, tau)
        try:
            traj = run_cached(m, cache_dir, log_fn=log_fn)
            devs[i] = tip_deviation(TipSeries.from_trajectory(traj), reference)
        except (RunAborted, SolverFailed, NoCrossing):
            failed[i] = True
    return ConvergenceReport(scheme, taus, devs, failed).fit()

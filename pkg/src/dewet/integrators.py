"""Time-stepping schemes and adaptive step-size control.

Four schemes operate on the coupled (u, mu) pair:

* first_order   -- nonlinear convex splitting, unconditionally energy
                   stable for g == 1; Newton inner loop.
* second_order  -- two-step secant convex splitting, weakly energy
                   stable for g == 1; Newton inner loop; constant tau.
* semi_implicit -- one linear solve per step (Newton linearization of
                   the convex part frozen at the old state).
* rosenbrock    -- linearly implicit Rosenbrock-Wanner stages sharing
                   one operator assembly per step, with an embedded
                   lower-order solution for error estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from dewet import grid as gridmod
from dewet import linalg, model
from dewet.grid import Grid
from dewet.linalg import SolverConfig, SolverFailed
from dewet.model import ModelParams


class NewtonDiverged(Exception):
    """Inner Newton iteration exceeded its budget; tau is too large."""


class UnstableStep(Exception):
    """A step solved but produced an out-of-bounds state."""


class RunAborted(Exception):
    """Too many consecutive step rejections."""


@dataclass
class State:
    grid: Grid
    u: np.ndarray
    mu: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        if self.u.shape != self.grid.shape or self.mu.shape != self.grid.shape:
            raise ValueError("state fields must match the grid shape")

    @classmethod
    def from_u(cls, grid: Grid, u: np.ndarray, params: ModelParams,
               time: float = 0.0) -> "State":
        """Build a state with mu initialized consistently from u."""
        v = model.substrate_field(grid, params)
        mu = model.initial_chemical_potential(grid, u, params, v=v)
        return cls(grid, np.asarray(u, dtype=float), mu, time)


@dataclass(frozen=True)
class RosenbrockTableau:
    """Coefficients of a Rosenbrock-Wanner scheme.

    a and c are s x s lower-triangular (c including the diagonal); only
    the strictly lower parts enter the stage recursion.  m are the
    solution weights, m_hat the embedded lower-order weights.
    """

    name: str
    s: int
    gamma: float
    a: np.ndarray
    c: np.ndarray
    m: np.ndarray
    m_hat: np.ndarray
    p: int

    def __post_init__(self):
        for arr, nm in ((self.a, "a"), (self.c, "c")):
            if arr.shape != (self.s, self.s):
                raise ValueError(f"{nm} must be {self.s}x{self.s}")
        if len(self.m) != self.s or len(self.m_hat) != self.s:
            raise ValueError("weight vectors must have length s")


def _tableau(name, gamma, a_entries, c_entries, m, m_hat, p):
    s = len(m)
    a = np.zeros((s, s))
    c = np.zeros((s, s))
    for (i, j), val in a_entries.items():
        a[i - 1, j - 1] = val
    for (i, j), val in c_entries.items():
        c[i - 1, j - 1] = val
    return RosenbrockTableau(name, s, gamma, a, c, np.array(m), np.array(m_hat), p)


ROS2 = _tableau(
    "ros2",
    gamma=1.707106781186547,
    a_entries={(2, 1): 0.5857864376269050, (2, 2): 1.0},
    c_entries={(1, 1): 1.707106781186547, (2, 1): -1.171572875253810,
               (2, 2): -1.707106781186547},
    m=[0.8786796564403575, 0.2928932188134525],
    m_hat=[0.5857864376269050, 0.0],
    p=2,
)

ROS34PW2 = _tableau(
    "ros34pw2",
    gamma=0.43586652150845,
    a_entries={
        (2, 1): 2.0, (2, 2): 0.871733043016918,
        (3, 1): 1.41921731745576, (3, 2): -0.25923221167297,
        (3, 3): 0.731579957788852,
        (4, 1): 4.18476048231916, (4, 2): -0.285192017355496,
        (4, 3): 2.29428036027904, (4, 4): 1.0,
    },
    c_entries={
        (1, 1): 0.43586652150845,
        (2, 1): -4.58856072055809, (2, 2): -0.43586652150845,
        (3, 1): -4.18476048231916, (3, 2): 0.285192017355496,
        (3, 3): -0.413333376233886,
        (4, 1): -6.36817920012836, (4, 2): -6.79562094446684,
        (4, 3): 2.87009860433106, (4, 4): 0.0,
    },
    m=[4.18476048231916, -0.285192017355496, 2.29428036027904, 1.0],
    m_hat=[3.90701053467119, 1.1180478778205, 0.521650232611491, 0.5],
    p=3,
)

TABLEAUS = {"ros2": ROS2, "ros34pw2": ROS34PW2}


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _interleave(u: np.ndarray, mu: np.ndarray) -> np.ndarray:
    x = np.empty(2 * u.size)
    x[0::2] = u.ravel()
    x[1::2] = mu.ravel()
    return x


def _deinterleave(x: np.ndarray, shape) -> tuple[np.ndarray, np.ndarray]:
    return x[0::2].reshape(shape).copy(), x[1::2].reshape(shape).copy()


def u_error_norm(grid: Grid, du: np.ndarray) -> float:
    """Discrete L2 norm of the u-component time-error estimate."""
    return math.sqrt(max(gridmod.integrate(grid, du**2), 0.0))


def _g_floored(u: np.ndarray, params: ModelParams) -> np.ndarray:
    g = model.enhancing(u, params.use_g)
    if params.use_g:
        g = g + model.G_FLOOR
    return g * np.ones_like(u)


# ---------------------------------------------------------------------------
# Schemes
# ---------------------------------------------------------------------------

def _newton_solve(grid, residual_fn, jacobian_fn, u0, mu0, solver,
                  tol=1e-10, max_iter=25):
    """Damped Newton on the stacked (u, mu) system."""
    u, mu = u0.copy(), mu0.copy()
    r = residual_fn(u, mu)
    rnorm = np.max(np.abs(r))
    rnorm0 = rnorm
    stop = max(tol, 1e-12 * rnorm)
    # the attainable residual floor scales with the initial residual;
    # below this, stagnation means roundoff, not divergence
    floor = max(1e4 * tol, 1e-9 * rnorm0)
    iters = 0
    total_lin = 0
    while rnorm > stop:
        if iters >= max_iter:
            raise NewtonDiverged(
                f"Newton residual {rnorm:.3e} after {iters} iterations")
        a = jacobian_fn(u, mu)
        dx, stats = linalg.solve(a, -r, solver)
        total_lin += stats["iterations"]
        du, dmu = _deinterleave(dx, grid.shape)
        # damping: halve the update while the residual grows
        lam = 1.0
        for _ in range(10):
            u_try, mu_try = u + lam * du, mu + lam * dmu
            r_try = residual_fn(u_try, mu_try)
            rnorm_try = np.max(np.abs(r_try))
            if rnorm_try < rnorm or not np.isfinite(rnorm_try):
                break
            lam *= 0.5
        if not np.all(np.isfinite(r_try)):
            raise NewtonDiverged("non-finite residual in Newton iteration")
        stalled = rnorm_try >= 0.5 * rnorm
        u, mu, r, rnorm = u_try, mu_try, r_try, rnorm_try
        iters += 1
        if stalled and rnorm <= floor:
            break
    return u, mu, {"newton_iters": iters, "solver_iters": total_lin}


def step_first_order(state: State, params: ModelParams, tau: float,
                     solver: SolverConfig, tol: float = 1e-10,
                     max_newton: int = 25) -> State:
    """One step of the nonlinear convex-splitting scheme.

    Implicit in B_c', explicit in B_e' and the mobility.  Energy
    stability holds unconditionally for g == 1; with g(u) the scheme is
    experimental.
    """
    g = state.grid
    eps = params.epsilon
    v = model.substrate_field(g, params)
    un = state.u
    be_p = model.split_expansive_prime(un, params, v=v)
    mob = model.mobility(un)
    dm = linalg.div_m_grad_matrix(g, mob)
    lap = linalg.laplacian_matrix(g)
    n = g.num_nodes
    ident = sp.eye(n, format="csr")

    def residual(u, mu):
        r1 = (_g_floored(u, params) * mu + eps * gridmod.laplacian(g, u)
              - model.split_convex_prime(u, params, v=v) / eps + be_p / eps)
        r2 = (u - un) / tau - gridmod.div_m_grad(g, mob, mu) / eps
        return _interleave(r1, r2)

    def jacobian(u, mu):
        j11 = eps * lap - sp.diags((model.split_convex_second(u, params, v=v) / eps).ravel())
        if params.use_g:
            j11 = j11 + sp.diags((model.enhancing_prime(u, params.use_g) * mu).ravel())
        j12 = _g_floored(u, params)
        return linalg.interleave_blocks(j11, j12, ident / tau, -dm / eps, n)

    u, mu, info = _newton_solve(g, residual, jacobian, un, state.mu, solver,
                                tol=tol, max_iter=max_newton)
    return State(g, u, mu, state.time + tau)


def step_second_order(state: State, prev_state: State, params: ModelParams,
                      tau: float, solver: SolverConfig, tol: float = 1e-10,
                      max_newton: int = 25) -> State:
    """One step of the two-step secant convex-splitting scheme.

    Requires the previous state at the same spacing tau.  The chemical
    potential it carries is the half-step mu^{n+1/2}.
    """
    g = state.grid
    eps = params.epsilon
    v = model.substrate_field(g, params)
    un, um1 = state.u, prev_state.u
    u_ext = 1.5 * un - 0.5 * um1
    be_p = model.split_expansive_prime(u_ext, params, v=v)
    mob = model.mobility(u_ext)
    g_ext = _g_floored(u_ext, params)
    lap_um1 = gridmod.laplacian(g, um1)
    dm = linalg.div_m_grad_matrix(g, mob)
    lap = linalg.laplacian_matrix(g)
    n = g.num_nodes
    ident = sp.eye(n, format="csr")

    def residual(u, mu):
        r1 = (g_ext * mu + 0.75 * eps * gridmod.laplacian(g, u) + 0.25 * eps * lap_um1
              - model.split_convex_secant(u, un, params, v=v) / eps + be_p / eps)
        r2 = (u - un) / tau - gridmod.div_m_grad(g, mob, mu) / eps
        return _interleave(r1, r2)

    def jacobian(u, mu):
        j11 = 0.75 * eps * lap - sp.diags(
            (model.split_convex_secant_prime(u, un, params, v=v) / eps).ravel())
        return linalg.interleave_blocks(j11, g_ext, ident / tau, -dm / eps, n)

    u, mu, info = _newton_solve(g, residual, jacobian, un, state.mu, solver,
                                tol=tol, max_iter=max_newton)
    return State(g, u, mu, state.time + tau)


def _semi_implicit_rhs(grid, un, params, tau, v):
    eps = params.epsilon
    r1 = (model.split_convex_second(un, params, v=v) * un
          - model.split_convex_prime(un, params, v=v)
          + model.split_expansive_prime(un, params, v=v)) / eps
    r2 = un / tau
    return _interleave(r1, r2)


def step_semi_implicit(state: State, params: ModelParams, tau: float,
                       solver: SolverConfig) -> State:
    """One linear solve of the semi-implicit convex-splitting scheme."""
    g = state.grid
    v = model.substrate_field(g, params)
    a = linalg.assemble_stage_operator(g, state.u, state.mu, params, tau,
                                       jacobian_kind="semi_implicit", v=v)
    b = _semi_implicit_rhs(g, state.u, params, tau, v)
    x, stats = linalg.solve(a, b, solver, x0=_interleave(state.u, state.mu))
    u, mu = _deinterleave(x, g.shape)
    return State(g, u, mu, state.time + tau)


def _f_apply(grid, u, mu, params, v):
    """Full right side F(u, mu) = F_c + F_e of the two model equations.

    Uses the same floored g as the stage operator: residual and
    Jacobian must describe one and the same regularized system, or the
    mismatch pumps the algebraic (mu) components in the degenerate
    bulk from step to step.
    """
    eps = params.epsilon
    f1 = (_g_floored(u, params) * mu + eps * gridmod.laplacian(grid, u)
          - model.split_convex_prime(u, params, v=v) / eps
          + model.split_expansive_prime(u, params, v=v) / eps)
    f2 = gridmod.div_m_grad(grid, model.mobility(u), mu) / eps
    return f1, f2


def step_rosenbrock(state: State, params: ModelParams, tau: float,
                    tableau: RosenbrockTableau, solver: SolverConfig,
                    jacobian_kind: str = "rosenbrock") -> tuple[State, State]:
    """One Rosenbrock-Wanner step; returns the solution and the embedded
    lower-order solution.  One operator assembly (and factorization, in
    direct mode) is shared by all stages."""
    g = state.grid
    v = model.substrate_field(g, params)
    un, mun = state.u, state.mu
    a = linalg.assemble_stage_operator(g, un, mun, params, tau * tableau.gamma,
                                       jacobian_kind=jacobian_kind, v=v)
    if solver.method == "direct":
        lu = linalg.FrozenLU(a)
        solve_one = lu.solve
    else:
        m_inv = linalg.make_preconditioner(a, solver.precond)

        def solve_one(b):
            x, _ = linalg.bicgstab_l(a, b, solver, m_inv=m_inv)
            return x

    stages_u, stages_mu = [], []
    for i in range(tableau.s):
        vu, vmu = un.copy(), mun.copy()
        hsum = np.zeros(g.shape)
        for j in range(i):
            aij = tableau.a[i, j]
            if aij != 0.0:
                vu += aij * stages_u[j]
                vmu += aij * stages_mu[j]
            cij = tableau.c[i, j]
            if cij != 0.0:
                hsum += cij * stages_u[j]
        f1, f2 = _f_apply(g, vu, vmu, params, v)
        b = _interleave(f1, hsum / tau + f2)
        x = solve_one(b)
        ku, kmu = _deinterleave(x, g.shape)
        stages_u.append(ku)
        stages_mu.append(kmu)

    u_new, mu_new = un.copy(), mun.copy()
    u_low, mu_low = un.copy(), mun.copy()
    for i in range(tableau.s):
        u_new += tableau.m[i] * stages_u[i]
        mu_new += tableau.m[i] * stages_mu[i]
        u_low += tableau.m_hat[i] * stages_u[i]
        mu_low += tableau.m_hat[i] * stages_mu[i]
    t1 = state.time + tau
    return State(g, u_new, mu_new, t1), State(g, u_low, mu_low, t1)


def rosenbrock_ode_step(f, jac, y, tau: float, tableau: RosenbrockTableau):
    """Rosenbrock step for a plain autonomous ODE y' = f(y) (H = identity).

    jac is the (approximate) Jacobian of f at y, as a scalar or matrix.
    Returns (y_new, y_low).  This is the scalar test harness behind the
    order-check self-test.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = y.size
    j = np.atleast_2d(np.asarray(jac, dtype=float))
    a_op = np.eye(n) / (tau * tableau.gamma) - j
    stages = []
    for i in range(tableau.s):
        v = y.copy()
        hsum = np.zeros(n)
        for k in range(i):
            v = v + tableau.a[i, k] * stages[k]
            hsum = hsum + tableau.c[i, k] * stages[k]
        b = hsum / tau + np.atleast_1d(f(v))
        stages.append(np.linalg.solve(a_op, b))
    y_new = y + sum(tableau.m[i] * stages[i] for i in range(tableau.s))
    y_low = y + sum(tableau.m_hat[i] * stages[i] for i in range(tableau.s))
    return y_new, y_low


# ---------------------------------------------------------------------------
# Step-size control
# ---------------------------------------------------------------------------

@dataclass
class StepController:
    """PI step controller on the embedded error estimate.

    tau_next = rho * tau^2/tau_prev * (e_tol * e_prev / e_new^2)^(1/p),
    clamped to [tau_min, tau_max] and capped at 2x growth per step.
    """

    e_tol: float = 4e-3
    rho: float = 0.95
    p: int = 3
    tau_min: float = 1e-9
    tau_max: float = 10.0
    tau_prev: Optional[float] = None
    tau_curr: Optional[float] = None
    e_prev: Optional[float] = None

    E_FLOOR = 1e-14
    GROWTH_CAP = 2.0
    REJECT_FACTOR = 10.0

    def __post_init__(self):
        if self.e_tol <= 0:
            raise ValueError("e_tol must be positive")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError("rho must be in (0, 1]")

    @property
    def ready(self) -> bool:
        return (self.tau_prev is not None and self.tau_curr is not None
                and self.e_prev is not None)

    def seed(self, tau: float, e: float) -> None:
        """Record a bootstrap step taken at fixed tau."""
        self.tau_prev = self.tau_curr if self.tau_curr is not None else tau
        self.tau_curr = tau
        self.e_prev = max(e, self.E_FLOOR)

    def should_reject(self, e_new: float) -> bool:
        return e_new > self.REJECT_FACTOR * self.e_tol


def controller_update(ctrl: StepController, e_new: float) -> float:
    """Advance the controller history with the new error and return the
    next step size."""
    if not ctrl.ready:
        raise ValueError("controller history not populated; seed two steps first")
    e_new = max(e_new, ctrl.E_FLOOR)
    tau_next = (ctrl.rho * ctrl.tau_curr**2 / ctrl.tau_prev
                * (ctrl.e_tol * ctrl.e_prev / e_new**2) ** (1.0 / ctrl.p))
    tau_next = min(tau_next, ctrl.GROWTH_CAP * ctrl.tau_curr, ctrl.tau_max)
    tau_next = max(tau_next, ctrl.tau_min)
    ctrl.tau_prev = ctrl.tau_curr
    ctrl.tau_curr = tau_next
    ctrl.e_prev = e_new
    return tau_next


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------

@dataclass
class Schedule:
    """Step schedule: ramped fixed tau, or PI-controlled adaptive tau.

    Fixed mode starts at tau_init and grows tau geometrically by
    ramp_factor per accepted step up to the target tau (the ramp rides
    out the stiff startup transient of non-equilibrated initial data).
    Adaptive mode starts at tau_init and hands over to the PI
    controller, whose per-step growth cap provides the ramp.
    """

    t_end: float
    tau: float
    mode: str = "fixed"  # fixed | adaptive
    tau_init: Optional[float] = None
    ramp_factor: float = 1.2
    controller: Optional[StepController] = None
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.tau_init is None:
            self.tau_init = self.tau
        if self.ramp_factor < 1.0:
            raise ValueError("ramp_factor must be >= 1")
        if self.mode == "adaptive" and self.controller is None:
            self.controller = StepController()


@dataclass
class Trajectory:
    """Per-step records of a run plus sampled field snapshots."""

    records: list = field(default_factory=list)
    fields: list = field(default_factory=list)  # (time, u-copy) samples
    final_state: Optional[State] = None

    COLUMNS = ("step", "time", "tau", "energy", "mass", "tip_x",
               "solver_iters", "e_estimate")

    def add(self, **kw):
        self.records.append(tuple(kw.get(c, math.nan) for c in self.COLUMNS))

    def column(self, name: str) -> np.ndarray:
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for rec in self.records:
                fh.write(",".join("%.17g" % val for val in rec) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        traj = cls()
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != cls.COLUMNS:
                raise ValueError(f"unexpected trajectory header {header}")
            for line in fh:
                traj.records.append(tuple(float(t) for t in line.strip().split(",")))
        return traj


MAX_CONSECUTIVE_REJECTS = 10

# phase-field values beyond this are numerical garbage (u lives in [0, 1]
# up to small over/undershoots)
U_SANITY = 10.0


def run(initial: State, params: ModelParams, scheme: str, schedule: Schedule,
        solver: Optional[SolverConfig] = None, probe_height: Optional[float] = None,
        field_interval: Optional[float] = None, jacobian_kind: str = "rosenbrock",
        log_fn=None) -> Trajectory:
    """Advance a state to schedule.t_end, recording observables per step.

    scheme is one of first_order, second_order, semi_implicit, ros2,
    ros34pw2.  Adaptive schedules require a Rosenbrock scheme (the
    embedded solution supplies the error estimate); second_order
    requires a constant tau.
    """
    if solver is None:
        solver = SolverConfig()
    if scheme not in ("first_order", "second_order", "semi_implicit",
                      "ros2", "ros34pw2"):
        raise ValueError(f"unknown scheme {scheme!r}")
    tableau = TABLEAUS.get(scheme)
    if schedule.mode == "adaptive" and tableau is None:
        raise ValueError("adaptive schedules need a Rosenbrock scheme")
    if scheme == "second_order" and schedule.tau_init != schedule.tau:
        raise ValueError("second_order requires a constant tau (no ramp)")

    g = initial.grid
    v = model.substrate_field(g, params)
    ctrl = schedule.controller
    traj = Trajectory()
    state = initial
    prev_state = None  # u^{n-1} for the two-step scheme
    tau = schedule.tau_init
    t_end = schedule.t_end
    rejects = 0
    step = 0
    next_field_time = -math.inf if field_interval is not None else math.inf

    def record(state, tau_used, iters, e_est):
        nonlocal next_field_time
        en = model.energy(g, state.u, params, v=v)
        mass = gridmod.integrate(g, state.u)
        tip = math.nan
        if probe_height is not None:
            from dewet import diagnostics
            try:
                tip = diagnostics.tip_position(g, state.u, probe_height)
            except diagnostics.NoCrossing:
                tip = math.nan
        traj.add(step=step, time=state.time, tau=tau_used, energy=en, mass=mass,
                 tip_x=tip, solver_iters=iters, e_estimate=e_est)
        if state.time >= next_field_time:
            traj.fields.append((state.time, state.u.copy()))
            next_field_time = state.time + field_interval
        if log_fn is not None:
            log_fn(step=step, time=state.time, tau=tau_used, energy=en,
                   mass=mass, tip_x=tip, e_estimate=e_est)

    record(state, math.nan, 0, math.nan)

    while state.time < t_end - 1e-12 and step < schedule.max_steps:
        tau_try = min(tau, t_end - state.time)
        e_est = math.nan
        iters = 0
        try:
            if scheme == "first_order":
                new_state = step_first_order(state, params, tau_try, solver)
            elif scheme == "second_order":
                if prev_state is None:
                    new_state = step_first_order(state, params, tau_try, solver)
                else:
                    new_state = step_second_order(state, prev_state, params,
                                                  tau_try, solver)
            elif scheme == "semi_implicit":
                new_state = step_semi_implicit(state, params, tau_try, solver)
            else:
                new_state, low = step_rosenbrock(state, params, tau_try, tableau,
                                                 solver, jacobian_kind=jacobian_kind)
                e_est = u_error_norm(g, new_state.u - low.u)
            # a solvable step can still be garbage (stage blow-up past the
            # scheme's stability bound); accepting it would poison every
            # later solve, so treat it as a failed step instead
            if (not np.all(np.isfinite(new_state.u))
                    or not np.all(np.isfinite(new_state.mu))
                    or np.max(np.abs(new_state.u)) > U_SANITY):
                raise UnstableStep(
                    f"state out of bounds after step: max|u|="
                    f"{float(np.max(np.abs(new_state.u))):.3g}")
        except (SolverFailed, NewtonDiverged, UnstableStep) as exc:
            if schedule.mode == "fixed" and (tau >= schedule.tau
                                             or isinstance(exc, UnstableStep)):
                # past the ramp a fixed-tau run that cannot take its
                # nominal step has hit the scheme's stability bound; a
                # blow-up during the ramp means the nominal step is
                # unreachable (halving and re-ramping would oscillate at
                # the stability ceiling forever)
                raise RunAborted(f"step failed at tau={tau_try:.3g}, "
                                 f"t={state.time:.6g}: {exc}")
            rejects += 1
            if rejects > MAX_CONSECUTIVE_REJECTS:
                raise RunAborted(f"{rejects} consecutive step rejections at "
                                 f"t={state.time:.6g}")
            tau = tau_try / 2.0
            continue

        if schedule.mode == "adaptive" and ctrl.should_reject(e_est):
            rejects += 1
            if rejects > MAX_CONSECUTIVE_REJECTS:
                raise RunAborted(f"{rejects} consecutive step rejections at "
                                 f"t={state.time:.6g}")
            tau = tau_try / 2.0
            continue

        rejects = 0
        step += 1
        prev_state = state
        state = new_state
        record(state, tau_try, iters, e_est)

        # choose the next tau
        if schedule.mode == "fixed":
            if tau < schedule.tau:
                tau = min(tau * schedule.ramp_factor, schedule.tau)
        else:
            if not ctrl.ready:
                ctrl.seed(tau_try, e_est)
                tau = min(tau_try * StepController.GROWTH_CAP, ctrl.tau_max)
            else:
                if ctrl.tau_curr != tau_try:
                    # a truncated or halved step: resync the history
                    ctrl.tau_curr = tau_try
                tau = controller_update(ctrl, e_est)

    traj.final_state = state
    return traj

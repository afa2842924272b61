"""Run manifests, experiment presets, and the command-line entry point.

A manifest is an INI file with sections grid/model/init/scheme/
schedule/solver/output.  Parsing resolves every default, validates the
result, and can echo the fully-resolved text back out, so a run
directory always carries a manifest that reproduces it.
"""

import argparse
import configparser
import math
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from dewet import diagnostics, integrators, model
from dewet.grid import Grid, ScalarField, read_field, write_field
from dewet.integrators import Schedule, State, StepController
from dewet.linalg import SolverConfig


class ParseError(Exception):
    """Malformed manifest text or an unknown section/key."""


class ValidationError(Exception):
    """Structurally valid manifest violating an invariant."""


class UnknownPreset(Exception):
    pass


SCHEMES = ("first_order", "second_order", "semi_implicit", "ros2", "ros34pw2")
INIT_KINDS = ("retracting_step", "square_island_2d", "droplet", "from_snapshot")


@dataclass
class RunManifest:
    """Fully-resolved run configuration (one INI section per group)."""

    # [grid]
    lx: float = 12.0
    ly: float = 1.5
    nx: int = 360
    ny: int = 45
    origin_x: float = 0.0
    origin_y: float = 0.0
    # [model]
    epsilon: float = 0.1
    alpha: float = 9.0
    alpha0: float = 9.0
    use_g: bool = True
    wetting: bool = False
    gamma_vs: float = 0.0
    gamma_fs: float = 0.0
    xi: float = 0.0              # 0 -> epsilon
    anisotropy_delta: float = 0.0
    # [init]
    kind: str = "retracting_step"
    film_height: float = 0.3
    film_length: float = 6.0
    island_length: float = 6.0
    radius: float = 0.8
    center_x: float = -1.0       # -1 -> lx/2
    snapshot: str = ""
    # [scheme]
    scheme: str = "semi_implicit"
    jacobian: str = "rosenbrock"
    # [schedule]
    t_end: float = 5.0
    tau: float = 1e-3
    mode: str = "fixed"
    tau_init: float = 1e-7
    ramp_factor: float = 1.2
    e_tol: float = 4e-3
    rho: float = 0.95
    p_order: int = 3
    max_steps: int = 2_000_000
    # [solver]
    method: str = "bicgstab"
    rtol: float = 1e-8
    atol: float = 1e-12
    max_iter: int = 400
    ell: int = 2
    precond: str = "ilu0"
    # [output]
    out_dir: str = "out"
    label: str = ""
    field_interval: float = 0.0  # 0 -> no field snapshots
    probe_height: float = -1.0   # -1 -> film_height/2 (retracting step only)

    def validate(self) -> "RunManifest":
        g = self.grid()  # raises for bad counts/spacings
        for h, ax in ((g.hx, "x"), (g.hy, "y")):
            if h > 0.6 * self.epsilon + 1e-12:
                raise ValidationError(
                    f"grid too coarse along {ax}: h={h:.4g} violates "
                    f"h <= 0.6*epsilon = {0.6 * self.epsilon:.4g} "
                    f"(need ~10 nodes across the interface)")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.kind not in INIT_KINDS:
            raise ValidationError(f"unknown initial condition {self.kind!r}")
        if self.mode not in ("fixed", "adaptive"):
            raise ValidationError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "adaptive" and self.scheme not in ("ros2", "ros34pw2"):
            raise ValidationError("adaptive schedules need an embedded error "
                                  "estimate (ros2 or ros34pw2)")
        if self.scheme == "second_order" and (self.mode != "fixed"
                                              or self.tau_init != self.tau):
            raise ValidationError("second_order needs a constant tau: "
                                  "mode=fixed and tau_init=tau")
        if self.method not in ("bicgstab", "direct"):
            raise ValidationError(f"unknown solver method {self.method!r}")
        if self.wetting and abs(self.gamma_vs - self.gamma_fs) > 1.0:
            raise ValidationError("|gamma_vs - gamma_fs| must be <= 1")
        if self.t_end <= 0 or self.tau <= 0 or self.tau_init <= 0:
            raise ValidationError("t_end, tau and tau_init must be positive")
        if self.kind == "from_snapshot" and not self.snapshot:
            raise ValidationError("from_snapshot needs a snapshot path")
        return self

    # -- builders ----------------------------------------------------------

    def grid(self) -> Grid:
        return Grid.from_domain(self.lx, self.ly, self.nx, self.ny,
                                origin=(self.origin_x, self.origin_y))

    def params(self) -> model.ModelParams:
        wet = None
        if self.wetting:
            wet = model.WettingParams(gamma_vs=self.gamma_vs,
                                      gamma_fs=self.gamma_fs,
                                      xi=self.xi or None)
        aniso = None
        if self.anisotropy_delta != 0.0:
            aniso = model.fourfold_anisotropy(self.anisotropy_delta)
        return model.ModelParams(epsilon=self.epsilon, alpha=self.alpha,
                                 alpha0=self.alpha0, use_g=self.use_g,
                                 wetting=wet, anisotropy=aniso)

    def schedule(self) -> Schedule:
        # In adaptive mode tau is the cap on the controller's step size
        # (in fixed mode it is the step size itself).
        ctrl = StepController(e_tol=self.e_tol, rho=self.rho, p=self.p_order,
                              tau_max=self.tau)
        return Schedule(t_end=self.t_end, tau=self.tau, mode=self.mode,
                        tau_init=self.tau_init, ramp_factor=self.ramp_factor,
                        controller=ctrl, max_steps=self.max_steps)

    def solver(self) -> SolverConfig:
        return SolverConfig(rtol=self.rtol, atol=self.atol,
                            max_iter=self.max_iter, ell=self.ell,
                            precond=self.precond, method=self.method)

    def resolved_center_x(self) -> float:
        return self.lx / 2.0 if self.center_x < 0 else self.center_x

    def resolved_probe_height(self):
        if self.probe_height >= 0:
            return self.probe_height or None
        if self.kind in ("retracting_step", "square_island_2d"):
            return self.film_height / 2.0
        return None

    def initial_field(self) -> np.ndarray:
        g = self.grid()
        X, Y = g.meshgrid()
        eps = self.epsilon
        tanh = np.tanh
        if self.kind == "retracting_step":
            return (0.5 * (1 + tanh(3 * (self.film_length - X) / eps))
                    * 0.5 * (1 + tanh(3 * (self.film_height - Y) / eps)))
        if self.kind == "square_island_2d":
            cx = self.resolved_center_x()
            x0, x1 = cx - self.island_length / 2, cx + self.island_length / 2
            return (0.5 * (1 + tanh(3 * (X - x0) / eps))
                    * 0.5 * (1 + tanh(3 * (x1 - X) / eps))
                    * 0.5 * (1 + tanh(3 * (self.film_height - Y) / eps)))
        if self.kind == "droplet":
            cx = self.resolved_center_x()
            dist = np.hypot(X - cx, Y) - self.radius
            return 0.5 * (1 - tanh(3 * dist / eps))
        field = read_field(self.snapshot)
        if field.grid.shape != g.shape:
            raise ValidationError(
                f"snapshot grid {field.grid.shape} != manifest grid {g.shape}")
        return field.data

    def initial_state(self) -> State:
        return State.from_u(self.grid(), self.initial_field(), self.params())


# ---------------------------------------------------------------------------
# INI <-> RunManifest
# ---------------------------------------------------------------------------

SECTION_OF = {
    "grid": ("lx", "ly", "nx", "ny", "origin_x", "origin_y"),
    "model": ("epsilon", "alpha", "alpha0", "use_g", "wetting", "gamma_vs",
              "gamma_fs", "xi", "anisotropy_delta"),
    "init": ("kind", "film_height", "film_length", "island_length", "radius",
             "center_x", "snapshot"),
    "scheme": ("scheme", "jacobian"),
    "schedule": ("t_end", "tau", "mode", "tau_init", "ramp_factor", "e_tol",
                 "rho", "p_order", "max_steps"),
    "solver": ("method", "rtol", "atol", "max_iter", "ell", "precond"),
    "output": ("out_dir", "label", "field_interval", "probe_height"),
}

_FIELD_TYPE = {f.name: f.type for f in fields(RunManifest)}


def _convert(key: str, raw: str):
    t = _FIELD_TYPE[key]
    try:
        if t is bool or t == "bool":
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if t is int or t == "int":
            return int(raw)
        if t is float or t == "float":
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ParseError(f"bad value for {key}: {raw!r}") from exc


def parse_manifest(text: str) -> RunManifest:
    """Parse INI text into a validated, fully-defaulted RunManifest."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from exc
    kw = {}
    for section in cp.sections():
        if section not in SECTION_OF:
            raise ParseError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SECTION_OF[section]:
                raise ParseError(f"unknown key {key!r} in section [{section}]")
            kw[key] = _convert(key, raw)
    return RunManifest(**kw).validate()


def emit_manifest(m: RunManifest) -> str:
    """Serialize with every key explicit; parse(emit(m)) == m."""
    out = []
    for section, keys in SECTION_OF.items():
        out.append(f"[{section}]")
        for key in keys:
            val = getattr(m, key)
            if isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = "%.17g" % val
            out.append(f"{key} = {val}")
        out.append("")
    return "\n".join(out)


ENV_PREFIX = "DEWET_"


def apply_env_overrides(m: RunManifest, environ=None) -> RunManifest:
    """Override manifest keys from DEWET_<SECTION>_<KEY> variables."""
    environ = os.environ if environ is None else environ
    kw = {}
    for section, keys in SECTION_OF.items():
        for key in keys:
            raw = environ.get(f"{ENV_PREFIX}{section.upper()}_{key.upper()}")
            if raw is not None:
                kw[key] = _convert(key, raw)
    if not kw:
        return m
    return replace(m, **kw).validate()


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

#: Retracting step at desk scale; resolves the epsilon = 0.2 interface
#: with ~12 nodes and keeps the tau = 1e-4 reference run tractable.
_STEP_BASE = dict(lx=12.0, ly=1.5, nx=360, ny=45, epsilon=0.2,
                  kind="retracting_step", film_height=0.3, film_length=6.0,
                  t_end=5.0)

#: Droplet relaxation for the wetting-angle runs.
# Droplet relaxation toward the equilibrium contact angle.  Fixed small
# steps: the embedded error estimate does not resolve contact-line
# motion, so an adaptive schedule grows tau until the contact line is
# artificially frozen.  The deep ramp start handles the consistent-mu
# initialization, whose floored-g tails make the first steps very stiff.
# The interface width is two cells wider than elsewhere (epsilon = 5*h):
# at epsilon = 2.5*h the contact line pins on the lattice several
# degrees short of the equilibrium angle.
_DROP_BASE = dict(lx=4.0, ly=1.2, nx=101, ny=41, epsilon=0.2,
                  kind="droplet", radius=0.8, wetting=True, xi=0.2,
                  t_end=60.0, mode="fixed", scheme="ros2", tau=0.05,
                  tau_init=1e-12, method="direct")

# small members sample the asymptotic regime for the order fits (the
# alpha-shifted operator lags the dynamics with an O(alpha*tau/eps) error,
# so first-order errors saturate already around tau ~ 1e-3); the large
# members probe the stability ceiling
PRESET_TAUS = {
    "fig_convergence_sie": (2e-4, 4e-4, 8e-4, 1.6e-3, 3.2e-3, 6.4e-3,
                            1.28e-2, 2.56e-2, 5.12e-2),
    "fig_convergence_ros2": (5e-4, 1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2, 3.2e-2,
                             6.4e-2, 0.128, 0.256, 0.512),
    "fig_convergence_ros34pw2": (1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2, 3.2e-2,
                                 6.4e-2, 0.128),
}

PRESET_SCHEME = {
    "fig_convergence_sie": "semi_implicit",
    "fig_convergence_ros2": "ros2",
    "fig_convergence_ros34pw2": "ros34pw2",
}

PRESET_NAMES = tuple(PRESET_TAUS) + ("fig_tip_scaling", "wetting_60",
                                     "wetting_120", "island_2d_adaptive")


def reference_manifest(preset_name: str) -> RunManifest:
    """Shared reference run: small fixed step, no splitting shift
    (alpha = 0), direct solver."""
    if preset_name not in PRESET_TAUS and preset_name != "fig_tip_scaling":
        raise UnknownPreset(preset_name)
    return RunManifest(**_STEP_BASE, scheme="semi_implicit", tau=1e-4,
                       alpha=0.0, alpha0=0.0, method="direct",
                       label="reference").validate()


def preset_run_manifest(preset_name: str, scheme: str, tau: float) -> RunManifest:
    """One sweep member of a convergence preset."""
    if preset_name not in PRESET_TAUS:
        raise UnknownPreset(preset_name)
    return RunManifest(**_STEP_BASE, scheme=scheme, tau=tau,
                       label=f"{scheme}_tau{tau:g}").validate()


def preset(name: str):
    """Manifests of a named study, reference run included."""
    if name in PRESET_TAUS:
        scheme = PRESET_SCHEME[name]
        runs = [preset_run_manifest(name, scheme, tau)
                for tau in PRESET_TAUS[name]]
        return [reference_manifest(name)] + runs
    if name == "fig_tip_scaling":
        base = dict(_STEP_BASE, scheme="ros2", mode="adaptive", tau=0.05)
        return [RunManifest(**base, use_g=True, label="g_active").validate(),
                RunManifest(**base, use_g=False, label="g_one").validate()]
    if name == "wetting_60":
        return [RunManifest(**_DROP_BASE, gamma_vs=0.5, gamma_fs=0.0,
                            label="wetting_60").validate()]
    if name == "wetting_120":
        return [RunManifest(**_DROP_BASE, gamma_vs=0.0, gamma_fs=0.5,
                            label="wetting_120").validate()]
    if name == "island_2d_adaptive":
        return [RunManifest(lx=12.0, ly=1.5, nx=360, ny=45, epsilon=0.2,
                            kind="square_island_2d", island_length=7.0,
                            film_height=0.3, scheme="ros34pw2",
                            mode="adaptive", tau=0.05, t_end=30.0,
                            label="island_2d").validate()]
    raise UnknownPreset(name)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def execute_run(m: RunManifest, log_fn=None, out_dir=None):
    """Run a manifest; if out_dir is given, write the resolved manifest,
    trajectory CSV, and final field beside each other."""
    traj = integrators.run(
        m.initial_state(), m.params(), m.scheme, m.schedule(),
        solver=m.solver(), probe_height=m.resolved_probe_height(),
        field_interval=m.field_interval or None, jacobian_kind=m.jacobian,
        log_fn=log_fn)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "manifest.ini"), "w") as fh:
            fh.write(emit_manifest(m))
        traj.to_csv(os.path.join(out_dir, "trajectory.csv"))
        s = traj.final_state
        write_field(os.path.join(out_dir, "final_u.csv"),
                    ScalarField(s.grid, s.u, s.time))
        for k, (t, u) in enumerate(traj.fields):
            write_field(os.path.join(out_dir, f"field_{k:04d}.csv"),
                        ScalarField(s.grid, u, t))
    return traj


def _stdout_log(every=50):
    def log(**kw):
        if kw["step"] % every == 0:
            print(" ".join(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in kw.items()), flush=True)
    return log


# ---------------------------------------------------------------------------
# Scalar-ODE self-test (exponential decay oracle)
# ---------------------------------------------------------------------------

def _aitken(seq):
    """Aitken delta-squared extrapolation of the last three entries."""
    d1, d2 = seq[-2] - seq[-3], seq[-1] - seq[-2]
    if d1 == d2:
        return seq[-1]
    return seq[-1] + d2 ** 2 / (d1 - d2)


def observed_tableau_order(tableau, lam=-1.0, t_end=1.0,
                           taus=(0.2, 0.1, 0.05, 0.025)):
    """Observed convergence order on y' = lam*y against the exact
    exponential.

    Integrates to t_end for each tau, forms pairwise orders of the
    global errors, and extrapolates their O(tau) pre-asymptotic drift
    away with one Aitken delta-squared step.
    """
    errs = []
    for tau in taus:
        y = np.array([1.0])
        for _ in range(round(t_end / tau)):
            y, _ = integrators.rosenbrock_ode_step(
                lambda v: lam * v, lam, y, tau, tableau)
        errs.append(abs(y[0] - math.exp(lam * t_end)))
    pair = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return _aitken(pair), pair, errs


def self_test_report() -> str:
    lines = ["scalar ODE self-test: y' = -y, global error at t = 1"]
    for name, tab in (("ros2", integrators.ROS2),
                      ("ros34pw2", integrators.ROS34PW2)):
        order, pair, errs = observed_tableau_order(tab)
        lines.append(f"{name}: observed_order={order:.4f} "
                     f"pairwise=[{', '.join('%.4f' % p for p in pair)}] "
                     f"errors=[{', '.join('%.3e' % e for e in errs)}]")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _load_manifest(args) -> RunManifest:
    if getattr(args, "preset", None):
        m = preset(args.preset)[0] if args.preset not in PRESET_TAUS else \
            preset(args.preset)[1]
    else:
        if not args.manifest:
            raise ParseError("need --manifest PATH or --preset NAME")
        with open(args.manifest) as fh:
            m = parse_manifest(fh.read())
    m = apply_env_overrides(m)
    if getattr(args, "out", None):
        m = replace(m, out_dir=args.out)
    return m


def _run_dir(m: RunManifest) -> str:
    sub = m.label or diagnostics.manifest_hash(emit_manifest(m))
    return os.path.join(m.out_dir, sub)


def cmd_run(args) -> int:
    if args.self_test:
        report = self_test_report()
        print(report, end="")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, "self_test.txt"), "w") as fh:
                fh.write(report)
        return 0
    m = _load_manifest(args)
    execute_run(m, log_fn=_stdout_log(args.log_every), out_dir=_run_dir(m))
    print(f"done out={_run_dir(m)}")
    return 0


def cmd_validate(args) -> int:
    with open(args.manifest) as fh:
        parse_manifest(fh.read())
    return 0


def cmd_preset_list(args) -> int:
    for name in PRESET_NAMES:
        print(name)
    return 0


def cmd_study(args) -> int:
    name = args.preset
    out = args.out or os.path.join("out", name)
    os.makedirs(out, exist_ok=True)
    cache = args.cache or None
    log = _stdout_log(args.log_every) if args.verbose else None

    if name in PRESET_TAUS:
        scheme = PRESET_SCHEME[name]
        rep = diagnostics.convergence_study(name, scheme, PRESET_TAUS[name],
                                            cache_dir=cache, log_fn=log)
        rep.to_csv(os.path.join(out, "report.csv"))
        with open(os.path.join(out, "summary.txt"), "w") as fh:
            fh.write(rep.summary())
        print(rep.summary(), end="")
        return 0

    if name == "fig_tip_scaling":
        lines = []
        for m in preset(name):
            traj = diagnostics.run_cached(m, cache, log_fn=log)
            series = diagnostics.TipSeries.from_trajectory(traj)
            exp = diagnostics.scaling_fit(series, (0.3, 3.0))
            traj.to_csv(os.path.join(out, f"trajectory_{m.label}.csv"))
            lines.append(f"{m.label}: exponent={exp:.4f}")
        with open(os.path.join(out, "summary.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print("\n".join(lines))
        return 0

    if name in ("wetting_60", "wetting_120"):
        (m,) = preset(name)
        # _final_field_for populates both cache entries on a miss, so
        # the run_cached call below never recomputes
        u = _final_field_for(m, cache)
        traj = diagnostics.run_cached(m, cache, log_fn=log)
        angle = diagnostics.wetting_angle(m.grid(), u, m.params())
        line = (f"{name}: angle={angle:.2f} deg "
                f"(young: {math.degrees(math.acos(m.gamma_vs - m.gamma_fs)):.2f})")
        traj.to_csv(os.path.join(out, "trajectory.csv"))
        with open(os.path.join(out, "summary.txt"), "w") as fh:
            fh.write(line + "\n")
        print(line)
        return 0

    if name == "island_2d_adaptive":
        (m,) = preset(name)
        traj = diagnostics.run_cached(m, cache, log_fn=log)
        traj.to_csv(os.path.join(out, "trajectory.csv"))
        tau = traj.column("tau")
        t = traj.column("time")
        line = (f"{name}: steps={len(t) - 1} min_tau={np.nanmin(tau):.3e} "
                f"final_tau={tau[-1]:.3e}")
        with open(os.path.join(out, "summary.txt"), "w") as fh:
            fh.write(line + "\n")
        print(line)
        return 0

    raise UnknownPreset(name)


def _final_field_for(m: RunManifest, cache_dir=None):
    """Final u field of a manifest, cached beside the trajectory."""
    cache_dir = cache_dir or diagnostics.default_cache_dir()
    key = diagnostics.manifest_hash(emit_manifest(m))
    path = os.path.join(cache_dir, key + "_final_u.csv")
    if os.path.exists(path):
        return read_field(path).data
    traj = execute_run(m)
    s = traj.final_state
    os.makedirs(cache_dir, exist_ok=True)
    write_field(path, ScalarField(s.grid, s.u, s.time))
    # keep the trajectory cache coherent as well
    csv = os.path.join(cache_dir, key + ".csv")
    if not os.path.exists(csv):
        traj.to_csv(csv)
    return s.u


def cmd_report(args) -> int:
    path = os.path.join(args.out, "summary.txt")
    if not os.path.exists(path):
        print(f"error: category=MissingReport no summary at {path}",
              file=sys.stderr)
        return 3
    with open(path) as fh:
        print(fh.read(), end="")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dewet",
                                 description="phase-field surface-diffusion "
                                             "solver for solid-state dewetting")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one manifest")
    p_run.add_argument("--manifest")
    p_run.add_argument("--preset", choices=PRESET_NAMES)
    p_run.add_argument("--out")
    p_run.add_argument("--self-test", action="store_true", dest="self_test")
    p_run.add_argument("--log-every", type=int, default=50)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--deterministic", action="store_true")

    p_study = sub.add_parser("study", help="run a preset study")
    p_study.add_argument("--preset", required=True, choices=PRESET_NAMES)
    p_study.add_argument("--out")
    p_study.add_argument("--cache")
    p_study.add_argument("--verbose", action="store_true")
    p_study.add_argument("--log-every", type=int, default=200)
    p_study.add_argument("--threads", type=int, default=1)
    p_study.add_argument("--deterministic", action="store_true")

    p_val = sub.add_parser("validate", help="check a manifest and exit")
    p_val.add_argument("--manifest", required=True)

    sub.add_parser("preset-list", help="list preset names")

    p_rep = sub.add_parser("report", help="print a study summary")
    p_rep.add_argument("--out", required=True)

    args = ap.parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate,
               "preset-list": cmd_preset_list, "study": cmd_study,
               "report": cmd_report}[args.command]
    try:
        return handler(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: category={type(exc).__name__} {exc}", file=sys.stderr)
        return 2
    except UnknownPreset as exc:
        print(f"error: category=UnknownPreset {exc}", file=sys.stderr)
        return 4
    except (integrators.RunAborted, diagnostics.NoCrossing,
            diagnostics.FitFailed, diagnostics.WindowTooNarrow) as exc:
        print(f"error: category={type(exc).__name__} {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

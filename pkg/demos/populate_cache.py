"""Populate the on-disk run cache for every heavy preset study.

The acceptance tests read these runs through the cache; without it they
recompute everything (hours).  The dominant cost is the shared
small-step reference run of the convergence studies (~3 h on one core).
Safe to re-run: cached entries are skipped.
"""
import time

import numpy as np

from dewet import cli, diagnostics


def log(msg):
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def main():
    t0 = time.time()
    ref = cli.reference_manifest("fig_convergence_sie")
    log("reference run starting")
    traj = diagnostics.run_cached(ref)
    log(f"reference done steps={len(traj.records)} wall={time.time()-t0:.0f}s")

    for name in ("fig_convergence_sie", "fig_convergence_ros2",
                 "fig_convergence_ros34pw2"):
        t1 = time.time()
        rep = diagnostics.convergence_study(name, cli.PRESET_SCHEME[name],
                                            cli.PRESET_TAUS[name])
        log(f"{name} wall={time.time()-t1:.0f}s\n{rep.summary()}")

    t1 = time.time()
    for m in cli.preset("fig_tip_scaling"):
        traj = diagnostics.run_cached(m)
        series = diagnostics.TipSeries.from_trajectory(traj)
        exp = diagnostics.scaling_fit(series, (0.3, 3.0))
        log(f"tip_scaling {m.label}: exponent={exp:.4f} "
            f"steps={len(traj.records)}")
    log(f"tip_scaling wall={time.time()-t1:.0f}s")

    for name in ("wetting_60", "wetting_120"):
        t1 = time.time()
        (m,) = cli.preset(name)
        u = cli._final_field_for(m)
        angle = diagnostics.wetting_angle(m.grid(), u, m.params())
        log(f"{name}: angle={angle:.3f} deg wall={time.time()-t1:.0f}s")

    t1 = time.time()
    (m,) = cli.preset("island_2d_adaptive")
    traj = diagnostics.run_cached(m)
    tau = traj.column("tau")[1:]
    log(f"island steps={len(traj.records)-1} min_tau={np.nanmin(tau):.3e} "
        f"max_tau={np.nanmax(tau):.3e} final_tau={tau[-1]:.3e} "
        f"wall={time.time()-t1:.0f}s")
    log(f"all done total={time.time()-t0:.0f}s")


if __name__ == "__main__":
    main()

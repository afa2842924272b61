"""Render the convergence and tip-scaling figures from cached studies.

Requires the run cache (see populate_cache.py) and the dewet-plots
package (pip install -e plots/ from the repository root).  Writes study
CSVs and PNGs into demos/figures/.
"""
import os

from dewet import cli, diagnostics
from dewet_plots import figures

STUDIES = ("fig_convergence_sie", "fig_convergence_ros2",
           "fig_convergence_ros34pw2")


def main():
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "figures")
    os.makedirs(out, exist_ok=True)

    inputs = []
    for name in STUDIES:
        rep = diagnostics.convergence_study(name, cli.PRESET_SCHEME[name],
                                            cli.PRESET_TAUS[name])
        path = os.path.join(out, f"{name}.csv")
        rep.to_csv(path)
        inputs.append({"path": path, "label": rep.scheme})

    for kind in ("error_vs_tau", "error_vs_tau_eff"):
        spec = figures.FigureSpec(kind=kind, inputs=inputs,
                                  out=os.path.join(out, f"{kind}.png"))
        figures.render(spec)
        print(f"wrote {spec.out}")

    # tip position vs time for the scaling runs, plus the adaptive
    # island's energy/timestep history
    tip_inputs = []
    for m in cli.preset("fig_tip_scaling"):
        traj = diagnostics.run_cached(m)
        path = os.path.join(out, f"tip_{m.label}.csv")
        traj.to_csv(path)
        tip_inputs.append({"path": path, "label": m.label})
    spec = figures.FigureSpec(kind="tip_vs_time", inputs=tip_inputs,
                              out=os.path.join(out, "tip_vs_time.png"),
                              xscale="log", yscale="log")
    figures.render(spec)
    print(f"wrote {spec.out}")

    (m,) = cli.preset("island_2d_adaptive")
    traj = diagnostics.run_cached(m)
    path = os.path.join(out, "island_2d.csv")
    traj.to_csv(path)
    spec = figures.FigureSpec(kind="energy_and_tau",
                              inputs=[{"path": path, "label": "island"}],
                              out=os.path.join(out, "energy_and_tau.png"))
    figures.render(spec)
    print(f"wrote {spec.out}")


if __name__ == "__main__":
    main()

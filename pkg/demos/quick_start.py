"""Minimal end-to-end run: a retracting step on a coarse grid.

Writes trajectory.csv and final_u.csv next to this script and prints the
tip position every few steps.  Takes well under a minute.
"""
import os

from dewet import cli

MANIFEST = """
[grid]
lx = 6.0
ly = 1.5
nx = 120
ny = 30

[model]
epsilon = 0.3

[init]
kind = retracting_step
film_height = 0.3
film_length = 3.0

[scheme]
scheme = ros2

[schedule]
mode = adaptive
tau = 0.05
tau_init = 1e-7
t_end = 2.0
"""


def main():
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                       "quick_start_out")
    m = cli.parse_manifest(MANIFEST).validate()
    traj = cli.execute_run(m, log_fn=cli._stdout_log(25), out_dir=out)
    tip = traj.column("tip_x")
    print(f"steps: {len(traj.records) - 1}")
    print(f"tip moved from x = {tip[0]:.3f} to x = {tip[-1]:.3f}")
    print(f"outputs in {out}/")


if __name__ == "__main__":
    main()

"""Regenerate solver figures from its CSV outputs.

Consumes only the two public CSV formats -- per-step trajectories
(step,time,tau,energy,mass,tip_x,solver_iters,e_estimate) and
convergence reports (tau,tau_eff,deviation,failed,qualitatively_wrong)
-- so this package never imports the solver.

A figure spec is a small JSON file:

    {"kind": "error_vs_tau",
     "inputs": [{"path": "out/sie/report.csv", "label": "semi-implicit"}],
     "out": "fig.png"}

Rendering is deterministic: identical CSVs give a byte-identical image.
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("tip_vs_time", "error_vs_tau", "error_vs_tau_eff", "energy_and_tau")

#: columns each figure kind needs from its input CSVs
REQUIRED = {
    "tip_vs_time": ("time", "tip_x"),
    "error_vs_tau": ("tau", "deviation", "qualitatively_wrong"),
    "error_vs_tau_eff": ("tau_eff", "deviation", "qualitatively_wrong"),
    "energy_and_tau": ("time", "energy", "tau"),
}

DPI = 110


class MissingColumn(Exception):
    """An input CSV lacks a column the figure kind requires."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list                 # [{"path": ..., "label": ...}, ...]
    out: str
    xscale: str = ""             # "" -> kind default
    yscale: str = ""
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("spec needs at least one input CSV")
        for item in self.inputs:
            if "path" not in item:
                raise ValueError("every input needs a 'path'")

    @classmethod
    def from_json(cls, path) -> "FigureSpec":
        with open(path) as fh:
            return cls(**json.load(fh))


def read_columns(path, names):
    """The named columns of a CSV as float arrays, keyed by name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MissingColumn(f"{path}: empty file, no column header")
    header = [h.strip() for h in rows[0]]
    out = {}
    for name in names:
        if name not in header:
            raise MissingColumn(f"{path}: no column {name!r} "
                                f"(has {', '.join(header)})")
        i = header.index(name)
        out[name] = np.array([float(r[i]) for r in rows[1:]])
    if any(v.size == 0 for v in out.values()):
        raise MissingColumn(f"{path}: columns present but no data rows")
    return out


def _label(item):
    return item.get("label", item["path"])


def _plot_tip_vs_time(ax, spec):
    for item in spec.inputs:
        cols = read_columns(item["path"], REQUIRED["tip_vs_time"])
        keep = np.isfinite(cols["tip_x"])
        ax.plot(cols["time"][keep], cols["tip_x"][keep], label=_label(item))
    ax.set_xlabel("time")
    ax.set_ylabel("tip position")


def _plot_error_vs_tau(ax, spec, xcol):
    xmins, xmaxs, ymids = [], [], []
    for item in spec.inputs:
        cols = read_columns(item["path"], REQUIRED[spec.kind])
        ok = (cols["qualitatively_wrong"] == 0) & (cols["deviation"] > 0)
        x, y = cols[xcol][ok], cols["deviation"][ok]
        ax.plot(x, y, "o-", label=_label(item))
        if x.size:
            xmins.append(x.min())
            xmaxs.append(x.max())
            ymids.append(np.exp(np.mean(np.log(y))))
    if xmins:
        # slope-1 guide through the geometric middle of the data
        x0, x1 = min(xmins), max(xmaxs)
        xm = np.sqrt(x0 * x1)
        ym = np.exp(np.mean(np.log(ymids)))
        gx = np.array([x0, x1])
        ax.plot(gx, ym * gx / xm, "k--", linewidth=0.8, label="slope 1")
    ax.set_xlabel("tau" if xcol == "tau" else "tau per stage")
    ax.set_ylabel("deviation from reference")


def _plot_energy_and_tau(ax, spec):
    item = spec.inputs[0]
    cols = read_columns(item["path"], REQUIRED["energy_and_tau"])
    t, en, tau = cols["time"], cols["energy"], cols["tau"]
    ax.plot(t, en, color="C0", label="energy")
    ax.set_xlabel("time")
    ax.set_ylabel("energy", color="C0")
    ax2 = ax.twinx()
    keep = np.isfinite(tau)
    ax2.plot(t[keep], tau[keep], color="C1", label="tau")
    ax2.set_yscale("log")
    ax2.set_ylabel("tau", color="C1")
    return ax2


def render(spec: FigureSpec) -> str:
    """Draw the figure described by the spec; returns the output path."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    try:
        if spec.kind == "tip_vs_time":
            _plot_tip_vs_time(ax, spec)
            default_scales = ("linear", "linear")
        elif spec.kind in ("error_vs_tau", "error_vs_tau_eff"):
            _plot_error_vs_tau(ax, spec,
                               "tau" if spec.kind == "error_vs_tau" else "tau_eff")
            default_scales = ("log", "log")
        else:
            _plot_energy_and_tau(ax, spec)
            default_scales = ("linear", "linear")
        ax.set_xscale(spec.xscale or default_scales[0])
        ax.set_yscale(spec.yscale or default_scales[1])
        if spec.title:
            ax.set_title(spec.title)
        if spec.kind != "energy_and_tau":
            ax.legend(fontsize=8)
        fig.tight_layout()
        # fixed metadata keeps the PNG byte-identical across renders
        fig.savefig(spec.out, dpi=DPI, metadata={"Software": "dewet-plots"})
    finally:
        plt.close(fig)
    return spec.out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dewet-plot",
                                 description="render a figure from a JSON spec")
    ap.add_argument("spec", help="figure-spec JSON file")
    ap.add_argument("--out", help="override the spec's output path")
    args = ap.parse_args(argv)
    try:
        spec = FigureSpec.from_json(args.spec)
        if args.out:
            spec.out = args.out
        path = render(spec)
    except (MissingColumn, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: category={type(exc).__name__} {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

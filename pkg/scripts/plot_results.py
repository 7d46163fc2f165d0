#!/usr/bin/env python3
"""Render the three collapse panels from a `hetqnd simulate` output dir.

Panel (a): per-trajectory <J_z>; panel (b): variance trajectories with
the ensemble mean, the short-time law, and the long-time bounds; panel
(c): landing histogram against the initial-state probabilities.

Requires matplotlib (pip install hetqnd[plots]).
"""

import argparse
import sys

import numpy as np


def load_csv(path):
    # first line is the "# manifest: ..." pointer, second is the header
    return np.genfromtxt(path, delimiter=",", names=True, skip_header=1)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("rundir", help="output directory of `hetqnd simulate`")
    parser.add_argument("--out", default=None, help="PNG path (default: <rundir>/panels.png)")
    args = parser.parse_args()

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    traj = load_csv(f"{args.rundir}/trajectories.csv")
    ens = load_csv(f"{args.rundir}/ensemble.csv")
    hist = load_csv(f"{args.rundir}/histogram.csv")

    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))

    ids = np.unique(traj["trajectory_id"])
    for tid in ids[:20]:
        sel = traj["trajectory_id"] == tid
        axes[0].plot(traj["step"][sel], traj["mean_jz"][sel], lw=0.6)
        axes[1].plot(traj["step"][sel], traj["var_jz"][sel],
                     lw=0.5, alpha=0.4, color="gray")
    axes[0].set_xlabel("detected photons")
    axes[0].set_ylabel(r"$\langle J_z \rangle$")

    axes[1].plot(ens["step"], ens["mean_var_jz"], "k", lw=1.5, label="ensemble mean")
    axes[1].plot(ens["step"], ens["analytic_var_jz"], "r--", lw=1.2, label="short-time law")
    axes[1].plot(ens["step"], ens["lower_bound"], "b:", lw=1.0, label="long-time bounds")
    axes[1].axhline(0.25, color="b", ls=":", lw=1.0)
    axes[1].set_yscale("log")
    axes[1].set_ylim(1e-3, None)
    axes[1].set_xlabel("detected photons")
    axes[1].set_ylabel(r"$\Delta J_z^2$")
    axes[1].legend(fontsize=7)

    width = hist["n_bin"][1] - hist["n_bin"][0]
    total = hist["count"].sum()
    axes[2].bar(hist["n_bin"], hist["count"] / max(total, 1), width=width,
                color="C0", alpha=0.6, label="trajectory endpoints")
    axes[2].plot(hist["n_bin"], hist["born_probability"], "k", lw=1.2,
                 label="initial $|c_n|^2$")
    axes[2].set_xlabel(r"$n$")
    axes[2].set_ylabel("probability")
    axes[2].legend(fontsize=7)

    fig.tight_layout()
    out = args.out or f"{args.rundir}/panels.png"
    fig.savefig(out, dpi=160)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

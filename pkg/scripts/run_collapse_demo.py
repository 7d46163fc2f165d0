#!/usr/bin/env python3
"""End-to-end demo: collapse trajectories, theory overlay, and budget.

Runs a reduced version of the canonical configuration (200 atoms,
phi = 1e-3, balanced splitter), writes the simulate/analytic CSV
bundles, and prints the Rb-87 squeezing budget.  With --full the photon
budget matches the long-run regime (several minutes).
"""

import argparse
import sys

from hetqnd import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo-out")
    parser.add_argument("--full", action="store_true",
                        help="run 1000 trajectories to 1e6 photons")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    photons = "1000000" if args.full else "40000"
    trajectories = "1000" if args.full else "100"
    code = cli.main([
        "simulate", "--atoms", "200", "--phi", "1e-3", "--R", "0.5",
        "--photons", photons, "--trajectories", trajectories,
        "--seed", str(args.seed), "--out", f"{args.out}/simulate",
    ])
    if code != 0:
        return code
    code = cli.main([
        "analytic", "--atoms", "200", "--phi", "1e-3", "--R", "0.5",
        "--np-min", "1e2", "--np-max", photons, "--points", "200",
        "--out", f"{args.out}/analytic",
    ])
    if code != 0:
        return code
    print()
    return cli.main(["budget", "--out", f"{args.out}/budget"])


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front-end: ``hetqnd simulate | analytic | budget | verify``.

All tabular output is CSV with a header row; every output directory gets
a ``manifest.json`` recording the resolved configuration, seed, inputs,
and tool version, and each CSV carries a ``# manifest:`` comment line
pointing at it.  A flat ``key = value`` config file can predefine any
flag; explicit flags win.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 simulation failure, 4 no balanced-detuning root.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .analytics import ValidityWarning, measurement_strength
from .decoherence import (
    NoRootError,
    ProbeGeometry,
    SpeciesFileError,
    SqueezingBudget,
    balance_detunings,
    coupling_and_lineshape,
    detunings,
    load_species,
    optimize_eta,
    phase_per_atom,
    rb87_d2,
    resonant_optical_density,
)
from .ensemble import EnsembleConfig, run_ensemble, run_trajectory
from .measurement import InterferometerParams, modulator_split
from .verification import CHECKS, DEFAULT_SEED, run_checks

MANIFEST_NAME = "manifest.json"

DEFAULT_BEAM_AREA = math.pi * (20e-6) ** 2


class ConfigError(ValueError):
    """User-facing configuration problem (exit code 2)."""


def _fmt(x) -> str:
    """Full round-trip float formatting (17 significant digits)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _read_config_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def _resolve(args, spec: dict[str, tuple], config_path: str | None):
    """Merge flag values over config-file values over defaults.

    ``spec`` maps option name (flag spelling, dashes) to (type, default).
    """
    file_values = _read_config_file(config_path) if config_path else {}
    unknown = set(file_values) - set(spec)
    if unknown:
        raise ConfigError(
            f"unknown config keys {sorted(unknown)}; valid keys: {sorted(spec)}")
    resolved = {}
    for key, (conv, default) in spec.items():
        flag_val = getattr(args, key.replace("-", "_"))
        if flag_val is not None:
            resolved[key] = flag_val
        elif key in file_values:
            try:
                resolved[key] = conv(file_values[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        else:
            resolved[key] = default
    return resolved


def _write_manifest(outdir: str, subcommand: str, config: dict,
                    inputs: list[str], outputs: list[str], seed=None) -> None:
    manifest = {
        "package": "hetqnd",
        "version": __version__,
        "subcommand": subcommand,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }
    with open(os.path.join(outdir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(outdir: str, name: str, header: list[str], rows) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# manifest: {MANIFEST_NAME}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return name


def _positive_int(value: str) -> int:
    # accept scientific notation for photon counts (1e6)
    x = float(value)
    if x < 0 or x != int(x):
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return int(x)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_SIMULATE_SPEC = {
    "atoms": (int, 200),
    "phi": (float, 1e-3),
    "R": (float, 0.5),
    "omega": (float, 0.0),
    "photons": (lambda v: int(float(v)), 100_000),
    "trajectories": (int, 100),
    "seed": (int, 42),
    "stride": (int, None),
    "workers": (int, None),
    "max-csv-trajectories": (int, 50),
    "out": (str, "hetqnd-out"),
}


def _default_stride(n_photons: int) -> int:
    if n_photons >= 100_000:
        return 100
    return max(1, n_photons // 1000)


def cmd_simulate(args) -> int:
    opts = _resolve(args, _SIMULATE_SPEC, args.config)
    stride = opts["stride"] or _default_stride(opts["photons"])
    try:
        params = InterferometerParams.from_reflectivity(
            opts["R"], opts["phi"], opts["omega"])
        config = EnsembleConfig(
            n_atoms=opts["atoms"],
            n_photons=opts["photons"],
            n_trajectories=opts["trajectories"],
            params=params,
            seed=opts["seed"],
            record_stride=stride,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    outdir = opts["out"]
    os.makedirs(outdir, exist_ok=True)
    try:
        result = run_ensemble(config, workers=opts["workers"])
    except Exception as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 3
    if result.n_failed == config.n_trajectories:
        print("simulation failed: every trajectory aborted", file=sys.stderr)
        return 3

    limit = opts["max-csv-trajectories"]
    n_csv = config.n_trajectories if limit == 0 else min(limit, config.n_trajectories)

    def trajectory_rows():
        # recomputes the first trajectories (deterministic) rather than
        # holding every moment series of a large ensemble in memory
        for idx in range(n_csv):
            traj = run_trajectory(config, idx)
            for s, mjz, vjz in zip(traj.steps, traj.mean_jz, traj.var_jz):
                if not np.isnan(mjz):
                    yield idx, s, mjz, vjz

    m2 = measurement_strength(params)
    steps = result.steps

    def ensemble_rows():
        for i, s in enumerate(steps):
            xi2 = 1.0 / (1.0 + m2 * config.n_atoms * s)
            yield (s, result.mean_var_jz[i], xi2 * config.n_atoms / 4.0,
                   2.0 * math.exp(-2.0 * m2 * s), 0.25)

    def histogram_rows():
        for n, count, born in zip(result.hist_n, result.hist_counts,
                                  result.born_probability):
            yield n, count, born

    outputs = [
        _write_csv(outdir, "trajectories.csv",
                   ["trajectory_id", "step", "mean_jz", "var_jz"],
                   trajectory_rows()),
        _write_csv(outdir, "ensemble.csv",
                   ["step", "mean_var_jz", "analytic_var_jz",
                    "lower_bound", "upper_bound"],
                   ensemble_rows()),
        _write_csv(outdir, "histogram.csv",
                   ["n_bin", "count", "born_probability"],
                   histogram_rows()),
    ]
    manifest_config = dict(opts)
    manifest_config["stride"] = stride
    manifest_config["n_failed_trajectories"] = result.n_failed
    _write_manifest(outdir, "simulate", manifest_config,
                    inputs=[args.config] if args.config else [],
                    outputs=outputs, seed=opts["seed"])
    print(f"wrote {', '.join(outputs)} to {outdir} "
          f"({result.n_failed} failed trajectories)")
    return 0


# ---------------------------------------------------------------------------
# analytic
# ---------------------------------------------------------------------------

_ANALYTIC_SPEC = {
    "atoms": (int, 200),
    "phi": (float, 1e-3),
    "R": (float, 0.5),
    "delta-phi-bar": (float, 0.0),
    "np-min": (float, 1e2),
    "np-max": (float, 1e7),
    "points": (int, 200),
    "out": (str, "hetqnd-out"),
}


def cmd_analytic(args) -> int:
    opts = _resolve(args, _ANALYTIC_SPEC, args.config)
    try:
        params = InterferometerParams.from_reflectivity(opts["R"], opts["phi"])
        if opts["points"] < 0:
            raise ValueError("points must be >= 0")
        if opts["points"] > 0 and not 0 < opts["np-min"] <= opts["np-max"]:
            raise ValueError("need 0 < np-min <= np-max")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    m2 = measurement_strength(params)
    n_at = opts["atoms"]
    grid = np.geomspace(opts["np-min"], opts["np-max"], opts["points"])

    def rows():
        for n_p in grid:
            kappa2 = m2 * n_at * n_p
            xi2 = 1.0 / (1.0 + kappa2)
            yield (n_p, xi2, kappa2, xi2 * n_at / 4.0,
                   2.0 * math.exp(-2.0 * m2 * n_p))

    outdir = opts["out"]
    os.makedirs(outdir, exist_ok=True)
    outputs = [_write_csv(outdir, "analytic.csv",
                          ["N_p", "xi2", "kappa2", "var_short", "lower_bound"],
                          rows())]
    _write_manifest(outdir, "analytic", dict(opts),
                    inputs=[args.config] if args.config else [],
                    outputs=outputs)
    print(f"wrote {outputs[0]} to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# budget
# ---------------------------------------------------------------------------

_BUDGET_SPEC = {
    "species": (str, None),
    "beam-area": (float, DEFAULT_BEAM_AREA),
    "atoms": (float, 1e7),
    "modulation-depth": (float, 0.01),
    "out": (str, None),
}


def cmd_budget(args) -> int:
    opts = _resolve(args, _BUDGET_SPEC, args.config)
    if opts["species"]:
        try:
            species = load_species(opts["species"])
        except OSError as exc:
            raise ConfigError(f"cannot read species file: {exc}") from exc
    else:
        species = rb87_d2()

    window = tuple(args.window) if args.window else None
    probe_hz = balance_detunings(species, window=window)
    couplings, lineshape = coupling_and_lineshape(species, detunings(species, probe_hz))
    f_levels = sorted(c.f for c in species.ground_levels)
    s1 = couplings[f_levels[0]]
    s2 = couplings[f_levels[1]]
    residual = abs(s1 + s2) / abs(s1)

    geometry = ProbeGeometry(beam_area=opts["beam-area"], n_atoms=opts["atoms"])
    phi = phase_per_atom(species, geometry, s1)
    rho0 = resonant_optical_density(species, geometry)
    mu = s1**2 / lineshape
    eta_star, xi2_star = optimize_eta(mu, rho0)
    budget = SqueezingBudget(rho0=rho0, s_coupling=s1, lineshape=lineshape,
                             mu=mu, eta=eta_star, xi_squared=xi2_star)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        t_coeff, r_coeff = modulator_split(math.sqrt(opts["modulation-depth"]))
    contrast = 2.0 * math.sqrt(r_coeff * t_coeff)
    n_p_opt = 2.0 * eta_star * opts["atoms"] / (rho0 * contrast**2 * lineshape)

    report = {
        "species": species.name,
        "balanced_probe_freq_hz": probe_hz,
        "coupling_S1": budget.s_coupling,
        "coupling_S2": s2,
        "balance_residual": residual,
        "lineshape_L": budget.lineshape,
        "mu": budget.mu,
        "phase_per_atom_rad": phi,
        "rho0": budget.rho0,
        "modulation_depth": opts["modulation-depth"],
        "contrast": contrast,
        "eta_optimum": budget.eta,
        "xi2_optimum": budget.xi_squared,
        "kappa2_at_optimum": budget.mu * budget.rho0 * budget.eta,
        "n_photons_at_optimum": n_p_opt,
        "beam_area_m2": opts["beam-area"],
        "n_atoms": opts["atoms"],
    }
    width = max(len(k) for k in report)
    for key, value in report.items():
        print(f"{key:<{width}}  {value if isinstance(value, str) else _fmt(value)}")

    if opts["out"]:
        outdir = opts["out"]
        os.makedirs(outdir, exist_ok=True)
        report_doc = {"manifest": MANIFEST_NAME, **report}
        with open(os.path.join(outdir, "budget.json"), "w", encoding="utf-8") as fh:
            json.dump(report_doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(outdir, "budget", dict(opts),
                        inputs=[p for p in (args.config, opts["species"]) if p],
                        outputs=["budget.json"])
        print(f"wrote budget.json to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    if args.list:
        for name in CHECKS:
            print(name)
        return 0
    names = args.check or None
    try:
        results = run_checks(names=names, seed=args.seed, workers=args.workers,
                             equiv_tol=args.equiv_tol, kl_tol=args.kl_tol,
                             m2_tol=args.m2_tol, alpha=args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: observed={res.observed:.6g} "
              f"{res.comparison} threshold={res.threshold:.6g} ({res.detail})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        doc = {
            "manifest": MANIFEST_NAME,
            "checks": [res.__dict__ for res in results],
            "all_passed": all(res.passed for res in results),
        }
        with open(os.path.join(args.out, "verify.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(args.out, "verify",
                        {"checks": [res.name for res in results]},
                        inputs=[], outputs=["verify.json"], seed=args.seed)
    return 0 if all(res.passed for res in results) else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetqnd",
        description="Quantum-trajectory simulator and analytics for "
                    "heterodyne QND probing of a collective atomic spin.",
    )
    parser.add_argument("--version", action="version", version=f"hetqnd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run Monte-Carlo trajectories")
    p_sim.add_argument("--config", help="flat key=value config file")
    p_sim.add_argument("--atoms", type=int)
    p_sim.add_argument("--phi", type=float, help="phase shift per unit n (rad)")
    p_sim.add_argument("--R", type=float, help="sideband branching probability")
    p_sim.add_argument("--omega", type=float, help="modulation frequency (metadata)")
    p_sim.add_argument("--photons", type=_positive_int)
    p_sim.add_argument("--trajectories", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--stride", type=int, help="photons between moment records")
    p_sim.add_argument("--workers", type=int)
    p_sim.add_argument("--max-csv-trajectories", type=int,
                       help="cap per-trajectory CSV rows (0 = all)")
    p_sim.add_argument("--out")
    p_sim.set_defaults(func=cmd_simulate)

    p_ana = sub.add_parser("analytic", help="tabulate weak-coupling theory")
    p_ana.add_argument("--config")
    p_ana.add_argument("--atoms", type=int)
    p_ana.add_argument("--phi", type=float)
    p_ana.add_argument("--R", type=float)
    p_ana.add_argument("--delta-phi-bar", type=float)
    p_ana.add_argument("--np-min", type=float)
    p_ana.add_argument("--np-max", type=float)
    p_ana.add_argument("--points", type=int)
    p_ana.add_argument("--out")
    p_ana.set_defaults(func=cmd_analytic)

    p_bud = sub.add_parser("budget", help="spontaneous-emission squeezing budget")
    p_bud.add_argument("--config")
    p_bud.add_argument("--species", help="species data file (default: packaged Rb-87 D2)")
    p_bud.add_argument("--beam-area", type=float)
    p_bud.add_argument("--atoms", type=float)
    p_bud.add_argument("--modulation-depth", type=float,
                       help="sideband/carrier power ratio |beta|^2")
    p_bud.add_argument("--window", type=float, nargs=2,
                       metavar=("LO_HZ", "HI_HZ"),
                       help="explicit balancing search window")
    p_bud.add_argument("--out")
    p_bud.set_defaults(func=cmd_budget)

    p_ver = sub.add_parser("verify", help="run cross-module consistency checks")
    p_ver.add_argument("--list", action="store_true", help="list available checks")
    p_ver.add_argument("--check", action="append", choices=list(CHECKS),
                       help="run only the named check (repeatable)")
    p_ver.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_ver.add_argument("--workers", type=int)
    p_ver.add_argument("--equiv-tol", type=float, default=1e-9)
    p_ver.add_argument("--kl-tol", type=float, default=1e-2)
    p_ver.add_argument("--m2-tol", type=float, default=1e-2)
    p_ver.add_argument("--alpha", type=float, default=1e-3)
    p_ver.add_argument("--out")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SpeciesFileError as exc:
        print(f"species file error: {exc}", file=sys.stderr)
        return 2
    except NoRootError as exc:
        print(f"no balanced detuning: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Cross-module consistency checks behind the ``verify`` subcommand.

Each check pits two independent routes at the same quantity against
each other: sequential kernel application vs the closed product form,
the simulated posterior vs its Gaussian limit, the binned sub-process
strengths vs the measurement strength, and collapse statistics vs the
initial-state probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .analytics import (
    gaussian_posterior_log_probs,
    integrated_subprocess_strength,
    kl_divergence,
    measurement_strength,
)
from .ensemble import EnsembleConfig, run_ensemble, run_trajectory
from .measurement import DetectionEvent, InterferometerParams, apply_detection, backaction_weight
from .spinstate import css_init

__all__ = [
    "CheckResult",
    "check_product_form",
    "check_gaussian_kl",
    "check_subprocess_reduction",
    "check_born_rule",
    "CHECKS",
    "run_checks",
    "merge_bins",
]

DEFAULT_SEED = 20260809


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    threshold: float
    comparison: str
    detail: str = ""

    def __post_init__(self):
        # plain python types so results serialize directly to JSON
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "observed", float(self.observed))
        object.__setattr__(self, "threshold", float(self.threshold))


def params_for_contrast(contrast: float, phi: float,
                        omega: float = 0.0) -> InterferometerParams:
    """Beamsplitter coefficients realizing a given fringe contrast."""
    if not 0.0 <= contrast <= 1.0:
        raise ValueError("contrast must lie in [0, 1]")
    r = 0.5 * (1.0 - np.sqrt(1.0 - contrast**2))
    return InterferometerParams(t_coeff=1.0 - r, r_coeff=r, phi=phi, omega=omega)


def check_product_form(seed: int = DEFAULT_SEED, n_sequences: int = 100,
                       length: int = 100, n_atoms: int = 200,
                       tol: float = 1e-9) -> CheckResult:
    """Sequential detections must equal the product-form reweighting.

    Applies random phase sequences both ways and compares per-amplitude
    magnitudes; sequences alternate between a balanced splitter and an
    asymmetric one (complex kernel).
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    worst = 0.0
    for seq in range(n_sequences):
        if seq % 2 == 0:
            params = InterferometerParams(0.5, 0.5, 1e-3)
        else:
            params = InterferometerParams(0.7, 0.3, 2e-3)
        phases = rng.uniform(-np.pi, np.pi, size=length)
        state = css_init(n_atoms)
        for ph in phases:
            state = apply_detection(state, params, DetectionEvent(ph))
        seq_mag = np.abs(state.amplitudes)

        log_w = backaction_weight(params, phases, state.n_values)
        mag = np.abs(css_init(n_atoms).amplitudes) * np.exp(0.5 * (log_w - log_w.max()))
        mag /= np.sqrt(np.sum(mag**2))

        mask = mag > 1e-200
        rel = np.abs(seq_mag[mask] - mag[mask]) / mag[mask]
        worst = max(worst, float(rel.max()))
    return CheckResult(
        name="product_form_equivalence",
        passed=worst <= tol,
        observed=worst,
        threshold=tol,
        comparison="<=",
        detail=f"{n_sequences} sequences of {length} detections, N_at={n_atoms}",
    )


def check_gaussian_kl(seed: int = DEFAULT_SEED, n_atoms: int = 200,
                      phi: float = 1e-3, n_photons: int = 10_000,
                      tol: float = 1e-2) -> CheckResult:
    """Simulated posterior vs the Gaussian back-action prediction.

    The offset entering the prediction is the trajectory's cumulative
    phase-offset estimate; agreement is measured by KL divergence.
    """
    params = InterferometerParams(0.5, 0.5, phi)
    config = EnsembleConfig(n_atoms=n_atoms, n_photons=n_photons,
                            n_trajectories=1, params=params, seed=seed,
                            record_stride=max(1, n_photons // 10),
                            keep_final_state=True)
    traj = run_trajectory(config, 0)
    if traj.failed:
        return CheckResult("gaussian_limit_kl", False, np.inf, tol, "<=",
                           "trajectory aborted")
    p = np.abs(traj.final_amplitudes) ** 2
    log_q = gaussian_posterior_log_probs(n_atoms, n_photons, params,
                                         traj.delta_phi_bar)
    kl = kl_divergence(p, log_q)
    return CheckResult(
        name="gaussian_limit_kl",
        passed=kl <= tol,
        observed=kl,
        threshold=tol,
        comparison="<=",
        detail=f"N_at={n_atoms}, phi={phi}, N_p={n_photons}, seed={seed}",
    )


def check_subprocess_reduction(m: int = 100,
                               contrasts=(0.2, 0.5, 0.9),
                               phi: float = 1e-3,
                               tol: float = 1e-2) -> CheckResult:
    """Integrated sub-process strengths must reproduce M^2 within tol."""
    worst = 0.0
    for c in contrasts:
        params = params_for_contrast(c, phi)
        m2 = measurement_strength(params)
        integral = integrated_subprocess_strength(params, m)
        worst = max(worst, abs(integral - m2) / m2)
    return CheckResult(
        name="subprocess_m2_reduction",
        passed=worst <= tol,
        observed=worst,
        threshold=tol,
        comparison="<=",
        detail=f"m={m}, contrasts={tuple(contrasts)}",
    )


def merge_bins(counts: np.ndarray, expected: np.ndarray,
               min_expected: float = 5.0):
    """Merge adjacent histogram bins until every expected count reaches
    ``min_expected`` (standard chi-square practice)."""
    obs_out, exp_out = [], []
    obs_acc = 0.0
    exp_acc = 0.0
    for o, e in zip(counts, expected):
        obs_acc += o
        exp_acc += e
        if exp_acc >= min_expected:
            obs_out.append(obs_acc)
            exp_out.append(exp_acc)
            obs_acc = 0.0
            exp_acc = 0.0
    if exp_acc > 0 and exp_out:
        obs_out[-1] += obs_acc
        exp_out[-1] += exp_acc
    return np.asarray(obs_out), np.asarray(exp_out)


def check_born_rule(seed: int = DEFAULT_SEED, n_atoms: int = 50,
                    phi: float = 0.02, n_photons: int = 100_000,
                    n_trajectories: int = 1200, alpha: float = 1e-3,
                    workers: int | None = None) -> CheckResult:
    """Final-outcome frequencies vs initial-state probabilities.

    Long collapsed trajectories land on single Dicke states; the
    landing histogram must pass a chi-square goodness-of-fit test
    against |c_n(0)|^2 at significance ``alpha``.
    """
    params = InterferometerParams(0.5, 0.5, phi)
    config = EnsembleConfig(n_atoms=n_atoms, n_photons=n_photons,
                            n_trajectories=n_trajectories, params=params,
                            seed=seed, record_stride=n_photons)
    result = run_ensemble(config, workers=workers)
    n_ok = int(result.hist_counts.sum())
    expected = result.born_probability * n_ok
    obs, exp = merge_bins(result.hist_counts, expected)
    exp *= obs.sum() / exp.sum()
    chi2 = stats.chisquare(obs, exp)
    return CheckResult(
        name="born_rule_chi2",
        passed=bool(chi2.pvalue >= alpha) and result.n_failed == 0,
        observed=float(chi2.pvalue),
        threshold=alpha,
        comparison=">=",
        detail=(f"{n_ok} trajectories, N_at={n_atoms}, phi={phi}, "
                f"N_p={n_photons}, {len(obs)} merged bins"),
    )


#: Registry in default execution order (cheap checks first).
CHECKS = {
    "product_form_equivalence": check_product_form,
    "subprocess_m2_reduction": check_subprocess_reduction,
    "gaussian_limit_kl": check_gaussian_kl,
    "born_rule_chi2": check_born_rule,
}


def run_checks(names=None, seed: int = DEFAULT_SEED, workers: int | None = None,
               equiv_tol: float = 1e-9, kl_tol: float = 1e-2,
               m2_tol: float = 1e-2, alpha: float = 1e-3):
    """Run the selected checks and return their results in order."""
    if names is None:
        names = list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}; available: {list(CHECKS)}")
    results = []
    for name in names:
        if name == "product_form_equivalence":
            results.append(check_product_form(seed=seed, tol=equiv_tol))
        elif name == "subprocess_m2_reduction":
            results.append(check_subprocess_reduction(tol=m2_tol))
        elif name == "gaussian_limit_kl":
            results.append(check_gaussian_kl(seed=seed, tol=kl_tol))
        elif name == "born_rule_chi2":
            results.append(check_born_rule(seed=seed, alpha=alpha, workers=workers))
    return results

"""Monte-Carlo orchestration of measurement trajectories.

Each trajectory starts from the coherent spin state and alternates
phase sampling (inverse-CDF bisection) with the diagonal detection
kernel, photon by photon.  Trajectories are deterministic given
(master seed, trajectory index): every trajectory owns a Philox
counter-based stream keyed by that pair, so results are bit-identical
across runs and worker counts, and independent of the logging stride.

The per-photon loop is JIT-compiled (numba) when available; a pure
NumPy/Python fallback with the identical uniform-consumption order
keeps small runs working without it.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .measurement import InterferometerParams
from .spinstate import css_init, css_log_probs

__all__ = [
    "EnsembleConfig",
    "Trajectory",
    "RunResult",
    "run_trajectory",
    "run_ensemble",
    "default_workers",
    "NUMBA_AVAILABLE",
]

TWO_PI = 2.0 * np.pi

#: Environment variable holding the default worker count.
WORKERS_ENV_VAR = "HETQND_WORKERS"

#: Bisection iterations on the phase CDF: pi / 2**36 < 1e-10 rad.
_N_BISECT = 36
_BISECT_MOVES = np.pi / 2.0 ** np.arange(1, 61)
_BISECT_SIN = np.sin(_BISECT_MOVES)
_BISECT_COS = np.cos(_BISECT_MOVES)


def _advance_block_impl(re, im, cos_n, sin_n, cos_hn, sin_hn,
                        u_plus, u_minus, contrast, uniforms,
                        dsin, dcos, moves, n_bisect, s0, a, b):
    """Advance the state by one detection per uniform draw.

    (s0, a, b) are the running norm^2 and Fourier moments of the stored
    state; they are threaded through calls so that block boundaries
    (logging stride) cannot perturb the arithmetic.  Amplitudes are
    renormalized against the pre-kernel norm each step, which pins the
    stored norm inside [sqrt(1-C), sqrt(1+C)] without a separate pass.
    Returns (sum of phases, sum of offset scores, photons completed,
    status, s0, a, b); status 1 flags a numerically annihilated state.
    """
    n = re.shape[0]
    sum_phase = 0.0
    sum_score = 0.0
    cf = contrast / TWO_PI
    for k in range(uniforms.shape[0]):
        if not s0 > 1e-300:
            return sum_phase, sum_score, k, 1, s0, a, b
        u = uniforms[k]
        an = a / s0
        bn = b / s0
        # bisection on the closed-form CDF; midpoint trig by rotation
        m = 0.0
        sm = 0.0
        cm = 1.0
        for j in range(n_bisect):
            f = (m + np.pi) / TWO_PI + cf * (an * sm - bn * cm - bn)
            if f < u:
                s_new = sm * dcos[j] + cm * dsin[j]
                c_new = cm * dcos[j] - sm * dsin[j]
                m += moves[j]
            else:
                s_new = sm * dcos[j] - cm * dsin[j]
                c_new = cm * dcos[j] + sm * dsin[j]
                m -= moves[j]
            sm = s_new
            cm = c_new
        sum_phase += m
        denom = 1.0 + contrast * cm
        if denom > 1e-300:
            sum_score += sm / denom
        # detection kernel, fused with the next step's Fourier moments
        cb = np.cos(0.5 * m)
        sb = np.sin(0.5 * m)
        inv = 1.0 / np.sqrt(s0)
        kr0 = u_plus * cb
        kr1 = u_plus * sb
        ki0 = u_minus * cb
        ki1 = u_minus * sb
        s0 = 0.0
        a = 0.0
        b = 0.0
        for i in range(n):
            kr = cos_hn[i] * kr0 + sin_hn[i] * kr1
            ki = sin_hn[i] * ki0 - cos_hn[i] * ki1
            r = re[i]
            q = im[i]
            rn = (kr * r - ki * q) * inv
            qn = (kr * q + ki * r) * inv
            re[i] = rn
            im[i] = qn
            p = rn * rn + qn * qn
            s0 += p
            a += p * cos_n[i]
            b += p * sin_n[i]
    return sum_phase, sum_score, uniforms.shape[0], 0, s0, a, b


try:  # pragma: no cover - exercised through public entry points
    from numba import njit

    _advance_block = njit(cache=True, nogil=True, fastmath=True)(_advance_block_impl)
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    _advance_block = _advance_block_impl
    NUMBA_AVAILABLE = False


@dataclass(frozen=True)
class EnsembleConfig:
    """Configuration of a Monte-Carlo run."""

    n_atoms: int
    n_photons: int
    n_trajectories: int
    params: InterferometerParams
    seed: int
    record_stride: int = 100
    keep_final_state: bool = False

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.n_photons < 0:
            raise ValueError("n_photons must be >= 0")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def log_steps(self) -> np.ndarray:
        """Photon counts at which moments are recorded (step 0, every
        record_stride photons, and the final step)."""
        steps = list(range(0, self.n_photons + 1, self.record_stride))
        if steps[-1] != self.n_photons:
            steps.append(self.n_photons)
        return np.asarray(steps, dtype=np.int64)


@dataclass
class Trajectory:
    """Moment record of a single measurement trajectory."""

    trajectory_index: int
    steps: np.ndarray
    mean_jz: np.ndarray
    var_jz: np.ndarray
    delta_phi_bar: float
    raw_phase_mean: float
    final_amplitudes: np.ndarray | None = None
    failed: bool = False
    fail_step: int | None = None


@dataclass
class RunResult:
    """Aggregated ensemble statistics."""

    config: EnsembleConfig
    steps: np.ndarray
    mean_var_jz: np.ndarray
    mean_mean_jz: np.ndarray
    final_mean_jz: np.ndarray
    hist_n: np.ndarray
    hist_counts: np.ndarray
    born_probability: np.ndarray
    n_failed: int
    failed_indices: tuple[int, ...]
    provenance: dict = field(repr=False)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValueError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from exc
        if value < 1:
            raise ValueError(f"{WORKERS_ENV_VAR} must be >= 1")
        return value
    return os.cpu_count() or 1


def _trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Philox stream keyed by (master seed, trajectory index).

    Philox is counter-based: distinct 128-bit keys give independent
    streams regardless of scheduling, which makes parallel runs
    reproducible for any worker count.
    """
    if not 0 <= index < 2**64:
        raise ValueError("trajectory index must fit in 64 bits")
    return np.random.Generator(np.random.Philox(key=(seed << 64) | index))


def _moments_from_arrays(nvals, re, im):
    p = re * re + im * im
    total = p.sum()
    mean = float(np.dot(nvals, p) / total)
    var = float(np.dot((nvals - mean) ** 2, p) / total)
    return mean, max(var, 0.0)


def run_trajectory(config: EnsembleConfig, trajectory_index: int) -> Trajectory:
    """Run one trajectory; deterministic given (seed, trajectory_index).

    A numerically annihilated state aborts the trajectory: the record is
    flagged and the remaining moment entries are NaN.
    """
    rng = _trajectory_rng(config.seed, trajectory_index)
    params = config.params
    state = css_init(config.n_atoms)
    nvals = state.n_values
    re = np.ascontiguousarray(state.amplitudes.real)
    im = np.ascontiguousarray(state.amplitudes.imag)
    cos_n = np.cos(params.phi * nvals)
    sin_n = np.sin(params.phi * nvals)
    cos_hn = np.cos(0.5 * params.phi * nvals)
    sin_hn = np.sin(0.5 * params.phi * nvals)
    u_plus = math.sqrt(params.t_coeff) + math.sqrt(params.r_coeff)
    u_minus = math.sqrt(params.t_coeff) - math.sqrt(params.r_coeff)
    contrast = params.contrast

    steps = config.log_steps()
    mean = np.full(steps.shape, np.nan)
    var = np.full(steps.shape, np.nan)
    mean[0], var[0] = _moments_from_arrays(nvals, re, im)

    # running norm^2 and Fourier moments, threaded through kernel calls
    p0 = re * re + im * im
    s0 = float(p0.sum())
    a = float(np.dot(p0, cos_n))
    b = float(np.dot(p0, sin_n))

    sum_phase = 0.0
    sum_score = 0.0
    done = 0
    failed = False
    fail_step = None
    for j in range(1, steps.shape[0]):
        block = int(steps[j] - done)
        uniforms = rng.random(block)
        d_phase, d_score, n_done, status, s0, a, b = _advance_block(
            re, im, cos_n, sin_n, cos_hn, sin_hn, u_plus, u_minus,
            contrast, uniforms, _BISECT_SIN, _BISECT_COS, _BISECT_MOVES,
            _N_BISECT, s0, a, b)
        sum_phase += d_phase
        sum_score += d_score
        done += n_done
        if status != 0:
            failed = True
            fail_step = done
            break
        mean[j], var[j] = _moments_from_arrays(nvals, re, im)

    if done > 0 and contrast > 0.0:
        delta_phi_bar = (-contrast * (sum_score / done)
                         / (1.0 - math.sqrt(max(1.0 - contrast**2, 0.0))))
        raw_phase_mean = sum_phase / done
    else:
        delta_phi_bar = 0.0
        raw_phase_mean = 0.0

    final_amplitudes = None
    if config.keep_final_state and not failed:
        amps = re + 1j * im
        final_amplitudes = amps / np.sqrt(np.sum(np.abs(amps) ** 2))

    return Trajectory(
        trajectory_index=trajectory_index,
        steps=steps,
        mean_jz=mean,
        var_jz=var,
        delta_phi_bar=delta_phi_bar,
        raw_phase_mean=raw_phase_mean,
        final_amplitudes=final_amplitudes,
        failed=failed,
        fail_step=fail_step,
    )


def run_ensemble(config: EnsembleConfig, workers: int | None = None) -> RunResult:
    """Run all trajectories and aggregate.

    Trajectories execute on a thread pool (the JIT kernel releases the
    GIL); aggregation is an indexed reduction in trajectory order, so
    the result does not depend on scheduling.  Failed trajectories are
    excluded from averages and counted.
    """
    if workers is None:
        workers = default_workers()
    indices = range(config.n_trajectories)
    if workers == 1 or config.n_trajectories == 1:
        trajectories = [run_trajectory(config, i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(lambda i: run_trajectory(config, i), indices))

    ok = [t for t in trajectories if not t.failed]
    failed_indices = tuple(t.trajectory_index for t in trajectories if t.failed)
    steps = config.log_steps()
    if ok:
        # np.mean over the trajectory axis uses pairwise summation
        var_stack = np.vstack([t.var_jz for t in ok])
        mean_stack = np.vstack([t.mean_jz for t in ok])
        mean_var = var_stack.mean(axis=0)
        mean_mean = mean_stack.mean(axis=0)
    else:
        mean_var = np.full(steps.shape, np.nan)
        mean_mean = np.full(steps.shape, np.nan)

    final_mean = np.full(config.n_trajectories, np.nan)
    for t in trajectories:
        if not t.failed:
            final_mean[t.trajectory_index] = t.mean_jz[-1]

    nvals = np.arange(config.n_atoms + 1) - config.n_atoms / 2.0
    counts = np.zeros(config.n_atoms + 1, dtype=np.int64)
    for value in final_mean[~np.isnan(final_mean)]:
        idx = int(np.clip(round(value + config.n_atoms / 2.0), 0, config.n_atoms))
        counts[idx] += 1

    provenance = {
        "package": "hetqnd",
        "version": __version__,
        "seed": config.seed,
        "n_atoms": config.n_atoms,
        "n_photons": config.n_photons,
        "n_trajectories": config.n_trajectories,
        "record_stride": config.record_stride,
        "t_coeff": config.params.t_coeff,
        "r_coeff": config.params.r_coeff,
        "phi": config.params.phi,
        "omega": config.params.omega,
    }
    return RunResult(
        config=config,
        steps=steps,
        mean_var_jz=mean_var,
        mean_mean_jz=mean_mean,
        final_mean_jz=final_mean,
        hist_n=nvals,
        hist_counts=counts,
        born_probability=np.exp(css_log_probs(config.n_atoms)),
        n_failed=len(failed_indices),
        failed_indices=failed_indices,
        provenance=provenance,
    )

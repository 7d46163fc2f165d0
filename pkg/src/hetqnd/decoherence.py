"""Spontaneous-emission budget for the squeezing measurement.

Off-resonant probing dephases the collective state: each scattered
photon projects one atom.  Given the hyperfine structure of the probed
line, this module computes dipole strengths S_FF' (via Wigner 6j
symbols), the dispersive couplings S_F and absorptive lineshape L over
the chosen detunings, the per-atom phase shift, the scattering
probability per atom, and the decoherence-limited squeezing factor with
its optimum.

Level energies are external reference data ingested from a species file
(see ``parse_species``); the packaged default is the Rb-87 D2 line.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .analytics import ValidityWarning

__all__ = [
    "HyperfineLevel",
    "AtomicSpecies",
    "ProbeGeometry",
    "SnrParams",
    "SqueezingBudget",
    "SpeciesFileError",
    "NoRootError",
    "wigner_6j",
    "line_strengths",
    "detunings",
    "coupling_and_lineshape",
    "balance_detunings",
    "phase_per_atom",
    "resonant_optical_density",
    "scattering_probability",
    "squeezing_with_decay",
    "optimize_eta",
    "snr",
    "optical_dephasing",
    "parse_species",
    "load_species",
    "rb87_d2",
]


class SpeciesFileError(ValueError):
    """Species data file is malformed; message carries line/field info."""


class NoRootError(ValueError):
    """No balanced probe frequency exists in the search window."""


# ---------------------------------------------------------------------------
# Wigner 6j symbol
# ---------------------------------------------------------------------------

def _is_half_integer(x: float) -> bool:
    return abs(2.0 * x - round(2.0 * x)) < 1e-9


def _triangle(a: float, b: float, c: float) -> bool:
    """Triangle rule with integer perimeter."""
    if abs((a + b + c) - round(a + b + c)) > 1e-9:
        return False
    return abs(a - b) <= c + 1e-9 and c <= a + b + 1e-9


def _log_fact(x: float) -> float:
    return math.lgamma(round(x) + 1.0)


def _log_triangle_coeff(a: float, b: float, c: float) -> float:
    return 0.5 * (_log_fact(a + b - c) + _log_fact(a - b + c)
                  + _log_fact(-a + b + c) - _log_fact(a + b + c + 1.0))


def wigner_6j(j1: float, j2: float, j3: float,
              j4: float, j5: float, j6: float) -> float:
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6} by the Racah sum.

    Arguments are nonnegative half-integers.  Symbols violating any of
    the four triangle conditions are zero by convention.  Factorials are
    taken in the log domain, which is exact to double precision for the
    small angular momenta of hyperfine problems.
    """
    js = (j1, j2, j3, j4, j5, j6)
    for j in js:
        if j < 0 or not _is_half_integer(j):
            raise ValueError(f"6j arguments must be nonnegative half-integers, got {js}")
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle(*t) for t in triads):
        return 0.0
    log_tri = sum(_log_triangle_coeff(*t) for t in triads)
    t1 = j1 + j2 + j3
    t2 = j1 + j5 + j6
    t3 = j4 + j2 + j6
    t4 = j4 + j5 + j3
    t5 = j1 + j2 + j4 + j5
    t6 = j2 + j3 + j5 + j6
    t7 = j3 + j1 + j6 + j4
    total = 0.0
    t_min = round(max(t1, t2, t3, t4))
    t_max = round(min(t5, t6, t7))
    for t in range(t_min, t_max + 1):
        log_term = (_log_fact(t + 1.0)
                    - _log_fact(t - t1) - _log_fact(t - t2)
                    - _log_fact(t - t3) - _log_fact(t - t4)
                    - _log_fact(t5 - t) - _log_fact(t6 - t)
                    - _log_fact(t7 - t))
        sign = -1.0 if t % 2 else 1.0
        total += sign * math.exp(log_term + log_tri)
    return total


# ---------------------------------------------------------------------------
# Species data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperfineLevel:
    f: float
    energy_hz: float


@dataclass(frozen=True)
class AtomicSpecies:
    """Hyperfine structure of the probed optical line.

    ``gamma`` is the HWHM decay rate in rad/s entering the Lorentzian
    dispersion/absorption factors.  Ground-level energies are offsets
    from the ground hyperfine centroid; excited-level energies are
    absolute optical frequencies (Hz) from the same origin, so the
    transition frequency F -> F' is their difference.
    """

    name: str
    nuclear_spin: float
    ground_j: float
    excited_j: float
    gamma: float
    wavelength: float
    ground_levels: tuple[HyperfineLevel, ...]
    excited_levels: tuple[HyperfineLevel, ...]

    def __post_init__(self):
        if self.gamma <= 0 or self.wavelength <= 0:
            raise ValueError("gamma and wavelength must be positive")
        for j, levels, label in ((self.ground_j, self.ground_levels, "ground"),
                                 (self.excited_j, self.excited_levels, "excited")):
            if not levels:
                raise ValueError(f"species needs at least one {label} level")
            for lev in levels:
                if not _triangle(self.nuclear_spin, j, lev.f):
                    raise ValueError(
                        f"{label} F={lev.f} violates |J-I| <= F <= J+I "
                        f"for I={self.nuclear_spin}, J={j}"
                    )

    def ground_level(self, f: float) -> HyperfineLevel:
        for lev in self.ground_levels:
            if abs(lev.f - f) < 1e-9:
                return lev
        raise ValueError(f"F={f} is not a ground level of {self.name}")

    def transition_frequency_hz(self, f: float, f_excited: float) -> float:
        g = self.ground_level(f)
        for lev in self.excited_levels:
            if abs(lev.f - f_excited) < 1e-9:
                return lev.energy_hz - g.energy_hz
        raise ValueError(f"F'={f_excited} is not an excited level of {self.name}")


@dataclass(frozen=True)
class ProbeGeometry:
    """Probe beam area, ensemble size, and population imbalance
    (N_1 = N_at (1 + epsilon)/2)."""

    beam_area: float
    n_atoms: float
    epsilon: float = 0.0

    def __post_init__(self):
        if self.beam_area <= 0:
            raise ValueError("beam_area must be positive")
        if abs(self.epsilon) > 1.0:
            raise ValueError("|epsilon| must be <= 1")


@dataclass(frozen=True)
class SnrParams:
    """Photon numbers entering the heterodyne detection SNR."""

    n_carrier: float
    n_sideband: float
    n_electronic: float = 0.0

    def __post_init__(self):
        if min(self.n_carrier, self.n_sideband, self.n_electronic) < 0:
            raise ValueError("photon numbers must be nonnegative")


@dataclass(frozen=True)
class SqueezingBudget:
    """Decoherence-limited squeezing summary."""

    rho0: float
    s_coupling: float
    lineshape: float
    mu: float
    eta: float
    xi_squared: float

    def __post_init__(self):
        if self.rho0 <= 0 or self.lineshape <= 0:
            raise ValueError("rho0 and lineshape must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Line strengths and dispersive couplings
# ---------------------------------------------------------------------------

def line_strengths(species: AtomicSpecies, f: float) -> dict[float, float]:
    """Dipole strengths S_FF' = (2F'+1)(2J+1) {J J' 1; F' F I}^2 from
    ground level F to every listed excited level.

    The strengths obey the hyperfine sum rule sum_F' S_FF' = 1.
    """
    species.ground_level(f)
    j, jp, i = species.ground_j, species.excited_j, species.nuclear_spin
    out = {}
    for lev in species.excited_levels:
        sixj = wigner_6j(j, jp, 1.0, lev.f, f, i)
        out[lev.f] = (2.0 * lev.f + 1.0) * (2.0 * j + 1.0) * sixj**2
    return out


def detunings(species: AtomicSpecies, probe_freq_hz: float) -> dict[tuple[float, float], float]:
    """Angular detunings Delta_FF' = omega_probe - omega_FF' (rad/s) of a
    probe at ``probe_freq_hz`` from every transition."""
    out = {}
    for g in species.ground_levels:
        for e in species.excited_levels:
            out[(g.f, e.f)] = 2.0 * np.pi * (probe_freq_hz - (e.energy_hz - g.energy_hz))
    return out


def coupling_and_lineshape(species: AtomicSpecies,
                           deltas: dict[tuple[float, float], float]):
    """Dispersive couplings S_F and absorptive lineshape L.

    S_F = sum_F' gamma Delta / (Delta^2 + gamma^2) S_FF' (odd in the
    detuning) and L = sum_{F,F'} gamma^2 / (Delta^2 + gamma^2) S_FF'.
    """
    gamma = species.gamma
    couplings = {}
    lineshape = 0.0
    for g in species.ground_levels:
        strengths = line_strengths(species, g.f)
        s_f = 0.0
        for e in species.excited_levels:
            delta = deltas[(g.f, e.f)]
            lorentz = 1.0 / (delta * delta + gamma * gamma)
            s_f += gamma * delta * lorentz * strengths[e.f]
            lineshape += gamma * gamma * lorentz * strengths[e.f]
        couplings[g.f] = s_f
    return couplings, lineshape


def _coupling_sum(species: AtomicSpecies, probe_freq_hz: float) -> float:
    couplings, _ = coupling_and_lineshape(species, detunings(species, probe_freq_hz))
    return sum(couplings.values())


def balance_detunings(species: AtomicSpecies,
                      window: tuple[float, float] | None = None) -> float:
    """Probe frequency (Hz) at which the two dispersive couplings cancel
    (S_1 = -S_2), found by bracketed bisection.

    The default window spans the gap between the two ground-state
    transition manifolds, inset by 1% on each side.  Raises
    :class:`NoRootError` when the coupling sum does not change sign over
    the window.
    """
    if len(species.ground_levels) != 2:
        raise ValueError("balancing requires exactly two ground levels")
    if window is None:
        lower_g, upper_g = sorted(species.ground_levels, key=lambda g: g.energy_hz)
        # transitions from the lower-energy ground level lie higher in frequency
        band_hi = [e.energy_hz - lower_g.energy_hz for e in species.excited_levels]
        band_lo = [e.energy_hz - upper_g.energy_hz for e in species.excited_levels]
        gap_lo, gap_hi = max(band_lo), min(band_hi)
        if gap_lo >= gap_hi:
            raise ValueError("transition manifolds overlap; pass an explicit window")
        pad = 0.01 * (gap_hi - gap_lo)
        window = (gap_lo + pad, gap_hi - pad)
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    g_lo = _coupling_sum(species, lo)
    g_hi = _coupling_sum(species, hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if np.sign(g_lo) == np.sign(g_hi):
        raise NoRootError(
            f"coupling sum does not change sign over [{lo:.6e}, {hi:.6e}] Hz"
        )
    # bisect to float convergence (well inside the 1e-12 relative target)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        g_mid = _coupling_sum(species, mid)
        if g_mid == 0.0:
            return mid
        if np.sign(g_mid) == np.sign(g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Budget quantities
# ---------------------------------------------------------------------------

def phase_per_atom(species: AtomicSpecies, geometry: ProbeGeometry,
                   s_coupling: float) -> float:
    """Optical phase shift from a one-atom population difference:
    phi = lambda^2 S / (2 pi A).  Carries the sign of S."""
    return species.wavelength**2 * s_coupling / (2.0 * np.pi * geometry.beam_area)


def resonant_optical_density(species: AtomicSpecies,
                             geometry: ProbeGeometry) -> float:
    """rho_0 = lambda^2 N_at / (4 pi A)."""
    return species.wavelength**2 * geometry.n_atoms / (4.0 * np.pi * geometry.beam_area)


def scattering_probability(rho0: float, n_atoms: float, contrast: float,
                           n_photons: float, lineshape: float) -> float:
    """Probability per atom of scattering a spontaneous photon over the
    probe sequence: eta = (rho0/N_at)(C^2 N_p / 2) L, valid for C << 1.

    Warns outside the small-contrast regime and clamps (with a warning)
    the unphysical eta > 1.
    """
    if contrast > 0.3:
        warnings.warn(
            f"scattering probability derived for C << 1; C = {contrast:.3g}",
            ValidityWarning,
            stacklevel=2,
        )
    eta = rho0 / n_atoms * contrast**2 * n_photons / 2.0 * lineshape
    if eta > 1.0:
        warnings.warn(
            f"eta = {eta:.3g} exceeds 1; clamped (formula outside validity)",
            ValidityWarning,
            stacklevel=2,
        )
        eta = 1.0
    return eta


def squeezing_with_decay(mu: float, rho0: float, eta: float) -> float:
    """Decoherence-limited squeezing factor
    xi^2 = (1-eta)^2 / (1 + mu rho0 eta) + 1 - (1-eta)^2."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if mu * rho0 < 0.0:
        raise ValueError("mu * rho0 must be nonnegative")
    keep = (1.0 - eta) ** 2
    return keep / (1.0 + mu * rho0 * eta) + 1.0 - keep


def optimize_eta(mu: float, rho0: float, tol: float = 1e-6) -> tuple[float, float]:
    """Scattering probability minimizing the squeezing factor.

    Golden-section search over eta in (0, 1) to ``tol``; xi^2(eta) is
    unimodal there for mu rho0 > 0.  Returns (eta_star, xi2_star).
    """
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 1e-12, 1.0 - 1e-12
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = squeezing_with_decay(mu, rho0, c)
    fd = squeezing_with_decay(mu, rho0, d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = squeezing_with_decay(mu, rho0, c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = squeezing_with_decay(mu, rho0, d)
    eta_star = 0.5 * (a + b)
    return eta_star, squeezing_with_decay(mu, rho0, eta_star)


def snr(params: SnrParams) -> float:
    """Heterodyne detection SNR, up to a common constant fixed to 1:
    sqrt(N_c N_s / (N_c + N_s + N_e))."""
    denom = params.n_carrier + params.n_sideband + params.n_electronic
    if denom <= 0.0:
        raise ValueError("at least one photon-number contribution must be positive")
    return math.sqrt(params.n_carrier * params.n_sideband / denom)


def optical_dephasing(species: AtomicSpecies, geometry: ProbeGeometry,
                      s1: float, s2: float) -> tuple[float, float]:
    """Probe dephasing from the two populated ground levels.

    Returns (general, balanced): the general form
    lambda^2/(4 pi A) (N_1 S_1 + N_2 S_2) and the balanced form
    rho0 S epsilon, which coincide when S_2 = -S_1.
    """
    n1 = geometry.n_atoms * (1.0 + geometry.epsilon) / 2.0
    n2 = geometry.n_atoms * (1.0 - geometry.epsilon) / 2.0
    general = species.wavelength**2 / (4.0 * np.pi * geometry.beam_area) * (n1 * s1 + n2 * s2)
    balanced = resonant_optical_density(species, geometry) * s1 * geometry.epsilon
    return general, balanced


# ---------------------------------------------------------------------------
# Species file parsing
# ---------------------------------------------------------------------------

_SCALAR_FIELDS = {
    "I": "nuclear_spin",
    "J_ground": "ground_j",
    "J_excited": "excited_j",
    "gamma_Hz": "gamma_hz",
    "lambda_m": "lambda_m",
}


def parse_species(text: str, source: str = "<string>") -> AtomicSpecies:
    """Parse the key-value species format.

    Schema (one ``key = value`` pair per line, ``#`` comments)::

        name = Rb87-D2
        I = 1.5                  # nuclear spin
        J_ground = 0.5
        J_excited = 1.5
        gamma_Hz = 6.0666e6      # natural linewidth (FWHM, Hz)
        lambda_m = 780.241209686e-9
        ground_level = 1 -4.271676631815181e9   # F  energy_Hz
        excited_level = 0 3.842301823947e14

    Ground energies are offsets from the ground hyperfine centroid;
    excited energies are absolute optical frequencies from the same
    origin.  gamma_Hz is converted to the HWHM angular rate pi*gamma_Hz
    used in the Lorentzian factors.  Parsing errors are fatal and carry
    line/field diagnostics.
    """
    scalars: dict[str, float] = {}
    name = None
    ground: list[HyperfineLevel] = []
    excited: list[HyperfineLevel] = []

    def fail(lineno, msg):
        raise SpeciesFileError(f"{source}:{lineno}: {msg}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            fail(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "name":
            name = value
        elif key in _SCALAR_FIELDS:
            try:
                scalars[key] = float(value)
            except ValueError:
                fail(lineno, f"field {key!r}: cannot parse {value!r} as a number")
        elif key in ("ground_level", "excited_level"):
            parts = value.split()
            if len(parts) != 2:
                fail(lineno, f"field {key!r}: expected 'F energy_Hz', got {value!r}")
            try:
                f_val, energy = float(parts[0]), float(parts[1])
            except ValueError:
                fail(lineno, f"field {key!r}: cannot parse {value!r}")
            (ground if key == "ground_level" else excited).append(
                HyperfineLevel(f=f_val, energy_hz=energy))
        else:
            fail(lineno, f"unknown field {key!r}")

    if name is None:
        raise SpeciesFileError(f"{source}: missing required field 'name'")
    for key in _SCALAR_FIELDS:
        if key not in scalars:
            raise SpeciesFileError(f"{source}: missing required field {key!r}")
    if not ground:
        raise SpeciesFileError(f"{source}: no ground_level entries")
    if not excited:
        raise SpeciesFileError(f"{source}: no excited_level entries")
    try:
        return AtomicSpecies(
            name=name,
            nuclear_spin=scalars["I"],
            ground_j=scalars["J_ground"],
            excited_j=scalars["J_excited"],
            gamma=np.pi * scalars["gamma_Hz"],
            wavelength=scalars["lambda_m"],
            ground_levels=tuple(sorted(ground, key=lambda l: l.f)),
            excited_levels=tuple(sorted(excited, key=lambda l: l.f)),
        )
    except ValueError as exc:
        raise SpeciesFileError(f"{source}: {exc}") from exc


def load_species(path) -> AtomicSpecies:
    """Read and parse a species data file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_species(fh.read(), source=str(path))


def rb87_d2() -> AtomicSpecies:
    """Packaged Rb-87 D2 reference data."""
    text = resources.files("hetqnd.data").joinpath("rb87_d2.species").read_text()
    return parse_species(text, source="hetqnd/data/rb87_d2.species")

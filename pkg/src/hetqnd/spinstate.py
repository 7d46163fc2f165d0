"""Collective atomic state in the J_z eigenbasis (Dicke basis).

The ensemble of N_at two-level atoms is described by amplitudes c_n over
the Dicke states |n>, n = -N_at/2 ... N_at/2 (half-integer n for odd
N_at).  All dynamics implemented in this package are diagonal in n, so a
state is just the complex amplitude vector together with the atom number.
Amplitudes are renormalized after every operation: only relative weights
carry physical meaning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "CollectiveState",
    "SpinMoments",
    "DegenerateKernelError",
    "css_init",
    "css_log_probs",
    "dicke_state",
    "moments",
    "apply_diagonal_kernel",
]

#: Norm below which a post-kernel state counts as numerically annihilated.
NORM_FLOOR = 1e-300


class DegenerateKernelError(ValueError):
    """Raised when a diagonal kernel annihilates the state numerically."""


@dataclass
class CollectiveState:
    """Amplitude vector over the Dicke basis of a fixed-size ensemble.

    ``amplitudes[k]`` holds c_n for n = k - n_atoms/2, so the vector has
    length ``n_atoms + 1``.
    """

    n_atoms: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.n_atoms + 1,):
            raise ValueError(
                f"amplitude vector must have length n_atoms + 1 = "
                f"{self.n_atoms + 1}, got shape {amps.shape}"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        self.amplitudes = amps

    @property
    def n_values(self) -> np.ndarray:
        """Grid of J_z eigenvalues n = k - n_atoms/2."""
        return np.arange(self.n_atoms + 1) - self.n_atoms / 2.0

    def probabilities(self) -> np.ndarray:
        """|c_n|^2, normalized."""
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def copy(self) -> "CollectiveState":
        return CollectiveState(self.n_atoms, self.amplitudes.copy())


@dataclass(frozen=True)
class SpinMoments:
    """First two moments of J_z, in units of hbar."""

    mean_jz: float
    var_jz: float

    def __post_init__(self):
        if self.var_jz < 0:
            raise ValueError(f"var_jz must be >= 0, got {self.var_jz}")


def css_log_probs(n_atoms: int) -> np.ndarray:
    """log |c_n(0)|^2 of the coherent spin state polarized along J_x.

    The CSS amplitudes form a binomial distribution over n; the log
    domain avoids factorial overflow for large ensembles.
    """
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    n = np.arange(n_atoms + 1) - n_atoms / 2.0
    # grouping the two gammaln terms keeps c_n = c_{-n} exact to the bit
    return (-n_atoms * np.log(2.0) + gammaln(n_atoms + 1)) - (
        gammaln(n_atoms / 2.0 + n + 1) + gammaln(n_atoms / 2.0 - n + 1)
    )


def css_init(n_atoms: int) -> CollectiveState:
    """Coherent spin state: c_n(0) = 2^(-N/2) sqrt(N!/((N/2+n)!(N/2-n)!))."""
    amps = np.exp(0.5 * css_log_probs(n_atoms)).astype(np.complex128)
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2))
    return CollectiveState(n_atoms, amps)


def dicke_state(n_atoms: int, n: float) -> CollectiveState:
    """Pure J_z eigenstate |n>."""
    k = n + n_atoms / 2.0
    idx = int(round(k))
    if abs(k - idx) > 1e-9 or not 0 <= idx <= n_atoms:
        raise ValueError(f"n = {n} is not a J_z eigenvalue for {n_atoms} atoms")
    amps = np.zeros(n_atoms + 1, dtype=np.complex128)
    amps[idx] = 1.0
    return CollectiveState(n_atoms, amps)


def moments(state: CollectiveState) -> SpinMoments:
    """<J_z> and Var(J_z) of a normalized state."""
    p = state.probabilities()
    n = state.n_values
    mean = float(np.dot(n, p))
    var = float(np.dot((n - mean) ** 2, p))
    return SpinMoments(mean_jz=mean, var_jz=max(var, 0.0))


def apply_diagonal_kernel(state: CollectiveState, kernel) -> CollectiveState:
    """Multiply amplitudes by a diagonal kernel and renormalize.

    ``kernel`` is either a callable evaluated on the n grid or a
    precomputed array of complex values.  Raises
    :class:`DegenerateKernelError` when the kernel annihilates the state
    (post-kernel norm below ``NORM_FLOOR``).
    """
    if callable(kernel):
        values = np.asarray(kernel(state.n_values), dtype=np.complex128)
    else:
        values = np.asarray(kernel, dtype=np.complex128)
    values = np.broadcast_to(values, state.amplitudes.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("kernel values must be finite on the n grid")
    amps = state.amplitudes * values
    nrm2 = np.sum(np.abs(amps) ** 2)
    if not nrm2 > NORM_FLOOR**2:
        raise DegenerateKernelError(
            f"kernel annihilated the state (norm {np.sqrt(nrm2):.3e})"
        )
    return CollectiveState(state.n_atoms, amps / np.sqrt(nrm2))

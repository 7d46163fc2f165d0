"""Hypothesis strategies shared across the test modules."""

import numpy as np
from hypothesis import strategies as st

from hetqnd.measurement import InterferometerParams
from hetqnd.spinstate import CollectiveState

atom_counts = st.integers(min_value=1, max_value=64)


@st.composite
def collective_states(draw, max_atoms=64):
    """Random normalized states with nontrivial support."""
    n_atoms = draw(st.integers(min_value=1, max_value=max_atoms))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=n_atoms + 1) + 1j * rng.normal(size=n_atoms + 1)
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2))
    return CollectiveState(n_atoms, amps)


@st.composite
def interferometer_params(draw, max_phi=0.2):
    r = draw(st.floats(min_value=0.0, max_value=1.0))
    phi = draw(st.floats(min_value=0.0, max_value=max_phi))
    return InterferometerParams(t_coeff=1.0 - r, r_coeff=r, phi=phi)


half_integers = st.integers(min_value=0, max_value=12).map(lambda k: k / 2.0)

"""hetqnd: quantum trajectories of a heterodyne QND spin measurement.

Photon-by-photon simulation of the conditional collapse of a collective
atomic spin probed by frequency-modulated light, with the weak-coupling
analytics, the spontaneous-emission squeezing budget, and Monte-Carlo
ensemble statistics.
"""

__version__ = "0.1.0"

from .spinstate import (
    CollectiveState,
    SpinMoments,
    DegenerateKernelError,
    css_init,
    css_log_probs,
    dicke_state,
    moments,
    apply_diagonal_kernel,
)
from .measurement import (
    InterferometerParams,
    DetectionEvent,
    modulator_split,
    phase_pdf,
    phase_cdf,
    sample_phase,
    sample_phases,
    apply_detection,
    backaction_weight,
)
from .analytics import (
    ValidityWarning,
    SingularBinError,
    WeakCouplingTheory,
    measurement_strength,
    short_time_moments,
    gaussian_backaction,
    gaussian_posterior_log_probs,
    long_time_bounds,
    subprocess_quantities,
    integrated_subprocess_strength,
    subprocess_validity,
    delta_phi_bar_from_phases,
    delta_phi_bar_from_mean_jz,
    kl_divergence,
)
from .decoherence import (
    AtomicSpecies,
    HyperfineLevel,
    ProbeGeometry,
    SnrParams,
    SqueezingBudget,
    SpeciesFileError,
    NoRootError,
    wigner_6j,
    line_strengths,
    detunings,
    coupling_and_lineshape,
    balance_detunings,
    phase_per_atom,
    resonant_optical_density,
    scattering_probability,
    squeezing_with_decay,
    optimize_eta,
    snr,
    optical_dephasing,
    parse_species,
    load_species,
    rb87_d2,
)
from .ensemble import (
    EnsembleConfig,
    Trajectory,
    RunResult,
    run_trajectory,
    run_ensemble,
)

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import integrate, stats

from hetqnd.measurement import (
    DetectionEvent,
    InterferometerParams,
    apply_detection,
    backaction_weight,
    modulator_split,
    phase_cdf,
    phase_pdf,
    sample_phase,
    sample_phases,
)
from hetqnd.spinstate import (
    DegenerateKernelError,
    css_init,
    dicke_state,
    moments,
)

from strategies import collective_states, interferometer_params

BALANCED = InterferometerParams(0.5, 0.5, 1e-3)


class TestInterferometerParams:
    def test_unbalanced_split_rejected(self):
        with pytest.raises(ValueError):
            InterferometerParams(0.6, 0.5, 1e-3)

    def test_negative_phi_rejected(self):
        with pytest.raises(ValueError):
            InterferometerParams(0.5, 0.5, -1e-3)

    def test_contrast(self):
        assert BALANCED.contrast == 1.0
        assert InterferometerParams(1.0, 0.0, 0.0).contrast == 0.0
        p = InterferometerParams.from_reflectivity(0.1, 2e-3)
        assert p.contrast == pytest.approx(2.0 * np.sqrt(0.09), rel=1e-12)

    def test_event_range(self):
        DetectionEvent(-np.pi)
        with pytest.raises(ValueError):
            DetectionEvent(np.pi)


class TestModulatorSplit:
    def test_no_drive(self):
        assert modulator_split(0.0) == (1.0, 0.0)

    def test_unit_drive_balances(self):
        with pytest.warns(UserWarning, match="weak-drive"):
            t, r = modulator_split(1.0)
        assert (t, r) == (0.5, 0.5)

    def test_one_percent_depth(self):
        t, r = modulator_split(np.sqrt(0.01))
        assert r == pytest.approx(0.01 / 1.01, rel=1e-12)
        assert t + r == pytest.approx(1.0, rel=1e-15)
        contrast = 2.0 * np.sqrt(t * r)
        assert contrast == pytest.approx(0.2 / 1.01, rel=1e-12)

    def test_complex_amplitude(self):
        t, r = modulator_split(0.1j)
        assert r == pytest.approx(0.01 / 1.01, rel=1e-12)


class TestPhasePdf:
    def test_dicke_center_full_contrast(self):
        state = dicke_state(6, 0)
        phases = np.linspace(-np.pi, np.pi, 21)
        np.testing.assert_allclose(phase_pdf(state, BALANCED, phases),
                                   (1.0 + np.cos(phases)) / (2.0 * np.pi),
                                   rtol=1e-12, atol=1e-15)
        assert phase_pdf(state, BALANCED, 0.0) == pytest.approx(1.0 / np.pi)

    def test_zero_contrast_uniform(self):
        params = InterferometerParams(1.0, 0.0, 1e-3)
        state = css_init(20)
        assert phase_pdf(state, params, 0.3) == pytest.approx(1.0 / (2.0 * np.pi))

    def test_css_brute_force(self):
        # oracle: the 201-term sum evaluated directly
        state = css_init(200)
        p = state.probabilities()
        n = state.n_values
        for phase in (-2.0, 0.0, 0.7):
            direct = np.sum(p * (1.0 + np.cos(1e-3 * n - phase))) / (2.0 * np.pi)
            assert phase_pdf(state, BALANCED, phase) == pytest.approx(direct, rel=1e-12)

    @given(collective_states(max_atoms=24), interferometer_params())
    @settings(max_examples=30, deadline=None)
    def test_nonnegative_and_normalized(self, state, params):
        phases = np.linspace(-np.pi, np.pi, 101)
        assert np.all(phase_pdf(state, params, phases) >= 0.0)
        total, _ = integrate.quad(lambda x: phase_pdf(state, params, x),
                                  -np.pi, np.pi, limit=200)
        assert total == pytest.approx(1.0, abs=1e-9)


class TestPhaseCdf:
    def test_endpoints(self):
        state = css_init(30)
        assert abs(phase_cdf(state, BALANCED, -np.pi)) < 1e-12
        assert abs(phase_cdf(state, BALANCED, np.pi) - 1.0) < 1e-12

    def test_zero_contrast_linear(self):
        params = InterferometerParams(1.0, 0.0, 0.0)
        state = css_init(10)
        for phase in (-np.pi, -1.0, 0.0, 2.0):
            assert phase_cdf(state, params, phase) == pytest.approx(
                (phase + np.pi) / (2.0 * np.pi), abs=1e-14)

    def test_against_quadrature_oracle(self):
        state = apply_detection(css_init(40), BALANCED, DetectionEvent(0.4))
        params = InterferometerParams(0.7, 0.3, 5e-2)
        for phase in (-2.5, -0.3, 0.0, 1.1, 3.0):
            quad, _ = integrate.quad(lambda x: phase_pdf(state, params, x),
                                     -np.pi, phase, limit=200)
            assert phase_cdf(state, params, phase) == pytest.approx(quad, abs=1e-10)

    @given(collective_states(max_atoms=32), interferometer_params())
    @settings(max_examples=50, deadline=None)
    def test_monotone(self, state, params):
        rng = np.random.default_rng(0)
        lo, hi = np.sort(rng.uniform(-np.pi, np.pi, size=(2, 16)), axis=0)
        assert np.all(phase_cdf(state, params, lo) <= phase_cdf(state, params, hi) + 1e-15)


class TestSamplePhase:
    def test_lower_endpoint(self):
        assert sample_phase(css_init(8), BALANCED, 0.0).phase == pytest.approx(
            -np.pi, abs=1e-9)

    def test_uniform_inverse(self):
        params = InterferometerParams(1.0, 0.0, 1e-3)
        assert sample_phase(css_init(8), params, 0.75).phase == pytest.approx(
            np.pi / 2.0, abs=1e-9)

    def test_dicke_symmetry(self):
        assert sample_phase(dicke_state(6, 0), BALANCED, 0.5).phase == pytest.approx(
            0.0, abs=1e-9)

    def test_roundtrip_through_cdf(self):
        state = apply_detection(css_init(24), BALANCED, DetectionEvent(-1.0))
        u = np.linspace(0.01, 0.99, 23)
        phases = sample_phases(state, BALANCED, u)
        np.testing.assert_allclose(phase_cdf(state, BALANCED, phases), u, atol=1e-9)

    def test_batch_matches_scalar(self):
        state = css_init(16)
        u = np.array([0.0, 0.2, 0.5, 0.9, 0.999])
        batch = sample_phases(state, BALANCED, u)
        singles = [sample_phase(state, BALANCED, x).phase for x in u]
        np.testing.assert_allclose(batch, singles, atol=1e-12)

    def test_rejects_bad_uniform(self):
        with pytest.raises(ValueError):
            sample_phase(css_init(4), BALANCED, 1.0)

    def test_kolmogorov_smirnov(self):
        state = apply_detection(css_init(32), BALANCED, DetectionEvent(0.2))
        rng = np.random.default_rng(777)
        samples = sample_phases(state, BALANCED, rng.random(100_000))
        res = stats.kstest(samples, lambda x: phase_cdf(state, BALANCED, x))
        assert res.pvalue >= 1e-3


class TestApplyDetection:
    def test_dark_fringe_suppresses_amplitude(self):
        # full-contrast fringe zero at n = 1: that amplitude is wiped out
        # relative to its neighbors (cos never rounds to exactly zero)
        state = css_init(4)
        phase = 1e-3 * 1.0 - np.pi  # phi*n - phase = pi at n = 1
        out = apply_detection(state, BALANCED, DetectionEvent(phase))
        probs = out.probabilities()
        idx = int(1 + 4 / 2)
        assert probs[idx] < 1e-25
        assert probs[idx - 1] > 1e-3

    def test_no_contrast_no_backaction(self):
        params = InterferometerParams(1.0, 0.0, 1e-3)
        state = apply_detection(css_init(12), params, DetectionEvent(0.9))
        np.testing.assert_allclose(np.abs(state.amplitudes),
                                   np.abs(css_init(12).amplitudes), rtol=1e-14)

    def test_posterior_brute_force(self):
        # oracle: binomial weights times the fringe factor, direct sums
        state = css_init(200)
        out = apply_detection(state, BALANCED, DetectionEvent(0.0))
        n = state.n_values
        weights = state.probabilities() * (1.0 + np.cos(1e-3 * n))
        weights /= weights.sum()
        np.testing.assert_allclose(out.probabilities(), weights, rtol=1e-12,
                                   atol=1e-300)
        mean = np.dot(n, weights)
        m = moments(out)
        assert m.mean_jz == pytest.approx(mean, abs=1e-12)

    def test_asymmetric_splitter_complex_kernel(self):
        params = InterferometerParams(0.8, 0.2, 0.1)
        out = apply_detection(css_init(6), params, DetectionEvent(0.3))
        assert np.any(np.abs(out.amplitudes.imag) > 1e-6)
        fringe = 1.0 + params.contrast * np.cos(0.1 * out.n_values - 0.3)
        expected = css_init(6).probabilities() * fringe
        np.testing.assert_allclose(out.probabilities(), expected / expected.sum(),
                                   rtol=1e-12)


class TestBackactionWeight:
    def test_empty_product(self):
        out = backaction_weight(BALANCED, [], np.arange(-3.0, 4.0))
        np.testing.assert_array_equal(out, 0.0)

    def test_single_phase(self):
        params = InterferometerParams(0.7, 0.3, 2e-3)
        n = np.arange(-5.0, 6.0)
        expected = np.log1p(params.contrast * np.cos(params.phi * n - 0.4))
        np.testing.assert_allclose(backaction_weight(params, [0.4], n),
                                   expected, atol=1e-12)

    def test_scalar_n(self):
        out = backaction_weight(BALANCED, [0.1, -0.2], 3.0)
        assert isinstance(out, float)

    @pytest.mark.parametrize("params", [BALANCED, InterferometerParams(0.75, 0.25, 2e-3)])
    def test_matches_sequential_application(self, params):
        rng = np.random.default_rng(42)
        phases = rng.uniform(-np.pi, np.pi, size=100)
        state = css_init(200)
        for ph in phases:
            state = apply_detection(state, params, DetectionEvent(ph))
        log_w = backaction_weight(params, phases, state.n_values)
        mag = np.abs(css_init(200).amplitudes) * np.exp(0.5 * (log_w - log_w.max()))
        mag /= np.sqrt(np.sum(mag**2))
        mask = mag > 1e-200
        rel = np.abs(np.abs(state.amplitudes)[mask] - mag[mask]) / mag[mask]
        assert rel.max() < 1e-9


def test_martingale_mean_jz():
    """Averaged over outcomes, one detection does not move <J_z>."""
    state = apply_detection(css_init(64), BALANCED, DetectionEvent(0.8))
    prior = moments(state).mean_jz
    rng = np.random.default_rng(2024)
    n_samples = 20_000
    phases = sample_phases(state, BALANCED, rng.random(n_samples))
    n = state.n_values
    p = state.probabilities()
    fringe = 1.0 + np.cos(1e-3 * n[None, :] - phases[:, None])
    post = p[None, :] * fringe
    post_means = post @ n / post.sum(axis=1)
    se = post_means.std(ddof=1) / np.sqrt(n_samples)
    assert abs(post_means.mean() - prior) < 3.0 * se

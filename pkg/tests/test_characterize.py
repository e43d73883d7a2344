"""Quiet-window protocol estimators: frozen oracles and closed loops."""

import math
import warnings

import numpy as np
import pytest

from nfadsim.calibration import make_detector
from nfadsim.characterize import (CharacterizationCounts, JitterHistogram,
                                  ProtocolConfig, afterpulse_total,
                                  characterize_point, dark_rate_estimate,
                                  efficiency_estimate, figure_of_merit,
                                  histogram_density, measure_jitter_histogram,
                                  run_protocol, tcspc_widths)
from nfadsim.detector import total_afterpulses
from nfadsim.engine import RandomStream
from nfadsim.errors import (EstimatorDomainError, NoSignalError,
                            OpenSupportError, ParameterError,
                            ProtocolStarvationError)
from nfadsim.params import DarkRateModel, celsius_to_kelvin


def _counts(c_d=9516, c_lp=100_000, r_dc=50.0, f=50e6, mu=0.91,
            histogram=None, deadtime=20e-6, dark_counts=2500,
            dark_live_time=50.0):
    if histogram is None:
        histogram = np.zeros(7500, dtype=np.int64)
    return CharacterizationCounts(
        c_d=c_d, c_lp=c_lp, r_dc=r_dc, histogram=np.asarray(histogram),
        f=f, mu=mu, deadtime=deadtime, live_time=dark_live_time,
        dark_counts=dark_counts, dark_live_time=dark_live_time)


class TestProtocolConfig:
    def test_defaults_are_valid(self):
        cfg = ProtocolConfig()
        assert cfg.bin_width == pytest.approx(20e-9)

    def test_validation(self):
        with pytest.raises(ParameterError):
            ProtocolConfig(fpga_clock=0.0)
        with pytest.raises(ParameterError):
            ProtocolConfig(pulses_requested=0)
        with pytest.raises(ParameterError):
            ProtocolConfig(cycle_timeout=50e-6)  # below the quiet window

    def test_quiet_window_policy_warning(self):
        with pytest.warns(UserWarning):
            ProtocolConfig(quiet_window=50e-6)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ProtocolConfig(quiet_window=75e-6)
            ProtocolConfig(quiet_window=150e-6)


class TestCountsContainer:
    def test_click_fraction_bounds(self):
        with pytest.raises(ParameterError):
            _counts(c_d=101, c_lp=100)
        with pytest.raises(ParameterError):
            _counts(c_d=100, c_lp=100)

    def test_dark_rate_below_clock(self):
        with pytest.raises(ParameterError):
            _counts(r_dc=60e6, f=50e6)

    def test_structural_bins_cover_the_holdoff(self):
        counts = _counts(deadtime=20e-6, f=50e6)
        assert counts.structural_bins == 1000
        assert _counts(deadtime=1e-6, f=1e6).structural_bins == 1

    def test_r_dc_error_is_poisson(self):
        counts = _counts(dark_counts=2500, dark_live_time=50.0)
        assert counts.r_dc_error == pytest.approx(1.0)


class TestEfficiencyEstimator:
    def test_frozen_oracle(self):
        # Hand-computed from eta = ln((1-r_dc/f)/(1-C_d/C_lp))/mu with
        # binomial + Poisson errors through the delta method.
        est = efficiency_estimate(_counts())
        assert est.value == pytest.approx(0.10988587526593656, rel=1e-12)
        assert est.error == pytest.approx(0.0011269377547741687, rel=1e-12)

    def test_dark_free_value(self):
        counts = _counts(c_d=9940, c_lp=100_000, r_dc=0.0, dark_counts=0)
        assert efficiency_estimate(counts).value == pytest.approx(0.11505,
                                                                  abs=2e-5)

    def test_dark_corrected_value(self):
        counts = _counts(c_d=10_000, c_lp=100_000, r_dc=100.0)
        assert efficiency_estimate(counts).value == pytest.approx(0.11578,
                                                                  abs=2e-5)

    def test_strictly_increasing_in_click_fraction(self):
        values = [efficiency_estimate(_counts(c_d=c)).value
                  for c in range(5_000, 30_000, 2_500)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_strictly_decreasing_in_dark_rate(self):
        values = [efficiency_estimate(_counts(r_dc=r)).value
                  for r in (0.0, 10.0, 100.0, 1000.0, 10000.0)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_domain_errors(self):
        with pytest.raises(EstimatorDomainError):
            efficiency_estimate(_counts(c_d=0, c_lp=0))
        # Clicks below the dark expectation imply negative efficiency.
        with pytest.raises(EstimatorDomainError):
            efficiency_estimate(_counts(c_d=1, c_lp=100_000, r_dc=25e6))


class TestAfterpulseEstimator:
    def test_frozen_single_live_bin_oracle(self):
        hist = np.array([0, 22], dtype=np.int64)
        counts = _counts(c_d=1000, c_lp=10_000, r_dc=1.0, f=1e6,
                         histogram=hist, deadtime=1e-6, dark_counts=1,
                         dark_live_time=1.0)
        est = afterpulse_total(counts)
        assert est.value == pytest.approx(0.021998999999999998, rel=1e-12)
        assert est.error == pytest.approx(0.004690415866423787, rel=1e-12)

    def test_requires_detections(self):
        with pytest.raises(NoSignalError):
            afterpulse_total(_counts(c_d=0, c_lp=100))

    def test_requires_live_bins(self):
        hist = np.zeros(2, dtype=np.int64)
        counts = _counts(histogram=hist, deadtime=40e-6, f=50e3)
        with pytest.raises(ParameterError):
            afterpulse_total(counts)


class TestHistogramDensity:
    def test_sums_to_raw_conditional_probability(self):
        det = make_detector(-110.0, 0.115, 20e-6)
        counts = run_protocol(det, ProtocolConfig(pulses_requested=100_000),
                              RandomStream(55))
        density = histogram_density(counts)
        total = float(density.sum()) * counts.bin_width * 1e9
        pap = afterpulse_total(counts)
        n_live = len(counts.histogram) - counts.structural_bins
        baseline = counts.r_dc * counts.bin_width * n_live
        assert total == pytest.approx(pap.value + baseline, abs=1e-12)

    def test_structural_bins_stay_empty(self):
        det = make_detector(-110.0, 0.115, 20e-6)
        counts = run_protocol(det, ProtocolConfig(pulses_requested=50_000),
                              RandomStream(56))
        assert counts.structural_bins == 1000
        assert int(counts.histogram[:counts.structural_bins].sum()) == 0

    def test_requires_detections(self):
        with pytest.raises(NoSignalError):
            histogram_density(_counts(c_d=0, c_lp=100))


class TestProtocolClosedLoop:
    def test_efficiency_recovered_within_three_errors(self):
        # Operating point safely inside the estimator's stated envelope:
        # analytic afterpulse total about 1.9%, dark rate about 41 cps.
        det = make_detector(-90.0, 0.16, 20e-6)
        assert total_afterpulses(det) < 0.10
        assert det.dark_model.rate(det.temperature, det.efficiency) < 1e4
        counts = run_protocol(det, ProtocolConfig(), RandomStream(77))
        est = efficiency_estimate(counts)
        assert abs(est.value - 0.16) <= 3.0 * est.error

    def test_quiet_window_choice_does_not_move_the_estimate(self):
        det = make_detector(-110.0, 0.115, 20e-6)
        estimates = []
        for window in (75e-6, 150e-6):
            cfg = ProtocolConfig(quiet_window=window,
                                 pulses_requested=200_000)
            counts = run_protocol(det, cfg, RandomStream(60))
            estimates.append(efficiency_estimate(counts))
        (a, b) = estimates
        combined = math.hypot(a.error, b.error)
        assert abs(a.value - b.value) < combined

    def test_afterpulse_estimate_matches_cascade_oracle(self):
        # Warm + short-lifetime point: every release chain is resolved well
        # within one histogram span and the quiet window, so an isolated
        # cascade Monte Carlo is a faithful oracle for the protocol output.
        det = make_detector(-50.0, 0.115, 5e-6)
        counts = run_protocol(det, ProtocolConfig(pulses_requested=300_000),
                              RandomStream(88))
        est = afterpulse_total(counts)
        oracle = _cascade_oracle(det, span=150e-6, n_trials=10_000_000,
                                 seed=123456)
        assert abs(est.value - oracle) <= 3.0 * est.error

    def test_characterize_point_bundles_consistently(self):
        det = make_detector(-110.0, 0.115, 20e-6)
        result = characterize_point(det, ProtocolConfig(
            pulses_requested=100_000), RandomStream(61))
        assert abs(result.efficiency.value - 0.115) < 4 * result.efficiency.error
        assert result.efficiency_systematic == pytest.approx(
            result.efficiency.value * 0.029)
        assert result.dark_rate.value >= 0.0
        assert len(result.histogram_density) == 7500


def _cascade_oracle(det, span, n_trials, seed):
    """Expected afterpulse clicks per detection from the trap model alone.

    Generation-by-generation vectorized cascade: each click fills
    Poisson(lambda) traps, a release clicks when it outlives the parent's
    hold-off and lands inside the span.  Blocking between cascade siblings
    is ignored (second order here, far below the comparison's resolution).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    trap = det.trap_model
    lam = trap.mean_traps(det.efficiency)
    weights = trap.weights()
    taus = trap.lifetimes_at(det.temperature)
    parents = np.zeros(n_trials)
    clicks = 0
    while len(parents):
        k = rng.poisson(lam, len(parents))
        t_parent = np.repeat(parents, k)
        comp = rng.choice(len(weights), size=len(t_parent), p=weights)
        delay = rng.exponential(taus[comp])
        t_release = t_parent + delay
        alive = (delay >= det.deadtime) & (t_release < span)
        clicks += int(np.count_nonzero(alive))
        parents = t_release[alive]
    return clicks / n_trials


class TestProtocolValidation:
    def test_span_must_cover_deadtime(self):
        det = make_detector(-90.0, 0.115, 200e-6)
        with pytest.raises(ParameterError):
            run_protocol(det, ProtocolConfig(), RandomStream(1))

    def test_deadtime_below_clock_bin_rejected(self):
        det = make_detector(-90.0, 0.115, 10e-9)
        with pytest.raises(ParameterError):
            run_protocol(det, ProtocolConfig(), RandomStream(1))

    def test_noisy_detector_starves_the_quiet_window(self):
        loud = DarkRateModel(amplitude_thermal=0.0, activation_temperature=0.0,
                             floor=2e5, efficiency_exponent=0.0,
                             efficiency_ref=0.115)
        det = make_detector(-90.0, 0.115, 20e-6, dark_model=loud)
        with pytest.raises(ProtocolStarvationError):
            run_protocol(det, ProtocolConfig(pulses_requested=10),
                         RandomStream(2))


class TestJitterWidths:
    def test_widths_track_the_analytic_mixture(self):
        det = make_detector(-110.0, 0.16, 20e-6)
        hist = measure_jitter_histogram(det, 1_000_000, RandomStream(7))
        assert hist.normalization == 1_000_000
        jm = det.jitter_model
        for level in (0.5, 0.01):
            measured = tcspc_widths(hist, level)
            assert measured == pytest.approx(
                jm.predicted_width(0.16, level), rel=0.05)

    def test_too_few_draws_rejected(self):
        det = make_detector(-110.0, 0.16, 20e-6)
        hist = measure_jitter_histogram(det, 1_000, RandomStream(8))
        with pytest.raises(NoSignalError):
            tcspc_widths(hist, 0.5)

    def test_open_support_detected(self):
        hist = JitterHistogram(bin_width=2e-12,
                               counts=np.array([1000, 900], dtype=np.int64))
        with pytest.raises(OpenSupportError):
            tcspc_widths(hist, 0.5)

    def test_level_domain(self):
        hist = JitterHistogram(bin_width=2e-12,
                               counts=np.array([10, 1000, 10],
                                               dtype=np.int64))
        with pytest.raises(ParameterError):
            tcspc_widths(hist, 0.0)
        with pytest.raises(ParameterError):
            tcspc_widths(hist, 1.0)


class TestFigureOfMerit:
    def test_value(self):
        assert figure_of_merit(0.10, 1.0, 1e-9) == pytest.approx(1e8)
        assert figure_of_merit(0.115, 1.19, 160e-12) == pytest.approx(
            6.04e8, rel=0.01)

    def test_requires_positive_inputs(self):
        with pytest.raises(ParameterError):
            figure_of_merit(0.17, 0.0, 150e-12)
        with pytest.raises(ParameterError):
            figure_of_merit(0.17, 3.0, 0.0)

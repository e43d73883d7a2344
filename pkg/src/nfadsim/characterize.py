"""Free-running detector test procedure and its estimators.

The protocol emulates the FPGA cycle used to characterize a free-running
detector: wait for a quiet window so trap populations decay, fire one faint
laser pulse, score a click in the synchronized clock bin, and (conditioned on
a detection) histogram every later click for a fixed span.  Efficiency, dark
rate and total afterpulse probability are then recovered by closed-form
estimators with first-order error propagation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .detector import _kernel_args
from .engine import RandomStream, seconds_to_ps
from .errors import (EstimatorDomainError, NoSignalError, OpenSupportError,
                     ParameterError, ProtocolStarvationError)
from .params import DetectorParams


class Estimate(NamedTuple):
    """A value with its one-sigma statistical error."""
    value: float
    error: float


@dataclass(frozen=True)
class ProtocolConfig:
    quiet_window: float = 100e-6
    fpga_clock: float = 50e6
    histogram_span: float = 150e-6
    pulses_requested: int = 1_000_000
    laser_mu: float = 0.91
    # Sim-time budget for reaching one quiet window; beyond it the detector
    # is declared too noisy for the protocol.
    cycle_timeout: float = 0.05
    # Calibration-source systematic, kept apart from statistical errors.
    mu_systematic: float = 0.029

    def __post_init__(self):
        if self.fpga_clock <= 0.0:
            raise ParameterError("fpga_clock must be > 0")
        if self.quiet_window <= 0.0:
            raise ParameterError("quiet_window must be > 0")
        if not 75e-6 <= self.quiet_window <= 150e-6:
            warnings.warn("quiet_window outside the usual 75-150 us policy "
                          "range", stacklevel=2)
        if self.histogram_span <= 0.0:
            raise ParameterError("histogram_span must be > 0")
        if self.pulses_requested < 1:
            raise ParameterError("pulses_requested must be >= 1")
        if self.laser_mu <= 0.0:
            raise ParameterError("laser_mu must be > 0")
        if self.cycle_timeout <= self.quiet_window:
            raise ParameterError("cycle_timeout must exceed quiet_window")
        if not 0.0 <= self.mu_systematic < 1.0:
            raise ParameterError("mu_systematic must be in [0, 1)")

    @property
    def bin_width(self) -> float:
        return 1.0 / self.fpga_clock


@dataclass(frozen=True)
class CharacterizationCounts:
    """Raw tallies of one protocol run plus the laser-disabled dark pass."""

    c_d: int
    c_lp: int
    r_dc: float
    histogram: np.ndarray
    f: float
    mu: float
    deadtime: float            # identifies the structural-zero bins
    live_time: float
    dark_counts: int
    dark_live_time: float

    def __post_init__(self):
        if self.c_d < 0 or self.c_lp < 0 or self.dark_counts < 0:
            raise ParameterError("counts must be >= 0")
        if self.c_d > self.c_lp:
            raise ParameterError("c_d cannot exceed c_lp")
        if self.c_lp > 0 and self.c_d == self.c_lp:
            raise ParameterError("c_d/c_lp must stay below 1")
        if np.any(self.histogram < 0):
            raise ParameterError("histogram counts must be >= 0")
        if self.r_dc < 0.0 or self.r_dc >= self.f:
            raise ParameterError("r_dc must be in [0, f)")

    @property
    def bin_width(self) -> float:
        return 1.0 / self.f

    @property
    def structural_bins(self) -> int:
        # Bins fully inside the hold-off window can never hold a count.
        return int(seconds_to_ps(self.deadtime)
                   // seconds_to_ps(self.bin_width))

    @property
    def r_dc_error(self) -> float:
        if self.dark_live_time <= 0.0:
            return 0.0
        return math.sqrt(self.dark_counts) / self.dark_live_time


@dataclass(frozen=True)
class JitterHistogram:
    bin_width: float
    counts: np.ndarray
    normalization: int = field(default=0)

    def __post_init__(self):
        if self.bin_width <= 0.0:
            raise ParameterError("bin_width must be > 0")
        counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ParameterError("histogram counts must be >= 0")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "normalization", int(counts.sum()))


@dataclass(frozen=True)
class CharacterizationResult:
    efficiency: Estimate
    dark_rate: Estimate
    afterpulse_total: Estimate
    histogram_density: np.ndarray   # per-nanosecond probability density
    efficiency_systematic: float    # multiplicative band from the source mu

    def __post_init__(self):
        if not 0.0 <= self.efficiency.value <= 1.0:
            raise ParameterError("efficiency estimate outside [0, 1]")
        for est in (self.efficiency, self.dark_rate, self.afterpulse_total):
            if est.error < 0.0:
                raise ParameterError("standard errors must be >= 0")
        if self.afterpulse_total.value < -self.afterpulse_total.error:
            raise ParameterError("afterpulse estimate negative beyond its "
                                 "standard error")


def run_protocol(detector: DetectorParams, cfg: ProtocolConfig,
                 seed) -> CharacterizationCounts:
    """Run the quiet-window protocol; dark rate from an equal-time dark pass.

    The laser pass and the laser-disabled pass use independent child random
    streams of the given seed, so togging one never perturbs the other.
    """
    bin_ps = seconds_to_ps(cfg.bin_width)
    deadtime_ps = seconds_to_ps(detector.deadtime)
    if seconds_to_ps(cfg.histogram_span) < deadtime_ps:
        raise ParameterError("histogram_span must cover the deadtime")
    if deadtime_ps < bin_ps:
        raise ParameterError("deadtime below one clock bin is outside the "
                             "protocol's operating regime")
    stream = seed if isinstance(seed, RandomStream) else RandomStream(seed)
    args = _kernel_args(detector)
    p_click = -math.expm1(-cfg.laser_mu * detector.efficiency)

    gens = stream.child(0).generators(("darks", "photons", "traps", "jitter"))
    c_d, c_lp, hist, live_ps, starved = _kernels.characterize(
        cfg.pulses_requested, seconds_to_ps(cfg.quiet_window), bin_ps,
        seconds_to_ps(cfg.histogram_span), deadtime_ps,
        p_click, args["dark_rate"],
        args["trap_lambda"], args["trap_cum_weights"], args["trap_tau_ps"],
        args["sigma_ps"], args["tail_fraction"], args["tail_scale"],
        args["latency_ps"],
        seconds_to_ps(cfg.cycle_timeout),
        gens["darks"], gens["photons"], gens["traps"], gens["jitter"])
    if starved:
        raise ProtocolStarvationError(
            "quiet window of %.3g s not reached within %.3g s of simulated "
            "time; detector too noisy for the protocol" %
            (cfg.quiet_window, cfg.cycle_timeout))

    live_time = live_ps / 1.0e12
    dark_gens = stream.child(1).generators(
        ("darks", "photons", "traps", "jitter", "background"))
    no_pulses = np.empty(0, np.int64)
    no_p = np.empty(0, np.float64)
    dark_times, _ = _kernels.free_run(
        live_ps, deadtime_ps, args["dark_rate"], 0.0, no_pulses, no_p,
        args["trap_lambda"], args["trap_cum_weights"], args["trap_tau_ps"],
        args["sigma_ps"], args["tail_fraction"], args["tail_scale"],
        args["latency_ps"],
        dark_gens["darks"], dark_gens["photons"], dark_gens["traps"],
        dark_gens["jitter"], dark_gens["background"])
    dark_counts = int(len(dark_times))
    r_dc = dark_counts / live_time if live_time > 0.0 else 0.0

    return CharacterizationCounts(
        c_d=int(c_d), c_lp=int(c_lp), r_dc=r_dc,
        histogram=np.asarray(hist, dtype=np.int64),
        f=cfg.fpga_clock, mu=cfg.laser_mu, deadtime=detector.deadtime,
        live_time=live_time, dark_counts=dark_counts,
        dark_live_time=live_time)


def efficiency_estimate(counts: CharacterizationCounts) -> Estimate:
    """Efficiency from laser-bin statistics, inverting Poisson photon stats.

    eta = (1/mu) * ln[(1 - r_dc/f) / (1 - C_d/C_lp)].  The error combines the
    binomial error on C_d/C_lp with the Poisson error on r_dc by the delta
    method.  Raises EstimatorDomainError when the counts imply an efficiency
    outside [0, 1].
    """
    if counts.c_lp == 0:
        raise EstimatorDomainError("no laser pulses recorded")
    p = counts.c_d / counts.c_lp
    d = counts.r_dc / counts.f
    if p >= 1.0 - d:
        raise EstimatorDomainError("click fraction saturates the estimator")
    eta = math.log((1.0 - d) / (1.0 - p)) / counts.mu
    if eta < 0.0:
        raise EstimatorDomainError("clicks below the dark expectation imply "
                                   "a negative efficiency")
    if eta > 1.0:
        raise EstimatorDomainError("counts imply an efficiency above 1")
    sigma_p = math.sqrt(p * (1.0 - p) / counts.c_lp)
    sigma_d = counts.r_dc_error / counts.f
    err = math.hypot(sigma_p / (1.0 - p), sigma_d / (1.0 - d)) / counts.mu
    return Estimate(eta, err)


def dark_rate_estimate(counts: CharacterizationCounts) -> Estimate:
    return Estimate(counts.r_dc, counts.r_dc_error)


def afterpulse_total(counts: CharacterizationCounts) -> Estimate:
    """Total afterpulse probability: histogram sum minus the dark baseline.

    P_ap = sum_i (C_i/C_d - r_dc*tau) over live bins; bins inside the
    hold-off window are structural zeros and excluded from the subtraction
    (counting them would bias the estimate low).  Error combines Poisson
    errors on the C_i with the dark-rate subtraction error.
    """
    if counts.c_d == 0:
        raise NoSignalError("no detections to condition the histogram on")
    n_live = len(counts.histogram) - counts.structural_bins
    if n_live <= 0:
        raise ParameterError("histogram has no bins beyond the deadtime")
    live = counts.histogram[counts.structural_bins:]
    tau = counts.bin_width
    total = float(live.sum()) / counts.c_d - counts.r_dc * tau * n_live
    var = float(live.sum()) / counts.c_d ** 2
    var += (n_live * tau * counts.r_dc_error) ** 2
    return Estimate(total, math.sqrt(var))


def histogram_density(counts: CharacterizationCounts) -> np.ndarray:
    """Afterpulse probability density per nanosecond, bin by bin."""
    if counts.c_d == 0:
        raise NoSignalError("no detections to condition the histogram on")
    per_ns = counts.bin_width * 1e9
    return counts.histogram / (counts.c_d * per_ns)


def characterize_point(detector: DetectorParams, cfg: ProtocolConfig,
                       seed) -> CharacterizationResult:
    """Protocol run + estimators bundled into one result object."""
    counts = run_protocol(detector, cfg, seed)
    eta = efficiency_estimate(counts)
    return CharacterizationResult(
        efficiency=eta,
        dark_rate=dark_rate_estimate(counts),
        afterpulse_total=afterpulse_total(counts),
        histogram_density=histogram_density(counts),
        efficiency_systematic=eta.value * cfg.mu_systematic)


def measure_jitter_histogram(detector: DetectorParams, draws: int, seed,
                             bin_width: float = 2e-12) -> JitterHistogram:
    """Histogram of response delays, emulating a TCSPC acquisition."""
    if draws < 1:
        raise ParameterError("draws must be >= 1")
    if bin_width <= 0.0:
        raise ParameterError("bin_width must be > 0")
    from .detector import sample_jitter
    stream = seed if isinstance(seed, RandomStream) else RandomStream(seed)
    delays = sample_jitter(detector, draws, stream.generator("jitter"))
    edges_n = int(np.ceil(delays.max() / bin_width)) + 1
    hist, _ = np.histogram(delays, bins=edges_n,
                           range=(0.0, edges_n * bin_width))
    return JitterHistogram(bin_width=bin_width, counts=hist)


def tcspc_widths(hist: JitterHistogram, level: float) -> float:
    """Full width of the histogram at level*peak, linearly interpolated.

    level=0.5 gives the FWHM.  Requires a peak count of at least 100 for a
    meaningful crossing; raises OpenSupportError when the level line is not
    crossed on both flanks.
    """
    if not 0.0 < level < 1.0:
        raise ParameterError("level must be in (0, 1)")
    counts = hist.counts.astype(np.float64)
    peak_idx = int(np.argmax(counts))
    peak = counts[peak_idx]
    if peak < 100:
        raise NoSignalError("peak count below 100; widths are unreliable")
    threshold = level * peak

    def crossing(idx_from: int, step: int) -> float:
        i = idx_from
        while 0 <= i < len(counts):
            if counts[i] < threshold:
                # Interpolate between bin centers i and i-step.
                prev = i - step
                frac = (counts[prev] - threshold) / (counts[prev] - counts[i])
                return prev + frac * step
            i += step
        raise OpenSupportError("histogram never falls below the level on "
                               "one side")

    left = crossing(peak_idx, -1)
    right = crossing(peak_idx, +1)
    return (right - left) * hist.bin_width


def figure_of_merit(efficiency: float, dark_rate: float,
                    fwhm: float) -> float:
    """H = eta / (r_dc * dt); higher is better."""
    if dark_rate <= 0.0 or fwhm <= 0.0:
        raise ParameterError("dark_rate and fwhm must be > 0")
    return efficiency / (dark_rate * fwhm)

"""Detector-level API: Monte Carlo click streams and small analytic helpers."""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .engine import (EVENT_BACKGROUND, EVENT_DARK, EVENT_PULSE, EVENT_RELEASE,
                     EventQueue, PS_PER_S, RandomStream, exponential_gap_seconds,
                     seconds_to_ps, timeline_to_ps)
from .errors import ParameterError
from .params import (ClickStream, DetectorParams, OpticalTimeline,
                     ORIGIN_AFTERPULSE, ORIGIN_DARK, ORIGIN_PHOTON)

_KERNEL_SUBSTREAMS = ("darks", "photons", "traps", "jitter", "background")


def dark_rate(params: DetectorParams) -> float:
    """Dark count rate (cps) at the detector's operating point."""
    return params.dark_model.rate(params.temperature, params.efficiency)


def first_generation_afterpulses(params: DetectorParams) -> float:
    """Mean first-generation afterpulse clicks seeded by one avalanche.

    Traps released while the detector is still held off are lost, so each
    exponential component is discounted by its survival past the deadtime.
    """
    lam = params.trap_model.mean_traps(params.efficiency)
    if lam == 0.0:
        return 0.0
    taus = params.trap_model.lifetimes_at(params.temperature)
    weights = params.trap_model.weights()
    survive = sum(w * math.exp(-params.deadtime / t)
                  for w, t in zip(weights, taus))
    return lam * survive


def afterpulse_feedback(params: DetectorParams,
                        candidate_rate: float) -> tuple[float, float]:
    """Rate-model coupling constants (b, g) of the afterpulse cascade.

    Per detected click the expected number of detected afterpulse
    descendants is b - g*C, where C is the steady click rate the constants
    are later solved against.  A trap release only counts if it outlives
    the hold-off (survival e^(-deadtime/tau)) and then finds the detector
    armed.  Within the first armed window after re-arm that requires no
    fresh candidate since re-arm, at candidate_rate; a release later than
    one deadtime sees the stationary process instead, where a window of
    deadtime length holds a click with probability exactly C*deadtime
    (shorter intervals cannot hold two clicks).  Blocking by siblings of
    the same cascade is ignored; it is second order in the trap occupancy.
    """
    lam = params.trap_model.mean_traps(params.efficiency)
    if lam == 0.0:
        return 0.0, 0.0
    taus = params.trap_model.lifetimes_at(params.temperature)
    weights = params.trap_model.weights()
    td = params.deadtime
    b_first = 0.0
    b_late = 0.0
    for w, tau in zip(weights, taus):
        survive = math.exp(-td / tau)
        first = -math.expm1(-(candidate_rate + 1.0 / tau) * td) \
            / (1.0 + candidate_rate * tau)
        b_first += w * survive * first
        b_late += w * survive * survive
    return lam * (b_first + b_late), lam * b_late * td


def total_afterpulses(params: DetectorParams) -> float:
    """Mean afterpulse clicks per primary click including cascades.

    Geometric closure of the first-generation mean b: b + b^2 + ... Valid for
    b < 1; raises otherwise since the cascade would not terminate on average.
    """
    b = first_generation_afterpulses(params)
    if b >= 1.0:
        raise ParameterError("afterpulse cascade mean per click is >= 1")
    return b / (1.0 - b)


def _kernel_args(params: DetectorParams):
    """Scalar/array bundle shared by every kernel call site."""
    trap = params.trap_model
    lam = trap.mean_traps(params.efficiency)
    weights = np.asarray(trap.weights(), dtype=np.float64)
    cum_weights = np.cumsum(weights)
    tau_ps = np.asarray(trap.lifetimes_at(params.temperature),
                        dtype=np.float64) * PS_PER_S
    jit = params.jitter_model
    sigma_ps = jit.core_sigma_at(params.efficiency) * PS_PER_S
    return {
        "dark_rate": dark_rate(params),
        "deadtime_ps": seconds_to_ps(params.deadtime),
        "trap_lambda": lam,
        "trap_cum_weights": cum_weights,
        "trap_tau_ps": tau_ps,
        "sigma_ps": sigma_ps,
        "tail_fraction": jit.tail_fraction,
        "tail_scale": jit.tail_scale_factor,
        "latency_ps": seconds_to_ps(jit.latency),
    }


def simulate(params: DetectorParams, timeline: OpticalTimeline,
             duration: float, seed) -> ClickStream:
    """Simulate the detector against an optical timeline for duration seconds.

    seed is an integer or a RandomStream.  Returns the recorded click stream
    with per-click origin tags (photon, dark, afterpulse); background counts
    are tagged as photons since they enter through the same optical port.
    """
    if not (duration > 0.0) or not math.isfinite(duration):
        raise ParameterError("duration must be positive and finite")
    stream = seed if isinstance(seed, RandomStream) else RandomStream(seed)
    gens = stream.generators(_KERNEL_SUBSTREAMS)
    args = _kernel_args(params)
    pulse_times_ps, pulse_p = timeline_to_ps(timeline, params.efficiency)
    bg_candidates = timeline.background_rate * params.efficiency
    times_ps, origins = _kernels.free_run(
        seconds_to_ps(duration), args["deadtime_ps"],
        args["dark_rate"], bg_candidates,
        pulse_times_ps, pulse_p,
        args["trap_lambda"], args["trap_cum_weights"], args["trap_tau_ps"],
        args["sigma_ps"], args["tail_fraction"], args["tail_scale"],
        args["latency_ps"],
        gens["darks"], gens["photons"], gens["traps"], gens["jitter"],
        gens["background"])
    return ClickStream(np.asarray(times_ps, dtype=np.float64) / PS_PER_S,
                       np.asarray(origins, dtype=np.uint8))


def simulate_reference(params: DetectorParams, timeline: OpticalTimeline,
                       duration: float, seed) -> ClickStream:
    """Event-queue reimplementation of simulate(); must match it bit for bit.

    Kept deliberately independent of the kernel's merge loop: candidates go
    through an explicit priority queue.  Equality of the two click streams is
    enforced in the test suite and pins down event ordering, armed-state
    semantics and the per-substream draw order.
    """
    if not (duration > 0.0) or not math.isfinite(duration):
        raise ParameterError("duration must be positive and finite")
    stream = seed if isinstance(seed, RandomStream) else RandomStream(seed)
    gens = stream.generators(_KERNEL_SUBSTREAMS)
    args = _kernel_args(params)
    duration_ps = seconds_to_ps(duration)
    deadtime_ps = args["deadtime_ps"]
    rate_dark = args["dark_rate"]
    rate_bg = timeline.background_rate * params.efficiency
    pulse_times_ps, pulse_p = timeline_to_ps(timeline, params.efficiency)

    def gap_ps(generator, rate: float) -> int:
        # Truncate like the kernels do; round() would disagree by 1 ps.
        return int(exponential_gap_seconds(generator.random(), rate)
                   * PS_PER_S)

    queue = EventQueue()
    for t, p in zip(pulse_times_ps, pulse_p):
        queue.push(int(t), EVENT_PULSE, float(p))
    if rate_dark > 0.0:
        queue.push(gap_ps(gens["darks"], rate_dark), EVENT_DARK, None)
    if rate_bg > 0.0:
        queue.push(gap_ps(gens["background"], rate_bg), EVENT_BACKGROUND,
                   None)

    def jitter_delay_ps() -> int:
        g = gens["jitter"]
        jm = params.jitter_model
        if g.random() < jm.tail_fraction:
            x = -jm.tail_scale_factor * math.log(1.0 - g.random())
        else:
            while True:  # polar method, matching the kernel's variate
                a = 2.0 * g.random() - 1.0
                b = 2.0 * g.random() - 1.0
                s = a * a + b * b
                if 0.0 < s < 1.0:
                    x = a * math.sqrt(-2.0 * math.log(s) / s)
                    break
        return max(0, args["latency_ps"] + int(x * args["sigma_ps"]))

    def spawn_traps(t_raw: int) -> None:
        g = gens["traps"]
        lam = args["trap_lambda"]
        if lam <= 0.0:
            return
        limit = math.exp(-lam)
        k, p = 0, 1.0
        while True:
            p *= g.random()
            if p <= limit:
                break
            k += 1
        cum = args["trap_cum_weights"]
        for _ in range(k):
            u = g.random()
            comp = len(cum) - 1
            for i in range(len(cum)):
                if u < cum[i]:
                    comp = i
                    break
            tau_ps = args["trap_tau_ps"][comp]
            delay = int(-math.log(1.0 - g.random()) * tau_ps)
            queue.push(t_raw + delay, EVENT_RELEASE, None)

    out_times: list[int] = []
    out_origins: list[int] = []
    armed_from = 0

    while queue and queue.peek_time() < duration_ps:
        t, kind, payload = queue.pop()
        clicked = False
        origin = ORIGIN_PHOTON
        if kind == EVENT_PULSE:
            if t >= armed_from and gens["photons"].random() < payload:
                clicked = True
        elif kind == EVENT_BACKGROUND:
            queue.push(t + gap_ps(gens["background"], rate_bg),
                       EVENT_BACKGROUND, None)
            if t >= armed_from:
                clicked = True
        elif kind == EVENT_DARK:
            queue.push(t + gap_ps(gens["darks"], rate_dark), EVENT_DARK, None)
            if t >= armed_from:
                clicked = True
                origin = ORIGIN_DARK
        else:
            if t >= armed_from:
                clicked = True
                origin = ORIGIN_AFTERPULSE
        if clicked:
            recorded = t + jitter_delay_ps()
            if recorded < duration_ps:
                out_times.append(recorded)
                out_origins.append(origin)
            armed_from = recorded + deadtime_ps
            spawn_traps(t)

    return ClickStream(np.asarray(out_times, dtype=np.float64) / PS_PER_S,
                       np.asarray(out_origins, dtype=np.uint8))


def sample_jitter(params: DetectorParams, n: int, generator) -> np.ndarray:
    """Draw n response delays (seconds) from the timing-jitter mixture.

    Distribution-level utility for histogram tests; not draw-compatible with
    the simulation kernels.
    """
    jm = params.jitter_model
    sigma = jm.core_sigma_at(params.efficiency)
    u = generator.random(n)
    tail = u < jm.tail_fraction
    x = generator.standard_normal(n)
    x[tail] = generator.exponential(jm.tail_scale_factor, tail.sum())
    return np.maximum(0.0, jm.latency + x * sigma)

"""Deterministic Monte Carlo plumbing: random substreams, event ordering,
and photon-source builders.

Times inside the simulation kernels live on an integer grid of 1 ps; this
module's public API works in float seconds and the conversion happens at the
kernel boundary.  The picosecond grid removes floating-point ordering
ambiguity so replays are bit-exact.
"""

from __future__ import annotations

import heapq
import math
from typing import Any, Iterable

import numpy as np

from .errors import ParameterError
from .params import OpticalTimeline

PS_PER_S = 1.0e12

# Event kinds in tie-break priority order (lower pops first at equal time).
# Re-arming is implicit: armed checks use >=, so a click candidate exactly at
# the re-arm instant is already live.
EVENT_PULSE = 1
EVENT_BACKGROUND = 2
EVENT_DARK = 3
EVENT_RELEASE = 4

# Substream indices are reserved below _CHILD_OFFSET; child streams start at it.
_CHILD_OFFSET = 16


class RandomStream:
    """Named, independent random substreams derived from one integer seed.

    Each physical mechanism draws from its own generator so that toggling one
    mechanism never shifts another's draws (this is what makes paired-seed
    monotonicity tests meaningful).  Substreams and child streams are derived
    through ``numpy.random.SeedSequence`` spawn keys, so the mapping from
    (seed, name) to a bit stream is stable and documented.
    """

    SUBSTREAMS = ("darks", "photons", "traps", "jitter", "background", "bits")

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._key = tuple(_key)
        self._generators: dict[str, np.random.Generator] = {}

    def _sequence(self, index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=self._key + (index,))

    def generator(self, name: str) -> np.random.Generator:
        """The generator for one named substream (created on first use)."""
        if name not in self.SUBSTREAMS:
            raise ParameterError(f"unknown substream {name!r}; "
                                 f"valid names: {self.SUBSTREAMS}")
        if name not in self._generators:
            index = self.SUBSTREAMS.index(name)
            self._generators[name] = np.random.Generator(
                np.random.PCG64(self._sequence(index)))
        return self._generators[name]

    def generators(self, names: Iterable[str]) -> dict[str, np.random.Generator]:
        return {n: self.generator(n) for n in names}

    def child(self, index: int) -> "RandomStream":
        """An independent derived stream (e.g. per detector, per pass)."""
        if index < 0:
            raise ParameterError("child index must be >= 0")
        return RandomStream(self.seed, self._key + (_CHILD_OFFSET + index,))


class EventQueue:
    """Time-ordered pending events with deterministic tie-breaking.

    Pop order is non-decreasing in time; ties are broken by event kind
    (re-arm < optical < dark < release) and then by insertion order.  Times
    are integer picoseconds.
    """

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, Any]] = []
        self._counter = 0

    def push(self, time_ps: int, kind: int, payload: Any = None) -> None:
        heapq.heappush(self._heap, (int(time_ps), kind, self._counter, payload))
        self._counter += 1

    def pop(self) -> tuple[int, int, Any]:
        time_ps, kind, _, payload = heapq.heappop(self._heap)
        return time_ps, kind, payload

    def peek_time(self) -> int:
        return self._heap[0][0]

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


def pulsed_laser(period: float, mean_photon_number: float, count: int,
                 start: float = 0.0) -> OpticalTimeline:
    """Periodic pulse train: ``count`` pulses at ``start + k*period``.

    Args:
        period: pulse spacing in seconds, > 0.
        mean_photon_number: mu per pulse, >= 0.
        count: number of pulses, >= 0.
        start: time of the first pulse in seconds.
    """
    if period <= 0.0:
        raise ParameterError("laser period must be > 0")
    if count < 0:
        raise ParameterError("pulse count must be >= 0")
    if mean_photon_number < 0.0:
        raise ParameterError("mean photon number must be >= 0")
    times = start + np.arange(count, dtype=np.float64) * period
    mus = np.full(count, float(mean_photon_number))
    return OpticalTimeline(times=times, mean_photon_numbers=mus)


def poisson_process(rate: float, duration: float,
                    generator: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson event times on [0, duration), sorted, seconds.

    Sampled as a Poisson-distributed count of uniform order statistics,
    which is the standard conditional construction.
    """
    if rate < 0.0:
        raise ParameterError("rate must be >= 0")
    if duration < 0.0:
        raise ParameterError("duration must be >= 0")
    if rate == 0.0 or duration == 0.0:
        return np.empty(0, dtype=np.float64)
    n = int(generator.poisson(rate * duration))
    times = generator.random(n) * duration
    times.sort()
    return times


def seconds_to_ps(t: float) -> int:
    """Convert seconds to the internal integer picosecond grid."""
    return int(round(t * PS_PER_S))


def ps_to_seconds(t_ps: int | np.ndarray):
    return t_ps / PS_PER_S


def timeline_to_ps(timeline: OpticalTimeline, efficiency: float
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Pulse times on the ps grid and per-pulse click probabilities.

    The click probability of a pulse with mean photon number mu is
    1 - exp(-mu * efficiency) (Poisson photon statistics, at-least-one-photon
    detection while armed).
    """
    times_ps = np.round(timeline.times * PS_PER_S).astype(np.int64)
    p_click = -np.expm1(-timeline.mean_photon_numbers * efficiency)
    return times_ps, p_click.astype(np.float64)


def exponential_gap_seconds(u: float, rate: float) -> float:
    """Inverse-CDF exponential gap used by the reference simulator."""
    return -math.log(1.0 - u) / rate

"""Exhaustive operating-point search maximizing secret key rate per loss.

The analytic link model is cheap enough that the full grid (at most a few
thousand points per loss, ~76k with the per-detector flag) is evaluated
outright; exactness keeps the argmax reproducible and testable.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .calibration import make_detector
from .errors import ParameterError
from .params import (EFFICIENCY_MAX, TEMPERATURE_MAX_K, TEMPERATURE_MIN_K,
                     kelvin_to_celsius)
from .qkd import LinkConfig, LinkMetrics, QkdOperatingPoint, link_metrics

DEFAULT_EFFICIENCY_GRID = tuple(round(0.08 + 0.01 * k, 2) for k in range(23))
DEFAULT_DEADTIME_GRID = (2e-6, 5e-6, 10e-6, 20e-6, 40e-6, 80e-6)
DEFAULT_TEMPERATURE_GRID_C = (-50.0, -70.0, -90.0, -110.0)
DEFAULT_LOSS_GRID_DB = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)


class GridPoint(NamedTuple):
    """One candidate operating point (temperatures in Celsius)."""

    temperature_c: float
    efficiency_data: float
    deadtime_data: float
    efficiency_monitor: float
    deadtime_monitor: float


class GridRow(NamedTuple):
    point: GridPoint
    skr: float


def _check_grid(name: str, values: Sequence[float], lo: float, hi: float,
                lo_open: bool = False) -> None:
    if len(values) == 0:
        raise ParameterError(f"{name} must not be empty")
    for v in values:
        if not math.isfinite(v):
            raise ParameterError(f"{name} values must be finite")
        if v < lo or v > hi or (lo_open and v == lo):
            raise ParameterError(
                f"{name} value {v} outside the valid range "
                f"{'(' if lo_open else '['}{lo}, {hi}]")


@dataclass(frozen=True)
class SearchSpace:
    """Grids swept by :func:`optimize`; defaults mirror the studied device.

    Temperatures are Celsius, deadtimes seconds, losses dB.
    """

    efficiency_grid: tuple = DEFAULT_EFFICIENCY_GRID
    deadtime_grid: tuple = DEFAULT_DEADTIME_GRID
    temperature_grid: tuple = DEFAULT_TEMPERATURE_GRID_C
    loss_grid: tuple = DEFAULT_LOSS_GRID_DB

    def __post_init__(self):
        _check_grid("efficiency_grid", self.efficiency_grid,
                    0.0, EFFICIENCY_MAX, lo_open=True)
        _check_grid("deadtime_grid", self.deadtime_grid,
                    0.0, math.inf, lo_open=True)
        _check_grid("temperature_grid", self.temperature_grid,
                    kelvin_to_celsius(TEMPERATURE_MIN_K),
                    kelvin_to_celsius(TEMPERATURE_MAX_K))
        _check_grid("loss_grid", self.loss_grid, 0.0, math.inf)

    def points(self, per_detector: bool = False):
        """Candidate operating points in deterministic enumeration order."""
        for t in self.temperature_grid:
            for eta_d in self.efficiency_grid:
                for tau_d in self.deadtime_grid:
                    if per_detector:
                        for eta_m in self.efficiency_grid:
                            for tau_m in self.deadtime_grid:
                                yield GridPoint(t, eta_d, tau_d, eta_m, tau_m)
                    else:
                        yield GridPoint(t, eta_d, tau_d, eta_d, tau_d)


@dataclass(frozen=True)
class Optimum:
    """Search result at one channel loss.

    ``found`` is False when every grid point evaluated to zero key rate; the
    point and metrics are then absent rather than an arbitrary zero-rate
    entry.
    """

    loss_db: float
    found: bool
    point: Optional[GridPoint]
    metrics: Optional[LinkMetrics]
    table: Optional[tuple[GridRow, ...]] = None

    def __post_init__(self):
        if self.found != (self.point is not None) or \
                self.found != (self.metrics is not None):
            raise ParameterError("found flag inconsistent with payload")

    @property
    def skr(self) -> float:
        return self.metrics.skr if self.metrics is not None else 0.0


def _tie_key(point: GridPoint, skr: float):
    # Argmax by SKR; ties prefer the shorter deadtime, then the lower
    # efficiency, then the higher temperature (data side outranks monitor).
    return (-skr, point.deadtime_data, point.deadtime_monitor,
            point.efficiency_data, point.efficiency_monitor,
            -point.temperature_c)


def optimize(space: SearchSpace, cfg: LinkConfig, per_detector: bool = False,
             keep_table: bool = False) -> list[Optimum]:
    """Best operating point per loss in ``space.loss_grid``.

    Every detector on the grid is constructed (and therefore validated)
    before the first evaluation.  The scan is a deterministic fold: the
    reported optimum is independent of enumeration order because the
    tie-break key totally orders the grid.
    """
    detectors = {}
    for t in space.temperature_grid:
        for eta in space.efficiency_grid:
            for tau in space.deadtime_grid:
                detectors[(t, eta, tau)] = make_detector(t, eta, tau)

    results = []
    for loss in space.loss_grid:
        cfg_loss = dataclasses.replace(cfg, channel_loss_db=loss)
        best_key = None
        best: Optional[tuple[GridPoint, LinkMetrics]] = None
        rows = [] if keep_table else None
        for point in space.points(per_detector):
            op = QkdOperatingPoint(
                data_detector=detectors[(point.temperature_c,
                                         point.efficiency_data,
                                         point.deadtime_data)],
                monitor_detector=detectors[(point.temperature_c,
                                            point.efficiency_monitor,
                                            point.deadtime_monitor)])
            metrics = link_metrics(cfg_loss, op)
            if rows is not None:
                rows.append(GridRow(point, metrics.skr))
            key = _tie_key(point, metrics.skr)
            if best_key is None or key < best_key:
                best_key = key
                best = (point, metrics)
        found = bool(best is not None and best[1].skr > 0.0)
        results.append(Optimum(
            loss_db=loss,
            found=found,
            point=best[0] if found else None,
            metrics=best[1] if found else None,
            table=tuple(rows) if rows is not None else None))
    return results

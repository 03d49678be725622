"""Turn daily series into yearly event counts by threshold exceedance.

For each year and station, days strictly above the station threshold are
counted either raw (every exceedance day is an event) or declustered: a
maximal run of consecutive exceedance days is a single event, on the
argument that one synoptic episode should not be counted once per day.
A missing value breaks a run, ends the current event, and counts toward
the year's missingness; years where any station is missing more than
``max_missing_frac`` of its days are dropped entirely rather than
reported with biased counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["ExceedanceConfig", "ExceedanceResult", "count_exceedances"]


@dataclass(frozen=True)
class ExceedanceConfig:
    thresholds: tuple[float, ...]
    decluster: bool = True
    max_missing_frac: float = 0.10

    def __post_init__(self):
        if not self.thresholds:
            raise ValueError("need at least one threshold")
        if any(not math.isfinite(t) for t in self.thresholds):
            raise ValueError("thresholds must be finite")
        if not 0.0 <= self.max_missing_frac <= 1.0:
            raise ValueError("max_missing_frac must lie in [0, 1]")


@dataclass(frozen=True)
class ExceedanceResult:
    years: list[int]  # kept years, order of first appearance
    counts: np.ndarray  # len(years) x stations, int64
    dropped_years: list[int]
    missing_frac: dict[int, list[float]]  # every year incl. dropped


def count_exceedances(years, values, config: ExceedanceConfig) -> ExceedanceResult:
    """Yearly exceedance-event counts per station.

    ``years`` is one label per row (day); rows are taken in order, and a
    change of year closes any open run.  ``values`` is days x stations
    with NaN marking missing observations.
    """
    years = np.asarray(years)
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2 or vals.shape[0] == 0:
        raise ValueError("values must be a non-empty days x stations array")
    if years.shape != (vals.shape[0],):
        raise ValueError("years must have one entry per row of values")
    d = vals.shape[1]
    if len(config.thresholds) != d:
        raise ValueError(
            f"{len(config.thresholds)} thresholds for {d} station columns"
        )
    thr = np.asarray(config.thresholds, dtype=float)

    order: list[int] = []
    counts: dict[int, np.ndarray] = {}
    days: dict[int, int] = {}
    missing: dict[int, np.ndarray] = {}
    in_run = np.zeros(d, dtype=bool)
    current = None

    for r in range(vals.shape[0]):
        y = int(years[r])
        if y != current:
            current = y
            in_run[:] = False
            if y not in counts:
                order.append(y)
                counts[y] = np.zeros(d, dtype=np.int64)
                missing[y] = np.zeros(d, dtype=np.int64)
                days[y] = 0
        days[y] += 1
        row = vals[r]
        miss = np.isnan(row)
        missing[y] += miss
        over = ~miss & (row > thr)
        if config.decluster:
            counts[y] += over & ~in_run
            in_run = over
        else:
            counts[y] += over

    kept, dropped = [], []
    frac = {}
    for y in order:
        f = missing[y] / days[y]
        frac[y] = [float(v) for v in f]
        (dropped if np.any(f > config.max_missing_frac) else kept).append(y)

    mat = (
        np.vstack([counts[y] for y in kept])
        if kept
        else np.zeros((0, d), dtype=np.int64)
    )
    return ExceedanceResult(years=kept, counts=mat, dropped_years=dropped, missing_frac=frac)

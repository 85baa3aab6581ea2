"""Scalarization of time-series discrepancies.

The inverse problem is reduced to minimizing a scalar field: the root mean
square distance between a simulator response and the target series, optionally
mapped through a floored natural log to tame its dynamic range near the
solution.
"""

from __future__ import annotations

import numpy as np

from .simulators import TargetSeries, TimeSeries

__all__ = ["rms_distance", "log_objective", "LOG_FLOOR"]

# below this the RMS distance is treated as zero for logging purposes
LOG_FLOOR = 1e-12


def _series_of(target) -> TimeSeries:
    if isinstance(target, TargetSeries):
        return target.series
    if isinstance(target, TimeSeries):
        return target
    raise TypeError(f"expected TimeSeries or TargetSeries, got {type(target).__name__}")


def rms_distance(series: TimeSeries, target) -> float:
    """Root mean square distance between a response and the target.

    w = sqrt( (1/L) * sum_t (g(t) - g0(t))^2 )

    Both series must live on the same time grid.
    """
    ref = _series_of(target)
    if not series.grid.matches(ref.grid):
        raise ValueError(
            f"time grids differ: {series.grid} vs {ref.grid}; "
            "responses can only be compared on a common grid"
        )
    diff = series.values - ref.values
    return float(np.sqrt(np.mean(diff * diff)))


def log_objective(w: float, floor: float = LOG_FLOOR) -> float:
    """Natural log of the RMS distance, floored so exact matches stay finite."""
    if not np.isfinite(w) or w < 0:
        raise ValueError(f"RMS distance must be finite and nonnegative, got {w}")
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor}")
    return float(np.log(max(w, floor)))

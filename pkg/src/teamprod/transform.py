"""Order-reversing positive shift and tercile binning.

Residualized times are "lower is better"; production inputs and outputs must
be strictly positive and "higher is better". The shift maps the worst
observation exactly onto the floor constant, so every series bottoms out at
the same known value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite

DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True)
class ShiftedSeries:
    """A positively shifted series: values = (shift_constant - source) + floor."""

    values: np.ndarray
    shift_constant: float
    floor: float
    source_tag: str = ""


def positive_shift(
    source, floor: float = DEFAULT_FLOOR, source_tag: str = ""
) -> ShiftedSeries:
    """Map a lower-is-better series onto a positive higher-is-better scale.

    The worst (largest) source value maps to ``floor`` bit-exactly: the shift
    is computed as (max - source) + floor, so the maximum element yields
    0.0 + floor with no rounding.
    """
    arr = np.asarray(source, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("source must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("source contains NaN or infinity")
    if not floor > 0:
        raise ValueError("floor must be positive")
    worst = float(arr.max())
    values = (worst - arr) + floor
    return ShiftedSeries(
        values=values, shift_constant=worst, floor=floor, source_tag=source_tag
    )


def tercile_bins(skills) -> np.ndarray:
    """Bin values into empirical terciles; 1 = bottom third, 3 = top third.

    Cut points are the 1/3 and 2/3 empirical quantiles (linear
    interpolation). Values equal to a boundary go to the lower bin, so a
    degenerate all-equal series lands entirely in bin 1.
    """
    arr = np.asarray(skills, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("skills must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("skills contain NaN or infinity")
    q1, q2 = np.quantile(arr, [1.0 / 3.0, 2.0 / 3.0])
    return (1 + (arr > q1).astype(np.int64) + (arr > q2).astype(np.int64))

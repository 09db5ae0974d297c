"""Quadratic production surface and output elasticities.

The surface is fit without an intercept on the five regressors
{ax, ax*y, y, ax^2, y^2}, where ax is the efficiency-scaled leader input.
Elasticities are the log-derivatives of the fitted surface evaluated at a
point, with the leader elasticity taken with respect to the composite ax
(chain-rule consistent). A literal variant that rescales by x/h instead of
ax/h is available for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonPositiveOutput, RankDeficient
from .affinity import SliceKey

_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class PolyFit:
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    r_squared: float
    n_obs: int
    slice_key: SliceKey | None = None

    @property
    def betas(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.beta3, self.beta4, self.beta5])

    def predict(self, ax, y):
        ax = np.asarray(ax, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return (
            self.beta1 * ax
            + self.beta2 * ax * y
            + self.beta3 * y
            + self.beta4 * ax * ax
            + self.beta5 * y * y
        )


@dataclass(frozen=True)
class ElasticityPoint:
    team_id: str
    slice_key: SliceKey | None
    elasticity_x: float
    elasticity_y: float
    evaluated_at: tuple[float, float, float, float]  # (ax, y, x, h)


def _design(ax: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.column_stack([ax, ax * y, y, ax * ax, y * y])


def fit_production_polynomial(
    points: Sequence[tuple[float, float, float]],
    slice_key: SliceKey | None = None,
) -> PolyFit:
    """OLS fit of output h on the no-intercept quadratic in (ax, y).

    ``points`` is a sequence of (ax, y, h). Needs at least 6 points and a
    full-rank design; a constant y, for instance, makes ax and ax*y
    collinear and raises RankDeficient. R^2 is uncentered, as usual for
    regressions through the origin.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("points must be (ax, y, h) triples")
    n = arr.shape[0]
    if n < 6:
        raise ValueError(f"need at least 6 points, got {n}")
    ax, y, h = arr[:, 0], arr[:, 1], arr[:, 2]
    design = _design(ax, y)
    rank = np.linalg.matrix_rank(design, tol=_RANK_RTOL * np.abs(design).max())
    if rank < design.shape[1]:
        raise RankDeficient(f"design rank {rank} < 5; regressors are collinear")
    beta, _, _, _ = np.linalg.lstsq(design, h, rcond=None)
    resid = h - design @ beta
    total = float(h @ h)
    r2 = 1.0 - float(resid @ resid) / total if total > 0 else 0.0
    return PolyFit(
        beta1=float(beta[0]),
        beta2=float(beta[1]),
        beta3=float(beta[2]),
        beta4=float(beta[3]),
        beta5=float(beta[4]),
        r_squared=r2,
        n_obs=n,
        slice_key=slice_key,
    )


def elasticity_at(
    fit: PolyFit,
    point: tuple[float, float, float, float],
    team_id: str = "",
    literal_x_scaling: bool = False,
) -> ElasticityPoint:
    """Evaluate both output elasticities at (ax, y, x, h).

    Leader elasticity is dm/d(ax) * ax / h by default, identical to the log
    derivative with respect to the leader skill under the composite-input
    production form. ``literal_x_scaling`` rescales by x/h instead, which
    drops the efficiency factor from the chain rule.
    """
    ax, y, x, h = (float(v) for v in point)
    if h <= 0:
        raise NonPositiveOutput(f"output must be positive, got {h}")
    if min(ax, y, x) <= 0:
        raise ValueError("evaluation point components must be positive")
    dm_dax = fit.beta1 + fit.beta2 * y + 2.0 * fit.beta4 * ax
    dm_dy = fit.beta2 * ax + fit.beta3 + 2.0 * fit.beta5 * y
    x_scale = x if literal_x_scaling else ax
    return ElasticityPoint(
        team_id=team_id,
        slice_key=fit.slice_key,
        elasticity_x=dm_dax * x_scale / h,
        elasticity_y=dm_dy * y / h,
        evaluated_at=(ax, y, x, h),
    )

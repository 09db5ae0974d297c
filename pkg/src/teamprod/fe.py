"""Multi-way fixed-effects estimation by alternating projections.

Solves the additive model  y = intercept + sum_f effect_f[level_f]  by
sweeping over factors and replacing each factor's effects with the group
means of the current partial residual (iterated within-transformation).
Each sweep is exact block minimization, so the residual sum of squares is
non-increasing; on identified designs the coefficients converge to the
least-squares solution under the chosen normalization.

Only coefficient contrasts and residuals are contract-bearing. Absolute
levels depend on the reference policy:

* ``mean_zero``: each factor's effects have observation-weighted mean zero,
  the intercept absorbs the grand mean.
* ``first_level_zero``: each factor's first-appearing level is pinned at
  zero, the intercept absorbs the rest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import DegenerateDesign, NotConvergedWarning
from .records import DIMENSIONS

REFERENCE_POLICIES = ("mean_zero", "first_level_zero")

# Sweeps with no RSS decrease at all while coefficients neither converge nor
# keep contracting indicate a flat direction the normalization cannot pin.
_STALL_SWEEPS = 25
_STALL_CONTRACTION = 0.5


@dataclass(frozen=True)
class FixedEffectSpec:
    outcome: str
    factors: tuple[str, ...]
    reference_policy: str = "mean_zero"
    tolerance: float = 1e-10
    max_iterations: int = 10_000

    def __post_init__(self) -> None:
        if self.outcome not in DIMENSIONS:
            raise ValueError(f"outcome must be one of {DIMENSIONS}, got {self.outcome!r}")
        if not self.factors:
            raise ValueError("factors must be non-empty")
        if len(set(self.factors)) != len(self.factors):
            raise ValueError("factors must not repeat")
        if self.reference_policy not in REFERENCE_POLICIES:
            raise ValueError(f"unknown reference policy {self.reference_policy!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class FixedEffectFit:
    spec: FixedEffectSpec
    coefficients: dict[str, dict[Hashable, float]]
    intercept: float
    residuals: np.ndarray
    n_obs: int
    iterations_used: int
    converged: bool


@dataclass(frozen=True)
class SkillProfile:
    """Per-athlete estimate on one outcome dimension.

    ``raw_fe`` is in seconds, lower is faster. ``transformed_skill`` is the
    positive higher-is-better version, filled by the transform step.
    """

    athlete_id: str
    dimension: str
    raw_fe: float
    n_runs: int
    transformed_skill: float | None = None

    def with_skill(self, value: float) -> "SkillProfile":
        if value < 1e-6:
            raise ValueError(f"transformed skill must be >= 1e-6, got {value}")
        return replace(self, transformed_skill=value)


def _encode(levels: Sequence[Hashable]) -> tuple[np.ndarray, list[Hashable]]:
    """Integer-code levels in order of first appearance."""
    index: dict[Hashable, int] = {}
    codes = np.empty(len(levels), dtype=np.intp)
    for i, lev in enumerate(levels):
        code = index.get(lev)
        if code is None:
            code = len(index)
            index[lev] = code
        codes[i] = code
    return codes, list(index)


def _nested(fine: np.ndarray, coarse: np.ndarray, n_fine: int) -> bool:
    """True when every level of ``fine`` falls inside one level of ``coarse``."""
    seen = np.full(n_fine, -1, dtype=np.intp)
    for f, c in zip(fine, coarse):
        if seen[f] == -1:
            seen[f] = c
        elif seen[f] != c:
            return False
    return True


def _check_aliasing(factors: Sequence[str], codes: list[np.ndarray], sizes: list[int]) -> None:
    # Single-level factors are absorbed by the intercept and are harmless.
    multi = [j for j in range(len(codes)) if sizes[j] > 1]
    for i, a in enumerate(multi):
        for b in multi[i + 1 :]:
            if _nested(codes[a], codes[b], sizes[a]) or _nested(codes[b], codes[a], sizes[b]):
                raise DegenerateDesign(
                    f"factors {factors[a]!r} and {factors[b]!r} have nested level "
                    "partitions; effects are unidentifiable beyond the normalization"
                )


def estimate_fixed_effects(
    rows: Sequence[tuple[float, Sequence[Hashable]]],
    spec: FixedEffectSpec,
) -> FixedEffectFit:
    """Fit the additive fixed-effects model to (outcome, factor levels) rows.

    Sweeps until the largest coefficient change falls below
    ``spec.tolerance``. Hitting ``spec.max_iterations`` emits
    NotConvergedWarning and returns the fit with ``converged=False``.
    Raises DegenerateDesign when sweeps cycle without reducing the residual
    sum of squares, which signals aliased factor levels.
    """
    if not rows:
        raise ValueError("at least one row is required")
    n = len(rows)
    y = np.asarray([r[0] for r in rows], dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("outcome contains non-finite values")

    n_factors = len(spec.factors)
    codes: list[np.ndarray] = []
    levels: list[list[Hashable]] = []
    counts: list[np.ndarray] = []
    for j in range(n_factors):
        col = [r[1][j] for r in rows]
        if len(col) != n:
            raise ValueError("factor level rows are ragged")
        c, lev = _encode(col)
        codes.append(c)
        levels.append(lev)
        counts.append(np.bincount(c, minlength=len(lev)).astype(np.float64))
    _check_aliasing(spec.factors, codes, [len(lev) for lev in levels])

    intercept = float(y.mean())
    effects = [np.zeros(len(lev)) for lev in levels]
    fitted = np.full(n, intercept)

    converged = False
    sweeps = 0
    rss_prev = float(((y - fitted) ** 2).sum())
    stall = 0
    recent_deltas: list[float] = []
    for sweeps in range(1, spec.max_iterations + 1):
        delta = 0.0
        for j in range(n_factors):
            partial = y - intercept
            for k in range(n_factors):
                if k != j:
                    partial -= effects[k][codes[k]]
            new = np.bincount(codes[j], weights=partial, minlength=len(levels[j]))
            new /= counts[j]
            # Re-centre so each factor keeps observation-weighted mean zero;
            # the grand mean lives in the intercept throughout.
            shift = float((new * counts[j]).sum() / n)
            new -= shift
            intercept += shift
            delta = max(delta, float(np.abs(new - effects[j]).max()))
            effects[j] = new

        fitted = np.full(n, intercept)
        for k in range(n_factors):
            fitted += effects[k][codes[k]]
        rss = float(((y - fitted) ** 2).sum())

        if delta < spec.tolerance:
            converged = True
            break
        recent_deltas.append(delta)
        if len(recent_deltas) > _STALL_SWEEPS:
            recent_deltas.pop(0)
        # "Cycling without residual decrease": no RSS progress at all across a
        # whole window while coefficients bounce without contracting. Plain
        # slow convergence keeps contracting delta and never trips this.
        if rss_prev - rss <= 0.0:
            stall += 1
            if (
                stall >= _STALL_SWEEPS
                and len(recent_deltas) == _STALL_SWEEPS
                and delta >= _STALL_CONTRACTION * recent_deltas[0]
            ):
                raise DegenerateDesign(
                    "alternating projections cycles without residual decrease; "
                    "the design has a flat direction beyond the normalization"
                )
        else:
            stall = 0
        rss_prev = rss

    if not converged:
        warnings.warn(
            f"fixed-effects sweep hit max_iterations={spec.max_iterations} "
            f"(last coefficient change {delta:.3e})",
            NotConvergedWarning,
            stacklevel=2,
        )

    intercept_out = intercept
    effects_out = [e.copy() for e in effects]
    if spec.reference_policy == "first_level_zero":
        for j in range(n_factors):
            base = effects_out[j][0]
            effects_out[j] -= base
            intercept_out += base

    residuals = y - fitted
    coefficients = {
        spec.factors[j]: {lev: float(effects_out[j][i]) for i, lev in enumerate(levels[j])}
        for j in range(n_factors)
    }
    return FixedEffectFit(
        spec=spec,
        coefficients=coefficients,
        intercept=float(intercept_out),
        residuals=residuals,
        n_obs=n,
        iterations_used=sweeps,
        converged=converged,
    )


def athlete_skill(
    fit: FixedEffectFit,
    run_counts: Mapping[str, int],
    min_runs: int = 2,
) -> tuple[list[SkillProfile], list[str]]:
    """Turn a converged fit's athlete effects into skill profiles.

    Athletes with fewer than ``min_runs`` solo runs are dropped and reported
    in the second return value.
    """
    if not fit.converged:
        raise ValueError("fit did not converge; skills would be unreliable")
    if "athlete" not in fit.coefficients:
        raise ValueError("fit has no 'athlete' factor")
    profiles: list[SkillProfile] = []
    dropped: list[str] = []
    for athlete, coef in fit.coefficients["athlete"].items():
        try:
            n_runs = int(run_counts[str(athlete)])
        except KeyError:
            raise ValueError(f"run_counts missing athlete {athlete!r}") from None
        if n_runs < min_runs:
            dropped.append(
                f"athlete {athlete} dropped from {fit.spec.outcome} skills: "
                f"{n_runs} solo runs (need >= {min_runs})"
            )
            continue
        profiles.append(
            SkillProfile(
                athlete_id=str(athlete),
                dimension=fit.spec.outcome,
                raw_fe=coef,
                n_runs=n_runs,
            )
        )
    return profiles, dropped


def residualize_team(
    team_rows: Sequence[tuple[float, Hashable, Hashable]],
    outcome: str = "start",
    tolerance: float = 1e-10,
    max_iterations: int = 10_000,
) -> np.ndarray:
    """Residualize one team outcome series on event and starting-order effects.

    The athlete factor is deliberately absent: team outcomes must keep their
    skill variation. Call once per (task, attempt) series.
    """
    spec = FixedEffectSpec(
        outcome=outcome,
        factors=("event", "starting_order"),
        reference_policy="mean_zero",
        tolerance=tolerance,
        max_iterations=max_iterations,
    )
    rows = [(v, (event, order)) for v, event, order in team_rows]
    fit = estimate_fixed_effects(rows, spec)
    return fit.residuals

"""Latent team-task efficiency recovery.

Each observation's output is ranked within the kernel-weighted conditional
output distribution at its own inputs (tau), then mapped onto an efficiency
scale by inverting a reference conditional distribution of the input-scaled
output h/x at a baseline assistant skill. Constant returns to scale makes
the scaled output the right object to invert: holding the conditioning
point fixed, its conditional distribution is a monotone image of the latent
efficiency distribution.

The reference point for the inversion is shared by the whole (task, attempt)
slice by default (x fixed at the slice median, y at the baseline), so
recovered efficiencies are comparable across teams. A per-observation
reference (each team's own x) is available via ``reference_x="own"`` for
sensitivity runs; it reintroduces the team's own input scale into the
recovered level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DegenerateScaleWarning,
    EmptyTaskSlice,
    InsufficientSupport,
)
from .records import TASKS

KERNELS = ("gaussian", "epanechnikov")
TIE_MODES = ("le", "lt")
REFERENCE_X_POLICIES = ("slice_median", "own")

SUPPORT_EPS = 1e-12
MIN_SLICE_SIZE = 5
INPUT_FLOOR = 1e-6

# Normalized efficiency scale: slice minimum and the median-efficiency
# baseline team.
SCALE_MIN = 1.0
SCALE_ANCHOR = 100.0

SliceKey = tuple[str, int]


@dataclass(frozen=True, slots=True)
class TeamTaskObservation:
    """One (team, task, attempt) estimation unit with positive inputs and output."""

    team_id: str
    task: str
    attempt: int
    x_input: float
    y_input: float
    h_output: float

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.attempt not in (1, 2):
            raise ValueError(f"attempt must be 1 or 2, got {self.attempt}")
        for name in ("x_input", "y_input", "h_output"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < INPUT_FLOOR:
                raise ValueError(f"{name} must be finite and >= {INPUT_FLOOR}, got {v}")

    @property
    def slice_key(self) -> SliceKey:
        return (self.task, self.attempt)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel and inversion settings for efficiency recovery.

    ``bandwidth_rule="silverman"`` resolves per-slice bandwidths as
    1.06 * sd * n^(-1/5) in each input dimension; ``"manual"`` uses the
    explicit bandwidths. ``tie_mode`` picks the indicator in the rank sum:
    "le" counts ties (tau = 1 attainable), "lt" does not (tau = 0
    attainable). ``leave_one_out`` removes the target from its own rank.
    """

    kernel: str = "gaussian"
    bandwidth_x: float | None = None
    bandwidth_y: float | None = None
    bandwidth_rule: str = "silverman"
    quantile_grid_size: int = 256
    baseline_y: str | float = "median"
    tie_mode: str = "le"
    leave_one_out: bool = False
    reference_x: str = "slice_median"
    anchor_tau: float = 0.5

    def __post_init__(self) -> None:
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.bandwidth_rule not in ("silverman", "manual"):
            raise ValueError("bandwidth_rule must be 'silverman' or 'manual'")
        if self.bandwidth_rule == "manual":
            if not (self.bandwidth_x and self.bandwidth_x > 0):
                raise ValueError("manual bandwidth_x must be positive")
            if not (self.bandwidth_y and self.bandwidth_y > 0):
                raise ValueError("manual bandwidth_y must be positive")
        if self.quantile_grid_size < 64:
            raise ValueError("quantile_grid_size must be >= 64")
        if isinstance(self.baseline_y, str):
            if self.baseline_y != "median":
                raise ValueError("baseline_y must be 'median' or an explicit value")
        elif not self.baseline_y > 0:
            raise ValueError("explicit baseline_y must be positive")
        if self.tie_mode not in TIE_MODES:
            raise ValueError(f"tie_mode must be one of {TIE_MODES}")
        if self.reference_x not in REFERENCE_X_POLICIES:
            raise ValueError(f"reference_x must be one of {REFERENCE_X_POLICIES}")
        if not 0.0 < self.anchor_tau < 1.0:
            raise ValueError("anchor_tau must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class EfficiencyEstimate:
    team_id: str
    task: str
    attempt: int
    tau: float
    a_raw: float
    a_normalized: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")

    @property
    def slice_key(self) -> SliceKey:
        return (self.task, self.attempt)


@dataclass(frozen=True)
class SliceDiagnostics:
    task: str
    attempt: int
    n_obs: int
    bandwidth_x: float
    bandwidth_y: float
    x_reference: float
    y_baseline: float
    anchor_raw: float
    min_raw: float
    degenerate_scale: bool = False


@dataclass(frozen=True)
class RecoveryResult:
    """Per-observation estimates aligned to the input dataset.

    ``estimates[i]`` is None when observation i belongs to a slice that
    failed; the failure reason is in ``errors`` under the slice key.
    """

    estimates: list[EfficiencyEstimate | None]
    slices: dict[SliceKey, SliceDiagnostics]
    errors: dict[SliceKey, str]

    def ok(self) -> list[EfficiencyEstimate]:
        return [e for e in self.estimates if e is not None]


def _kernel(u: np.ndarray, kind: str) -> np.ndarray:
    if kind == "gaussian":
        return np.exp(-0.5 * u * u)
    return np.maximum(0.0, 0.75 * (1.0 - u * u))


def silverman_bandwidth(values) -> float:
    """Rule-of-thumb bandwidth 1.06 * sd * n^(-1/5); 1.0 if the series is flat."""
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    if n < 2:
        return 1.0
    sd = float(arr.std(ddof=1))
    if sd <= 0.0:
        return 1.0
    return 1.06 * sd * n ** (-0.2)


def resolve_bandwidths(xs, ys, cfg: KernelConfig) -> tuple[float, float]:
    if cfg.bandwidth_rule == "manual":
        return float(cfg.bandwidth_x), float(cfg.bandwidth_y)
    return silverman_bandwidth(xs), silverman_bandwidth(ys)


def _resolve_baseline(ys: np.ndarray, cfg: KernelConfig) -> float:
    if isinstance(cfg.baseline_y, str):
        return float(np.median(ys))
    return float(cfg.baseline_y)


def _weights(
    xs: np.ndarray,
    ys: np.ndarray,
    x0: float,
    y0: float,
    bwx: float,
    bwy: float,
    kind: str,
) -> np.ndarray:
    return _kernel((xs - x0) / bwx, kind) * _kernel((ys - y0) / bwy, kind)


def conditional_rank(
    target: TeamTaskObservation,
    dataset: Sequence[TeamTaskObservation],
    cfg: KernelConfig,
) -> float:
    """Kernel-weighted conditional rank of the target's output at its inputs.

    ``dataset`` must already be restricted to the target's (task, attempt)
    slice. With ``leave_one_out`` set, entries that are the target object
    itself are excluded from the sum.
    """
    if not dataset:
        raise EmptyTaskSlice("conditional rank needs a non-empty slice")
    xs = np.asarray([o.x_input for o in dataset])
    ys = np.asarray([o.y_input for o in dataset])
    hs = np.asarray([o.h_output for o in dataset])
    bwx, bwy = resolve_bandwidths(xs, ys, cfg)
    w = _weights(xs, ys, target.x_input, target.y_input, bwx, bwy, cfg.kernel)
    if cfg.leave_one_out:
        for i, obs in enumerate(dataset):
            if obs is target:
                w[i] = 0.0
    total = float(w.sum())
    if total < SUPPORT_EPS:
        raise InsufficientSupport(
            f"total kernel weight {total:.3e} at (x={target.x_input}, y={target.y_input})"
        )
    if cfg.tie_mode == "le":
        hit = hs <= target.h_output
    else:
        hit = hs < target.h_output
    return float((w * hit).sum() / total)


@dataclass(frozen=True)
class ReferenceDistribution:
    """Weighted conditional distribution of the scaled output h/x_target.

    ``quantile`` interpolates linearly on an equally spaced tau grid;
    ``cdf`` is the right-continuous weighted empirical CDF on the
    positive-weight support.
    """

    x_target: float
    y_baseline: float
    tau_grid: np.ndarray
    value_grid: np.ndarray
    support_values: np.ndarray
    support_cdf: np.ndarray

    def quantile(self, tau):
        return np.interp(tau, self.tau_grid, self.value_grid)

    def cdf(self, value):
        idx = np.searchsorted(self.support_values, value, side="right")
        cdf = np.concatenate([[0.0], self.support_cdf])
        return cdf[idx]


def build_reference(
    dataset: Sequence[TeamTaskObservation],
    x_target: float,
    cfg: KernelConfig,
    bandwidths: tuple[float, float] | None = None,
    y_baseline: float | None = None,
) -> ReferenceDistribution:
    """Build the reference distribution of h/x_target at (x_target, baseline y)."""
    if not dataset:
        raise EmptyTaskSlice("reference distribution needs a non-empty slice")
    xs = np.asarray([o.x_input for o in dataset])
    ys = np.asarray([o.y_input for o in dataset])
    hs = np.asarray([o.h_output for o in dataset])
    bwx, bwy = bandwidths if bandwidths is not None else resolve_bandwidths(xs, ys, cfg)
    y0 = y_baseline if y_baseline is not None else _resolve_baseline(ys, cfg)
    w = _weights(xs, ys, x_target, y0, bwx, bwy, cfg.kernel)
    return _reference_from_weights(hs / x_target, w, x_target, y0, cfg)


def _reference_from_weights(
    values: np.ndarray,
    weights: np.ndarray,
    x_target: float,
    y_baseline: float,
    cfg: KernelConfig,
) -> ReferenceDistribution:
    mask = weights > 0.0
    total = float(weights[mask].sum())
    if total < SUPPORT_EPS:
        raise InsufficientSupport(
            f"total reference weight {total:.3e} at (x={x_target}, y={y_baseline})"
        )
    v = values[mask]
    w = weights[mask]
    order = np.argsort(v, kind="stable")
    v = v[order]
    cum = np.cumsum(w[order]) / total
    cum[-1] = 1.0
    tau_grid = np.linspace(0.0, 1.0, cfg.quantile_grid_size)
    idx = np.searchsorted(cum, tau_grid, side="left")
    idx = np.clip(idx, 0, v.size - 1)
    return ReferenceDistribution(
        x_target=float(x_target),
        y_baseline=float(y_baseline),
        tau_grid=tau_grid,
        value_grid=v[idx],
        support_values=v,
        support_cdf=cum,
    )


def reference_quantile(
    tau: float,
    x_target: float,
    dataset: Sequence[TeamTaskObservation],
    cfg: KernelConfig,
) -> float:
    """Invert the reference conditional distribution at rank ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    ref = build_reference(dataset, x_target, cfg)
    return float(ref.quantile(tau))


def _slice_taus(
    xs: np.ndarray,
    ys: np.ndarray,
    hs: np.ndarray,
    bwx: float,
    bwy: float,
    cfg: KernelConfig,
) -> np.ndarray:
    """Vectorized conditional ranks for a whole slice, chunked to bound memory."""
    n = hs.size
    taus = np.empty(n)
    chunk = max(1, 4_000_000 // n)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        w = _kernel((xs[None, :] - xs[s:e, None]) / bwx, cfg.kernel)
        w *= _kernel((ys[None, :] - ys[s:e, None]) / bwy, cfg.kernel)
        if cfg.leave_one_out:
            w[np.arange(e - s), np.arange(s, e)] = 0.0
        if cfg.tie_mode == "le":
            hit = hs[None, :] <= hs[s:e, None]
        else:
            hit = hs[None, :] < hs[s:e, None]
        total = w.sum(axis=1)
        if np.any(total < SUPPORT_EPS):
            bad = int(np.argmax(total < SUPPORT_EPS)) + s
            raise InsufficientSupport(
                f"total kernel weight below {SUPPORT_EPS} at slice row {bad}"
            )
        taus[s:e] = (w * hit).sum(axis=1) / total
    return np.clip(taus, 0.0, 1.0)


def recover_efficiency(
    dataset: Sequence[TeamTaskObservation],
    cfg: KernelConfig | None = None,
) -> RecoveryResult:
    """Recover latent efficiency for every observation, slice by slice.

    A slice failure (too small, no support) is recorded and does not abort
    the other slices. Estimates come back normalized: slice minimum at 1,
    median-efficiency baseline at 100.
    """
    cfg = cfg or KernelConfig()
    by_slice: dict[SliceKey, list[int]] = {}
    for i, obs in enumerate(dataset):
        by_slice.setdefault(obs.slice_key, []).append(i)

    estimates: list[EfficiencyEstimate | None] = [None] * len(dataset)
    slices: dict[SliceKey, SliceDiagnostics] = {}
    errors: dict[SliceKey, str] = {}
    raw_by_slice: dict[SliceKey, list[int]] = {}

    for key in sorted(by_slice, key=lambda k: (TASKS.index(k[0]), k[1])):
        idx = by_slice[key]
        if len(idx) < MIN_SLICE_SIZE:
            errors[key] = (
                f"slice {key} has {len(idx)} observations; need >= {MIN_SLICE_SIZE}"
            )
            continue
        xs = np.asarray([dataset[i].x_input for i in idx])
        ys = np.asarray([dataset[i].y_input for i in idx])
        hs = np.asarray([dataset[i].h_output for i in idx])
        bwx, bwy = resolve_bandwidths(xs, ys, cfg)
        y0 = _resolve_baseline(ys, cfg)
        x_ref = float(np.median(xs))
        slice_data = [dataset[i] for i in idx]
        try:
            taus = _slice_taus(xs, ys, hs, bwx, bwy, cfg)
            anchor_ref = build_reference(
                slice_data, x_ref, cfg, bandwidths=(bwx, bwy), y_baseline=y0
            )
            if cfg.reference_x == "slice_median":
                a_raw = np.asarray(anchor_ref.quantile(taus), dtype=np.float64)
            else:
                a_raw = np.empty(len(idx))
                for j, i in enumerate(idx):
                    ref = build_reference(
                        slice_data,
                        dataset[i].x_input,
                        cfg,
                        bandwidths=(bwx, bwy),
                        y_baseline=y0,
                    )
                    a_raw[j] = ref.quantile(taus[j])
            anchor_raw = float(anchor_ref.quantile(cfg.anchor_tau))
        except (InsufficientSupport, EmptyTaskSlice) as exc:
            errors[key] = str(exc)
            continue

        for j, i in enumerate(idx):
            obs = dataset[i]
            estimates[i] = EfficiencyEstimate(
                team_id=obs.team_id,
                task=obs.task,
                attempt=obs.attempt,
                tau=float(taus[j]),
                a_raw=float(a_raw[j]),
            )
        raw_by_slice[key] = idx
        slices[key] = SliceDiagnostics(
            task=key[0],
            attempt=key[1],
            n_obs=len(idx),
            bandwidth_x=bwx,
            bandwidth_y=bwy,
            x_reference=x_ref,
            y_baseline=y0,
            anchor_raw=anchor_raw,
            min_raw=float(a_raw.min()),
        )

    if raw_by_slice:
        flat = [estimates[i] for idxs in raw_by_slice.values() for i in idxs]
        anchors = {key: slices[key].anchor_raw for key in raw_by_slice}
        normalized, degenerate = normalize_efficiency(flat, anchors)
        pos = 0
        for key, idxs in raw_by_slice.items():
            for i in idxs:
                estimates[i] = normalized[pos]
                pos += 1
            if degenerate[key]:
                slices[key] = replace(slices[key], degenerate_scale=True)

    return RecoveryResult(estimates=estimates, slices=slices, errors=errors)


def normalize_efficiency(
    estimates: Sequence[EfficiencyEstimate],
    anchors: Mapping[SliceKey, float],
) -> tuple[list[EfficiencyEstimate], dict[SliceKey, bool]]:
    """Fill ``a_normalized`` with the two-point affine map per slice.

    The slice minimum maps to 1 and the anchor value to 100. When the anchor
    does not sit strictly above the minimum the scale is degenerate: the
    slice is flagged, a warning is emitted, and a unit-slope fallback
    (min at 1) is applied instead.
    """
    mins: dict[SliceKey, float] = {}
    for est in estimates:
        key = est.slice_key
        mins[key] = min(mins.get(key, np.inf), est.a_raw)

    degenerate: dict[SliceKey, bool] = {}
    scales: dict[SliceKey, float] = {}
    for key, mn in mins.items():
        if key not in anchors:
            raise ValueError(f"no anchor supplied for slice {key}")
        anchor = anchors[key]
        span = anchor - mn
        if span <= 1e-12 * max(1.0, abs(anchor)):
            degenerate[key] = True
            scales[key] = 1.0
            warnings.warn(
                f"slice {key}: anchor {anchor} does not exceed minimum {mn}; "
                "unit-slope normalization applied",
                DegenerateScaleWarning,
                stacklevel=2,
            )
        else:
            degenerate[key] = False
            scales[key] = (SCALE_ANCHOR - SCALE_MIN) / span

    out = [
        replace(
            est,
            a_normalized=SCALE_MIN + (est.a_raw - mins[est.slice_key]) * scales[est.slice_key],
        )
        for est in estimates
    ]
    return out, degenerate


def slice_label(task: str, attempt: int) -> str:
    ordinal = {1: "1st", 2: "2nd"}[attempt]
    return f"{task.capitalize()}-phase ({ordinal} attempt)"


def summarize_efficiency(estimates: Sequence[EfficiencyEstimate]) -> pd.DataFrame:
    """Slice-level summary of normalized efficiency, one row per slice.

    Values are first averaged within team (mean implied efficiency), so N
    counts unique teams. SD uses the n-1 denominator and is 0 for a single
    team.
    """
    if not estimates:
        raise ValueError("no estimates to summarize")
    rows = []
    frame = pd.DataFrame(
        {
            "task": [e.task for e in estimates],
            "attempt": [e.attempt for e in estimates],
            "team_id": [e.team_id for e in estimates],
            "value": [e.a_normalized for e in estimates],
        }
    )
    if frame["value"].isna().any():
        raise ValueError("estimates must be normalized before summarizing")
    for (task, attempt), grp in sorted(
        frame.groupby(["task", "attempt"]),
        key=lambda kv: (TASKS.index(kv[0][0]), kv[0][1]),
    ):
        team_means = grp.groupby("team_id")["value"].mean()
        sd = float(team_means.std(ddof=1)) if len(team_means) > 1 else 0.0
        rows.append(
            {
                "slice": slice_label(task, attempt),
                "N": int(team_means.size),
                "Mean": float(team_means.mean()),
                "SD": sd,
                "Min": float(team_means.min()),
                "Max": float(team_means.max()),
            }
        )
    return pd.DataFrame(rows, columns=["slice", "N", "Mean", "SD", "Min", "Max"])

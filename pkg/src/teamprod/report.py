"""Descriptive artifacts: tercile cross-tabs, heatmap cell tables, summaries.

Everything is emitted as data tables (CSV); plotting is out of scope. Count
crosstabs always total the number of in-scope runs; mean crosstabs mark
empty cells as missing rather than zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .affinity import EfficiencyEstimate, slice_label
from .records import TASKS

BINS = (1, 2, 3)


@dataclass(frozen=True)
class CrossTab3x3:
    row_label: str
    col_label: str
    cells: np.ndarray  # 3x3; counts are integers, means may hold NaN
    cell_kind: str  # "count" | "mean"

    def __post_init__(self) -> None:
        if self.cells.shape != (3, 3):
            raise ValueError("crosstab must be 3x3")
        if self.cell_kind not in ("count", "mean"):
            raise ValueError("cell_kind must be 'count' or 'mean'")
        if self.cell_kind == "count":
            if np.any(self.cells < 0) or np.any(self.cells != np.round(self.cells)):
                raise ValueError("count cells must be non-negative integers")

    @property
    def total(self) -> float:
        return float(np.nansum(self.cells))


def _check_bins(bins: np.ndarray, what: str) -> None:
    if not np.isin(bins, BINS).all():
        raise ValueError(f"{what} must take values in {BINS}")


def pairing_crosstab(
    p1_bins,
    p2_bins,
    kind: str = "count",
    values=None,
    row_label: str = "P1 skill bin",
    col_label: str = "P2 skill bin",
) -> CrossTab3x3:
    """3x3 table of run counts or mean outcomes by (P1 bin, P2 bin).

    ``values`` is required for ``kind="mean"`` and must align with the bin
    vectors. Empty cells are 0 for counts and NaN for means.
    """
    p1 = np.asarray(p1_bins, dtype=np.int64)
    p2 = np.asarray(p2_bins, dtype=np.int64)
    if p1.shape != p2.shape:
        raise ValueError("bin vectors must align")
    if p1.size:
        _check_bins(p1, "p1_bins")
        _check_bins(p2, "p2_bins")
    counts = np.zeros((3, 3), dtype=np.float64)
    np.add.at(counts, (p1 - 1, p2 - 1), 1.0)
    if kind == "count":
        return CrossTab3x3(row_label, col_label, counts, "count")
    if kind != "mean":
        raise ValueError("kind must be 'count' or 'mean'")
    if values is None:
        raise ValueError("mean crosstab needs values")
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != p1.shape:
        raise ValueError("values must align with bins")
    sums = np.zeros((3, 3), dtype=np.float64)
    np.add.at(sums, (p1 - 1, p2 - 1), vals)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / counts, np.nan)
    return CrossTab3x3(row_label, col_label, means, "mean")


def cross_skill_crosstab(
    p1_start_bins,
    p1_riding_bins,
    p2_start_bins,
    p2_riding_bins,
) -> tuple[CrossTab3x3, CrossTab3x3]:
    """Count tables pairing each player's skill in one task against the
    partner's skill in the other: (P1 start x P2 riding, P1 riding x P2 start)."""
    a = pairing_crosstab(
        p1_start_bins,
        p2_riding_bins,
        row_label="P1 start-skill bin",
        col_label="P2 riding-skill bin",
    )
    b = pairing_crosstab(
        p1_riding_bins,
        p2_start_bins,
        row_label="P1 riding-skill bin",
        col_label="P2 start-skill bin",
    )
    return a, b


def efficiency_heatmap_cells(
    estimates: Sequence[EfficiencyEstimate],
    team_members: Mapping[str, tuple[str, str]],
    p1_skill_rank: Mapping[str, int],
    p2_skill_rank: Mapping[str, int],
) -> pd.DataFrame:
    """Heatmap-ready cell table: mean normalized efficiency per observed pair.

    Axis positions come from the supplied per-role skill ranks. Unobserved
    pairs emit no row. One row per (task, attempt, p1_rank, p2_rank).
    """
    rows = []
    for est in estimates:
        if est.a_normalized is None:
            raise ValueError("estimates must be normalized first")
        a1, a2 = team_members[est.team_id]
        rows.append(
            {
                "task": est.task,
                "attempt": est.attempt,
                "p1_rank": int(p1_skill_rank[a1]),
                "p2_rank": int(p2_skill_rank[a2]),
                "a_normalized": est.a_normalized,
            }
        )
    if not rows:
        return pd.DataFrame(
            columns=["task", "attempt", "p1_rank", "p2_rank", "mean_a_normalized", "n_runs"]
        )
    frame = pd.DataFrame(rows)
    out = (
        frame.groupby(["task", "attempt", "p1_rank", "p2_rank"], as_index=False)
        .agg(mean_a_normalized=("a_normalized", "mean"), n_runs=("a_normalized", "size"))
    )
    out["task_order"] = out["task"].map({t: i for i, t in enumerate(TASKS)})
    out = out.sort_values(["task_order", "attempt", "p1_rank", "p2_rank"]).drop(
        columns="task_order"
    )
    return out.reset_index(drop=True)


def write_crosstab(tab: CrossTab3x3, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        tab.cells,
        index=pd.Index(BINS, name=tab.row_label),
        columns=[str(b) for b in BINS],
    )
    frame.insert(0, "cell_kind", tab.cell_kind)
    frame.insert(1, "col_label", tab.col_label)
    frame.to_csv(path)


def read_crosstab(path: str | Path) -> CrossTab3x3:
    frame = pd.read_csv(path, index_col=0)
    kind = str(frame["cell_kind"].iloc[0])
    col_label = str(frame["col_label"].iloc[0])
    cells = frame[[str(b) for b in BINS]].to_numpy(dtype=np.float64)
    return CrossTab3x3(
        row_label=str(frame.index.name),
        col_label=col_label,
        cells=cells,
        cell_kind=kind,
    )


def summary_table_label(task: str, attempt: int) -> str:
    return slice_label(task, attempt)

"""Readers and writers for the pipeline's intermediate artifacts.

JSON lines for record-like data, CSV for tables. Floats are written with
``repr`` precision so that writing and re-reading is value-exact and reruns
produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

from .affinity import EfficiencyEstimate, slice_label
from .elasticity import ElasticityPoint, PolyFit
from .fe import FixedEffectFit, SkillProfile
from .affinity import TeamTaskObservation


def _open_out(path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", encoding="utf-8")


def write_observations(obs: Iterable[TeamTaskObservation], path: str | Path) -> None:
    with _open_out(path) as fh:
        for o in obs:
            fh.write(
                json.dumps(
                    {
                        "team_id": o.team_id,
                        "task": o.task,
                        "attempt": o.attempt,
                        "x_input": o.x_input,
                        "y_input": o.y_input,
                        "h_output": o.h_output,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


def read_observations(path: str | Path) -> list[TeamTaskObservation]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TeamTaskObservation(**json.loads(line)))
    return out


def write_estimates(estimates: Sequence[EfficiencyEstimate], path: str | Path) -> None:
    frame = pd.DataFrame(
        {
            "team_id": [e.team_id for e in estimates],
            "task": [e.task for e in estimates],
            "attempt": [e.attempt for e in estimates],
            "tau": [e.tau for e in estimates],
            "a_raw": [e.a_raw for e in estimates],
            "a_normalized": [e.a_normalized for e in estimates],
        }
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def read_estimates(path: str | Path) -> list[EfficiencyEstimate]:
    frame = pd.read_csv(path)
    return [
        EfficiencyEstimate(
            team_id=str(r.team_id),
            task=str(r.task),
            attempt=int(r.attempt),
            tau=float(r.tau),
            a_raw=float(r.a_raw),
            a_normalized=None if pd.isna(r.a_normalized) else float(r.a_normalized),
        )
        for r in frame.itertuples(index=False)
    ]


def write_skills(profiles: Sequence[SkillProfile], path: str | Path) -> None:
    frame = pd.DataFrame(
        {
            "athlete_id": [p.athlete_id for p in profiles],
            "dimension": [p.dimension for p in profiles],
            "raw_fe": [p.raw_fe for p in profiles],
            "transformed_skill": [p.transformed_skill for p in profiles],
            "n_runs": [p.n_runs for p in profiles],
        }
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def read_skills(path: str | Path) -> list[SkillProfile]:
    frame = pd.read_csv(path)
    return [
        SkillProfile(
            athlete_id=str(r.athlete_id),
            dimension=str(r.dimension),
            raw_fe=float(r.raw_fe),
            n_runs=int(r.n_runs),
            transformed_skill=(
                None if pd.isna(r.transformed_skill) else float(r.transformed_skill)
            ),
        )
        for r in frame.itertuples(index=False)
    ]


def write_coefficients(fit: FixedEffectFit, path: str | Path) -> None:
    rows = [{"factor": "intercept", "level": "", "estimate": fit.intercept}]
    for factor, levels in fit.coefficients.items():
        for level, estimate in levels.items():
            rows.append({"factor": factor, "level": str(level), "estimate": estimate})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=["factor", "level", "estimate"]).to_csv(path, index=False)


def write_residuals(residuals, row_ids: Sequence[int], path: str | Path) -> None:
    with _open_out(path) as fh:
        for rid, res in zip(row_ids, residuals):
            fh.write(json.dumps({"row_id": int(rid), "residual": float(res)}))
            fh.write("\n")


def write_summary(summary: pd.DataFrame, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    summary.to_csv(path, index=False)


def write_poly_fits(fits: Sequence[PolyFit], path: str | Path) -> None:
    rows = []
    for f in fits:
        task, attempt = f.slice_key if f.slice_key else ("", 0)
        rows.append(
            {
                "task": task,
                "attempt": attempt,
                "beta1": f.beta1,
                "beta2": f.beta2,
                "beta3": f.beta3,
                "beta4": f.beta4,
                "beta5": f.beta5,
                "r_squared": f.r_squared,
                "n_obs": f.n_obs,
            }
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)


def write_elasticities(points: Sequence[ElasticityPoint], path: str | Path) -> None:
    rows = []
    for p in points:
        task, attempt = p.slice_key if p.slice_key else ("", 0)
        ax, y, x, h = p.evaluated_at
        rows.append(
            {
                "team_id": p.team_id,
                "task": task,
                "attempt": attempt,
                "elasticity_x": p.elasticity_x,
                "elasticity_y": p.elasticity_y,
                "ax": ax,
                "y": y,
                "x": x,
                "h": h,
            }
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)


def summary_row_labels() -> list[str]:
    return [slice_label(t, a) for t in ("start", "riding") for a in (1, 2)]

"""End-to-end orchestration: data -> fixed effects -> transform -> efficiency
-> elasticity -> reports, with a hashed artifact manifest.

The manifest lists every artifact with its sha256 over file bytes. Nothing
time-dependent is written, so rerunning with the same inputs, config, and
seed reproduces every hash bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import io as tio
from .affinity import KernelConfig, TeamTaskObservation, recover_efficiency, summarize_efficiency
from .elasticity import elasticity_at, fit_production_polynomial
from .errors import ConfigError, StageError
from .fe import FixedEffectSpec, SkillProfile, athlete_skill, estimate_fixed_effects, residualize_team
from .ingest import (
    drop_duplicate_runs,
    link_athletes,
    load_schema,
    parse_results,
    truncate_attempts,
    write_exclusion_log,
)
from .records import DIMENSIONS, TASKS, RunRecord, iter_monobob, iter_team, read_dataset, write_dataset
from .report import (
    cross_skill_crosstab,
    efficiency_heatmap_cells,
    pairing_crosstab,
    write_crosstab,
)
from .synth import DGPConfig, generate, write_truth
from .transform import DEFAULT_FLOOR, positive_shift, tercile_bins

log = logging.getLogger(__name__)

STAGES = ("data", "fe", "transform", "estimate", "elasticity", "report")


@dataclass
class PipelineResult:
    status: int
    out_dir: Path
    manifest: dict

    @property
    def ok(self) -> bool:
        return self.status == 0


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class _Artifacts:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.entries: dict[str, dict[str, str]] = {}

    def add(self, name: str, path: Path) -> None:
        self.entries[name] = {
            "path": str(path.relative_to(self.out_dir)),
            "sha256": _sha256(path),
        }


def load_config(path: str | Path) -> dict:
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _dataset_records(cfg: Mapping[str, Any], out: Path, art: _Artifacts, seed: int):
    """Data stage: synth generation or CSV ingestion into the canonical dataset."""
    exclusions: list[str] = []
    if "synth" in cfg:
        synth_cfg = dict(cfg["synth"])
        synth_cfg.setdefault("seed", seed)
        dgp = DGPConfig.from_dict(synth_cfg)
        records, truth = generate(dgp)
        truth_path = out / "truth.json"
        write_truth(truth, truth_path)
        art.add("truth", truth_path)
    elif "ingest" in cfg:
        ing = cfg["ingest"]
        try:
            input_path = Path(ing["input"])
            schema_path = Path(ing["schema"])
        except KeyError as exc:
            raise ConfigError(f"ingest config missing {exc}") from None
        schema = load_schema(schema_path)
        with input_path.open("r", encoding="utf-8") as fh:
            records = parse_results(fh, schema)
        records = truncate_attempts(records, int(ing.get("max_attempts", 2)))
        records, dup_log = drop_duplicate_runs(records)
        exclusions.extend(dup_log)
    else:
        raise ConfigError("config needs a 'synth' or 'ingest' section")

    mono = list(iter_monobob(records))
    team = list(iter_team(records))
    linked = link_athletes(mono, team)
    exclusions.extend(linked.exclusions)
    retained = mono + linked.team_runs

    data_path = out / "dataset.jsonl"
    write_dataset(retained, data_path)
    art.add("dataset", data_path)
    excl_path = out / "exclusions.txt"
    write_exclusion_log(exclusions, excl_path)
    art.add("exclusions", excl_path)
    return mono, linked.team_runs, exclusions


def _fe_stage(cfg, mono, team_runs, out: Path, art: _Artifacts):
    fe_cfg = cfg.get("fe", {})
    tolerance = float(fe_cfg.get("tolerance", 1e-10))
    max_iterations = int(fe_cfg.get("max_iterations", 10_000))
    policy = str(fe_cfg.get("reference_policy", "mean_zero"))

    run_counts = Counter(r.athlete1_id for r in mono)
    profiles: list[SkillProfile] = []
    skill_log: list[str] = []
    for dim in DIMENSIONS:
        spec = FixedEffectSpec(
            outcome=dim,
            factors=("athlete", "event", "starting_order"),
            reference_policy=policy,
            tolerance=tolerance,
            max_iterations=max_iterations,
        )
        rows = [
            (r.time_for(dim), (r.athlete1_id, r.event_id, r.starting_number))
            for r in mono
        ]
        fit = estimate_fixed_effects(rows, spec)
        coef_path = out / f"fe_coefficients_{dim}.csv"
        tio.write_coefficients(fit, coef_path)
        art.add(f"fe_coefficients_{dim}", coef_path)
        dim_profiles, dropped = athlete_skill(fit, run_counts)
        profiles.extend(dim_profiles)
        skill_log.extend(dropped)

    residuals: dict[tuple[str, int], np.ndarray] = {}
    runs_by_attempt: dict[int, list[RunRecord]] = {}
    for rec in team_runs:
        runs_by_attempt.setdefault(rec.attempt_index, []).append(rec)
    for task in TASKS:
        for attempt, runs in sorted(runs_by_attempt.items()):
            rows = [(r.time_for(task), r.event_id, r.starting_number) for r in runs]
            res = residualize_team(
                rows, outcome=task, tolerance=tolerance, max_iterations=max_iterations
            )
            residuals[(task, attempt)] = res
            res_path = out / f"team_residuals_{task}_{attempt}.jsonl"
            tio.write_residuals(res, range(len(runs)), res_path)
            art.add(f"team_residuals_{task}_{attempt}", res_path)
    return profiles, skill_log, residuals, runs_by_attempt


def _transform_stage(cfg, profiles, residuals, runs_by_attempt, out: Path, art: _Artifacts):
    floor = float(cfg.get("transform", {}).get("floor", DEFAULT_FLOOR))

    by_dim: dict[str, list[SkillProfile]] = {}
    for p in profiles:
        by_dim.setdefault(p.dimension, []).append(p)
    transformed: dict[tuple[str, str], float] = {}
    filled: list[SkillProfile] = []
    for dim, plist in by_dim.items():
        # Lower fixed effect means faster, so the shift flips orientation.
        shifted = positive_shift([p.raw_fe for p in plist], floor, source_tag=f"skill_{dim}")
        for p, v in zip(plist, shifted.values):
            q = p.with_skill(float(v))
            filled.append(q)
            transformed[(p.athlete_id, dim)] = float(v)
    skills_path = out / "skills.csv"
    tio.write_skills(filled, skills_path)
    art.add("skills", skills_path)

    shifted_h: dict[tuple[str, int], np.ndarray] = {}
    for key, res in residuals.items():
        shifted_h[key] = positive_shift(res, floor, source_tag=f"team_{key[0]}_{key[1]}").values

    observations: list[TeamTaskObservation] = []
    for task in TASKS:
        for attempt, runs in sorted(runs_by_attempt.items()):
            hs = shifted_h[(task, attempt)]
            for rec, h in zip(runs, hs):
                observations.append(
                    TeamTaskObservation(
                        team_id=rec.team_id,
                        task=task,
                        attempt=attempt,
                        x_input=transformed[(rec.athlete1_id, task)],
                        y_input=transformed[(rec.athlete2_id, task)],
                        h_output=float(h),
                    )
                )
    obs_path = out / "observations.jsonl"
    tio.write_observations(observations, obs_path)
    art.add("observations", obs_path)
    return transformed, shifted_h, observations, filled


def _estimate_stage(cfg, observations, out: Path, art: _Artifacts):
    est_cfg = dict(cfg.get("estimate", {}))
    kernel_cfg = KernelConfig(**est_cfg)
    result = recover_efficiency(observations, kernel_cfg)
    if result.errors:
        detail = "; ".join(f"{k}: {v}" for k, v in result.errors.items())
        log.warning("efficiency slices failed: %s", detail)
    estimates = result.ok()
    if not estimates:
        raise ValueError(f"no efficiency slice could be estimated: {result.errors}")
    est_path = out / "estimates.csv"
    tio.write_estimates(estimates, est_path)
    art.add("estimates", est_path)
    summary = summarize_efficiency(estimates)
    sum_path = out / "summary.csv"
    tio.write_summary(summary, sum_path)
    art.add("summary", sum_path)
    return result, estimates


def _elasticity_stage(cfg, result, observations, out: Path, art: _Artifacts):
    literal = bool(cfg.get("elasticity", {}).get("literal_x_scaling", False))
    by_slice: dict[tuple[str, int], list[tuple[TeamTaskObservation, Any]]] = {}
    for obs, est in zip(observations, result.estimates):
        if est is not None:
            by_slice.setdefault(est.slice_key, []).append((obs, est))

    fits = []
    points = []
    for key in sorted(by_slice, key=lambda k: (TASKS.index(k[0]), k[1])):
        pairs = by_slice[key]
        if len(pairs) < 6:
            log.warning("slice %s too small for the production polynomial", key)
            continue
        triples = [(e.a_raw * o.x_input, o.y_input, o.h_output) for o, e in pairs]
        fit = fit_production_polynomial(triples, slice_key=key)
        fits.append(fit)
        for o, e in pairs:
            points.append(
                elasticity_at(
                    fit,
                    (e.a_raw * o.x_input, o.y_input, o.x_input, o.h_output),
                    team_id=o.team_id,
                    literal_x_scaling=literal,
                )
            )
    fits_path = out / "production_polynomials.csv"
    tio.write_poly_fits(fits, fits_path)
    art.add("production_polynomials", fits_path)
    pts_path = out / "elasticities.csv"
    tio.write_elasticities(points, pts_path)
    art.add("elasticities", pts_path)
    return fits, points


def _report_stage(transformed, shifted_h, runs_by_attempt, estimates, out: Path, art: _Artifacts):
    drivers = sorted({r.athlete1_id for runs in runs_by_attempt.values() for r in runs})
    brakemen = sorted({r.athlete2_id for runs in runs_by_attempt.values() for r in runs})

    bins: dict[tuple[str, str], int] = {}
    for role, members in (("p1", drivers), ("p2", brakemen)):
        for dim in TASKS:
            values = [transformed[(a, dim)] for a in members]
            for a, b in zip(members, tercile_bins(values)):
                bins[(role, f"{a}|{dim}")] = int(b)

    all_runs = [r for _, runs in sorted(runs_by_attempt.items()) for r in runs]

    def run_bins(dim_p1: str, dim_p2: str) -> tuple[list[int], list[int]]:
        b1 = [bins[("p1", f"{r.athlete1_id}|{dim_p1}")] for r in all_runs]
        b2 = [bins[("p2", f"{r.athlete2_id}|{dim_p2}")] for r in all_runs]
        return b1, b2

    for dim in TASKS:
        b1, b2 = run_bins(dim, dim)
        tab = pairing_crosstab(
            b1,
            b2,
            row_label=f"P1 {dim}-skill bin",
            col_label=f"P2 {dim}-skill bin",
        )
        path = out / f"crosstab_counts_{dim}.csv"
        write_crosstab(tab, path)
        art.add(f"crosstab_counts_{dim}", path)

    b1s, b2s = run_bins("start", "start")
    b1r, b2r = run_bins("riding", "riding")
    cross_a, cross_b = cross_skill_crosstab(b1s, b1r, b2s, b2r)
    for tag, tab in (("p1start_p2riding", cross_a), ("p1riding_p2start", cross_b)):
        path = out / f"crosstab_cross_{tag}.csv"
        write_crosstab(tab, path)
        art.add(f"crosstab_cross_{tag}", path)

    for (task, attempt), hs in sorted(shifted_h.items(), key=lambda kv: (TASKS.index(kv[0][0]), kv[0][1])):
        runs = runs_by_attempt[attempt]
        b1 = [bins[("p1", f"{r.athlete1_id}|{task}")] for r in runs]
        b2 = [bins[("p2", f"{r.athlete2_id}|{task}")] for r in runs]
        tab = pairing_crosstab(
            b1,
            b2,
            kind="mean",
            values=hs,
            row_label=f"P1 {task}-skill bin",
            col_label=f"P2 {task}-skill bin",
        )
        path = out / f"crosstab_mean_{task}_{attempt}.csv"
        write_crosstab(tab, path)
        art.add(f"crosstab_mean_{task}_{attempt}", path)

    # Figure-style heatmap cells: both axes ordered by solo start skill.
    team_members = {r.team_id: (r.athlete1_id, r.athlete2_id) for r in all_runs}
    p1_rank = {
        a: i + 1
        for i, a in enumerate(sorted(drivers, key=lambda a: transformed[(a, "start")]))
    }
    p2_rank = {
        a: i + 1
        for i, a in enumerate(sorted(brakemen, key=lambda a: transformed[(a, "start")]))
    }
    cells = efficiency_heatmap_cells(estimates, team_members, p1_rank, p2_rank)
    path = out / "heatmap_cells.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    cells.to_csv(path, index=False)
    art.add("heatmap_cells", path)


def run_pipeline(
    config: Mapping[str, Any],
    out_dir: str | Path | None = None,
    seed: int | None = None,
) -> PipelineResult:
    """Run every stage, writing artifacts and a hashed manifest to ``out_dir``.

    Returns status 0 on success. A stage failure marks the failed stage in
    the manifest, keeps the artifacts written so far, and returns status 1.
    Bad configuration raises ConfigError instead.
    """
    if not isinstance(config, Mapping):
        raise ConfigError("config must be a mapping")
    out = Path(out_dir if out_dir is not None else config.get("out_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    run_seed = int(seed if seed is not None else config.get("seed", 0))

    art = _Artifacts(out)
    manifest: dict[str, Any] = {
        "config": {k: v for k, v in config.items() if k != "out_dir"},
        "seed": run_seed,
        "status": "ok",
    }

    stage = "data"
    try:
        log.info("stage data")
        mono, team_runs, _ = _dataset_records(config, out, art, run_seed)
        stage = "fe"
        log.info("stage fe: %d solo runs, %d team runs", len(mono), len(team_runs))
        profiles, skill_log, residuals, runs_by_attempt = _fe_stage(
            config, mono, team_runs, out, art
        )
        if skill_log:
            log.info("skill exclusions: %d athletes", len(skill_log))
        stage = "transform"
        log.info("stage transform")
        transformed, shifted_h, observations, _ = _transform_stage(
            config, profiles, residuals, runs_by_attempt, out, art
        )
        stage = "estimate"
        log.info("stage estimate: %d observations", len(observations))
        result, estimates = _estimate_stage(config, observations, out, art)
        stage = "elasticity"
        log.info("stage elasticity")
        _elasticity_stage(config, result, observations, out, art)
        stage = "report"
        log.info("stage report")
        _report_stage(transformed, shifted_h, runs_by_attempt, estimates, out, art)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - every stage error becomes a marked manifest
        manifest["status"] = "failed"
        manifest["failed_stage"] = stage
        manifest["error"] = str(exc)
        manifest["artifacts"] = art.entries
        _write_manifest(manifest, out)
        log.error("pipeline failed in stage %s: %s", stage, exc)
        raise StageError(stage, exc) from exc

    manifest["artifacts"] = art.entries
    _write_manifest(manifest, out)
    return PipelineResult(status=0, out_dir=out, manifest=manifest)


def _write_manifest(manifest: dict, out: Path) -> None:
    with (out / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

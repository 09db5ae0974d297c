"""Command-line interface.

Subcommands mirror the pipeline stages; ``pipeline`` runs everything from a
single JSON config. Every flag has a config-file equivalent and flags win.
Exit codes: 0 success, 1 fatal stage error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

from . import io as tio
from .affinity import KernelConfig, recover_efficiency, summarize_efficiency
from .elasticity import elasticity_at, fit_production_polynomial
from .errors import ConfigError, StageError, TeamProdError
from .fe import FixedEffectSpec, athlete_skill, estimate_fixed_effects
from .ingest import drop_duplicate_runs, link_athletes, load_schema, parse_results, truncate_attempts, write_exclusion_log
from .pipeline import load_config, run_pipeline
from .records import TASKS, iter_monobob, iter_team, read_dataset, write_dataset
from .report import cross_skill_crosstab, efficiency_heatmap_cells, pairing_crosstab, write_crosstab
from .synth import DGPConfig, generate, observations_from_truth, write_truth
from .transform import tercile_bins

CONFIG_ENV = "TEAMPROD_CONFIG"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        default=os.environ.get(CONFIG_ENV),
        help=f"JSON config path (default: ${CONFIG_ENV})",
    )
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="output file or directory")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def _config_or_empty(path: str | None) -> dict:
    return load_config(path) if path else {}


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _config_or_empty(args.config)
    synth_cfg = dict(cfg.get("synth", cfg))
    if args.seed is not None:
        synth_cfg["seed"] = args.seed
    dgp = DGPConfig.from_dict(synth_cfg) if synth_cfg else DGPConfig()
    out = Path(args.out or "synth_out")
    out.mkdir(parents=True, exist_ok=True)
    records, truth = generate(dgp)
    write_dataset(records, out / "dataset.jsonl")
    write_truth(truth, out / "truth.json")
    tio.write_observations(observations_from_truth(truth), out / "observations.jsonl")
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    schema = load_schema(args.schema)
    with Path(args.input).open("r", encoding="utf-8") as fh:
        records = parse_results(fh, schema)
    records = truncate_attempts(records, args.max_attempts)
    records, exclusions = drop_duplicate_runs(records)
    mono = list(iter_monobob(records))
    team = list(iter_team(records))
    linked = link_athletes(mono, team)
    exclusions.extend(linked.exclusions)
    out = Path(args.out or "dataset.jsonl")
    write_dataset(mono + linked.team_runs, out)
    write_exclusion_log(exclusions, out.with_suffix(".exclusions.txt"))
    print(
        f"wrote {len(mono) + len(linked.team_runs)} records to {out} "
        f"({len(exclusions)} exclusions)"
    )
    return 0


def cmd_fe(args: argparse.Namespace) -> int:
    records = read_dataset(args.dataset)
    factors = tuple(f.strip() for f in args.factors.split(",") if f.strip())
    spec = FixedEffectSpec(outcome=args.outcome, factors=factors)
    if "athlete" in factors:
        rows_src = list(iter_monobob(records))
        levels = lambda r: tuple(
            {"athlete": r.athlete1_id, "event": r.event_id, "starting_order": r.starting_number}[f]
            for f in factors
        )
    else:
        rows_src = list(iter_team(records))
        levels = lambda r: tuple(
            {"event": r.event_id, "starting_order": r.starting_number}[f] for f in factors
        )
    rows = [(r.time_for(args.outcome), levels(r)) for r in rows_src]
    fit = estimate_fixed_effects(rows, spec)
    out = Path(args.out or "fe_out")
    out.mkdir(parents=True, exist_ok=True)
    tio.write_coefficients(fit, out / f"fe_coefficients_{args.outcome}.csv")
    tio.write_residuals(fit.residuals, range(fit.n_obs), out / f"fe_residuals_{args.outcome}.jsonl")
    if "athlete" in factors:
        counts = Counter(r.athlete1_id for r in rows_src)
        profiles, dropped = athlete_skill(fit, counts)
        tio.write_skills(profiles, out / f"skills_{args.outcome}.csv")
        if dropped:
            write_exclusion_log(dropped, out / f"skills_{args.outcome}.exclusions.txt")
    print(f"fit {args.outcome} on {fit.n_obs} rows in {fit.iterations_used} sweeps")
    return 0


def _kernel_config(args: argparse.Namespace) -> KernelConfig:
    kwargs: dict = {"kernel": args.kernel, "quantile_grid_size": args.grid}
    if args.bandwidth != "auto":
        parts = [float(p) for p in args.bandwidth.split(",")]
        bx = parts[0]
        by = parts[1] if len(parts) > 1 else parts[0]
        kwargs.update(bandwidth_rule="manual", bandwidth_x=bx, bandwidth_y=by)
    return KernelConfig(**kwargs)


def cmd_estimate(args: argparse.Namespace) -> int:
    observations = tio.read_observations(args.dataset)
    if args.task != "all":
        observations = [o for o in observations if o.task == args.task]
    cfg = _kernel_config(args)
    result = recover_efficiency(observations, cfg)
    estimates = result.ok()
    if not estimates:
        raise StageError("estimate", ValueError(f"no slice estimated: {result.errors}"))
    out = Path(args.out or "estimates_out")
    out.mkdir(parents=True, exist_ok=True)
    tio.write_estimates(estimates, out / "estimates.csv")
    tio.write_summary(summarize_efficiency(estimates), out / "summary.csv")
    for key, msg in result.errors.items():
        print(f"slice {key} failed: {msg}", file=sys.stderr)
    print(f"estimated {len(estimates)} observations into {out}")
    return 0


def cmd_elasticity(args: argparse.Namespace) -> int:
    estimates = tio.read_estimates(args.estimates)
    observations = tio.read_observations(args.dataset)
    by_key = {(o.team_id, o.task, o.attempt): o for o in observations}
    by_slice: dict = {}
    for est in estimates:
        obs = by_key.get((est.team_id, est.task, est.attempt))
        if obs is None:
            continue
        by_slice.setdefault(est.slice_key, []).append((obs, est))
    fits, points = [], []
    for key in sorted(by_slice, key=lambda k: (TASKS.index(k[0]), k[1])):
        pairs = by_slice[key]
        if len(pairs) < 6:
            print(f"slice {key}: too few points for the polynomial", file=sys.stderr)
            continue
        fit = fit_production_polynomial(
            [(e.a_raw * o.x_input, o.y_input, o.h_output) for o, e in pairs],
            slice_key=key,
        )
        fits.append(fit)
        points.extend(
            elasticity_at(
                fit,
                (e.a_raw * o.x_input, o.y_input, o.x_input, o.h_output),
                team_id=o.team_id,
            )
            for o, e in pairs
        )
    out = Path(args.out or "elasticity_out")
    out.mkdir(parents=True, exist_ok=True)
    tio.write_poly_fits(fits, out / "production_polynomials.csv")
    tio.write_elasticities(points, out / "elasticities.csv")
    print(f"fit {len(fits)} slices, {len(points)} elasticity points")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    records = read_dataset(args.dataset)
    skills = tio.read_skills(args.skills)
    estimates = tio.read_estimates(args.estimates)
    team_runs = list(iter_team(records))
    drivers = sorted({r.athlete1_id for r in team_runs})
    brakemen = sorted({r.athlete2_id for r in team_runs})
    skill_of = {(p.athlete_id, p.dimension): p.transformed_skill for p in skills}

    bins: dict[tuple[str, str], int] = {}
    for role, members in (("p1", drivers), ("p2", brakemen)):
        for dim in TASKS:
            vals = [skill_of[(a, dim)] for a in members]
            for a, b in zip(members, tercile_bins(vals)):
                bins[(role, f"{a}|{dim}")] = int(b)

    out = Path(args.out or "report_out")
    out.mkdir(parents=True, exist_ok=True)
    for dim in TASKS:
        tab = pairing_crosstab(
            [bins[("p1", f"{r.athlete1_id}|{dim}")] for r in team_runs],
            [bins[("p2", f"{r.athlete2_id}|{dim}")] for r in team_runs],
            row_label=f"P1 {dim}-skill bin",
            col_label=f"P2 {dim}-skill bin",
        )
        write_crosstab(tab, out / f"crosstab_counts_{dim}.csv")
    cross_a, cross_b = cross_skill_crosstab(
        [bins[("p1", f"{r.athlete1_id}|start")] for r in team_runs],
        [bins[("p1", f"{r.athlete1_id}|riding")] for r in team_runs],
        [bins[("p2", f"{r.athlete2_id}|start")] for r in team_runs],
        [bins[("p2", f"{r.athlete2_id}|riding")] for r in team_runs],
    )
    write_crosstab(cross_a, out / "crosstab_cross_p1start_p2riding.csv")
    write_crosstab(cross_b, out / "crosstab_cross_p1riding_p2start.csv")

    team_members = {r.team_id: (r.athlete1_id, r.athlete2_id) for r in team_runs}
    p1_rank = {a: i + 1 for i, a in enumerate(sorted(drivers, key=lambda a: skill_of[(a, "start")]))}
    p2_rank = {a: i + 1 for i, a in enumerate(sorted(brakemen, key=lambda a: skill_of[(a, "start")]))}
    cells = efficiency_heatmap_cells(estimates, team_members, p1_rank, p2_rank)
    cells.to_csv(out / "heatmap_cells.csv", index=False)
    print(f"wrote report tables to {out}")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    if not args.config:
        raise ConfigError(f"pipeline needs --config or ${CONFIG_ENV}")
    cfg = load_config(args.config)
    result = run_pipeline(cfg, out_dir=args.out, seed=args.seed)
    print(f"pipeline ok: {len(result.manifest['artifacts'])} artifacts in {result.out_dir}")
    return result.status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teamprod",
        description="Team production estimation: skills, latent efficiency, elasticities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known truth")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse a results CSV into the canonical dataset")
    _add_common(p)
    p.add_argument("--input", required=True, help="results CSV")
    p.add_argument("--schema", required=True, help="schema map JSON")
    p.add_argument("--max-attempts", type=int, default=2)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fe", help="fixed-effects fit on the canonical dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--outcome", choices=("start", "riding", "finish"), default="start")
    p.add_argument("--factors", default="athlete,event,starting_order")
    p.set_defaults(func=cmd_fe)

    p = sub.add_parser("estimate", help="recover latent efficiency from observations")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="observations JSONL")
    p.add_argument("--task", choices=("start", "riding", "all"), default="all")
    p.add_argument("--kernel", choices=("gaussian", "epanechnikov"), default="gaussian")
    p.add_argument("--bandwidth", default="auto", help="'auto' or 'bx[,by]'")
    p.add_argument("--grid", type=int, default=256)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("elasticity", help="production polynomial and elasticities")
    _add_common(p)
    p.add_argument("--estimates", required=True)
    p.add_argument("--dataset", required=True, help="observations JSONL")
    p.set_defaults(func=cmd_elasticity)

    p = sub.add_parser("report", help="crosstabs and heatmap cell tables")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="canonical dataset JSONL")
    p.add_argument("--skills", required=True, help="skills CSV")
    p.add_argument("--estimates", required=True, help="estimates CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run every stage from a JSON config")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StageError, TeamProdError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Synthetic data generator with fully known ground truth.

Generates solo and team runs from a planted additive timing model on top of
a Cobb-Douglas task production function, so every estimator in the pipeline
can be checked against exact planted values. Randomness comes from numpy's
PCG64 generator seeded from the config, which makes byte-identical output a
contract: the same seed yields the same dataset on any platform.

Latent efficiency is drawn independently of everything else, so the
conditional-independence assumption holds by construction. A discrete
("choice") skill law puts observations on exact (x, y) grid cells, which is
what the brute-force rank oracle needs.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .affinity import TeamTaskObservation
from .errors import InvalidConfig, SparseCell
from .records import MONOBOB, TWO_WOMAN, RunRecord

NATIONALITIES = (
    "AUS", "AUT", "CAN", "GBR", "GER", "ITA", "KOR", "POL", "ROU", "RUS", "SVK", "USA",
)

_H_FLOOR = 1e-6


@dataclass(frozen=True)
class Law:
    """A positive-support sampling law: lognormal, constant, uniform, or choice."""

    kind: str
    mu: float = 0.0
    sigma: float = 1.0
    value: float = 1.0
    lo: float = 0.5
    hi: float = 1.5
    values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "lognormal":
            if self.sigma < 0:
                raise InvalidConfig("lognormal sigma must be >= 0")
        elif self.kind == "constant":
            if self.value <= 0:
                raise InvalidConfig("constant value must be positive")
        elif self.kind == "uniform":
            if not 0 < self.lo <= self.hi:
                raise InvalidConfig("uniform needs 0 < lo <= hi")
        elif self.kind == "choice":
            if not self.values or any(v <= 0 for v in self.values):
                raise InvalidConfig("choice needs positive values")
        else:
            raise InvalidConfig(f"unknown law kind {self.kind!r}")

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "Law":
        return cls(kind="lognormal", mu=mu, sigma=sigma)

    @classmethod
    def constant(cls, value: float) -> "Law":
        return cls(kind="constant", value=value)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "Law":
        return cls(kind="uniform", lo=lo, hi=hi)

    @classmethod
    def choice(cls, values: Sequence[float]) -> "Law":
        return cls(kind="choice", values=tuple(float(v) for v in values))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "lognormal":
            return rng.lognormal(self.mu, self.sigma, size)
        if self.kind == "constant":
            return np.full(size, self.value)
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        return rng.choice(np.asarray(self.values), size=size)

    def to_dict(self) -> dict:
        if self.kind == "lognormal":
            return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma}
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        return {"kind": "choice", "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Law":
        d = dict(d)
        kind = d.pop("kind")
        if kind == "choice":
            return cls.choice(d["values"])
        return cls(kind=kind, **d)


@dataclass(frozen=True)
class DGPConfig:
    n_teams: int = 47
    n_events: int = 12
    theta: float = 0.4
    affinity_law: Law = field(default_factory=lambda: Law.lognormal(0.0, 0.3))
    skill_law_x: Law = field(default_factory=lambda: Law.uniform(1.0, 3.0))
    skill_law_y: Law = field(default_factory=lambda: Law.uniform(1.0, 3.0))
    event_effect_sd: float = 0.3
    order_effect_sd: float = 0.05
    noise_sd: float = 0.02
    seed: int = 0
    runs_per_team: int = 2
    solo_events_per_athlete: int = 2
    base_start_time: float = 8.0
    base_riding_time: float = 55.0

    def __post_init__(self) -> None:
        if self.n_teams < 5:
            raise InvalidConfig("n_teams must be >= 5")
        if self.n_events < 1:
            raise InvalidConfig("n_events must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise InvalidConfig("theta must lie strictly inside (0, 1)")
        for name in ("event_effect_sd", "order_effect_sd", "noise_sd"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if self.runs_per_team < 1 or self.solo_events_per_athlete < 1:
            raise InvalidConfig("teams and athletes must attend at least one event")
        if self.base_start_time <= 0 or self.base_riding_time <= 0:
            raise InvalidConfig("base times must be positive")

    def to_dict(self) -> dict:
        return {
            "n_teams": self.n_teams,
            "n_events": self.n_events,
            "theta": self.theta,
            "affinity_law": self.affinity_law.to_dict(),
            "skill_law_x": self.skill_law_x.to_dict(),
            "skill_law_y": self.skill_law_y.to_dict(),
            "event_effect_sd": self.event_effect_sd,
            "order_effect_sd": self.order_effect_sd,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
            "runs_per_team": self.runs_per_team,
            "solo_events_per_athlete": self.solo_events_per_athlete,
            "base_start_time": self.base_start_time,
            "base_riding_time": self.base_riding_time,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DGPConfig":
        d = dict(d)
        for law_field in ("affinity_law", "skill_law_x", "skill_law_y"):
            if law_field in d and isinstance(d[law_field], Mapping):
                d[law_field] = Law.from_dict(d[law_field])
        return cls(**d)


@dataclass(frozen=True)
class TruthRow:
    team_id: str
    event_id: str
    attempt: int
    task: str
    true_a: float
    true_x: float
    true_y: float
    true_h_noiseless: float
    h_observed: float


@dataclass(frozen=True)
class SyntheticTruth:
    rows: list[TruthRow]
    athlete_effects: dict[tuple[str, str], float]
    event_effects: dict[tuple[str, str], float]
    solo_order_effects: dict[tuple[int, str], float]
    team_order_effects: dict[tuple[int, str], float]
    teams: dict[str, tuple[str, str]]


def _truth_to_dict(truth: SyntheticTruth) -> dict:
    return {
        "rows": [
            {
                "team_id": r.team_id,
                "event_id": r.event_id,
                "attempt": r.attempt,
                "task": r.task,
                "true_a": r.true_a,
                "true_x": r.true_x,
                "true_y": r.true_y,
                "true_h_noiseless": r.true_h_noiseless,
                "h_observed": r.h_observed,
            }
            for r in truth.rows
        ],
        "athlete_effects": {f"{a}|{d}": v for (a, d), v in truth.athlete_effects.items()},
        "event_effects": {f"{e}|{d}": v for (e, d), v in truth.event_effects.items()},
        "solo_order_effects": {f"{o}|{d}": v for (o, d), v in truth.solo_order_effects.items()},
        "team_order_effects": {f"{o}|{d}": v for (o, d), v in truth.team_order_effects.items()},
        "teams": {t: list(m) for t, m in truth.teams.items()},
    }


def write_truth(truth: SyntheticTruth, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(_truth_to_dict(truth), fh, sort_keys=True)
        fh.write("\n")


def read_truth(path: str | Path) -> SyntheticTruth:
    with Path(path).open("r", encoding="utf-8") as fh:
        d = json.load(fh)

    def split_key(s: str) -> tuple[str, str]:
        left, right = s.rsplit("|", 1)
        return left, right

    return SyntheticTruth(
        rows=[TruthRow(**r) for r in d["rows"]],
        athlete_effects={split_key(k): v for k, v in d["athlete_effects"].items()},
        event_effects={split_key(k): v for k, v in d["event_effects"].items()},
        solo_order_effects={
            (int(split_key(k)[0]), split_key(k)[1]): v
            for k, v in d["solo_order_effects"].items()
        },
        team_order_effects={
            (int(split_key(k)[0]), split_key(k)[1]): v
            for k, v in d["team_order_effects"].items()
        },
        teams={t: (m[0], m[1]) for t, m in d["teams"].items()},
    )


def _attended_events(index: int, per_member: int, n_events: int) -> list[int]:
    # Chain consecutive events so the membership graph stays connected.
    return [(index + j) % n_events for j in range(per_member)]


def generate(cfg: DGPConfig) -> tuple[list[RunRecord], SyntheticTruth]:
    """Generate solo and team run records plus the full planted truth.

    Solo times follow the additive athlete + event + starting-order model;
    team phase times are a base time minus the (noisy) production output
    plus event and order effects, so faster teams are more productive.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_teams
    drivers = [f"D{i:04d}" for i in range(n)]
    brakemen = [f"B{i:04d}" for i in range(n)]
    athletes = drivers + brakemen
    nat = {a: NATIONALITIES[int(rng.integers(len(NATIONALITIES)))] for a in athletes}

    skills: dict[tuple[str, str], float] = {}
    for dim in ("start", "riding"):
        xs = cfg.skill_law_x.sample(rng, n)
        ys = cfg.skill_law_y.sample(rng, n)
        for i, d in enumerate(drivers):
            skills[(d, dim)] = float(xs[i])
        for i, b in enumerate(brakemen):
            skills[(b, dim)] = float(ys[i])

    athlete_effects = {
        (a, dim): -skills[(a, dim)] for a in athletes for dim in ("start", "riding")
    }

    solo_events = [f"SOLO{e:03d}" for e in range(cfg.n_events)]
    team_events = [f"TEAM{e:03d}" for e in range(cfg.n_events)]
    event_effects: dict[tuple[str, str], float] = {}
    for ev in solo_events + team_events:
        for dim in ("start", "riding"):
            event_effects[(ev, dim)] = float(rng.normal(0.0, cfg.event_effect_sd))

    solo_roster: dict[int, list[str]] = {e: [] for e in range(cfg.n_events)}
    for i, a in enumerate(athletes):
        for e in _attended_events(i, cfg.solo_events_per_athlete, cfg.n_events):
            solo_roster[e].append(a)
    team_roster: dict[int, list[int]] = {e: [] for e in range(cfg.n_events)}
    for i in range(n):
        for e in _attended_events(i, cfg.runs_per_team, cfg.n_events):
            team_roster[e].append(i)

    max_solo_order = max((len(v) for v in solo_roster.values()), default=1)
    max_team_order = max((len(v) for v in team_roster.values()), default=1)
    solo_order_effects = {
        (s, dim): float(rng.normal(0.0, cfg.order_effect_sd))
        for s in range(1, max_solo_order + 1)
        for dim in ("start", "riding")
    }
    team_order_effects = {
        (s, dim): float(rng.normal(0.0, cfg.order_effect_sd))
        for s in range(1, max_team_order + 1)
        for dim in ("start", "riding")
    }

    records: list[RunRecord] = []
    base_date = dt.date(2024, 1, 6)

    for e, roster in solo_roster.items():
        ev = solo_events[e]
        date = base_date + dt.timedelta(days=7 * e)
        for attempt in (1, 2):
            order = rng.permutation(len(roster))
            for pos, a_idx in enumerate(order):
                athlete = roster[a_idx]
                s_no = pos + 1
                start = (
                    cfg.base_start_time
                    + athlete_effects[(athlete, "start")]
                    + event_effects[(ev, "start")]
                    + solo_order_effects[(s_no, "start")]
                    + float(rng.normal(0.0, cfg.noise_sd))
                )
                riding = (
                    cfg.base_riding_time
                    + athlete_effects[(athlete, "riding")]
                    + event_effects[(ev, "riding")]
                    + solo_order_effects[(s_no, "riding")]
                    + float(rng.normal(0.0, cfg.noise_sd))
                )
                if start <= 0 or riding <= 0:
                    raise InvalidConfig(
                        "solo time went non-positive; raise base times or shrink effects"
                    )
                records.append(
                    RunRecord(
                        event_id=ev,
                        date=date,
                        discipline=MONOBOB,
                        athlete1_id=athlete,
                        athlete2_id=None,
                        nationality=nat[athlete],
                        attempt_index=attempt,
                        starting_number=s_no,
                        start_time=start,
                        finish_time=start + riding,
                        riding_time=riding,
                    )
                )

    truth_rows: list[TruthRow] = []
    teams = {f"{drivers[i]}+{brakemen[i]}": (drivers[i], brakemen[i]) for i in range(n)}
    for e, roster in team_roster.items():
        ev = team_events[e]
        date = base_date + dt.timedelta(days=7 * e + 1)
        for attempt in (1, 2):
            order = rng.permutation(len(roster))
            for pos, t_idx in enumerate(order):
                driver, brakeman = drivers[t_idx], brakemen[t_idx]
                team_id = f"{driver}+{brakeman}"
                s_no = pos + 1
                phase_time: dict[str, float] = {}
                for task in ("start", "riding"):
                    a = float(cfg.affinity_law.sample(rng, 1)[0])
                    x = skills[(driver, task)]
                    y = skills[(brakeman, task)]
                    h_nl = (a * x) ** cfg.theta * y ** (1.0 - cfg.theta)
                    h_obs = h_nl + float(rng.normal(0.0, cfg.noise_sd))
                    h_obs = max(h_obs, _H_FLOOR)
                    truth_rows.append(
                        TruthRow(
                            team_id=team_id,
                            event_id=ev,
                            attempt=attempt,
                            task=task,
                            true_a=a,
                            true_x=x,
                            true_y=y,
                            true_h_noiseless=h_nl,
                            h_observed=h_obs,
                        )
                    )
                    base = cfg.base_start_time if task == "start" else cfg.base_riding_time
                    phase_time[task] = (
                        base
                        - h_obs
                        + event_effects[(ev, task)]
                        + team_order_effects[(s_no, task)]
                    )
                if phase_time["start"] <= 0 or phase_time["riding"] <= 0:
                    raise InvalidConfig(
                        "team time went non-positive; raise base times or shrink effects"
                    )
                records.append(
                    RunRecord(
                        event_id=ev,
                        date=date,
                        discipline=TWO_WOMAN,
                        athlete1_id=driver,
                        athlete2_id=brakeman,
                        nationality=nat[driver],
                        attempt_index=attempt,
                        starting_number=s_no,
                        start_time=phase_time["start"],
                        finish_time=phase_time["start"] + phase_time["riding"],
                        riding_time=phase_time["riding"],
                    )
                )

    truth = SyntheticTruth(
        rows=truth_rows,
        athlete_effects=athlete_effects,
        event_effects=event_effects,
        solo_order_effects=solo_order_effects,
        team_order_effects=team_order_effects,
        teams=teams,
    )
    return records, truth


def observations_from_truth(truth: SyntheticTruth) -> list[TeamTaskObservation]:
    """Estimation-ready observations built from the planted inputs and outputs."""
    return [
        TeamTaskObservation(
            team_id=r.team_id,
            task=r.task,
            attempt=r.attempt,
            x_input=r.true_x,
            y_input=r.true_y,
            h_output=max(r.h_observed, _H_FLOOR),
        )
        for r in truth.rows
    ]


def oracle_conditional_rank(
    obs: TeamTaskObservation,
    slice_obs: Sequence[TeamTaskObservation],
    min_cell: int = 10,
) -> float:
    """Exact empirical CDF of the output within the target's (x, y) grid cell.

    No kernel, no smoothing: observations must share the target's inputs
    bit-for-bit, which a discrete skill law guarantees. This is the
    independent check for the kernel-weighted rank.
    """
    cell = [
        o
        for o in slice_obs
        if o.x_input == obs.x_input and o.y_input == obs.y_input
    ]
    if len(cell) < min_cell:
        raise SparseCell(
            f"cell (x={obs.x_input}, y={obs.y_input}) has {len(cell)} observations; "
            f"need >= {min_cell}"
        )
    hits = sum(1 for o in cell if o.h_output <= obs.h_output)
    return hits / len(cell)


def oracle_conditional_ranks(
    slice_obs: Sequence[TeamTaskObservation],
    min_cell: int = 10,
) -> np.ndarray:
    """Vectorized cell-exact ranks for a whole slice, aligned to input order."""
    xs = np.asarray([o.x_input for o in slice_obs])
    ys = np.asarray([o.y_input for o in slice_obs])
    hs = np.asarray([o.h_output for o in slice_obs])
    taus = np.empty(len(slice_obs))
    cells: dict[tuple[float, float], list[int]] = {}
    for i in range(len(slice_obs)):
        cells.setdefault((float(xs[i]), float(ys[i])), []).append(i)
    for key, idx in cells.items():
        if len(idx) < min_cell:
            raise SparseCell(
                f"cell (x={key[0]}, y={key[1]}) has {len(idx)} observations; "
                f"need >= {min_cell}"
            )
        cell_h = hs[idx]
        order = np.argsort(cell_h, kind="stable")
        sorted_h = cell_h[order]
        ranks = np.searchsorted(sorted_h, cell_h, side="right") / len(idx)
        for j, i in enumerate(idx):
            taus[i] = ranks[j]
    return taus

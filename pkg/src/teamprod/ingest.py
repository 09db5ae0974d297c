"""Parse race-results tables into run records and apply the sample rules.

The input format is delimiter-separated text with a header. A schema map
translates logical column names to whatever the source file calls them, so
scraping conventions stay out of the estimation code.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .errors import (
    EmptyIntersection,
    InvertedSplit,
    MalformedRow,
    MissingColumn,
    NonPositiveTime,
)
from .records import MONOBOB, TWO_WOMAN, RunRecord

REQUIRED_COLUMNS = (
    "event_id",
    "date",
    "discipline",
    "athlete1_id",
    "athlete2_id",
    "nationality",
    "attempt",
    "starting_number",
    "start_time",
    "finish_time",
)
OPTIONAL_COLUMNS = ("riding_time",)

MIN_SOLO_RUNS = 2


def load_schema(path: str | Path) -> dict[str, str]:
    """Read a schema map (logical name -> source column name) from JSON."""
    with Path(path).open("r", encoding="utf-8") as fh:
        schema = json.load(fh)
    if not isinstance(schema, dict):
        raise MissingColumn("schema file must be a JSON object")
    return {str(k): str(v) for k, v in schema.items()}


def _parse_float(raw: str, what: str, line: int) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise MalformedRow(f"cannot parse {what} from {raw!r}", line) from None


def _parse_int(raw: str, what: str, line: int) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise MalformedRow(f"cannot parse {what} from {raw!r}", line) from None


def parse_results(
    source: IO[str] | Iterable[str],
    schema: Mapping[str, str],
    delimiter: str = ",",
) -> list[RunRecord]:
    """Parse a results table into run records, preserving input order.

    ``schema`` maps logical names (see REQUIRED_COLUMNS) to the file's actual
    column names. ``riding_time`` is derived from finish - start when the
    column is missing or blank.
    """
    for logical in REQUIRED_COLUMNS:
        if logical not in schema:
            raise MissingColumn(f"schema lacks required column {logical!r}")

    reader = csv.DictReader(source, delimiter=delimiter)
    if reader.fieldnames is None:
        raise MissingColumn("input has no header row")
    header = set(reader.fieldnames)
    for logical in REQUIRED_COLUMNS:
        if schema[logical] not in header:
            raise MissingColumn(
                f"input lacks column {schema[logical]!r} (logical {logical!r})"
            )

    records: list[RunRecord] = []
    for row in reader:
        line = reader.line_num

        def cell(logical: str) -> str:
            col = schema.get(logical)
            if col is None or col not in row or row[col] is None:
                return ""
            return row[col].strip()

        start = _parse_float(cell("start_time"), "start_time", line)
        finish = _parse_float(cell("finish_time"), "finish_time", line)
        if start <= 0 or finish <= 0:
            raise NonPositiveTime(f"start={start}, finish={finish}", line)
        if finish <= start:
            raise InvertedSplit(f"finish {finish} <= start {start}", line)

        riding_raw = cell("riding_time")
        riding = finish - start if riding_raw == "" else _parse_float(riding_raw, "riding_time", line)

        try:
            date = dt.date.fromisoformat(cell("date"))
        except ValueError:
            raise MalformedRow(f"cannot parse date from {cell('date')!r}", line) from None

        athlete2 = cell("athlete2_id") or None
        try:
            rec = RunRecord(
                event_id=cell("event_id"),
                date=date,
                discipline=cell("discipline"),
                athlete1_id=cell("athlete1_id"),
                athlete2_id=athlete2,
                nationality=cell("nationality"),
                attempt_index=_parse_int(cell("attempt"), "attempt", line),
                starting_number=_parse_int(cell("starting_number"), "starting_number", line),
                start_time=start,
                finish_time=finish,
                riding_time=riding,
            )
        except (NonPositiveTime, InvertedSplit, MalformedRow) as exc:
            raise type(exc)(str(exc), line) from None
        records.append(rec)
    return records


def truncate_attempts(
    records: Sequence[RunRecord], max_attempts: int = 2
) -> list[RunRecord]:
    """Keep only attempts up to ``max_attempts``; relative order is preserved.

    Attempt indices are assumed unique within an (event, team) group, so the
    filter reduces to a per-record predicate. Idempotent by construction.
    """
    return [r for r in records if r.attempt_index <= max_attempts]


def drop_duplicate_runs(
    records: Sequence[RunRecord],
) -> tuple[list[RunRecord], list[str]]:
    """Drop repeated (event, team, attempt) rows, keeping the first occurrence."""
    seen: set[tuple] = set()
    kept: list[RunRecord] = []
    dropped: list[str] = []
    for rec in records:
        key = (rec.event_id, rec.team_key, rec.attempt_index)
        if key in seen:
            dropped.append(
                f"duplicate run dropped: event={rec.event_id} team={rec.team_id} "
                f"attempt={rec.attempt_index}"
            )
            continue
        seen.add(key)
        kept.append(rec)
    return kept, dropped


@dataclass(frozen=True)
class LinkedRuns:
    """Result of joining team runs against solo records.

    ``eligible`` maps each athlete that appears in a retained team run to her
    solo run count. ``exclusions`` has one human-readable line per dropped
    team run.
    """

    eligible: dict[str, int]
    team_runs: list[RunRecord]
    exclusions: list[str] = field(default_factory=list)


def link_athletes(
    mono: Sequence[RunRecord],
    team: Sequence[RunRecord],
    min_runs: int = MIN_SOLO_RUNS,
) -> LinkedRuns:
    """Retain team runs whose both members have at least ``min_runs`` solo runs.

    Raises EmptyIntersection when nothing survives, which almost always means
    the solo and team files do not describe the same athlete pool.
    """
    counts = Counter(r.athlete1_id for r in mono)
    kept: list[RunRecord] = []
    exclusions: list[str] = []
    eligible: dict[str, int] = {}
    for rec in team:
        members = [rec.athlete1_id, rec.athlete2_id or ""]
        failing = [a for a in members if counts.get(a, 0) < min_runs]
        if failing:
            detail = ", ".join(f"{a}: {counts.get(a, 0)} solo runs" for a in failing)
            exclusions.append(
                f"team run excluded: event={rec.event_id} team={rec.team_id} "
                f"attempt={rec.attempt_index} ({detail}, need >= {min_runs})"
            )
            continue
        kept.append(rec)
        for a in members:
            eligible[a] = counts[a]
    if team and not kept:
        raise EmptyIntersection(
            f"no team run has both members with >= {min_runs} solo runs"
        )
    if not team:
        raise EmptyIntersection("no team runs supplied")
    return LinkedRuns(eligible=eligible, team_runs=kept, exclusions=exclusions)


def write_exclusion_log(lines: Iterable[str], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")

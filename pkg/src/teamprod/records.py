"""Run records and the canonical dataset format.

The canonical dataset is JSON lines, one record per line, stable field order.
Serialization uses ``repr``-exact floats, so write -> read is bit-faithful.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InvertedSplit, MalformedRow, NonPositiveTime

MONOBOB = "monobob"
TWO_WOMAN = "two_woman"
DISCIPLINES = (MONOBOB, TWO_WOMAN)

DIMENSIONS = ("start", "riding", "finish")
TASKS = ("start", "riding")

RIDING_TOLERANCE = 1e-9


@dataclass(frozen=True, slots=True)
class RunRecord:
    """One timed run, solo or two-person.

    Times are seconds as 64-bit floats; official timing is hundredths, so
    nothing is lost. ``riding_time`` is the finish-to-start complement and
    must agree with ``finish_time - start_time`` to within 1e-9 s.
    """

    event_id: str
    date: dt.date
    discipline: str
    athlete1_id: str
    athlete2_id: str | None
    nationality: str
    attempt_index: int
    starting_number: int
    start_time: float
    finish_time: float
    riding_time: float

    def __post_init__(self) -> None:
        if self.discipline not in DISCIPLINES:
            raise MalformedRow(f"unknown discipline {self.discipline!r}")
        if self.discipline == TWO_WOMAN and not self.athlete2_id:
            raise MalformedRow("two_woman run lacks a second athlete")
        if self.discipline == MONOBOB and self.athlete2_id:
            raise MalformedRow("monobob run carries a second athlete")
        if self.attempt_index < 1:
            raise MalformedRow(f"attempt_index {self.attempt_index} < 1")
        if self.starting_number < 1:
            raise MalformedRow(f"starting_number {self.starting_number} < 1")
        if self.start_time <= 0 or self.finish_time <= 0:
            raise NonPositiveTime(
                f"start={self.start_time}, finish={self.finish_time}"
            )
        if self.finish_time <= self.start_time:
            raise InvertedSplit(
                f"finish {self.finish_time} <= start {self.start_time}"
            )
        if abs(self.riding_time - (self.finish_time - self.start_time)) > RIDING_TOLERANCE:
            raise MalformedRow(
                f"riding_time {self.riding_time} != finish - start "
                f"({self.finish_time - self.start_time})"
            )

    @property
    def team_key(self) -> tuple[str, str | None]:
        return (self.athlete1_id, self.athlete2_id)

    @property
    def team_id(self) -> str:
        """Opaque pair identifier; for solo runs this is just the athlete id."""
        if self.athlete2_id is None:
            return self.athlete1_id
        return f"{self.athlete1_id}+{self.athlete2_id}"

    def time_for(self, dimension: str) -> float:
        if dimension == "start":
            return self.start_time
        if dimension == "riding":
            return self.riding_time
        if dimension == "finish":
            return self.finish_time
        raise ValueError(f"unknown dimension {dimension!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["date"] = self.date.isoformat()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["date"] = dt.date.fromisoformat(d["date"])
        return cls(**d)


def write_dataset(records: Iterable[RunRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True))
            fh.write("\n")


def read_dataset(path: str | Path) -> list[RunRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RunRecord.from_dict(json.loads(line)))
    return records


def iter_monobob(records: Iterable[RunRecord]) -> Iterator[RunRecord]:
    return (r for r in records if r.discipline == MONOBOB)


def iter_team(records: Iterable[RunRecord]) -> Iterator[RunRecord]:
    return (r for r in records if r.discipline == TWO_WOMAN)

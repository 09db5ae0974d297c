from __future__ import annotations

import datetime as dt
import io

import pytest
from hypothesis import given, strategies as st

from teamprod.errors import (
    EmptyIntersection,
    InvertedSplit,
    MalformedRow,
    MissingColumn,
    NonPositiveTime,
)
from teamprod.ingest import (
    drop_duplicate_runs,
    link_athletes,
    parse_results,
    truncate_attempts,
)
from teamprod.records import RunRecord, read_dataset, write_dataset

SCHEMA = {
    "event_id": "Event",
    "date": "Date",
    "discipline": "Discipline",
    "athlete1_id": "Athlete1",
    "athlete2_id": "Athlete2",
    "nationality": "Nat",
    "attempt": "Attempt",
    "starting_number": "StartNo",
    "start_time": "Start",
    "finish_time": "Finish",
}
HEADER = "Event,Date,Discipline,Athlete1,Athlete2,Nat,Attempt,StartNo,Start,Finish"


def _csv(*rows: str) -> io.StringIO:
    return io.StringIO("\n".join([HEADER, *rows]) + "\n")


def mono_row(athlete="A1", event="E1", attempt=1, start=5.40, finish=58.10, start_no=1):
    return f"{event},2024-01-06,monobob,{athlete},,GER,{attempt},{start_no},{start},{finish}"


def team_row(a1="A1", a2="B1", event="E1", attempt=1, start=5.2, finish=57.0, start_no=1):
    return f"{event},2024-01-07,two_woman,{a1},{a2},GER,{attempt},{start_no},{start},{finish}"


class TestParseResults:
    def test_riding_time_derived(self):
        records = parse_results(_csv(mono_row(start=5.40, finish=58.10)), SCHEMA)
        assert records[0].riding_time == pytest.approx(52.70, abs=1e-12)

    def test_inverted_split(self):
        with pytest.raises(InvertedSplit) as exc:
            parse_results(_csv(mono_row(start=58.10, finish=5.40)), SCHEMA)
        assert exc.value.line == 2

    def test_three_rows_order_preserved(self):
        rows = [mono_row(athlete=a) for a in ("A1", "A2", "A3")]
        records = parse_results(_csv(*rows), SCHEMA)
        assert [r.athlete1_id for r in records] == ["A1", "A2", "A3"]

    def test_non_positive_time(self):
        with pytest.raises(NonPositiveTime):
            parse_results(_csv(mono_row(start=-1.0)), SCHEMA)

    def test_missing_schema_column(self):
        schema = {k: v for k, v in SCHEMA.items() if k != "date"}
        with pytest.raises(MissingColumn):
            parse_results(_csv(mono_row()), schema)

    def test_missing_input_column(self):
        bad_header = HEADER.replace("Finish", "End")
        stream = io.StringIO(bad_header + "\n" + mono_row() + "\n")
        with pytest.raises(MissingColumn):
            parse_results(stream, SCHEMA)

    def test_malformed_float(self):
        with pytest.raises(MalformedRow) as exc:
            parse_results(_csv(mono_row(start="abc")), SCHEMA)
        assert exc.value.line == 2

    def test_malformed_date(self):
        row = mono_row().replace("2024-01-06", "06/01/2024")
        with pytest.raises(MalformedRow):
            parse_results(_csv(row), SCHEMA)

    def test_monobob_with_second_athlete_rejected(self):
        row = mono_row().replace(",A1,,", ",A1,B9,")
        with pytest.raises(MalformedRow):
            parse_results(_csv(row), SCHEMA)

    def test_explicit_riding_time_accepted(self):
        schema = dict(SCHEMA, riding_time="Riding")
        stream = io.StringIO(
            HEADER + ",Riding\n" + mono_row(start=5.0, finish=57.5) + ",52.5\n"
        )
        records = parse_results(stream, schema)
        assert records[0].riding_time == 52.5

    def test_inconsistent_riding_time_rejected(self):
        schema = dict(SCHEMA, riding_time="Riding")
        stream = io.StringIO(
            HEADER + ",Riding\n" + mono_row(start=5.0, finish=57.5) + ",50.0\n"
        )
        with pytest.raises(MalformedRow):
            parse_results(stream, schema)


class TestTruncateAttempts:
    def test_keeps_first_two(self):
        rows = [mono_row(attempt=k, start_no=k) for k in (1, 2, 3, 4)]
        records = parse_results(_csv(*rows), SCHEMA)
        kept = truncate_attempts(records)
        assert [r.attempt_index for r in kept] == [1, 2]

    def test_single_attempt_unchanged(self):
        records = parse_results(_csv(mono_row(attempt=1)), SCHEMA)
        assert truncate_attempts(records) == records

    def test_max_attempts_one(self):
        records = parse_results(_csv(mono_row(attempt=1), mono_row(attempt=2, start_no=2)), SCHEMA)
        kept = truncate_attempts(records, max_attempts=1)
        assert [r.attempt_index for r in kept] == [1]

    def test_empty_input(self):
        assert truncate_attempts([]) == []

    @given(st.lists(st.integers(min_value=1, max_value=6), max_size=20))
    def test_idempotent(self, attempts):
        records = [
            RunRecord(
                event_id="E1",
                date=dt.date(2024, 1, 6),
                discipline="monobob",
                athlete1_id=f"A{i}",
                athlete2_id=None,
                nationality="GER",
                attempt_index=a,
                starting_number=i + 1,
                start_time=5.0,
                finish_time=57.0,
                riding_time=52.0,
            )
            for i, a in enumerate(attempts)
        ]
        once = truncate_attempts(records)
        assert truncate_attempts(once) == once


class TestLinkAthletes:
    def _mono(self, athlete, k):
        rows = [mono_row(athlete=athlete, event=f"E{j}", start_no=j + 1) for j in range(k)]
        return parse_results(_csv(*rows), SCHEMA)

    def test_athlete_below_threshold_excluded_and_logged(self):
        mono = self._mono("A1", 2) + self._mono("A2", 1) + self._mono("B1", 2) + self._mono("B2", 2)
        team = parse_results(
            _csv(team_row("A1", "B1"), team_row("A2", "B2", start_no=2)), SCHEMA
        )
        linked = link_athletes(mono, team)
        assert [r.athlete1_id for r in linked.team_runs] == ["A1"]
        assert len(linked.exclusions) == 1
        assert "A2" in linked.exclusions[0]

    def test_both_members_pass(self):
        mono = self._mono("A1", 2) + self._mono("B1", 3)
        team = parse_results(_csv(team_row("A1", "B1")), SCHEMA)
        linked = link_athletes(mono, team)
        assert len(linked.team_runs) == 1
        assert linked.eligible == {"A1": 2, "B1": 3}

    def test_empty_mono_raises(self):
        team = parse_results(_csv(team_row()), SCHEMA)
        with pytest.raises(EmptyIntersection):
            link_athletes([], team)

    def test_partition_invariant(self):
        mono = self._mono("A1", 2) + self._mono("B1", 2) + self._mono("A2", 1)
        team = parse_results(
            _csv(team_row("A1", "B1"), team_row("A2", "B1", start_no=2)), SCHEMA
        )
        linked = link_athletes(mono, team)
        assert set(id(r) for r in linked.team_runs).issubset(set(id(r) for r in team))
        assert len(linked.team_runs) + len(linked.exclusions) == len(team)


class TestDuplicates:
    def test_keep_first_log_rest(self):
        records = parse_results(
            _csv(mono_row(start=5.0), mono_row(start=5.1)), SCHEMA
        )
        kept, dropped = drop_duplicate_runs(records)
        assert len(kept) == 1 and kept[0].start_time == 5.0
        assert len(dropped) == 1 and "duplicate" in dropped[0]


class TestRoundTrip:
    def test_dataset_roundtrip_bit_equal(self, tmp_path):
        rows = [
            mono_row(athlete="A1", start=5.43, finish=58.1799),
            team_row("A1", "B1", start=5.21113, finish=57.0001),
        ]
        records = parse_results(_csv(*rows), SCHEMA)
        path = tmp_path / "data.jsonl"
        write_dataset(records, path)
        assert read_dataset(path) == records

from __future__ import annotations

import numpy as np
import pytest

from teamprod.affinity import EfficiencyEstimate
from teamprod.report import (
    CrossTab3x3,
    cross_skill_crosstab,
    efficiency_heatmap_cells,
    pairing_crosstab,
    read_crosstab,
    write_crosstab,
)


def bins_with_row_counts(row: int, counts: list[int]) -> tuple[list[int], list[int]]:
    """Bin vectors whose first-row cell counts match ``counts``."""
    p1, p2 = [], []
    for col, k in enumerate(counts, start=1):
        p1.extend([row] * k)
        p2.extend([col] * k)
    return p1, p2


class TestPairingCrosstab:
    def test_reproduces_published_start_pairing_row(self):
        # First row of the start-skill pairing table: 31, 7, 15.
        p1, p2 = bins_with_row_counts(1, [31, 7, 15])
        p1 += [2, 3]
        p2 += [2, 3]
        tab = pairing_crosstab(p1, p2)
        assert tab.cells[0].tolist() == [31.0, 7.0, 15.0]
        assert tab.total == len(p1)

    def test_singleton_cell(self):
        tab = pairing_crosstab([2], [3])
        expected = np.zeros((3, 3))
        expected[1, 2] = 1.0
        np.testing.assert_array_equal(tab.cells, expected)

    def test_symmetric_fixture_gives_symmetric_matrix(self, rng):
        pairs = [(1, 2), (2, 3), (1, 3), (2, 2)]
        p1 = [a for a, b in pairs] + [b for a, b in pairs]
        p2 = [b for a, b in pairs] + [a for a, b in pairs]
        tab = pairing_crosstab(p1, p2)
        np.testing.assert_array_equal(tab.cells, tab.cells.T)

    def test_empty_input_gives_zero_matrix(self):
        tab = pairing_crosstab([], [])
        np.testing.assert_array_equal(tab.cells, np.zeros((3, 3)))

    def test_one_run_per_cell(self):
        p1 = [r for r in (1, 2, 3) for _ in (1, 2, 3)]
        p2 = [c for _ in (1, 2, 3) for c in (1, 2, 3)]
        tab = pairing_crosstab(p1, p2)
        np.testing.assert_array_equal(tab.cells, np.ones((3, 3)))

    def test_count_total_matches_runs_in_scope(self, rng):
        p1 = rng.integers(1, 4, 57)
        p2 = rng.integers(1, 4, 57)
        assert pairing_crosstab(p1, p2).total == 57

    def test_mean_kind(self):
        tab = pairing_crosstab(
            [1, 1, 2], [1, 1, 3], kind="mean", values=[90.0, 110.0, 5.0]
        )
        assert tab.cells[0, 0] == 100.0
        assert tab.cells[1, 2] == 5.0
        assert np.isnan(tab.cells[2, 2])

    def test_mean_requires_values(self):
        with pytest.raises(ValueError):
            pairing_crosstab([1], [1], kind="mean")

    def test_bad_bins_rejected(self):
        with pytest.raises(ValueError):
            pairing_crosstab([0], [1])


class TestCrossSkill:
    def test_reproduces_published_cross_skill_row(self):
        # First row of the P1-start x P2-riding table: 18, 19, 16.
        p1_start, p2_riding = bins_with_row_counts(1, [18, 19, 16])
        n = len(p1_start)
        p1_riding = [2] * n
        p2_start = [3] * n
        tab_a, tab_b = cross_skill_crosstab(p1_start, p1_riding, p2_start, p2_riding)
        assert tab_a.cells[0].tolist() == [18.0, 19.0, 16.0]
        assert tab_a.row_label == "P1 start-skill bin"
        assert tab_b.row_label == "P1 riding-skill bin"
        assert tab_b.cells[1, 2] == n  # all runs: P1 riding bin 2, P2 start bin 3

    def test_empty(self):
        tab_a, tab_b = cross_skill_crosstab([], [], [], [])
        np.testing.assert_array_equal(tab_a.cells, np.zeros((3, 3)))
        np.testing.assert_array_equal(tab_b.cells, np.zeros((3, 3)))


class TestHeatmapCells:
    def _est(self, team, value, task="start", attempt=1):
        return EfficiencyEstimate(
            team_id=team, task=task, attempt=attempt, tau=0.5, a_raw=1.0, a_normalized=value
        )

    def test_pair_mean(self):
        est = [self._est("A+B", 90.0), self._est("A+B", 110.0)]
        cells = efficiency_heatmap_cells(
            est, {"A+B": ("A", "B")}, {"A": 1}, {"B": 1}
        )
        assert len(cells) == 1
        assert cells.loc[0, "mean_a_normalized"] == 100.0
        assert cells.loc[0, "n_runs"] == 2

    def test_unobserved_pair_emits_no_row(self):
        est = [self._est("A+B", 50.0)]
        cells = efficiency_heatmap_cells(
            est, {"A+B": ("A", "B")}, {"A": 1, "C": 2}, {"B": 1, "D": 2}
        )
        assert set(zip(cells["p1_rank"], cells["p2_rank"])) == {(1, 1)}

    def test_anchor_team_cell_is_100(self):
        est = [self._est("A+B", 100.0 + 1e-12)]
        cells = efficiency_heatmap_cells(est, {"A+B": ("A", "B")}, {"A": 3}, {"B": 7})
        assert cells.loc[0, "mean_a_normalized"] == pytest.approx(100.0, abs=1e-9)

    def test_unnormalized_rejected(self):
        bad = EfficiencyEstimate(team_id="A+B", task="start", attempt=1, tau=0.5, a_raw=1.0)
        with pytest.raises(ValueError):
            efficiency_heatmap_cells([bad], {"A+B": ("A", "B")}, {"A": 1}, {"B": 1})


class TestCsvRoundTrip:
    def test_count_table(self, tmp_path, rng):
        tab = pairing_crosstab(rng.integers(1, 4, 30), rng.integers(1, 4, 30))
        path = tmp_path / "tab.csv"
        write_crosstab(tab, path)
        back = read_crosstab(path)
        assert back.cell_kind == tab.cell_kind
        assert back.row_label == tab.row_label
        assert back.col_label == tab.col_label
        np.testing.assert_array_equal(back.cells, tab.cells)

    def test_mean_table_with_missing_cells(self, tmp_path):
        tab = pairing_crosstab([1, 3], [1, 2], kind="mean", values=[4.25, -1.5])
        path = tmp_path / "tab.csv"
        write_crosstab(tab, path)
        back = read_crosstab(path)
        np.testing.assert_array_equal(np.isnan(back.cells), np.isnan(tab.cells))
        np.testing.assert_allclose(
            back.cells[~np.isnan(tab.cells)], tab.cells[~np.isnan(tab.cells)]
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            CrossTab3x3("r", "c", np.zeros((2, 2)), "count")
        with pytest.raises(ValueError):
            CrossTab3x3("r", "c", np.full((3, 3), -1.0), "count")
        with pytest.raises(ValueError):
            CrossTab3x3("r", "c", np.zeros((3, 3)), "median")

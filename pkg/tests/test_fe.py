from __future__ import annotations

import numpy as np
import pytest

from teamprod.errors import DegenerateDesign, NotConvergedWarning
from teamprod.fe import (
    FixedEffectFit,
    FixedEffectSpec,
    athlete_skill,
    estimate_fixed_effects,
    residualize_team,
)

from oracles import coefficient_rmse, dense_fixed_effects


def spec_for(factors, **kw):
    return FixedEffectSpec(outcome="start", factors=tuple(factors), **kw)


def planted_three_way(n, seed, noise_sd, n_athletes=45, n_events=12, n_orders=8):
    """Random 3-way design with planted N(0,1) effects; returns rows + truth."""
    rng = np.random.default_rng(seed)
    alpha = rng.normal(0.0, 1.0, n_athletes)
    gamma = rng.normal(0.0, 1.0, n_events)
    delta = rng.normal(0.0, 1.0, n_orders)
    ath = rng.integers(0, n_athletes, n)
    ev = rng.integers(0, n_events, n)
    order = rng.integers(0, n_orders, n)
    y = alpha[ath] + gamma[ev] + delta[order] + rng.normal(0.0, noise_sd, n)
    rows = [
        (float(y[i]), (f"a{ath[i]}", f"e{ev[i]}", f"s{order[i]}"))
        for i in range(n)
    ]
    truth = {
        "athlete": {f"a{i}": alpha[i] for i in range(n_athletes)},
        "event": {f"e{i}": gamma[i] for i in range(n_events)},
        "starting_order": {f"s{i}": delta[i] for i in range(n_orders)},
    }
    return rows, truth


def centered_contrasts(coeffs: dict, rows, factor_pos: int, factor: str) -> dict:
    """Observation-weighted centering, matching the mean_zero normalization."""
    levels = [r[1][factor_pos] for r in rows]
    values = np.array([coeffs[lev] for lev in levels])
    mean = values.mean()
    return {lev: coeffs[lev] - mean for lev in coeffs}


class TestExactDesigns:
    def test_saturated_two_by_two_interpolates(self):
        # Planted y = alpha_i + gamma_e over a full 2x2 grid.
        alpha = {"A": 1.3, "B": -0.4}
        gamma = {"e1": 0.25, "e2": -0.8}
        rows = [
            (alpha[a] + gamma[e], (a, e))
            for a in ("A", "B")
            for e in ("e1", "e2")
        ]
        fit = estimate_fixed_effects(rows, spec_for(["athlete", "event"]))
        assert np.abs(fit.residuals).max() < 1e-10
        est = fit.coefficients["athlete"]
        assert est["A"] - est["B"] == pytest.approx(alpha["A"] - alpha["B"], abs=1e-10)

    def test_one_way_recovers_group_means(self):
        rows = [(2.0, ("A",)), (2.0, ("A",)), (5.0, ("B",)), (5.0, ("B",)), (8.0, ("C",))]
        fit = estimate_fixed_effects(rows, spec_for(["athlete"]))
        grand = np.mean([r[0] for r in rows])
        for lev, mean in (("A", 2.0), ("B", 5.0), ("C", 8.0)):
            assert fit.coefficients["athlete"][lev] == pytest.approx(mean - grand, abs=1e-12)
        assert fit.intercept == pytest.approx(grand, abs=1e-12)

    def test_planted_three_way_small_noise(self):
        rows, truth = planted_three_way(500, seed=7, noise_sd=0.01)
        fit = estimate_fixed_effects(rows, spec_for(["athlete", "event", "starting_order"]))
        assert fit.converged
        diffs = []
        for pos, factor in enumerate(("athlete", "event", "starting_order")):
            est = fit.coefficients[factor]
            tru = centered_contrasts(
                {k: truth[factor][k] for k in est}, rows, pos, factor
            )
            est_c = centered_contrasts(est, rows, pos, factor)
            diffs.extend(est_c[k] - tru[k] for k in est)
        rmse = float(np.sqrt(np.mean(np.square(diffs))))
        assert rmse < 0.01, f"three-way recovery RMSE {rmse}"


class TestAgainstDenseOracle:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_solution(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(30, 200))
        n_factors = int(rng.integers(1, 4))
        sizes = [int(rng.integers(2, 12)) for _ in range(n_factors)]
        rows = []
        for _ in range(n):
            levels = tuple(f"f{j}l{rng.integers(0, sizes[j])}" for j in range(n_factors))
            rows.append((float(rng.normal()), levels))
        factors = tuple(f"factor{j}" for j in range(n_factors))
        spec = FixedEffectSpec(
            outcome="start", factors=factors, tolerance=1e-12, max_iterations=100_000
        )
        fit = estimate_fixed_effects(rows, spec)
        oracle_int, oracle_eff, oracle_res = dense_fixed_effects(rows, n_factors)
        rmse = coefficient_rmse(fit.coefficients, oracle_eff, factors)
        assert rmse < 1e-7, f"coefficient RMSE vs dense oracle: {rmse}"
        assert fit.intercept == pytest.approx(oracle_int, abs=1e-7)
        assert np.abs(fit.residuals - oracle_res).max() < 1e-7


class TestInvariants:
    def test_shift_equivariance(self):
        rows, _ = planted_three_way(200, seed=3, noise_sd=0.5)
        shifted = [(v + 17.25, levels) for v, levels in rows]
        spec = spec_for(["athlete", "event", "starting_order"], tolerance=1e-12)
        fit0 = estimate_fixed_effects(rows, spec)
        fit1 = estimate_fixed_effects(shifted, spec)
        assert fit1.intercept - fit0.intercept == pytest.approx(17.25, abs=1e-9)
        for factor in spec.factors:
            for lev, v in fit0.coefficients[factor].items():
                assert fit1.coefficients[factor][lev] == pytest.approx(v, abs=1e-9)
        assert np.abs(fit1.residuals - fit0.residuals).max() < 1e-9

    def test_permutation_equivariance(self):
        rows, _ = planted_three_way(150, seed=11, noise_sd=0.3)
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(rows))
        spec = spec_for(["athlete", "event", "starting_order"], tolerance=1e-12)
        fit0 = estimate_fixed_effects(rows, spec)
        fit1 = estimate_fixed_effects([rows[i] for i in perm], spec)
        assert np.abs(fit1.residuals - fit0.residuals[perm]).max() < 1e-9

    def test_residual_orthogonality(self):
        rows, _ = planted_three_way(300, seed=5, noise_sd=1.0)
        fit = estimate_fixed_effects(
            rows, spec_for(["athlete", "event", "starting_order"], tolerance=1e-12)
        )
        n = fit.n_obs
        for pos, factor in enumerate(fit.spec.factors):
            for lev in fit.coefficients[factor]:
                mask = np.array([r[1][pos] == lev for r in rows])
                inner = abs(float(fit.residuals[mask].sum())) / n
                assert inner < 1e-7, f"{factor}/{lev}: {inner}"

    def test_mean_zero_normalization_holds(self):
        rows, _ = planted_three_way(200, seed=9, noise_sd=0.2)
        fit = estimate_fixed_effects(
            rows, spec_for(["athlete", "event", "starting_order"], tolerance=1e-12)
        )
        for pos, factor in enumerate(fit.spec.factors):
            levels = [r[1][pos] for r in rows]
            weighted = np.mean([fit.coefficients[factor][lev] for lev in levels])
            assert abs(weighted) < 1e-8

    def test_first_level_zero_policy(self):
        rows, _ = planted_three_way(100, seed=2, noise_sd=0.1)
        spec = spec_for(["athlete", "event"], reference_policy="first_level_zero")
        fit = estimate_fixed_effects([(v, lv[:2]) for v, lv in rows], spec)
        for pos, factor in enumerate(spec.factors):
            first = rows[0][1][pos]
            assert fit.coefficients[factor][first] == 0.0


class TestErrors:
    def test_aliased_factors_raise(self):
        rng = np.random.default_rng(4)
        rows = []
        for _ in range(40):
            g = int(rng.integers(0, 5))
            rows.append((float(rng.normal()), (f"a{g}", f"b{g}")))
        with pytest.raises(DegenerateDesign):
            estimate_fixed_effects(rows, spec_for(["athlete", "event"]))

    def test_nested_factors_raise(self):
        rng = np.random.default_rng(4)
        rows = []
        for _ in range(60):
            a = int(rng.integers(0, 12))
            rows.append((float(rng.normal()), (f"a{a}", f"g{a % 3}")))
        with pytest.raises(DegenerateDesign):
            estimate_fixed_effects(rows, spec_for(["athlete", "event"]))

    def test_not_converged_warns_and_flags(self):
        rows, _ = planted_three_way(200, seed=1, noise_sd=0.5)
        spec = spec_for(["athlete", "event", "starting_order"], max_iterations=2)
        with pytest.warns(NotConvergedWarning):
            fit = estimate_fixed_effects(rows, spec)
        assert not fit.converged
        assert fit.iterations_used == 2

    def test_empty_rows_raise(self):
        with pytest.raises(ValueError):
            estimate_fixed_effects([], spec_for(["athlete"]))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            FixedEffectSpec(outcome="warmup", factors=("athlete",))
        with pytest.raises(ValueError):
            FixedEffectSpec(outcome="start", factors=())
        with pytest.raises(ValueError):
            FixedEffectSpec(outcome="start", factors=("athlete", "athlete"))
        with pytest.raises(ValueError):
            FixedEffectSpec(outcome="start", factors=("athlete",), tolerance=0.0)


class TestAthleteSkill:
    def _fit(self, athletes):
        rng = np.random.default_rng(0)
        rows = []
        for i, a in enumerate(athletes):
            for e in ("e1", "e2"):
                rows.append((float(rng.normal()), (a, e)))
        return estimate_fixed_effects(rows, spec_for(["athlete", "event"]))

    def test_all_pass_threshold(self):
        fit = self._fit(["A", "B", "C"])
        profiles, dropped = athlete_skill(fit, {"A": 2, "B": 3, "C": 5})
        assert len(profiles) == 3 and not dropped
        assert {p.dimension for p in profiles} == {"start"}

    def test_one_below_threshold_logged(self):
        fit = self._fit(["A", "B", "C"])
        profiles, dropped = athlete_skill(fit, {"A": 2, "B": 1, "C": 2})
        assert len(profiles) == 2
        assert len(dropped) == 1 and "B" in dropped[0]

    def test_empty_fit_gives_empty_list(self):
        fit = FixedEffectFit(
            spec=spec_for(["athlete"]),
            coefficients={"athlete": {}},
            intercept=0.0,
            residuals=np.zeros(0),
            n_obs=0,
            iterations_used=0,
            converged=True,
        )
        profiles, dropped = athlete_skill(fit, {})
        assert profiles == [] and dropped == []

    def test_unconverged_fit_rejected(self):
        fit = self._fit(["A", "B"])
        object.__setattr__(fit, "converged", False)
        with pytest.raises(ValueError):
            athlete_skill(fit, {"A": 2, "B": 2})


class TestResidualizeTeam:
    def test_fully_absorbed_outcome(self):
        rows = [(3.0, "e1", 1), (3.0, "e1", 1), (7.0, "e2", 1), (7.0, "e2", 1)]
        res = residualize_team(rows)
        assert np.abs(res).max() < 1e-10

    def test_planted_deviation_recovered_vs_oracle(self):
        rng = np.random.default_rng(8)
        events = [f"e{i}" for i in range(6)]
        rows = []
        for i in range(80):
            e = events[int(rng.integers(0, 6))]
            s = int(rng.integers(1, 5))
            rows.append((float(rng.normal() + 2.0 * (e == "e3")), e, s))
        res = residualize_team(rows)
        _, _, oracle_res = dense_fixed_effects(
            [(v, (e, s)) for v, e, s in rows], 2
        )
        assert np.abs(res - oracle_res).max() < 1e-7

    def test_single_event_single_order_demeans(self):
        rows = [(1.0, "e1", 1), (2.0, "e1", 1), (6.0, "e1", 1)]
        res = residualize_team(rows)
        outcome = np.array([1.0, 2.0, 6.0])
        np.testing.assert_allclose(res, outcome - outcome.mean(), atol=1e-12)

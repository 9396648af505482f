"""Enumeration oracle and brute-force reference checks."""

from datetime import date

import numpy as np
import pytest

from taxopt import (
    AssetPosition,
    OversellError,
    RebalanceProblem,
    RoundingConfig,
    TaxLot,
    TaxParameters,
    enumerate_signs_solve,
    envelope_bruteforce,
    heuristic_solve,
    ltfo_bruteforce,
    random_problem,
    solve_relaxation,
    tax_liability,
)
from taxopt.oracle import _gray_patterns
from taxopt.piecewise import PiecewiseQuadratic

PARAMS = TaxParameters()
ASOF = date(2019, 6, 3)


def two_lot_position():
    return AssetPosition("XYZ", 100.0, (
        TaxLot("A", 100.0, 90.0, date(2016, 5, 1)),
        TaxLot("B", 50.0, 120.0, date(2017, 2, 1)),
    ))


class TestLtfoBruteforce:
    def test_two_lot_example(self):
        assert ltfo_bruteforce(two_lot_position(), 6000.0, ASOF, PARAMS) == pytest.approx(
            -214.20)

    def test_zero_sale(self):
        assert ltfo_bruteforce(two_lot_position(), 0.0, ASOF, PARAMS) == 0.0

    def test_full_liquidation_is_allocation_independent(self):
        pos = two_lot_position()
        assert ltfo_bruteforce(pos, pos.holding, ASOF, PARAMS) == pytest.approx(0.0)

    def test_oversell(self):
        with pytest.raises(OversellError):
            ltfo_bruteforce(two_lot_position(), 15001.0, ASOF, PARAMS)

    def test_matches_greedy_on_random_positions(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            n_lots = int(rng.integers(1, 7))
            lots = tuple(
                TaxLot(f"l{j}", float(rng.uniform(0.5, 40)), float(rng.uniform(40, 180)),
                       date(2015 + int(rng.integers(0, 5)),
                            1 + int(rng.integers(0, 12)), 1 + int(rng.integers(0, 28))))
                for j in range(n_lots)
            )
            pos = AssetPosition("R", float(rng.uniform(30, 150)), lots)
            sell = float(rng.uniform(0, 1)) * pos.holding
            greedy = tax_liability(pos, -sell, date(2020, 7, 1), PARAMS)
            lp = ltfo_bruteforce(pos, sell, date(2020, 7, 1), PARAMS)
            assert greedy == pytest.approx(lp, abs=1e-9 * max(1.0, abs(lp)))


class TestEnvelopeBruteforce:
    def test_convex_function_unchanged(self):
        f = PiecewiseQuadratic([-1.0, 1.0], [(1.0, 0.0, 0.0)])
        grid, hull = envelope_bruteforce(f, 1001)
        assert np.allclose(hull, f.evaluate(grid), atol=1e-12)

    def test_kinked_example_value(self):
        f = PiecewiseQuadratic([-2.0, 0.0, 2.0], [(1, 1, 0), (1, 0, 0)])
        grid, hull = envelope_bruteforce(f, 10_000)
        at_zero = hull[np.argmin(np.abs(grid))]
        assert at_zero == pytest.approx(-0.0625, abs=1e-3)

    def test_hull_underestimates(self):
        from taxopt import liability_curve
        curve = liability_curve(two_lot_position(), ASOF, PARAMS).cut(-15000.0, 5000.0)
        grid, hull = envelope_bruteforce(curve, 2001)
        assert np.all(hull <= curve.evaluate(grid) + 1e-9)


class TestGrayOrder:
    def test_consecutive_patterns_differ_in_one_slot(self):
        previous = None
        seen = set()
        for _, pattern in _gray_patterns(4):
            key = tuple(pattern)
            assert key not in seen
            seen.add(key)
            if previous is not None:
                assert int(np.sum(pattern != previous)) == 1
            previous = pattern.copy()
        assert len(seen) == 16


class TestEnumeration:
    def test_gain_only_single_solve(self):
        problem = random_problem(31, n=8, k=2, n_loss_assets=0)
        result = enumerate_signs_solve(problem)
        assert result.pattern_count == 1
        relax = solve_relaxation(problem)
        assert result.best_utility == pytest.approx(
            relax.upper_bound, abs=5e-6 * (1.0 + abs(relax.upper_bound)))

    def test_best_is_max_over_patterns(self):
        problem = random_problem(32, n=8, k=2, n_loss_assets=3)
        result = enumerate_signs_solve(problem)
        assert result.pattern_count == 8
        finite = [u for u in result.pattern_utilities if np.isfinite(u)]
        assert result.best_utility == pytest.approx(max(finite), rel=1e-12)

    def test_refuses_large_enumerations(self):
        problem = random_problem(33, n=16, k=2, n_loss_assets=5)
        with pytest.raises(ValueError):
            enumerate_signs_solve(problem, max_loss_assets=4)

    def test_heuristic_matches_oracle_on_three_asset_instance(self):
        problem = random_problem(34, n=3, k=1, n_loss_assets=1, held_fraction=1.0)
        oracle = enumerate_signs_solve(problem)
        _, report = heuristic_solve(problem, RoundingConfig(rng_seed=0))
        tol = 1e-6 * (1.0 + abs(oracle.best_utility))
        assert report.utility <= oracle.best_utility + tol
        assert oracle.best_utility <= report.upper_bound + tol

    def test_permutation_invariance(self):
        problem = random_problem(35, n=6, k=2, n_loss_assets=2, held_fraction=1.0)
        base = enumerate_signs_solve(problem)
        perm = np.random.default_rng(0).permutation(problem.n)
        shuffled = RebalanceProblem(
            asset_ids=tuple(problem.asset_ids[i] for i in perm),
            alpha=problem.alpha[perm],
            benchmark=problem.benchmark[perm],
            initial_holdings=problem.initial_holdings[perm],
            cash_init=problem.cash_init,
            cash_target=problem.cash_target,
            spreads=problem.spreads[perm],
            gamma_risk=problem.gamma_risk,
            gamma_tc=problem.gamma_tc,
            gamma_tax=problem.gamma_tax,
            risk_model=type(problem.risk_model)(
                problem.risk_model.exposures[perm],
                problem.risk_model.factor_cov,
                problem.risk_model.specific_var[perm],
            ),
            positions=tuple(problem.positions[i] for i in perm),
            tax=problem.tax,
            asof=problem.asof,
        )
        other = enumerate_signs_solve(shuffled)
        assert other.best_utility == pytest.approx(
            base.best_utility, abs=1e-6 * (1.0 + abs(base.best_utility)))

    def test_oracle_dominates_heuristic_and_respects_bound(self):
        for seed in range(4):
            problem = random_problem(seed, n=10, k=2, n_loss_assets=3)
            oracle = enumerate_signs_solve(problem)
            _, report = heuristic_solve(problem, RoundingConfig(rng_seed=seed))
            relax = solve_relaxation(problem)
            tol = 1e-6 * (1.0 + abs(relax.upper_bound))
            assert report.utility <= oracle.best_utility + tol
            assert oracle.best_utility <= relax.upper_bound + tol

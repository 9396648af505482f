"""HTTP service endpoints via the in-process test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from taxopt import heuristic_solve, random_problem, synthetic_market, RoundingConfig
from taxopt.service.app import app
from taxopt.service.schemas import MarketDataModel, ProblemModel


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


class TestHealth:
    def test_ok(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"


class TestSolve:
    def test_matches_library_call(self, client):
        problem = random_problem(5, n=8, k=2, n_loss_assets=2)
        payload = {
            "problem": ProblemModel.from_domain(problem).model_dump(mode="json"),
            "rounding": {"mode": "randomized", "candidates": 1, "rng_seed": 7,
                         "fallback_to_deterministic": True},
        }
        response = client.post("/solve", json=payload)
        assert response.status_code == 200
        body = response.json()
        _, report = heuristic_solve(problem, RoundingConfig(rng_seed=7))
        assert body["utility"] == pytest.approx(report.utility, rel=1e-9)
        assert body["upper_bound"] == pytest.approx(report.upper_bound, rel=1e-9)
        assert body["gap_bp"] == round(
            report.gap * 1e4 / problem.account_value, 2)
        assert len(body["post_holdings"]) == problem.n

    def test_infeasible_maps_to_409(self, client):
        problem = random_problem(5, n=4, k=2, n_loss_assets=0)
        model = ProblemModel.from_domain(problem)
        model.trade_constraints = None
        payload = model.model_dump(mode="json")
        # demand an unreachable net buy: more cash than the account holds
        payload["cash_target"] = payload["cash_init"] - 10 * sum(
            payload["initial_holdings"])
        response = client.post("/solve", json={"problem": payload})
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "infeasible"

    def test_validation_error_maps_to_422(self, client):
        problem = random_problem(5, n=4, k=2, n_loss_assets=0)
        payload = ProblemModel.from_domain(problem).model_dump(mode="json")
        payload["initial_holdings"] = payload["initial_holdings"][:-1]
        response = client.post("/solve", json={"problem": payload})
        assert response.status_code in (409, 422)


class TestEnvelopeGrid:
    def test_two_lot_asset(self, client):
        payload = {
            "position": {
                "asset_id": "XYZ", "price": 100.0,
                "lots": [
                    {"lot_id": "A", "quantity": 100.0, "basis": 90.0,
                     "acquired": "2016-05-01"},
                    {"lot_id": "B", "quantity": 50.0, "basis": 120.0,
                     "acquired": "2017-02-01"},
                ],
            },
            "asof": "2019-06-03",
            "gamma_risk": 2e-7,
            "specific_var": 1.0,
            "benchmark_holding": 15000.0,
            "buy_cap": 1_000_000.0,
            "grid": 31,
        }
        response = client.post("/envelope/grid", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert body["columns"][0] == "u"
        frame = {c: [row[i] for row in body["rows"]]
                 for i, c in enumerate(body["columns"])}
        idx = int(np.argmin(np.abs(np.array(frame["u"]) + 5000.0)))
        assert frame["u"][idx] == pytest.approx(-5000.0, abs=1e-6)
        assert frame["liability"][idx] == pytest.approx(-238.0, abs=1e-6)
        env_gap = np.array(frame["cost_env"]) - np.array(frame["cost"])
        assert np.all(env_gap <= 1e-9)


class TestBacktestEndpoint:
    def test_small_run(self, client):
        market = synthetic_market(2, n_assets=5, k_factors=2, months=5)
        payload = {
            "market": MarketDataModel.from_domain(market).model_dump(mode="json"),
            "start": str(market.calendar[0].date()),
            "end": str(market.calendar[-1].date()),
            "rounding": {"mode": "randomized", "candidates": 1, "rng_seed": 0,
                         "fallback_to_deterministic": True},
        }
        response = client.post("/backtest/run", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert len(body["metrics"]) >= 3
        assert body["final_cash"] > 0
        assert any(r["side"] == "buy" for r in body["trades"])


class TestSyntheticEndpoint:
    def test_round_trip_datasets(self, client):
        payload = {"seed": 4, "n_assets": 4, "k_factors": 2, "months": 3}
        first = client.post("/datasets/synthetic", json=payload)
        second = client.post("/datasets/synthetic", json=payload)
        assert first.status_code == 200
        assert first.json() == second.json()
        market = MarketDataModel(**first.json()).to_domain()
        direct = synthetic_market(4, n_assets=4, k_factors=2, months=3)
        np.testing.assert_allclose(market.prices.to_numpy(),
                                   direct.prices.to_numpy())


class TestCompareEndpoint:
    def test_small_batch_with_refusals(self, client):
        payload = {"seed": 1, "instances": 5, "n": 8, "k": 2,
                   "max_loss_assets": 3, "workers": 1}
        response = client.post("/compare/run", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert body["summary"]["instances"] == 5
        assert len(body["rows"]) == 5
        refused = [r for r in body["rows"] if r["oracle_refused"]]
        assert refused, "loss schedule should exceed the oracle cap here"
        for row in refused:
            assert row["oracle"] is None and row["oracle_gap_bp"] is None

"""FastAPI service wrapping the core package.

One long-running instance can serve rebalance solves for many accounts; the
CLI is a thin client of these endpoints (in-process by default). Domain errors
map onto structured JSON bodies: 422 for input problems, 409 for infeasible
instances, 502 for solver failures.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..backtest import BacktestConfig, report_metrics, run_backtest
from ..comparison import run_comparison
from ..envelope import envelope_grid_frame
from ..errors import (
    InfeasibleError,
    InputFormatError,
    SolverError,
    TaxoptError,
    ValidationError,
)
from ..heuristic import heuristic_solve
from ..synthetic import synthetic_market
from . import schemas

app = FastAPI(
    title="taxopt",
    description="Tax-aware portfolio construction service",
    version="0.1.0",
)


def _error(status: int, code: str, message: str) -> JSONResponse:
    body = schemas.ErrorBody(code=code, message=message)
    return JSONResponse(status_code=status, content={"error": body.model_dump()})


@app.exception_handler(ValidationError)
@app.exception_handler(InputFormatError)
@app.exception_handler(ValueError)
async def _input_error(request: Request, exc: Exception):
    return _error(422, "input", str(exc))


@app.exception_handler(InfeasibleError)
async def _infeasible(request: Request, exc: InfeasibleError):
    return _error(409, "infeasible", str(exc))


@app.exception_handler(SolverError)
async def _solver_failure(request: Request, exc: SolverError):
    return _error(502, "solver", str(exc))


@app.exception_handler(TaxoptError)
async def _domain_error(request: Request, exc: TaxoptError):
    return _error(422, "input", str(exc))


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": app.version}


@app.post("/solve", response_model=schemas.SolveResponse)
def solve(request: schemas.SolveRequest) -> schemas.SolveResponse:
    problem = request.problem.to_domain()
    trade, report = heuristic_solve(problem, request.rounding.to_domain())
    return schemas.SolveResponse.from_domain(problem, trade, report)


@app.post("/envelope/grid", response_model=schemas.EnvelopeResponse)
def envelope_grid(request: schemas.EnvelopeRequest) -> schemas.EnvelopeResponse:
    frame = envelope_grid_frame(
        position=request.position.to_domain(),
        asof=request.asof,
        tax=request.tax.to_domain(),
        alpha=request.alpha,
        gamma_risk=request.gamma_risk,
        specific_var=request.specific_var,
        benchmark_holding=request.benchmark_holding,
        gamma_tc=request.gamma_tc,
        spread=request.spread,
        gamma_tax=request.gamma_tax,
        buy_cap=request.buy_cap,
        grid=request.grid,
    )
    return schemas.EnvelopeResponse(
        columns=list(frame.columns),
        rows=[[float(v) for v in row] for row in frame.to_numpy()],
    )


@app.post("/backtest/run", response_model=schemas.BacktestResponse)
def backtest(request: schemas.BacktestRequest) -> schemas.BacktestResponse:
    market = request.market.to_domain()
    cfg = BacktestConfig(
        start=request.start,
        end=request.end,
        initial_cash=request.initial_cash,
        eta=request.eta,
        risk_weight=request.risk_weight,
        gamma_tc=request.gamma_tc,
        gamma_tax=request.gamma_tax,
        spread=request.spread,
        tax=request.tax.to_domain(),
        rounding=request.rounding.to_domain(),
        min_gap_days=request.min_gap_days,
    )
    result = run_backtest(cfg, market)
    metrics = [
        schemas.MetricRowModel(**row)
        for row in report_metrics(result).to_dict("records")
    ]
    trades = [
        schemas.TradeRowModel(
            date=row.date.date() if hasattr(row.date, "date") else row.date,
            asset_id=row.asset_id, lot_id=row.lot_id, side=row.side,
            shares=row.shares, dollars=row.dollars, realized_tax=row.realized_tax,
        )
        for period in result.periods
        for row in period.rows
    ]
    final_lots = [
        schemas.LotRecord(asset_id=asset, lot_id=lot.lot_id, quantity=lot.quantity,
                          basis=lot.basis, acquisition_date=lot.acquired)
        for asset, pos in sorted(result.final_state.positions.items())
        for lot in pos.lots
    ]
    return schemas.BacktestResponse(
        metrics=metrics,
        trades=trades,
        final_cash=result.final_state.cash,
        final_lots=final_lots,
    )


@app.post("/datasets/synthetic", response_model=schemas.MarketDataModel)
def synthetic(request: schemas.SyntheticRequest) -> schemas.MarketDataModel:
    market = synthetic_market(
        request.seed,
        n_assets=request.n_assets,
        k_factors=request.k_factors,
        months=request.months,
        start=request.start.isoformat(),
        n_nonmembers=request.n_nonmembers,
        dividend_yield=request.dividend_yield,
        delist_after_months=dict(request.delist_after_months) or None,
    )
    return schemas.MarketDataModel.from_domain(market)


@app.post("/compare/run", response_model=schemas.CompareResponse)
def compare(request: schemas.CompareRequest) -> schemas.CompareResponse:
    rows, summary = run_comparison(
        seed=request.seed,
        instances=request.instances,
        n=request.n,
        k=request.k,
        max_loss_assets=request.max_loss_assets,
        mode=request.mode,
        candidates=request.candidates,
        workers=request.workers,
    )
    return schemas.CompareResponse(
        rows=[schemas.CompareRowModel(**dataclasses.asdict(r)) for r in rows],
        summary=schemas.CompareSummaryModel(**dataclasses.asdict(summary)),
    )

"""Pydantic request/response models for the HTTP service.

These are the wire formats; conversion helpers map them onto the domain
dataclasses. Dollar fields stay dollars, dates are ISO-8601, matrices are
nested lists (row-major).
"""

from __future__ import annotations

from datetime import date

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from ..heuristic import RoundingConfig
from ..lots import AssetPosition, TaxLot, TaxParameters
from ..market import MarketData
from ..problem import (
    FactorRiskModel,
    LinearConstraintSet,
    RebalanceProblem,
    SolveReport,
    TradeList,
)


class TaxLotModel(BaseModel):
    lot_id: str
    quantity: float
    basis: float
    acquired: date

    def to_domain(self) -> TaxLot:
        return TaxLot(self.lot_id, self.quantity, self.basis, self.acquired)

    @classmethod
    def from_domain(cls, lot: TaxLot) -> "TaxLotModel":
        return cls(lot_id=lot.lot_id, quantity=lot.quantity, basis=lot.basis,
                   acquired=lot.acquired)


class PositionModel(BaseModel):
    asset_id: str
    price: float
    lots: list[TaxLotModel] = Field(default_factory=list)

    def to_domain(self) -> AssetPosition:
        return AssetPosition(self.asset_id, self.price,
                             tuple(lot.to_domain() for lot in self.lots))

    @classmethod
    def from_domain(cls, pos: AssetPosition) -> "PositionModel":
        return cls(asset_id=pos.asset_id, price=pos.price,
                   lots=[TaxLotModel.from_domain(lot) for lot in pos.lots])


class TaxParamsModel(BaseModel):
    long_rate: float = 0.238
    short_rate: float = 0.408
    long_term_years: int = 1

    def to_domain(self) -> TaxParameters:
        return TaxParameters(self.long_rate, self.short_rate, self.long_term_years)


class RiskModelModel(BaseModel):
    exposures: list[list[float]]
    factor_cov: list[list[float]]
    specific_var: list[float]

    def to_domain(self) -> FactorRiskModel:
        return FactorRiskModel(np.array(self.exposures), np.array(self.factor_cov),
                               np.array(self.specific_var))


class ConstraintSetModel(BaseModel):
    matrix: list[list[float]]
    lower: list[float]
    upper: list[float]

    def to_domain(self) -> LinearConstraintSet:
        return LinearConstraintSet(np.array(self.matrix), np.array(self.lower),
                                   np.array(self.upper))


class ProblemModel(BaseModel):
    asset_ids: list[str]
    alpha: list[float]
    benchmark: list[float]
    initial_holdings: list[float]
    cash_init: float
    cash_target: float
    spreads: list[float]
    gamma_risk: float
    gamma_tc: float = 1.0
    gamma_tax: float = 1.0
    risk_model: RiskModelModel
    positions: list[PositionModel]
    tax: TaxParamsModel = Field(default_factory=TaxParamsModel)
    asof: date
    trade_constraints: ConstraintSetModel | None = None
    holding_constraints: ConstraintSetModel | None = None
    buy_caps: list[float] | None = None

    def to_domain(self) -> RebalanceProblem:
        return RebalanceProblem(
            asset_ids=tuple(self.asset_ids),
            alpha=np.array(self.alpha),
            benchmark=np.array(self.benchmark),
            initial_holdings=np.array(self.initial_holdings),
            cash_init=self.cash_init,
            cash_target=self.cash_target,
            spreads=np.array(self.spreads),
            gamma_risk=self.gamma_risk,
            gamma_tc=self.gamma_tc,
            gamma_tax=self.gamma_tax,
            risk_model=self.risk_model.to_domain(),
            positions=tuple(p.to_domain() for p in self.positions),
            tax=self.tax.to_domain(),
            asof=self.asof,
            trade_constraints=(self.trade_constraints.to_domain()
                               if self.trade_constraints else None),
            holding_constraints=(self.holding_constraints.to_domain()
                                 if self.holding_constraints else None),
            buy_caps=(np.array(self.buy_caps) if self.buy_caps is not None else None),
        )

    @classmethod
    def from_domain(cls, problem: RebalanceProblem) -> "ProblemModel":
        def constraint_model(cs):
            if cs is None or cs.n_rows == 0:
                return None
            return ConstraintSetModel(matrix=cs.matrix.tolist(),
                                      lower=cs.lower.tolist(),
                                      upper=cs.upper.tolist())

        return cls(
            asset_ids=list(problem.asset_ids),
            alpha=problem.alpha.tolist(),
            benchmark=problem.benchmark.tolist(),
            initial_holdings=problem.initial_holdings.tolist(),
            cash_init=problem.cash_init,
            cash_target=problem.cash_target,
            spreads=problem.spreads.tolist(),
            gamma_risk=problem.gamma_risk,
            gamma_tc=problem.gamma_tc,
            gamma_tax=problem.gamma_tax,
            risk_model=RiskModelModel(
                exposures=problem.risk_model.exposures.tolist(),
                factor_cov=problem.risk_model.factor_cov.tolist(),
                specific_var=problem.risk_model.specific_var.tolist(),
            ),
            positions=[PositionModel.from_domain(p) for p in problem.positions],
            tax=TaxParamsModel(long_rate=problem.tax.long_rate,
                               short_rate=problem.tax.short_rate,
                               long_term_years=problem.tax.long_term_years),
            asof=problem.asof,
            trade_constraints=constraint_model(problem.trade_constraints),
            holding_constraints=constraint_model(problem.holding_constraints),
            buy_caps=(problem.buy_caps.tolist()
                      if problem.buy_caps is not None else None),
        )


class RoundingModel(BaseModel):
    mode: str = "randomized"
    candidates: int = 1
    rng_seed: int = 0
    fallback_to_deterministic: bool = True

    def to_domain(self) -> RoundingConfig:
        return RoundingConfig(self.mode, self.candidates, self.rng_seed,
                              self.fallback_to_deterministic)


class SolveRequest(BaseModel):
    problem: ProblemModel
    rounding: RoundingModel = Field(default_factory=RoundingModel)


class AllocationEntryModel(BaseModel):
    lot_id: str
    dollars: float


class TradeEntryModel(BaseModel):
    asset_id: str
    dollars: float
    allocation: list[AllocationEntryModel] = Field(default_factory=list)


class SolveResponse(BaseModel):
    status: str
    method: str
    utility: float
    upper_bound: float
    gap: float
    gap_bp: float  # rounded to 0.01 bp of account value
    account_value: float
    wall_time: float
    fallback_used: bool
    trades: list[TradeEntryModel]
    post_holdings: list[float]

    @classmethod
    def from_domain(cls, problem: RebalanceProblem, trade: TradeList,
                    report: SolveReport) -> "SolveResponse":
        entries = []
        for i, asset in enumerate(problem.asset_ids):
            if trade.u[i] == 0.0:
                continue
            alloc = trade.allocations.get(asset)
            entries.append(TradeEntryModel(
                asset_id=asset,
                dollars=float(trade.u[i]),
                allocation=[AllocationEntryModel(lot_id=lid, dollars=d)
                            for lid, d in (alloc.entries if alloc else ())],
            ))
        to_bp = 1e4 / problem.account_value
        return cls(
            status=report.status,
            method=report.method,
            utility=report.utility,
            upper_bound=report.upper_bound,
            gap=report.gap,
            gap_bp=round(report.gap * to_bp, 2),
            account_value=problem.account_value,
            wall_time=report.wall_time,
            fallback_used=report.fallback_used,
            trades=entries,
            post_holdings=[float(v) for v in trade.post_holdings],
        )


class EnvelopeRequest(BaseModel):
    position: PositionModel
    tax: TaxParamsModel = Field(default_factory=TaxParamsModel)
    asof: date
    alpha: float = 0.0
    gamma_risk: float
    specific_var: float
    benchmark_holding: float
    gamma_tc: float = 1.0
    spread: float = 0.0005
    gamma_tax: float = 1.0
    buy_cap: float
    grid: int = 1001


class EnvelopeResponse(BaseModel):
    columns: list[str]
    rows: list[list[float]]


class PriceRecord(BaseModel):
    date: date
    asset_id: str
    close: float
    dividend: float = 0.0
    in_benchmark: bool = True
    benchmark_weight: float = 0.0


class ExposureRecord(BaseModel):
    date: date
    asset_id: str
    loadings: list[float]


class SpecificVarRecord(BaseModel):
    date: date
    asset_id: str
    specific_var: float


class MarketDataModel(BaseModel):
    prices: list[PriceRecord]
    exposures: list[ExposureRecord]
    factor_cov: list[list[float]]
    specific_var: list[SpecificVarRecord]

    def to_domain(self) -> MarketData:
        price_frame = pd.DataFrame([r.model_dump() for r in self.prices])
        price_frame["date"] = pd.to_datetime(price_frame["date"])

        def pivot(col, fill=None, dtype=None):
            wide = price_frame.pivot(index="date", columns="asset_id", values=col)
            if fill is not None:
                wide = wide.fillna(fill)
            if dtype is not None:
                wide = wide.astype(dtype)
            return wide.sort_index()

        prices = pivot("close")
        k = len(self.exposures[0].loadings)
        factors = [f"f{j + 1}" for j in range(k)]
        exp = pd.DataFrame(
            [[pd.Timestamp(r.date), r.asset_id, *r.loadings] for r in self.exposures],
            columns=["date", "asset_id", *factors],
        ).set_index(["date", "asset_id"])
        var = pd.DataFrame([r.model_dump() for r in self.specific_var])
        var["date"] = pd.to_datetime(var["date"])
        specific = var.pivot(index="date", columns="asset_id",
                             values="specific_var").sort_index()
        delistings = {}
        for asset in prices.columns:
            series = prices[asset].dropna()
            if len(series) and series.index[-1] < prices.index[-1]:
                delistings[asset] = series.index[-1] + pd.offsets.BDay(1)
        return MarketData(
            prices=prices,
            dividends=pivot("dividend", fill=0.0),
            in_benchmark=pivot("in_benchmark", fill=False, dtype=bool),
            benchmark_weights=pivot("benchmark_weight", fill=0.0),
            exposures=exp,
            factor_cov=np.array(self.factor_cov),
            specific_var=specific,
            delistings=delistings,
        )

    @classmethod
    def from_domain(cls, market: MarketData) -> "MarketDataModel":
        prices = []
        for stamp, row in market.prices.iterrows():
            for asset in market.prices.columns:
                close = row[asset]
                if np.isnan(close):
                    continue
                prices.append(PriceRecord(
                    date=stamp.date(), asset_id=asset, close=float(close),
                    dividend=float(market.dividends.loc[stamp, asset]),
                    in_benchmark=bool(market.in_benchmark.loc[stamp, asset]),
                    benchmark_weight=float(market.benchmark_weights.loc[stamp, asset]),
                ))
        exposures = [
            ExposureRecord(date=stamp.date(), asset_id=asset,
                           loadings=[float(v) for v in row])
            for (stamp, asset), row in market.exposures.iterrows()
        ]
        specific = [
            SpecificVarRecord(date=stamp.date(), asset_id=asset,
                              specific_var=float(market.specific_var.loc[stamp, asset]))
            for stamp in market.specific_var.index
            for asset in market.specific_var.columns
        ]
        return cls(prices=prices, exposures=exposures,
                   factor_cov=[[float(v) for v in row] for row in market.factor_cov],
                   specific_var=specific)


class LotRecord(BaseModel):
    asset_id: str
    lot_id: str
    quantity: float
    basis: float
    acquisition_date: date


class BacktestRequest(BaseModel):
    market: MarketDataModel
    start: date
    end: date
    initial_cash: float = 1_000_000.0
    eta: float = 0.005
    risk_weight: float = 200.0
    gamma_tc: float = 1.0
    gamma_tax: float = 1.0
    spread: float = 0.0005
    tax: TaxParamsModel = Field(default_factory=TaxParamsModel)
    rounding: RoundingModel = Field(default_factory=RoundingModel)
    min_gap_days: int = 31


class TradeRowModel(BaseModel):
    date: date
    asset_id: str
    lot_id: str
    side: str
    shares: float
    dollars: float
    realized_tax: float


class MetricRowModel(BaseModel):
    date: date
    active_risk: float
    cum_tax_liability: float
    account_value: float
    utility: float
    bound: float
    gap: float
    solve_seconds: float


class BacktestResponse(BaseModel):
    metrics: list[MetricRowModel]
    trades: list[TradeRowModel]
    final_cash: float
    final_lots: list[LotRecord]


class SyntheticRequest(BaseModel):
    seed: int = 0
    n_assets: int = 30
    k_factors: int = 5
    months: int = 72
    start: date = date(2015, 1, 2)
    n_nonmembers: int = 0
    dividend_yield: float = 0.0
    delist_after_months: dict[str, int] = Field(default_factory=dict)


class CompareRequest(BaseModel):
    seed: int = 0
    instances: int = 50
    n: int = 30
    k: int = 5
    max_loss_assets: int = 10
    mode: str = "randomized"
    candidates: int = 1
    workers: int = 1


class CompareRowModel(BaseModel):
    instance: int
    seed: int
    loss_assets: int
    utility: float
    oracle: float | None
    bound: float
    gap_bp: float
    oracle_gap_bp: float | None
    tight: bool
    oracle_refused: bool
    heuristic_seconds: float
    oracle_seconds: float


class CompareSummaryModel(BaseModel):
    instances: int
    tight_count: int
    tight_fraction: float
    mean_gap_bp: float
    max_gap_bp: float
    oracle_within_tight_bp: int
    max_oracle_gap_bp: float
    oracle_refusals: int


class CompareResponse(BaseModel):
    rows: list[CompareRowModel]
    summary: CompareSummaryModel


class ErrorBody(BaseModel):
    code: str  # input | infeasible | solver | internal
    message: str

"""Monthly tax-loss-harvesting simulation over a market dataset.

Trades on the first business day more than a configurable number of calendar
days (default 31) after the previous trade. Each step liquidates delisted
holdings, credits dividends, builds a rebalance problem from the ledger and
market snapshot (non-constituents are buy-restricted), solves it with the
two-stage heuristic, rounds the trade list to whole shares, and applies it to
the lot ledger at the close. Active risk and cumulative realized tax are
recorded every period.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import TaxoptError
from .heuristic import RoundingConfig, heuristic_solve
from .lots import AssetPosition, TaxParameters, apply_trade, liquidate, ltfo_allocate
from .market import MarketData
from .problem import RebalanceProblem, SolveReport, TradeList, cash_target
from .synthetic import synthetic_market  # re-export: backtests own their data plumbing

__all__ = [
    "BacktestConfig", "LedgerState", "TradeRow", "PeriodRecord",
    "BacktestResult", "build_rebalance_problem", "run_backtest", "step_month",
    "report_metrics", "synthetic_market",
]


@dataclass(frozen=True)
class BacktestConfig:
    start: pd.Timestamp
    end: pd.Timestamp
    initial_cash: float = 1_000_000.0
    eta: float = 0.005  # post-trade cash fraction
    risk_weight: float = 200.0  # divided by account value each rebalance
    gamma_tc: float = 1.0
    gamma_tax: float = 1.0
    spread: float = 0.0005  # half bid-ask, 10 bp full spread
    tax: TaxParameters = field(default_factory=TaxParameters)
    rounding: RoundingConfig = field(default_factory=RoundingConfig)
    min_gap_days: int = 31

    def __post_init__(self):
        object.__setattr__(self, "start", pd.Timestamp(self.start))
        object.__setattr__(self, "end", pd.Timestamp(self.end))
        if self.end < self.start:
            raise ValueError("end precedes start")


@dataclass(frozen=True)
class LedgerState:
    positions: dict[str, AssetPosition]
    cash: float
    last_trade: pd.Timestamp | None
    cum_tax: float
    period_index: int = 0


@dataclass(frozen=True)
class TradeRow:
    date: pd.Timestamp
    asset_id: str
    lot_id: str
    side: str  # buy / sell / delist
    shares: float
    dollars: float
    realized_tax: float


@dataclass(frozen=True)
class PeriodRecord:
    date: pd.Timestamp
    asset_ids: tuple[str, ...]
    trade: TradeList  # integerized dollars
    active_risk: float  # fraction of account value
    cum_tax: float
    account_value: float  # post trade
    report: SolveReport
    rows: tuple[TradeRow, ...]
    pre_round_residual: float  # |1'u - (c_init - c_des)| before rounding
    cash_after: float


@dataclass(frozen=True)
class BacktestResult:
    periods: tuple[PeriodRecord, ...]
    final_state: LedgerState
    config: BacktestConfig


def _rebalance_dates(calendar: pd.DatetimeIndex, cfg: BacktestConfig) -> list[pd.Timestamp]:
    window = calendar[(calendar >= cfg.start) & (calendar <= cfg.end)]
    if not len(window):
        raise TaxoptError("no trading days inside the backtest window")
    dates = [window[0]]
    for day in window[1:]:
        if (day - dates[-1]).days > cfg.min_gap_days:
            dates.append(day)
    return list(dates)


def _accrue_dividends(state: LedgerState, asof: pd.Timestamp, market: MarketData) -> float:
    if not state.positions:
        return 0.0
    lo = state.last_trade
    window = market.dividends.loc[
        (market.dividends.index > (lo or market.calendar[0] - pd.Timedelta(days=1)))
        & (market.dividends.index <= asof)
    ]
    if not len(window):
        return 0.0
    total = 0.0
    for asset, pos in state.positions.items():
        if asset in window.columns:
            total += pos.shares * float(window[asset].fillna(0.0).sum())
    return total


def _liquidate_delisted(
    state: LedgerState, asof: pd.Timestamp, market: MarketData, cfg: BacktestConfig
) -> tuple[dict[str, AssetPosition], float, float, list[TradeRow]]:
    positions = dict(state.positions)
    cash_in = 0.0
    tax_in = 0.0
    rows: list[TradeRow] = []
    listed_now = set(market.listed_assets(asof))
    for asset in sorted(positions):
        if asset in listed_now:
            continue
        last_date, last_close = market.last_quote(asset)
        pos = dataclasses.replace(positions.pop(asset), price=last_close)
        proceeds, liability = liquidate(pos, last_date.date(), cfg.tax)
        cash_in += proceeds
        tax_in += liability
        rows.append(TradeRow(
            date=last_date, asset_id=asset, lot_id="*", side="delist",
            shares=-pos.shares, dollars=-proceeds, realized_tax=liability,
        ))
    return positions, cash_in, tax_in, rows


def build_rebalance_problem(
    positions: dict[str, AssetPosition], cash: float, asof: pd.Timestamp,
    market: MarketData, cfg: BacktestConfig,
) -> RebalanceProblem:
    """Rebalance instance from a ledger snapshot and a market snapshot.

    Benchmark holdings are scaled to the account value; assets outside the
    benchmark get a zero buy cap (they may still be held or sold).
    """
    ids = market.listed_assets(asof)
    closes = market.prices.loc[asof]
    pos_list = []
    holdings = np.zeros(len(ids))
    for i, asset in enumerate(ids):
        price = float(closes[asset])
        held = positions.get(asset)
        pos = (dataclasses.replace(held, price=price)
               if held is not None else AssetPosition(asset, price))
        pos_list.append(pos)
        holdings[i] = pos.holding
    account = holdings.sum() + cash
    weights = market.benchmark_weights.loc[asof, ids].fillna(0.0).to_numpy()
    total_w = weights.sum()
    if total_w <= 0:
        raise TaxoptError(f"benchmark weights vanish on {asof.date()}")
    benchmark = account * weights / total_w
    members = market.in_benchmark.loc[asof, ids].fillna(False).to_numpy(dtype=bool)
    buy_caps = np.where(members, account, 0.0)
    return RebalanceProblem(
        asset_ids=tuple(ids),
        alpha=np.zeros(len(ids)),
        benchmark=benchmark,
        initial_holdings=holdings,
        cash_init=cash,
        cash_target=cash_target(holdings, cash, cfg.eta),
        spreads=np.full(len(ids), cfg.spread),
        gamma_risk=cfg.risk_weight / account,
        gamma_tc=cfg.gamma_tc,
        gamma_tax=cfg.gamma_tax,
        risk_model=market.risk_model_asof(asof, ids),
        positions=tuple(pos_list),
        tax=cfg.tax,
        asof=asof.date(),
        buy_caps=buy_caps,
    )


def _integerize(problem: RebalanceProblem, u: np.ndarray) -> np.ndarray:
    """Whole-share trades: round to nearest, toward zero when a sell would
    otherwise exceed the held share count."""
    prices = np.array([pos.price for pos in problem.positions])
    shares = np.round(u / prices)
    held = np.array([pos.shares for pos in problem.positions])
    oversold = -shares > held
    shares[oversold] = -np.floor(held[oversold])
    return shares * prices


def step_month(
    state: LedgerState, asof: pd.Timestamp, market: MarketData, cfg: BacktestConfig
) -> tuple[LedgerState, PeriodRecord]:
    """One rebalance; returns the updated ledger and the period record."""
    positions, delist_cash, delist_tax, rows = _liquidate_delisted(
        state, asof, market, cfg)
    cash = state.cash + delist_cash + _accrue_dividends(state, asof, market)
    cum_tax = state.cum_tax + delist_tax

    try:
        problem = build_rebalance_problem(positions, cash, asof, market, cfg)
    except KeyError as exc:
        raise TaxoptError(f"{asof.date()}: missing market data ({exc})") from exc
    for i, asset in enumerate(problem.asset_ids):
        if problem.positions[i].lots:
            positions[asset] = problem.positions[i]  # reprice ledger to the close
    rounding = dataclasses.replace(
        cfg.rounding, rng_seed=cfg.rounding.rng_seed + state.period_index)
    try:
        trade, report = heuristic_solve(problem, rounding)
    except TaxoptError as exc:
        raise TaxoptError(f"{asof.date()}: {exc}") from exc
    pre_round_residual = abs(float(np.sum(trade.u)) - problem.cash_delta)

    u_int = _integerize(problem, trade.u)
    realized = 0.0
    for i, asset in enumerate(problem.asset_ids):
        ui = float(u_int[i])
        if ui == 0.0:
            continue
        pos = problem.positions[i]
        price = pos.price
        if ui < 0:
            alloc = ltfo_allocate(pos, -ui, problem.asof, cfg.tax)
            new_pos, tax_paid = apply_trade(pos, ui, problem.asof, price, cfg.tax,
                                            alloc=alloc)
            realized += tax_paid
            for lot_id, dollars in alloc.entries:
                rows.append(TradeRow(
                    date=asof, asset_id=asset, lot_id=lot_id, side="sell",
                    shares=-dollars / price, dollars=-dollars,
                    realized_tax=_lot_tax(pos, lot_id, dollars, problem, cfg),
                ))
        else:
            new_pos, _ = apply_trade(pos, ui, problem.asof, price, cfg.tax)
            rows.append(TradeRow(
                date=asof, asset_id=asset, lot_id=new_pos.lots[-1].lot_id, side="buy",
                shares=ui / price, dollars=ui, realized_tax=0.0,
            ))
        if new_pos.lots:
            positions[asset] = new_pos
        else:
            positions.pop(asset, None)

    transaction_cost = float(problem.spreads @ np.abs(u_int))
    cash_after = cash - float(np.sum(u_int)) - transaction_cost
    cum_tax += realized

    h_post = problem.initial_holdings + u_int
    _assert_ledger(problem, positions, h_post, asof, rows)
    active = h_post - problem.benchmark
    systematic, specific = problem.risk_model.quad(active)
    account_post = float(h_post.sum()) + cash_after
    record = PeriodRecord(
        date=asof,
        asset_ids=problem.asset_ids,
        trade=TradeList(u=u_int, allocations=trade.allocations,
                        post_holdings=h_post),
        active_risk=math.sqrt(max(systematic + specific, 0.0)) / problem.account_value,
        cum_tax=cum_tax,
        account_value=account_post,
        report=report,
        rows=tuple(rows),
        pre_round_residual=pre_round_residual,
        cash_after=cash_after,
    )
    new_state = LedgerState(
        positions=positions,
        cash=cash_after,
        last_trade=asof,
        cum_tax=cum_tax,
        period_index=state.period_index + 1,
    )
    return new_state, record


def _lot_tax(pos: AssetPosition, lot_id: str, dollars: float,
             problem: RebalanceProblem, cfg: BacktestConfig) -> float:
    from .lots import classify_term, lot_tax_rate

    lot = next(lot for lot in pos.lots if lot.lot_id == lot_id)
    term = classify_term(lot, problem.asof, cfg.tax)
    return lot_tax_rate(lot, pos.price, term, cfg.tax) * dollars


def _assert_ledger(problem: RebalanceProblem, positions: dict[str, AssetPosition],
                   h_post: np.ndarray, asof: pd.Timestamp,
                   rows: list[TradeRow]) -> None:
    tol = 1e-6 * max(1.0, problem.account_value)
    if np.any(h_post < -tol):
        raise TaxoptError(f"{asof.date()}: long-only violated after rounding")
    sides: dict[str, set[str]] = {}
    for row in rows:
        if row.date == asof:
            sides.setdefault(row.asset_id, set()).add(row.side)
    for asset, seen in sides.items():
        if {"buy", "sell"} <= seen:
            raise TaxoptError(f"{asof.date()}: wash trade on {asset}")
    for i, asset in enumerate(problem.asset_ids):
        pos = positions.get(asset)
        value = pos.holding if pos is not None else 0.0
        if abs(value - h_post[i]) > tol:
            raise TaxoptError(
                f"{asof.date()}: ledger value {value:.2f} != holdings {h_post[i]:.2f} "
                f"for {asset}"
            )


def run_backtest(cfg: BacktestConfig, market: MarketData) -> BacktestResult:
    """Run the monthly protocol over [start, end]; see module docstring."""
    findings = market.check()
    if findings:
        raise TaxoptError("market data invalid: " + "; ".join(findings))
    state = LedgerState(positions={}, cash=cfg.initial_cash, last_trade=None,
                        cum_tax=0.0)
    records: list[PeriodRecord] = []
    for asof in _rebalance_dates(market.calendar, cfg):
        state, record = step_month(state, asof, market, cfg)
        records.append(record)
    return BacktestResult(periods=tuple(records), final_state=state, config=cfg)


def report_metrics(result: BacktestResult) -> pd.DataFrame:
    """Per-period series: active risk, cumulative tax, account value, solve stats."""
    if not result.periods:
        raise ValueError("empty backtest result")
    rows = [
        {
            "date": p.date.date().isoformat(),
            "active_risk": p.active_risk,
            "cum_tax_liability": p.cum_tax,
            "account_value": p.account_value,
            "utility": p.report.utility,
            "bound": p.report.upper_bound,
            "gap": p.report.gap,
            "solve_seconds": p.report.wall_time,
        }
        for p in result.periods
    ]
    return pd.DataFrame(rows)

"""Seeded generators: random rebalance instances and synthetic market data.

Stand-ins for proprietary index membership and risk-model data. The factor
model has a dominant market-like first factor (loadings near one, monthly vol
around 4.5%) plus weaker style factors, and per-asset specific vols of 2-5%
per month; daily log returns are drawn with covariance (X Sigma X' + D)/21 so
monthly aggregates realize the model covariance.
"""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pandas as pd

from .lots import AssetPosition, TaxLot, TaxParameters
from .market import MarketData
from .problem import FactorRiskModel, RebalanceProblem, cash_target

TRADING_DAYS_PER_MONTH = 21


def _random_factor_model(rng, n: int, k: int, market_vol: float = 0.045,
                         specific_vol_range=(0.02, 0.05)):
    exposures = rng.normal(0.0, 0.3, size=(n, k))
    exposures[:, 0] = rng.normal(1.0, 0.15, size=n)
    style_scale = market_vol / 0.045  # style vols track the market factor
    vols = np.concatenate([[market_vol],
                           rng.uniform(0.005, 0.015, k - 1) * style_scale])
    raw = rng.normal(size=(k, 2 * k))
    cov = raw @ raw.T / (2 * k)
    d = np.sqrt(np.diag(cov))
    corr = cov / np.outer(d, d)
    corr = 0.3 * corr + 0.7 * np.eye(k)
    factor_cov = corr * np.outer(vols, vols)
    specific = rng.uniform(specific_vol_range[0] ** 2, specific_vol_range[1] ** 2, n)
    return exposures, factor_cov, specific


def _random_lots(rng, asset_id: str, price: float, holding: float, asof: date,
                 want_loss: bool) -> tuple[TaxLot, ...]:
    n_lots = int(rng.integers(1, 6))
    split = rng.dirichlet(np.ones(n_lots)) * holding
    loss_slots = set()
    if want_loss:
        loss_slots = set(rng.choice(n_lots, size=max(1, n_lots // 2), replace=False))
    lots = []
    for j, dollars in enumerate(split):
        if dollars <= 1e-6:
            continue
        ratio = rng.uniform(1.02, 1.6) if j in loss_slots else rng.uniform(0.55, 0.99)
        age_days = int(rng.integers(30, 1400))
        lots.append(TaxLot(
            lot_id=f"{asset_id}-{j}",
            quantity=dollars / price,
            basis=price * ratio,
            acquired=asof - timedelta(days=age_days),
        ))
    return tuple(lots)


def random_problem(
    seed: int,
    n: int = 30,
    k: int = 5,
    n_loss_assets: int = 5,
    alpha_scale: float = 0.0,
    eta: float = 0.005,
    risk_weight: float = 200.0,
    spread: float = 0.0005,
    gamma_tc: float = 1.0,
    gamma_tax: float = 1.0,
    held_fraction: float = 0.9,
    asof: date = date(2020, 6, 1),
) -> RebalanceProblem:
    """Seeded random rebalance instance with a controlled loss-asset count."""
    if n_loss_assets > n:
        raise ValueError("more loss assets than assets")
    rng = np.random.default_rng(seed)
    ids = [f"A{i:03d}" for i in range(n)]
    prices = rng.uniform(20.0, 200.0, n)
    held = rng.random(n) < held_fraction
    held[rng.choice(n, size=n_loss_assets, replace=False)] = True
    target = rng.uniform(1e4, 6e4, n) * held
    loss_assets = set(rng.choice(np.flatnonzero(held), size=n_loss_assets, replace=False))

    positions = []
    holdings = np.zeros(n)
    for i, asset in enumerate(ids):
        lots = (
            _random_lots(rng, asset, prices[i], target[i], asof, i in loss_assets)
            if held[i] else ()
        )
        pos = AssetPosition(asset, prices[i], lots)
        positions.append(pos)
        holdings[i] = pos.holding

    cash = float(rng.uniform(0.01, 0.05) * holdings.sum())
    account = holdings.sum() + cash
    benchmark = account * rng.dirichlet(np.full(n, 5.0))
    exposures, factor_cov, specific = _random_factor_model(rng, n, k)
    alpha = rng.normal(0.0, alpha_scale, n) if alpha_scale > 0 else np.zeros(n)

    return RebalanceProblem(
        asset_ids=tuple(ids),
        alpha=alpha,
        benchmark=benchmark,
        initial_holdings=holdings,
        cash_init=cash,
        cash_target=cash_target(holdings, cash, eta),
        spreads=np.full(n, spread),
        gamma_risk=risk_weight / account,
        gamma_tc=gamma_tc,
        gamma_tax=gamma_tax,
        risk_model=FactorRiskModel(exposures, factor_cov, specific),
        positions=tuple(positions),
        tax=TaxParameters(),
        asof=asof,
    )


def synthetic_market(
    seed: int,
    n_assets: int = 30,
    k_factors: int = 5,
    months: int = 72,
    start: str = "2015-01-02",
    market_vol: float = 0.045,
    specific_vol_range: tuple[float, float] = (0.02, 0.05),
    drift: float = 0.0003,
    n_nonmembers: int = 0,
    delist_after_months: dict[str, int] | None = None,
    dividend_yield: float = 0.0,
) -> MarketData:
    """Seeded synthetic market (see module docstring for the distribution).

    Emits a business-day calendar of roughly 21 days per requested month,
    constant risk model, a fixed benchmark weight vector, optional permanent
    non-members (buy-restricted in backtests), optional delistings keyed by
    month index, and optional quarterly dividends at the given annual yield.
    """
    if min(n_assets, k_factors, months) < 1:
        raise ValueError("n_assets, k_factors, months must all be >= 1")
    rng = np.random.default_rng(seed)
    ids = [f"S{i:03d}" for i in range(n_assets)]
    calendar = pd.bdate_range(start, periods=months * TRADING_DAYS_PER_MONTH + 1)

    exposures, factor_cov, specific = _random_factor_model(
        rng, n_assets, k_factors, market_vol, specific_vol_range)
    n_days = len(calendar) - 1
    # eigh-based square root: tolerates the zero-volatility degenerate case
    eigval, eigvec = np.linalg.eigh(factor_cov / TRADING_DAYS_PER_MONTH)
    root = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    factor_draws = rng.standard_normal((n_days, k_factors)) @ root.T
    eps = rng.standard_normal((n_days, n_assets)) * np.sqrt(
        specific / TRADING_DAYS_PER_MONTH)
    log_returns = factor_draws @ exposures.T + eps + drift * exposures[:, 0]
    p0 = rng.uniform(20.0, 200.0, n_assets)
    log_prices = np.vstack([np.zeros(n_assets), np.cumsum(log_returns, axis=0)])
    prices = pd.DataFrame(p0 * np.exp(log_prices), index=calendar, columns=ids)

    members = np.ones(n_assets, dtype=bool)
    if n_nonmembers:
        if n_nonmembers >= n_assets:
            raise ValueError("benchmark needs at least one member asset")
        members[rng.choice(n_assets, size=n_nonmembers, replace=False)] = False
    raw_weights = np.exp(rng.normal(0.0, 0.5, n_assets)) * members
    weights = raw_weights / raw_weights.sum()
    in_benchmark = pd.DataFrame(
        np.tile(members, (len(calendar), 1)), index=calendar, columns=ids)
    benchmark_weights = pd.DataFrame(
        np.tile(weights, (len(calendar), 1)), index=calendar, columns=ids)

    dividends = pd.DataFrame(0.0, index=calendar, columns=ids)
    if dividend_yield > 0:
        pay_dates = calendar[::3 * TRADING_DAYS_PER_MONTH][1:]
        for d in pay_dates:
            dividends.loc[d] = dividend_yield / 4.0 * prices.loc[d].to_numpy()

    delistings: dict[str, pd.Timestamp] = {}
    prices_out = prices.copy()
    for asset, month_idx in (delist_after_months or {}).items():
        cutoff = min(month_idx * TRADING_DAYS_PER_MONTH, len(calendar) - 1)
        stamp = calendar[cutoff]
        prices_out.loc[prices_out.index > stamp, asset] = np.nan
        in_benchmark.loc[in_benchmark.index > stamp, asset] = False
        dividends.loc[dividends.index > stamp, asset] = 0.0
        delistings[asset] = stamp + pd.offsets.BDay(1)
        later = benchmark_weights.index > stamp
        benchmark_weights.loc[later, asset] = 0.0
        live = benchmark_weights.loc[later]
        benchmark_weights.loc[later] = live.div(live.sum(axis=1), axis=0)

    exposure_frame = pd.DataFrame(
        exposures, index=pd.Index(ids, name="asset_id"),
        columns=[f"f{j + 1}" for j in range(k_factors)])
    exposure_frame = pd.concat({calendar[0]: exposure_frame}, names=["date"])
    specific_frame = pd.DataFrame(
        specific[None, :], index=pd.DatetimeIndex([calendar[0]]), columns=ids)

    return MarketData(
        prices=prices_out,
        dividends=dividends,
        in_benchmark=in_benchmark,
        benchmark_weights=benchmark_weights,
        exposures=exposure_frame,
        factor_cov=factor_cov,
        specific_var=specific_frame,
        delistings=delistings,
    )

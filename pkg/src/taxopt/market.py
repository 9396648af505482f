"""Market dataset consumed by the backtest: prices, benchmark, risk model.

Wide pandas frames indexed by business date with one column per asset; the
risk model pieces use as-of semantics (latest observation at or before the
valuation date) so a constant model is stored once. An asset whose last quote
precedes the calendar end counts as delisted the day after that quote.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .problem import FactorRiskModel


@dataclass(frozen=True)
class MarketData:
    prices: pd.DataFrame  # close, NaN once delisted
    dividends: pd.DataFrame  # per-share cash paid on that date
    in_benchmark: pd.DataFrame  # bool membership flags
    benchmark_weights: pd.DataFrame  # nonnegative, rows sum to 1
    exposures: pd.DataFrame  # MultiIndex (date, asset_id) x factor columns
    factor_cov: np.ndarray  # k x k, constant over time
    specific_var: pd.DataFrame  # wide, as-of rows
    delistings: dict[str, pd.Timestamp] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "factor_cov", np.asarray(self.factor_cov, dtype=float))

    @property
    def calendar(self) -> pd.DatetimeIndex:
        return self.prices.index

    @property
    def assets(self) -> list[str]:
        return list(self.prices.columns)

    @property
    def n_factors(self) -> int:
        return self.factor_cov.shape[0]

    def check(self) -> list[str]:
        problems = []
        listed = self.prices.notna()
        if not (self.prices[listed].stack() > 0).all():
            problems.append("listed prices must be positive")
        weights = self.benchmark_weights.fillna(0.0)
        sums = weights.sum(axis=1)
        if (weights < -1e-12).any().any():
            problems.append("benchmark weights must be nonnegative")
        if not np.allclose(sums, 1.0, atol=1e-6):
            problems.append("benchmark weights must sum to 1 on each date")
        return problems

    def listed_assets(self, asof: pd.Timestamp) -> list[str]:
        row = self.prices.loc[asof]
        return [a for a in self.prices.columns if not np.isnan(row[a])]

    def last_quote(self, asset: str) -> tuple[pd.Timestamp, float]:
        series = self.prices[asset].dropna()
        return series.index[-1], float(series.iloc[-1])

    def risk_model_asof(self, asof: pd.Timestamp, assets: list[str]) -> FactorRiskModel:
        dates = self.exposures.index.get_level_values(0).unique().sort_values()
        usable = dates[dates <= asof]
        if not len(usable):
            raise KeyError(f"no risk model at or before {asof.date()}")
        snap = self.exposures.loc[usable[-1]]
        var_rows = self.specific_var.loc[:asof]
        if not len(var_rows):
            raise KeyError(f"no specific variance at or before {asof.date()}")
        return FactorRiskModel(
            exposures=snap.loc[assets].to_numpy(),
            factor_cov=self.factor_cov,
            specific_var=var_rows.iloc[-1][assets].to_numpy(),
        )

"""CSV schemas and atomic file writing.

Every file starts with a schema-version comment line ``# taxopt-csv <name> v1``
and is written atomically (temp file in the target directory, then rename).
Readers skip comment lines. Schemas:

  lots.csv        asset_id, lot_id, quantity, basis, acquisition_date (ISO-8601)
  prices.csv      date, asset_id, close, dividend, in_benchmark, benchmark_weight
  exposures.csv   date, asset_id, f1..fk
  factor_cov.csv  f1..fk (k rows)
  specific_var.csv date, asset_id, specific_var
  trades.csv      date, asset_id, lot_id, side, shares, dollars, realized_tax
  metrics.csv     date, active_risk, cum_tax_liability, account_value, utility,
                  bound, gap, solve_seconds
  envelope.csv    u, liability, liability_env, cost, cost_env, approx_liability
  comparison.csv  instance, seed, loss_assets, utility, oracle, bound,
                  gap_bp, oracle_gap_bp, tight, oracle_refused,
                  heuristic_seconds, oracle_seconds

An asset whose last prices.csv row predates the calendar end is treated as
delisted on the next business day. lots.csv parse failures carry line numbers.
"""

from __future__ import annotations

import csv
import io as _io
import os
import tempfile
from datetime import date, datetime
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InputFormatError
from .lots import AssetPosition, TaxLot
from .market import MarketData

SCHEMA_VERSION = "v1"

LOTS_COLUMNS = ["asset_id", "lot_id", "quantity", "basis", "acquisition_date"]
PRICES_COLUMNS = ["date", "asset_id", "close", "dividend", "in_benchmark",
                  "benchmark_weight"]
TRADES_COLUMNS = ["date", "asset_id", "lot_id", "side", "shares", "dollars",
                  "realized_tax"]
METRICS_COLUMNS = ["date", "active_risk", "cum_tax_liability", "account_value",
                   "utility", "bound", "gap", "solve_seconds"]
ENVELOPE_COLUMNS = ["u", "liability", "liability_env", "cost", "cost_env",
                    "approx_liability"]
COMPARISON_COLUMNS = ["instance", "seed", "loss_assets", "utility", "oracle",
                      "bound", "gap_bp", "oracle_gap_bp", "tight",
                      "oracle_refused", "heuristic_seconds", "oracle_seconds"]


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, schema: str, frame: pd.DataFrame) -> None:
    buf = _io.StringIO()
    buf.write(f"# taxopt-csv {schema} {SCHEMA_VERSION}\n")
    frame.to_csv(buf, index=False)
    atomic_write_text(path, buf.getvalue())


def read_csv(path: Path, columns: list[str] | None = None) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InputFormatError(path, 0, "file not found")
    frame = pd.read_csv(path, comment="#")
    if columns is not None:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise InputFormatError(path, 1, f"missing columns {missing}")
    return frame


# --- lot ledger ------------------------------------------------------------

def write_lots(path: Path, positions: dict[str, AssetPosition]) -> None:
    rows = [
        {"asset_id": asset, "lot_id": lot.lot_id, "quantity": lot.quantity,
         "basis": lot.basis, "acquisition_date": lot.acquired.isoformat()}
        for asset, pos in sorted(positions.items())
        for lot in pos.lots
    ]
    write_csv(path, "lots", pd.DataFrame(rows, columns=LOTS_COLUMNS))


def read_lots(path: Path) -> dict[str, tuple[TaxLot, ...]]:
    """Parse lots.csv; rejects bad rows with their line number."""
    path = Path(path)
    if not path.exists():
        raise InputFormatError(path, 0, "file not found")
    lots: dict[str, list[TaxLot]] = {}
    with open(path, newline="") as fh:
        lines = [(i + 1, line) for i, line in enumerate(fh)
                 if not line.startswith("#")]
    if not lines:
        return {}
    header_line, header = lines[0]
    reader = csv.DictReader([header] + [line for _, line in lines[1:]])
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != LOTS_COLUMNS:
        raise InputFormatError(path, header_line,
                               f"expected header {','.join(LOTS_COLUMNS)}")
    for (line_no, _), row in zip(lines[1:], reader):
        try:
            quantity = float(row["quantity"])
            basis = float(row["basis"])
            acquired = datetime.strptime(row["acquisition_date"], "%Y-%m-%d").date()
            if quantity < 0:
                raise ValueError("negative quantity")
            if basis <= 0:
                raise ValueError("basis must be positive")
            lot = TaxLot(row["lot_id"], quantity, basis, acquired)
        except (KeyError, ValueError, TypeError) as exc:
            raise InputFormatError(path, line_no, str(exc)) from exc
        lots.setdefault(row["asset_id"], []).append(lot)
    return {asset: tuple(v) for asset, v in lots.items()}


# --- market data -----------------------------------------------------------

def write_market(market: MarketData, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    long_rows = []
    for stamp, row in market.prices.iterrows():
        for asset in market.prices.columns:
            close = row[asset]
            if np.isnan(close):
                continue
            long_rows.append({
                "date": stamp.date().isoformat(),
                "asset_id": asset,
                "close": close,
                "dividend": float(market.dividends.loc[stamp, asset]),
                "in_benchmark": bool(market.in_benchmark.loc[stamp, asset]),
                "benchmark_weight": float(market.benchmark_weights.loc[stamp, asset]),
            })
    write_csv(out_dir / "prices.csv", "prices",
              pd.DataFrame(long_rows, columns=PRICES_COLUMNS))

    factors = list(market.exposures.columns)
    exp = market.exposures.reset_index()
    exp["date"] = pd.to_datetime(exp["date"]).dt.date.astype(str)
    write_csv(out_dir / "exposures.csv", "exposures",
              exp[["date", "asset_id", *factors]])

    write_csv(out_dir / "factor_cov.csv", "factor_cov",
              pd.DataFrame(market.factor_cov, columns=factors))

    var_rows = [
        {"date": stamp.date().isoformat(), "asset_id": asset,
         "specific_var": float(market.specific_var.loc[stamp, asset])}
        for stamp in market.specific_var.index
        for asset in market.specific_var.columns
    ]
    write_csv(out_dir / "specific_var.csv", "specific_var",
              pd.DataFrame(var_rows, columns=["date", "asset_id", "specific_var"]))


def read_market(in_dir: Path) -> MarketData:
    in_dir = Path(in_dir)
    prices_long = read_csv(in_dir / "prices.csv", PRICES_COLUMNS)
    prices_long["date"] = pd.to_datetime(prices_long["date"])

    def pivot(col):
        wide = prices_long.pivot(index="date", columns="asset_id", values=col)
        return wide.sort_index().rename_axis(index=None, columns=None)

    prices = pivot("close")
    dividends = pivot("dividend").fillna(0.0)
    in_benchmark = pivot("in_benchmark").astype("boolean").fillna(False).astype(bool)
    weights = pivot("benchmark_weight").fillna(0.0)

    exp_long = read_csv(in_dir / "exposures.csv", ["date", "asset_id"])
    factors = [c for c in exp_long.columns if c not in ("date", "asset_id")]
    if not factors:
        raise InputFormatError(in_dir / "exposures.csv", 1, "no factor columns")
    exp_long["date"] = pd.to_datetime(exp_long["date"])
    exposures = exp_long.set_index(["date", "asset_id"])[factors]

    cov = read_csv(in_dir / "factor_cov.csv", factors)[factors].to_numpy()
    if cov.shape != (len(factors), len(factors)):
        raise InputFormatError(in_dir / "factor_cov.csv", 1,
                               f"expected {len(factors)} rows")

    var_long = read_csv(in_dir / "specific_var.csv",
                        ["date", "asset_id", "specific_var"])
    var_long["date"] = pd.to_datetime(var_long["date"])
    specific = var_long.pivot(index="date", columns="asset_id",
                              values="specific_var").sort_index()
    specific = specific.rename_axis(index=None, columns=None)

    delistings = {}
    for asset in prices.columns:
        series = prices[asset].dropna()
        if len(series) and series.index[-1] < prices.index[-1]:
            delistings[asset] = series.index[-1] + pd.offsets.BDay(1)
        gaps = prices[asset].loc[series.index[0]:series.index[-1]].isna()
        if gaps.any():
            raise InputFormatError(in_dir / "prices.csv", 0,
                                   f"{asset}: missing close inside quoted range")
    return MarketData(
        prices=prices,
        dividends=dividends,
        in_benchmark=in_benchmark,
        benchmark_weights=weights,
        exposures=exposures,
        factor_cov=cov,
        specific_var=specific,
        delistings=delistings,
    )


# --- outputs ----------------------------------------------------------------

def write_trades(path: Path, rows) -> None:
    records = [
        {"date": (r.date.date().isoformat() if hasattr(r.date, "date") and
                  not isinstance(r.date, date) else str(r.date)),
         "asset_id": r.asset_id, "lot_id": r.lot_id, "side": r.side,
         "shares": r.shares, "dollars": r.dollars, "realized_tax": r.realized_tax}
        for r in rows
    ]
    write_csv(path, "trades", pd.DataFrame(records, columns=TRADES_COLUMNS))


def write_metrics(path: Path, frame: pd.DataFrame) -> None:
    write_csv(path, "metrics", frame[METRICS_COLUMNS])


def write_envelope_grid(path: Path, frame: pd.DataFrame) -> None:
    write_csv(path, "envelope", frame[ENVELOPE_COLUMNS])


def write_comparison(path: Path, frame: pd.DataFrame) -> None:
    write_csv(path, "comparison", frame[COMPARISON_COLUMNS])

"""Command-line client of the taxopt service.

All commands assemble a request from local CSV inputs and flags, send it to
the service (an in-process instance by default, or a remote one via
--server), and write the responses as schema-versioned CSVs. Exit codes:
0 ok, 2 input error, 3 infeasible, 4 solver failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
import pandas as pd

from . import io as tio
from .backtest import BacktestConfig, build_rebalance_problem
from .errors import InputFormatError
from .heuristic import RoundingConfig
from .lots import AssetPosition, TaxParameters

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

_STATUS_EXIT = {422: EXIT_INPUT, 409: EXIT_INFEASIBLE, 502: EXIT_SOLVER}


def _fail(code: int, error: dict) -> None:
    click.echo(json.dumps({"error": error}), err=True)
    sys.exit(code)


def _request(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=3600.0) as client:
            return client.post(path, json=payload)

    import asyncio

    from .service.app import app

    async def call():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://taxopt.local",
                                     timeout=None) as client:
            return await client.post(path, json=payload)

    return asyncio.run(call())


def _post(server: str | None, path: str, payload: dict) -> dict:
    response = _request(server, path, payload)
    if response.status_code == 200:
        return response.json()
    try:
        error = response.json().get("error", {"code": "internal",
                                              "message": response.text})
    except Exception:
        error = {"code": "internal", "message": response.text}
    _fail(_STATUS_EXIT.get(response.status_code, EXIT_SOLVER), error)


def _load_market(input_dir: Path):
    try:
        return tio.read_market(input_dir)
    except InputFormatError as exc:
        _fail(EXIT_INPUT, {"code": "input", "message": str(exc)})


def _load_positions(input_dir: Path, market, asof) -> tuple[dict, object]:
    try:
        lots = tio.read_lots(input_dir / "lots.csv")
    except InputFormatError as exc:
        _fail(EXIT_INPUT, {"code": "input", "message": str(exc)})
    closes = market.prices.loc[asof]
    positions = {}
    for asset, asset_lots in lots.items():
        if asset not in market.prices.columns or pd.isna(closes[asset]):
            _fail(EXIT_INPUT, {"code": "input",
                               "message": f"{asset}: no close on {asof.date()}"})
        positions[asset] = AssetPosition(asset, float(closes[asset]), asset_lots)
    return positions, closes


def _resolve_asof(market, asof: str | None):
    if asof is None:
        return market.calendar[-1]
    stamp = pd.Timestamp(asof)
    if stamp not in market.calendar:
        _fail(EXIT_INPUT, {"code": "input",
                           "message": f"{asof}: not a trading day in the dataset"})
    return stamp


common_overrides = [
    click.option("--eta", default=0.005, show_default=True,
                 help="post-trade cash fraction of account value"),
    click.option("--gamma-risk", default=200.0, show_default=True,
                 help="risk aversion, scaled by account value"),
    click.option("--gamma-tc", default=1.0, show_default=True),
    click.option("--gamma-tax", default=1.0, show_default=True),
    click.option("--rho-lt", default=0.238, show_default=True,
                 help="long-term capital gains rate"),
    click.option("--rho-st", default=0.408, show_default=True,
                 help="short-term capital gains rate"),
    click.option("--spread", default=0.0005, show_default=True,
                 help="half bid-ask spread"),
    click.option("--seed", default=0, show_default=True),
    click.option("--candidates", default=1, show_default=True),
    click.option("--mode", type=click.Choice(["det", "rand"]), default="rand",
                 show_default=True, help="sign guessing mode"),
]


def _with_overrides(fn):
    for option in reversed(common_overrides):
        fn = option(fn)
    return fn


def _rounding_payload(mode: str, candidates: int, seed: int) -> dict:
    return {
        "mode": "deterministic" if mode == "det" else "randomized",
        "candidates": candidates,
        "rng_seed": seed,
        "fallback_to_deterministic": True,
    }


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="remote service URL; in-process when omitted")
@click.pass_context
def main(ctx, server):
    """Tax-aware trade list construction."""
    ctx.obj = {"server": server}


@main.command()
@click.option("--input", "input_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--asof", default=None, help="valuation date (default: last)")
@click.option("--cash", default=0.0, show_default=True,
              help="cash balance alongside lots.csv holdings")
@_with_overrides
@click.pass_context
def solve(ctx, input_dir, out_dir, asof, cash, eta, gamma_risk, gamma_tc, gamma_tax,
          rho_lt, rho_st, spread, seed, candidates, mode):
    """Build one trade list from market data and a lot ledger."""
    market = _load_market(input_dir)
    stamp = _resolve_asof(market, asof)
    positions, _ = _load_positions(input_dir, market, stamp)
    cfg = BacktestConfig(
        start=stamp, end=stamp, eta=eta, risk_weight=gamma_risk,
        gamma_tc=gamma_tc, gamma_tax=gamma_tax, spread=spread,
        tax=TaxParameters(rho_lt, rho_st),
        rounding=RoundingConfig(mode="deterministic" if mode == "det"
                                else "randomized",
                                candidates=candidates, rng_seed=seed),
    )
    try:
        problem = build_rebalance_problem(positions, cash, stamp, market, cfg)
    except KeyError as exc:
        _fail(EXIT_INPUT, {"code": "input", "message": str(exc)})
    from .service.schemas import ProblemModel

    payload = {
        "problem": json.loads(ProblemModel.from_domain(problem).model_dump_json()),
        "rounding": _rounding_payload(mode, candidates, seed),
    }
    result = _post(ctx.obj["server"], "/solve", payload)

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for entry in result["trades"]:
        if entry["allocation"]:
            for alloc in entry["allocation"]:
                rows.append({
                    "date": stamp.date().isoformat(), "asset_id": entry["asset_id"],
                    "lot_id": alloc["lot_id"], "side": "sell",
                    "shares": "", "dollars": -alloc["dollars"],
                    "realized_tax": "",
                })
        else:
            rows.append({
                "date": stamp.date().isoformat(), "asset_id": entry["asset_id"],
                "lot_id": "", "side": "buy", "shares": "",
                "dollars": entry["dollars"], "realized_tax": "",
            })
    tio.write_csv(out_dir / "trades.csv", "trades",
                  pd.DataFrame(rows, columns=tio.TRADES_COLUMNS))
    report = {k: result[k] for k in ("status", "method", "utility", "upper_bound",
                                     "gap", "gap_bp", "account_value", "wall_time",
                                     "fallback_used")}
    tio.atomic_write_text(out_dir / "report.json", json.dumps(report, indent=2))
    click.echo(f"utility {report['utility']:.2f}  bound {report['upper_bound']:.2f}  "
               f"gap {report['gap_bp']:.2f} bp")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--input", "input_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--start", default=None, help="first trade date (default: calendar start)")
@click.option("--end", default=None, help="last trade date (default: calendar end)")
@click.option("--initial-cash", default=1_000_000.0, show_default=True)
@_with_overrides
@click.pass_context
def backtest(ctx, input_dir, out_dir, start, end, initial_cash, eta, gamma_risk,
             gamma_tc, gamma_tax, rho_lt, rho_st, spread, seed, candidates, mode):
    """Run the monthly harvesting simulation over a market dataset."""
    market = _load_market(input_dir)
    from .service.schemas import MarketDataModel

    payload = {
        "market": json.loads(MarketDataModel.from_domain(market).model_dump_json()),
        "start": (start or str(market.calendar[0].date())),
        "end": (end or str(market.calendar[-1].date())),
        "initial_cash": initial_cash,
        "eta": eta,
        "risk_weight": gamma_risk,
        "gamma_tc": gamma_tc,
        "gamma_tax": gamma_tax,
        "spread": spread,
        "tax": {"long_rate": rho_lt, "short_rate": rho_st},
        "rounding": _rounding_payload(mode, candidates, seed),
    }
    result = _post(ctx.obj["server"], "/backtest/run", payload)

    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = pd.DataFrame(result["metrics"])
    tio.write_metrics(out_dir / "metrics.csv", metrics)
    trades = pd.DataFrame(result["trades"])
    tio.write_csv(out_dir / "trades.csv", "trades", trades[tio.TRADES_COLUMNS])
    final = {"final_cash": result["final_cash"], "lots": result["final_lots"]}
    tio.atomic_write_text(out_dir / "final_ledger.json", json.dumps(final, indent=2))
    last = metrics.iloc[-1]
    click.echo(f"{len(metrics)} rebalances  "
               f"final value {last['account_value']:.2f}  "
               f"cumulative tax {last['cum_tax_liability']:.2f}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--input", "input_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--asset", required=True, help="asset id from lots.csv")
@click.option("--asof", default=None)
@click.option("--cash", default=0.0, show_default=True)
@click.option("--grid", default=1001, show_default=True)
@_with_overrides
@click.pass_context
def envelope(ctx, input_dir, out_dir, asset, asof, cash, grid, eta, gamma_risk,
             gamma_tc, gamma_tax, rho_lt, rho_st, spread, seed, candidates, mode):
    """Emit the envelope plot grid for one asset's trade cost."""
    market = _load_market(input_dir)
    stamp = _resolve_asof(market, asof)
    positions, _ = _load_positions(input_dir, market, stamp)
    if asset not in positions:
        _fail(EXIT_INPUT, {"code": "input", "message": f"{asset}: not in lots.csv"})
    position = positions[asset]
    holdings = sum(p.holding for p in positions.values())
    account = holdings + cash
    try:
        model = market.risk_model_asof(stamp, [asset])
    except KeyError as exc:
        _fail(EXIT_INPUT, {"code": "input", "message": str(exc)})
    weight = float(market.benchmark_weights.loc[stamp, asset])
    from .service.schemas import PositionModel

    payload = {
        "position": json.loads(PositionModel.from_domain(position).model_dump_json()),
        "tax": {"long_rate": rho_lt, "short_rate": rho_st},
        "asof": str(stamp.date()),
        "gamma_risk": gamma_risk / account,
        "specific_var": float(model.specific_var[0]),
        "benchmark_holding": weight * account,
        "gamma_tc": gamma_tc,
        "spread": spread,
        "gamma_tax": gamma_tax,
        "buy_cap": account,
        "grid": grid,
    }
    result = _post(ctx.obj["server"], "/envelope/grid", payload)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(result["rows"], columns=result["columns"])
    tio.write_envelope_grid(out_dir / "envelope.csv", frame)
    click.echo(f"wrote {len(frame)} grid rows for {asset}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--instances", default=50, show_default=True)
@click.option("--n", default=30, show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--oracle-max-m", default=10, show_default=True,
              help="refuse enumeration beyond this many loss assets")
@click.option("--workers", default=1, show_default=True)
@_with_overrides
@click.pass_context
def compare(ctx, out_dir, instances, n, k, oracle_max_m, workers, eta, gamma_risk,
            gamma_tc, gamma_tax, rho_lt, rho_st, spread, seed, candidates, mode):
    """Heuristic vs enumeration oracle on seeded random instances."""
    payload = {
        "seed": seed, "instances": instances, "n": n, "k": k,
        "max_loss_assets": oracle_max_m,
        "mode": "deterministic" if mode == "det" else "randomized",
        "candidates": candidates, "workers": workers,
    }
    result = _post(ctx.obj["server"], "/compare/run", payload)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = pd.DataFrame(result["rows"])
    rows["oracle"] = rows["oracle"].fillna("")
    rows["oracle_gap_bp"] = rows["oracle_gap_bp"].map(
        lambda v: "" if v is None or pd.isna(v) else round(v, 2))
    rows["gap_bp"] = rows["gap_bp"].round(2)
    tio.write_comparison(out_dir / "comparison.csv", rows)
    s = result["summary"]
    click.echo(
        f"{s['instances']} instances  tight (<=0.05 bp): {s['tight_count']} "
        f"({100.0 * s['tight_fraction']:.1f}%)  mean gap {s['mean_gap_bp']:.2f} bp  "
        f"max gap {s['max_gap_bp']:.2f} bp  oracle refusals {s['oracle_refusals']}"
    )
    sys.exit(EXIT_OK)


@main.command("gen-data")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", default=0, show_default=True)
@click.option("--n", default=30, show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--months", default=72, show_default=True)
@click.option("--start", default="2015-01-02", show_default=True)
@click.option("--nonmembers", default=0, show_default=True)
@click.option("--dividend-yield", default=0.0, show_default=True)
@click.pass_context
def gen_data(ctx, out_dir, seed, n, k, months, start, nonmembers, dividend_yield):
    """Write a synthetic market dataset (prices, risk model, benchmark)."""
    payload = {
        "seed": seed, "n_assets": n, "k_factors": k, "months": months,
        "start": start, "n_nonmembers": nonmembers,
        "dividend_yield": dividend_yield,
    }
    result = _post(ctx.obj["server"], "/datasets/synthetic", payload)
    from .service.schemas import MarketDataModel

    market = MarketDataModel(**result).to_domain()
    out_dir.mkdir(parents=True, exist_ok=True)
    tio.write_market(market, out_dir)
    tio.write_lots(out_dir / "lots.csv", {})
    click.echo(f"wrote {len(market.calendar)} days x {len(market.assets)} assets "
               f"to {out_dir}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("taxopt.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()

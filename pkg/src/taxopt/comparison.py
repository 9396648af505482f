"""Batch comparison of the heuristic against the enumeration oracle.

Generates seeded random instances with a deterministic schedule of loss-asset
counts (weighted toward small counts so the oracle's 2^m enumeration stays
cheap), solves each with both methods, and reports per-instance utilities and
gaps in basis points of account value, plus summary counts of instances where
the heuristic meets its upper bound to within 0.05 bp (a certificate of global
optimality).
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .heuristic import RoundingConfig, heuristic_solve
from .oracle import enumerate_signs_solve
from .synthetic import random_problem

TIGHT_BP = 0.05
DEFAULT_LOSS_SCHEDULE = (0, 1, 2, 3, 4, 5, 6, 7, 8, 10)


@dataclass(frozen=True)
class ComparisonRow:
    instance: int
    seed: int
    loss_assets: int
    utility: float  # heuristic, dollars
    oracle: float | None  # None when the oracle refused
    bound: float
    gap_bp: float  # (bound - utility) / account value, bp
    oracle_gap_bp: float | None  # (oracle - utility) / account value, bp
    tight: bool
    oracle_refused: bool
    heuristic_seconds: float
    oracle_seconds: float


@dataclass(frozen=True)
class ComparisonSummary:
    instances: int
    tight_count: int
    tight_fraction: float
    mean_gap_bp: float
    max_gap_bp: float
    oracle_within_tight_bp: int  # heuristic within 0.05 bp of the oracle
    max_oracle_gap_bp: float
    oracle_refusals: int


def _loss_schedule(instances: int, schedule=DEFAULT_LOSS_SCHEDULE) -> list[int]:
    # not capped at the oracle limit: instances beyond it exercise the
    # refusal path (their rows carry no oracle column)
    return [schedule[i % len(schedule)] for i in range(instances)]


def _run_one(args) -> ComparisonRow:
    index, seed, n, k, n_loss, max_loss_assets, mode, candidates = args
    problem = random_problem(seed, n=n, k=k, n_loss_assets=n_loss)
    account = problem.account_value
    t0 = time.perf_counter()
    _, report = heuristic_solve(
        problem,
        RoundingConfig(mode=mode, candidates=candidates, rng_seed=seed),
    )
    heuristic_seconds = time.perf_counter() - t0
    refused = n_loss > max_loss_assets
    oracle_utility = None
    oracle_seconds = 0.0
    if not refused:
        t0 = time.perf_counter()
        oracle_utility = enumerate_signs_solve(problem, max_loss_assets).best_utility
        oracle_seconds = time.perf_counter() - t0
    to_bp = 1e4 / account
    gap_bp = (report.upper_bound - report.utility) * to_bp
    oracle_gap_bp = (None if oracle_utility is None
                     else (oracle_utility - report.utility) * to_bp)
    return ComparisonRow(
        instance=index,
        seed=seed,
        loss_assets=n_loss,
        utility=report.utility,
        oracle=oracle_utility,
        bound=report.upper_bound,
        gap_bp=gap_bp,
        oracle_gap_bp=oracle_gap_bp,
        tight=abs(gap_bp) <= TIGHT_BP,
        oracle_refused=refused,
        heuristic_seconds=heuristic_seconds,
        oracle_seconds=oracle_seconds,
    )


def run_comparison(
    seed: int,
    instances: int,
    n: int = 30,
    k: int = 5,
    max_loss_assets: int = 10,
    loss_schedule=None,
    mode: str = "randomized",
    candidates: int = 1,
    workers: int | None = None,
) -> tuple[list[ComparisonRow], ComparisonSummary]:
    """Run the battery; rows come back in instance order."""
    schedule = (_loss_schedule(instances)
                if loss_schedule is None
                else [loss_schedule[i % len(loss_schedule)] for i in range(instances)])
    schedule = [min(m, n) for m in schedule]  # universe cap, not the oracle cap
    tasks = [
        (i, seed + i, n, k, schedule[i], max_loss_assets, mode, candidates)
        for i in range(instances)
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, tasks, chunksize=4))
    else:
        rows = [_run_one(t) for t in tasks]

    gaps = np.array([r.gap_bp for r in rows])
    oracle_gaps = np.array([r.oracle_gap_bp for r in rows
                            if r.oracle_gap_bp is not None])
    summary = ComparisonSummary(
        instances=len(rows),
        tight_count=int(sum(r.tight for r in rows)),
        tight_fraction=float(np.mean([r.tight for r in rows])),
        mean_gap_bp=float(np.mean(gaps)),
        max_gap_bp=float(np.max(gaps)),
        oracle_within_tight_bp=int((oracle_gaps <= TIGHT_BP).sum()),
        max_oracle_gap_bp=float(oracle_gaps.max()) if len(oracle_gaps) else 0.0,
        oracle_refusals=int(sum(r.oracle_refused for r in rows)),
    )
    return rows, summary


def comparison_frame(rows: list[ComparisonRow]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "instance": r.instance,
            "seed": r.seed,
            "loss_assets": r.loss_assets,
            "utility": r.utility,
            "oracle": "" if r.oracle is None else r.oracle,
            "bound": r.bound,
            "gap_bp": round(r.gap_bp, 2),
            "oracle_gap_bp": ("" if r.oracle_gap_bp is None
                              else round(r.oracle_gap_bp, 2)),
            "tight": r.tight,
            "oracle_refused": r.oracle_refused,
            "heuristic_seconds": r.heuristic_seconds,
            "oracle_seconds": r.oracle_seconds,
        }
        for r in rows
    ])

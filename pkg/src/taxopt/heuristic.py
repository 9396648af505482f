"""Two-stage heuristic: relax, guess buy/sell signs, re-solve convexly.

Stage 1 solves the envelope relaxation, which yields an upper bound and, per
asset, either the sign of the relaxed trade (deterministic mode) or a mixing
weight used as the buy probability (randomized mode). Stage 2 solves the
sign-constrained convex problem for each candidate pattern and keeps the best
feasible trade list. Randomized patterns can be infeasible (the cash equality
may be unreachable); the deterministic pattern never is, so it serves as the
fallback.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError
from .problem import RebalanceProblem, SolveReport, TradeList
from .relaxation import solve_relaxation
from .sign_solver import SignConstrainedSolver


@dataclass(frozen=True)
class RoundingConfig:
    """How stage-1 signs are guessed from the relaxation."""

    mode: str = "randomized"  # or "deterministic"
    candidates: int = 1
    rng_seed: int = 0
    fallback_to_deterministic: bool = True

    def __post_init__(self):
        if self.mode not in ("deterministic", "randomized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.candidates < 1:
            raise ValueError("candidates must be >= 1")


def deterministic_signs(u_relax: np.ndarray) -> np.ndarray:
    """Signs of the relaxed trades; zero trades count as buys (no tax either way)."""
    return np.where(np.asarray(u_relax) < 0, -1, 1).astype(int)


def randomized_signs(thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """+1 with probability theta_i, independently per asset.

    Draws are consumed in ascending asset index order, so a fixed seed gives
    bit-identical patterns.
    """
    thetas = np.asarray(thetas, dtype=float)
    if np.any(thetas < 0) or np.any(thetas > 1):
        raise ValueError("thetas must lie in [0, 1]")
    return np.where(rng.random(len(thetas)) < thetas, 1, -1).astype(int)


def heuristic_solve(
    problem: RebalanceProblem, cfg: RoundingConfig | None = None
) -> tuple[TradeList, SolveReport]:
    """Full pipeline; returns the best candidate trade list and its report.

    The report carries the achieved utility, the relaxation upper bound, and
    whether the deterministic fallback was used. Raises InfeasibleError only
    when even the deterministic pattern fails.
    """
    cfg = cfg or RoundingConfig()
    start = time.perf_counter()
    relax = solve_relaxation(problem)
    solver = SignConstrainedSolver(problem)
    rng = np.random.default_rng(cfg.rng_seed)

    patterns = []
    if cfg.mode == "deterministic":
        patterns.append(deterministic_signs(relax.u_relax))
    else:
        for _ in range(cfg.candidates):
            patterns.append(randomized_signs(relax.thetas, rng))
    seen = set()
    unique = []
    for z in patterns:
        key = z.tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(z)

    best: tuple[float, TradeList, str] | None = None
    for z in unique:
        try:
            trade, report = solver.solve(z)
        except InfeasibleError:
            continue
        if best is None or report.utility > best[0]:
            best = (report.utility, trade, report.status)

    fallback_used = False
    if best is None and cfg.mode == "randomized" and cfg.fallback_to_deterministic:
        fallback_used = True
        trade, report = solver.solve(deterministic_signs(relax.u_relax))
        best = (report.utility, trade, report.status)
    if best is None:
        raise InfeasibleError("every candidate sign pattern was infeasible")

    value, trade, status = best
    report = SolveReport(
        utility=value,
        upper_bound=relax.upper_bound,
        method=f"relax+round({cfg.mode},k={cfg.candidates})",
        wall_time=time.perf_counter() - start,
        status=status if relax.status == "optimal" else relax.status,
        fallback_used=fallback_used,
    )
    return trade, report

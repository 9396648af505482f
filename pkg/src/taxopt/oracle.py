"""Exact and brute-force references used to validate the fast paths.

The enumeration oracle solves the rebalance problem globally by trying every
buy/sell pattern over the loss-lot assets (each pattern is a convex solve), in
Gray-code order so consecutive solves differ in one asset. The brute-force
helpers check the LTFO greedy against a linear program and the analytic
envelope against a discrete lower convex hull.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np
from scipy.optimize import linprog

from .errors import OversellError
from .lots import AssetPosition, TaxParameters, classify_term, lot_tax_rate
from .piecewise import PiecewiseQuadratic
from .problem import RebalanceProblem, SolveReport, TradeList


@dataclass(frozen=True)
class OracleResult:
    """Global optimum over all sign patterns of the loss-lot assets."""

    best_utility: float
    best_signs: np.ndarray
    pattern_utilities: tuple[float, ...]
    pattern_count: int
    trade: TradeList
    report: SolveReport


def ltfo_bruteforce(
    pos: AssetPosition, sell_dollars: float, asof: date, params: TaxParameters
) -> float:
    """Minimal tax of a sale, by LP over the lot allocation polytope.

    Independent of the greedy allocator; used to certify its optimality.
    """
    if sell_dollars < 0:
        raise ValueError(f"sell_dollars must be >= 0, got {sell_dollars}")
    if sell_dollars > pos.holding + 1e-9:
        raise OversellError(f"{pos.asset_id}: sale exceeds position")
    if not pos.lots or sell_dollars == 0.0:
        return 0.0
    rates = np.array([
        lot_tax_rate(lot, pos.price, classify_term(lot, asof, params), params)
        for lot in pos.lots
    ])
    caps = np.array([lot.quantity * pos.price for lot in pos.lots])
    res = linprog(
        rates,
        A_eq=np.ones((1, len(caps))),
        b_eq=[min(sell_dollars, caps.sum())],
        bounds=list(zip(np.zeros_like(caps), caps)),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(res.fun)


def lower_convex_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Values of the lower convex hull of the points (x_i, y_i) at each x_i.

    Andrew's monotone chain over the sorted points; between hull vertices the
    hull is linear.
    """
    order = np.argsort(x)
    xs, ys = np.asarray(x, dtype=float)[order], np.asarray(y, dtype=float)[order]
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            # drop k if it lies on or above the chord j->i
            if (ys[k] - ys[j]) * (xs[i] - xs[j]) >= (ys[i] - ys[j]) * (xs[k] - xs[j]):
                hull.pop()
            else:
                break
        hull.append(i)
    hx, hy = xs[hull], ys[hull]
    vals = np.interp(xs, hx, hy)
    out = np.empty_like(vals)
    out[order] = vals
    return out


def envelope_bruteforce(f: PiecewiseQuadratic, grid_size: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Sampled lower convex hull of f on a uniform grid.

    Within O(grid spacing * Lipschitz constant) of the exact envelope; the
    domain must be bounded.
    """
    if math.isinf(f.hi):
        raise ValueError("bounded domain required")
    grid = np.linspace(f.lo, f.hi, grid_size)
    return grid, lower_convex_hull(grid, f.evaluate(grid))


def _gray_patterns(m: int):
    """Sign vectors over m slots in Gray-code order (+1 buy, -1 sell)."""
    signs = np.ones(m, dtype=int)
    yield 0, signs.copy()
    prev = 0
    for t in range(1, 2 ** m):
        gray = t ^ (t >> 1)
        flipped = int(math.log2(gray ^ prev))
        prev = gray
        signs[flipped] *= -1
        yield t, signs.copy()


def enumerate_signs_solve(
    problem: RebalanceProblem, max_loss_assets: int = 12
) -> OracleResult:
    """Global optimum by trying all sign patterns over loss-lot assets.

    Assets without a loss lot have convex objective terms and stay
    unconstrained in every solve, so the maximum over the 2^m patterns is the
    exact optimum. Refuses when m exceeds max_loss_assets.
    """
    from .sign_solver import SignConstrainedSolver

    loss_mask = problem.loss_asset_mask()
    loss_idx = np.flatnonzero(loss_mask)
    m = len(loss_idx)
    if m > max_loss_assets:
        raise ValueError(
            f"{m} loss assets exceed the enumeration limit {max_loss_assets}"
        )
    solver = SignConstrainedSolver(problem)
    base = np.zeros(problem.n, dtype=int)  # 0 = unconstrained
    best: tuple[float, TradeList, SolveReport, np.ndarray] | None = None
    utilities = []
    for _, pattern in _gray_patterns(m):
        signs = base.copy()
        signs[loss_idx] = pattern
        try:
            trade, report = solver.solve(signs)
        except Exception:
            utilities.append(float("-inf"))
            continue
        utilities.append(report.utility)
        if best is None or report.utility > best[0]:
            full = np.ones(problem.n, dtype=int)
            full[loss_idx] = pattern
            best = (report.utility, trade, report, full)
    if best is None:
        raise RuntimeError("every sign pattern failed")
    util, trade, report, signs = best
    return OracleResult(
        best_utility=util,
        best_signs=signs,
        pattern_utilities=tuple(utilities),
        pattern_count=2 ** m,
        trade=trade,
        report=report,
    )

"""Convex envelopes of trade-cost curves and the approximate tax liability.

The per-asset trade cost is convex on the sell side (u <= 0) and on the buy
side (u >= 0) but generally not across zero. Its convex envelope equals the
function outside a single "bridge" interval [w*, v*] straddling zero and is
the common tangent line of the two branches inside it. The bridge is found by
bisecting the tangent-slope matching condition between the branches (tangent
points move monotonically with the slope on a convex branch), then refining
the slope in closed form within the identified pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, UnsupportedShapeError
from .piecewise import BREAK_MERGE_TOL, PiecewiseQuadratic, quadratic, scaled_abs

SLOPE_TOL = 1e-12


@dataclass(frozen=True)
class Bridge:
    """Interval where the envelope departs from the function."""

    sell_point: float  # w* <= 0
    buy_point: float  # v* >= 0
    slope: float
    intercept: float

    def line(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


@dataclass(frozen=True)
class EnvelopeDecomposition:
    """Mixing weight and branch points with x = theta*buy + (1-theta)*sell."""

    theta: float
    buy_point: float
    sell_point: float


def _branch_intercept(branch: PiecewiseQuadratic, slope: float, leftmost: bool):
    """Minimize f(x) - slope*x over the branch.

    Returns (min value, argmin); the argmin is the leftmost or rightmost
    minimizer when a linear piece ties.
    """
    best_val = math.inf
    best_x = branch.lo
    pieces = range(branch.num_pieces)
    for p in (pieces if leftmost else reversed(pieces)):
        a, b, c = branch.coeffs[p]
        x0, x1 = branch.breaks[p], branch.breaks[p + 1]
        if a > 0:
            x = min(max((slope - b) / (2.0 * a), x0), x1)
        elif abs(b - slope) <= SLOPE_TOL * (1.0 + abs(slope)):
            x = x0 if leftmost else x1  # flat piece: honor the requested extreme
        else:
            x = x0 if b - slope > 0 else x1
        val = (a * x + b - slope) * x + c
        if val < best_val - SLOPE_TOL * (1.0 + abs(val)):
            best_val, best_x = val, x
        elif abs(val - best_val) <= SLOPE_TOL * (1.0 + abs(val)):
            # tie across pieces: honor the requested extreme
            if (leftmost and x < best_x) or (not leftmost and x > best_x):
                best_val, best_x = min(best_val, val), x
    return best_val, best_x


def _tangent_cell(branch: PiecewiseQuadratic, slope: float, leftmost: bool):
    """Piece coefficients and interior/endpoint classification at the tangency."""
    _, x = _branch_intercept(branch, slope, leftmost)
    idx = int(np.clip(np.searchsorted(branch.breaks, x, side="right") - 1, 0,
                      branch.num_pieces - 1))
    a, b, c = branch.coeffs[idx]
    interior = (a > 0
                and branch.breaks[idx] < x < branch.breaks[idx + 1])
    return (a, b, c), x, interior


def _refine_slope(cell_sell, cell_buy, lo: float, hi: float) -> float | None:
    """Closed-form common-tangent slope within the identified pieces.

    The tangent intercept on a quadratic piece is c - (s-b)^2/(4a) for an
    interior tangency and f(x) - s*x for an endpoint tangency; equating the
    two branches gives at most a quadratic in s.
    """
    (a1, b1, c1), x1, int1 = cell_sell
    (a2, b2, c2), x2, int2 = cell_buy
    # quadratic coefficients of intercept_sell(s) - intercept_buy(s)
    qa = qb = qc = 0.0
    if int1:
        qa -= 1.0 / (4.0 * a1)
        qb += b1 / (2.0 * a1)
        qc += c1 - b1 * b1 / (4.0 * a1)
    else:
        qb -= x1
        qc += (a1 * x1 + b1) * x1 + c1
    if int2:
        qa += 1.0 / (4.0 * a2)
        qb -= b2 / (2.0 * a2)
        qc -= c2 - b2 * b2 / (4.0 * a2)
    else:
        qb += x2
        qc -= (a2 * x2 + b2) * x2 + c2
    span = max(abs(lo), abs(hi), 1.0)
    if abs(qa) < 1e-16:
        if abs(qb) < 1e-16:
            return None
        s = -qc / qb
        return s if lo - 1e-9 * span <= s <= hi + 1e-9 * span else None
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        return None
    root = math.sqrt(disc)
    candidates = [(-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)]
    inside = [s for s in candidates if lo - 1e-9 * span <= s <= hi + 1e-9 * span]
    if not inside:
        return None
    mid = 0.5 * (lo + hi)
    return min(inside, key=lambda s: abs(s - mid))


def envelope_bridge(f: PiecewiseQuadratic) -> Bridge | None:
    """Bridge of the convex envelope, or None when f is already convex.

    Raises UnsupportedShapeError unless f is convex on each of [lo, 0] and
    [0, hi]. The domain must be bounded: with an unbounded branch the tangent
    intercept can run off to -inf (cut the function to a finite window first).
    """
    if math.isinf(f.hi):
        raise UnsupportedShapeError("bounded domain required; cut the function first")
    if f.lo >= -BREAK_MERGE_TOL or f.hi <= BREAK_MERGE_TOL:
        if not f.is_convex():
            raise UnsupportedShapeError("single-branch function is not convex")
        return None
    sell = f.cut(f.lo, 0.0)
    buy = f.cut(0.0, f.hi)
    if not sell.is_convex() or not buy.is_convex():
        raise UnsupportedShapeError("function is not convex on each half-line")
    d_sell = sell.derivative(0.0, "left")
    d_buy = buy.derivative(0.0, "right")
    scale = 1.0 + max(abs(d_sell), abs(d_buy))
    if d_sell <= d_buy + SLOPE_TOL * scale:
        return None

    def gap(s):
        plus, _ = _branch_intercept(buy, s, leftmost=True)
        minus, _ = _branch_intercept(sell, s, leftmost=False)
        return plus - minus

    lo_s, hi_s = d_buy, d_sell
    g_lo, g_hi = gap(lo_s), gap(hi_s)
    if g_lo <= 0:
        slope = lo_s
    elif g_hi >= 0:
        slope = hi_s
    else:
        slope = brentq(gap, lo_s, hi_s, xtol=1e-14, rtol=8.9e-16)
    cell_sell = _tangent_cell(sell, slope, leftmost=False)
    cell_buy = _tangent_cell(buy, slope, leftmost=True)
    refined = _refine_slope(cell_sell, cell_buy, lo_s, hi_s)
    if refined is not None and abs(refined - slope) < 1e-6 * (1.0 + abs(slope)):
        slope = refined
    (a1, b1, _), x1, int1 = cell_sell
    (a2, b2, _), x2, int2 = cell_buy
    w = (slope - b1) / (2.0 * a1) if int1 else x1
    v = (slope - b2) / (2.0 * a2) if int2 else x2
    w = min(max(w, f.lo), 0.0)
    v = max(min(v, f.hi), 0.0)
    if v - w <= BREAK_MERGE_TOL * (1.0 + abs(v) + abs(w)):
        return None
    intercept = f.evaluate(w) - slope * w
    return Bridge(sell_point=w, buy_point=v, slope=slope, intercept=intercept)


def convex_envelope(f: PiecewiseQuadratic) -> PiecewiseQuadratic:
    """Greatest convex underestimator of f.

    Equals f outside the bridge and the common tangent line inside it; f must
    be convex on each half-line.
    """
    bridge = envelope_bridge(f)
    if bridge is None:
        return f
    w, v = bridge.sell_point, bridge.buy_point
    parts_breaks = []
    parts_coeffs = []
    tol = BREAK_MERGE_TOL * (1.0 + abs(f.lo) + abs(w))
    if w > f.lo + tol:
        left = f.cut(f.lo, w)
        parts_breaks.append(left.breaks[:-1])
        parts_coeffs.append(left.coeffs)
    parts_breaks.append([w])
    parts_coeffs.append([(0.0, bridge.slope, bridge.intercept)])
    if f.hi > v + BREAK_MERGE_TOL * (1.0 + abs(f.hi) + abs(v)):
        right = f.cut(v, f.hi)
        parts_breaks.append(right.breaks)
        parts_coeffs.append(right.coeffs)
    else:
        parts_breaks.append([f.hi])
        parts_coeffs.append(np.empty((0, 3)))
    breaks = np.concatenate(parts_breaks)
    coeffs = np.concatenate(parts_coeffs)
    return PiecewiseQuadratic(breaks, coeffs)


def envelope_decompose(
    f: PiecewiseQuadratic, f_env: PiecewiseQuadratic, x: float
) -> EnvelopeDecomposition:
    """Mixing weight theta and branch points certifying f_env(x).

    Outside the bridge the decomposition is trivial (theta 0 or 1); inside it
    theta interpolates linearly between the bridge endpoints.
    """
    arr_tol = BREAK_MERGE_TOL * (1.0 + abs(x))
    if x < f.lo - arr_tol or x > f.hi + arr_tol:
        raise DomainError(f"{x} outside domain [{f.lo}, {f.hi}]")
    bridge = envelope_bridge(f)
    if bridge is not None and bridge.sell_point <= x <= bridge.buy_point:
        theta = (x - bridge.sell_point) / (bridge.buy_point - bridge.sell_point)
        return EnvelopeDecomposition(theta=theta, buy_point=bridge.buy_point,
                                     sell_point=bridge.sell_point)
    if x >= 0:
        return EnvelopeDecomposition(theta=1.0, buy_point=x, sell_point=min(0.0, f.lo))
    return EnvelopeDecomposition(theta=0.0, buy_point=max(0.0, f.lo), sell_point=x)


def approximate_tax(
    liability: PiecewiseQuadratic,
    cost: PiecewiseQuadratic,
    cost_env: PiecewiseQuadratic,
    gamma_tax: float,
) -> PiecewiseQuadratic:
    """Tax liability lowered by the envelope gap of the full trade cost.

    Equals the exact liability outside the bridge and dips below it inside,
    where the envelope borrows curvature from the other cost terms.
    """
    if gamma_tax <= 0:
        raise ValueError(f"gamma_tax must be positive, got {gamma_tax}")
    lo = max(liability.lo, cost.lo)
    hi = min(liability.hi, cost.hi)
    return liability.cut(lo, hi) + (cost_env - cost) * (1.0 / gamma_tax)


def build_separable_cost(
    alpha: float,
    gamma_risk: float,
    specific_var: float,
    holding: float,
    benchmark_holding: float,
    gamma_tc: float,
    spread: float,
    gamma_tax: float,
    liability: PiecewiseQuadratic,
    buy_cap: float,
) -> PiecewiseQuadratic:
    """Single-asset trade cost on [-holding, buy_cap].

    cost(u) = -alpha*u + gamma_risk*specific_var*(holding - benchmark + u)^2
              + gamma_tc*spread*|u| + gamma_tax*L(u)

    The buy cap must be finite so the function has finitely many pieces; with
    positive specific risk the envelope bridge stays strictly inside the cap,
    which is asserted here.
    """
    if specific_var <= 0:
        raise ValueError(f"specific_var must be positive, got {specific_var}")
    if spread < 0:
        raise ValueError(f"spread must be nonnegative, got {spread}")
    if not math.isfinite(buy_cap) or buy_cap <= 0:
        raise ValueError(f"buy_cap must be finite and positive, got {buy_cap}")
    if holding < 0:
        raise ValueError(f"holding must be nonnegative, got {holding}")
    lo, hi = -holding, buy_cap
    if abs(liability.lo - lo) > BREAK_MERGE_TOL * (1.0 + abs(lo)):
        raise DomainError(
            f"liability domain starts at {liability.lo}, expected {lo}"
        )
    delta = holding - benchmark_holding
    curv = gamma_risk * specific_var
    f = quadratic(curv, 2.0 * curv * delta - alpha, curv * delta * delta, lo, hi)
    f = f + scaled_abs(gamma_tc * spread, lo, hi)
    f = f + gamma_tax * liability.cut(lo, hi)
    if curv > 0:
        bridge = envelope_bridge(f)
        if bridge is not None and bridge.buy_point >= buy_cap * (1.0 - 1e-12):
            raise DomainError("envelope bridge reaches the buy cap; raise buy_cap")
    return f


def envelope_grid_frame(
    position,
    asof,
    tax,
    alpha: float,
    gamma_risk: float,
    specific_var: float,
    benchmark_holding: float,
    gamma_tc: float,
    spread: float,
    gamma_tax: float,
    buy_cap: float,
    grid: int = 1001,
    window: tuple[float, float] | None = None,
):
    """Sampled curves behind the envelope plots: the exact tax liability and
    its standalone envelope, the full trade cost and its envelope, and the
    envelope-lowered approximate liability, on a uniform trade grid.

    The envelope is computed over the full domain [-holding, buy_cap]; the
    sampling window defaults to [-holding, +holding], matching the usual plot
    range around the position size.
    """
    import pandas as pd

    from .lots import liability_curve

    liability = liability_curve(position, asof, tax)
    cost = build_separable_cost(
        alpha=alpha, gamma_risk=gamma_risk, specific_var=specific_var,
        holding=position.holding, benchmark_holding=benchmark_holding,
        gamma_tc=gamma_tc, spread=spread, gamma_tax=gamma_tax,
        liability=liability, buy_cap=buy_cap,
    )
    cost_env = convex_envelope(cost)
    liability_cut = liability.cut(cost.lo, cost.hi)
    liability_env = convex_envelope(liability_cut)
    approx = approximate_tax(liability, cost, cost_env, gamma_tax)
    if window is None:
        window = (cost.lo, min(cost.hi, max(-cost.lo, 1.0)))
    lo = max(window[0], cost.lo)
    hi = min(window[1], cost.hi)
    xs = np.linspace(lo, hi, grid)
    return pd.DataFrame({
        "u": xs,
        "liability": liability_cut.evaluate(xs),
        "liability_env": liability_env.evaluate(xs),
        "cost": cost.evaluate(xs),
        "cost_env": cost_env.evaluate(xs),
        "approx_liability": approx.evaluate(xs),
    })

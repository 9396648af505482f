"""Convex relaxation of the rebalance problem via perspective blocks.

Each asset holding a loss lot contributes the convex envelope of its separable
trade cost, encoded exactly with one perspective block: a mixing weight theta
and scaled branch variables v~ (buy point) and w~ (sell point) with
u = v~ + w~, branch caps scaled by theta and 1-theta, per-lot sell variables
capped at (1-theta) of the lot value, and the two branch quadratics as rotated
second-order cones x^2 <= t*s. Assets without loss lots have convex costs and
enter directly. The optimal value is an upper bound on the achievable utility;
per-asset thetas feed the randomized sign guess.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .backend import run_solver
from .errors import InfeasibleError, SolverError
from .lots import classify_term, lot_tax_rate
from .piecewise import PiecewiseQuadratic
from .problem import RebalanceProblem, validated

THETA_SNAP = 1e-7


@dataclass(frozen=True)
class RelaxationSolution:
    """Relaxed trades, mixing weights, and the certified upper bound."""

    u_relax: np.ndarray
    thetas: np.ndarray
    upper_bound: float  # dollars of utility
    status: str
    wall_time: float
    block_assets: tuple[int, ...]


def _rotated_cone(t, s, x):
    """Vectorized x_i^2 <= t_i * s_i with t, s >= 0."""
    return cp.SOC(t + s, cp.vstack([t - s, 2.0 * x]), axis=0)


class RelaxationProgram:
    """Built cone program for one problem instance (see module docstring)."""

    def __init__(self, problem: RebalanceProblem):
        self.problem = validated(problem)
        n = problem.n
        scale = problem.account_value
        self._scale = scale
        holdings_n = problem.initial_holdings / scale
        buy_caps_n = problem.effective_buy_caps() / scale
        delta_n = (problem.initial_holdings - problem.benchmark) / scale
        risk_weight = problem.gamma_risk * scale
        self.description: list[str] = [
            "taxopt conic relaxation v1",
            f"assets={n} factors={problem.risk_model.n_factors} scale={scale:.6g}",
        ]

        loss_mask = problem.loss_asset_mask()
        env_idx = np.flatnonzero(loss_mask)
        cvx_idx = np.flatnonzero(~loss_mask)
        self.block_assets = tuple(int(i) for i in env_idx)

        lot_rows, lot_caps, lot_rates = [], [], []
        for i, pos in enumerate(problem.positions):
            for lot in pos.lots:
                lot_rows.append(i)
                lot_caps.append(lot.quantity * pos.price / scale)
                term = classify_term(lot, problem.asof, problem.tax)
                lot_rates.append(lot_tax_rate(lot, pos.price, term, problem.tax))
        lot_rows = np.asarray(lot_rows, dtype=int)
        lot_caps = np.asarray(lot_caps, dtype=float)
        lot_rates = np.asarray(lot_rates, dtype=float)

        u = cp.Variable(n)
        factor_exp = cp.Variable(problem.risk_model.n_factors)
        constraints = [
            cp.sum(u) == problem.cash_delta / scale,
            factor_exp == problem.risk_model.exposures.T @ (delta_n + u),
        ]
        chol = problem.risk_model.factor_chol()
        objective = risk_weight * cp.sum_squares(chol @ factor_exp)
        self.description.append("objective: factor risk quad_form via cholesky")

        # --- assets with convex costs enter directly -----------------------
        if len(cvx_idx):
            in_cvx = np.isin(lot_rows, cvx_idx)
            local = np.searchsorted(cvx_idx, lot_rows[in_cvx])
            n_lots = int(in_cvx.sum())
            buys = cp.Variable(len(cvx_idx), nonneg=True)
            sells = cp.Variable(len(cvx_idx), nonneg=True)
            constraints += [
                u[cvx_idx] == buys - sells,
                buys <= buy_caps_n[cvx_idx],
                sells <= holdings_n[cvx_idx],
            ]
            if n_lots:
                lot_sales = cp.Variable(n_lots, nonneg=True)
                incidence = sp.csr_matrix(
                    (np.ones(n_lots), (local, np.arange(n_lots))),
                    shape=(len(cvx_idx), n_lots),
                )
                constraints += [
                    lot_sales <= lot_caps[in_cvx],
                    incidence @ lot_sales == sells,
                ]
                objective = objective + problem.gamma_tax * (lot_rates[in_cvx] @ lot_sales)
            else:
                constraints.append(sells == 0)
            objective = objective + (
                -problem.alpha[cvx_idx] @ u[cvx_idx]
                + risk_weight * cp.sum(cp.multiply(
                    problem.risk_model.specific_var[cvx_idx],
                    cp.square(delta_n[cvx_idx] + u[cvx_idx])))
                + problem.gamma_tc * (problem.spreads[cvx_idx] @ (buys + sells))
            )
            self.description.append(
                f"direct assets: {len(cvx_idx)} (convex costs, {n_lots} lots)"
            )

        # --- perspective blocks for loss-lot assets -------------------------
        self._theta = None
        if len(env_idx):
            ne = len(env_idx)
            in_env = np.isin(lot_rows, env_idx)
            local = np.searchsorted(env_idx, lot_rows[in_env])
            n_lots = int(in_env.sum())
            theta = cp.Variable(ne, nonneg=True)
            buy_pt = cp.Variable(ne, nonneg=True)  # v~ = theta * v
            sell_pt = cp.Variable(ne, nonpos=True)  # w~ = (1-theta) * w
            lot_sales = cp.Variable(n_lots, nonneg=True)
            t_buy = cp.Variable(ne, nonneg=True)
            t_sell = cp.Variable(ne, nonneg=True)
            incidence = sp.csr_matrix(
                (np.ones(n_lots), (local, np.arange(n_lots))), shape=(ne, n_lots)
            )
            constraints += [
                theta <= 1,
                u[env_idx] == buy_pt + sell_pt,
                buy_pt <= cp.multiply(buy_caps_n[env_idx], theta),
                -sell_pt <= cp.multiply(holdings_n[env_idx], 1 - theta),
                lot_sales <= cp.multiply(lot_caps[in_env], (1 - theta)[local]),
                incidence @ lot_sales == -sell_pt,
                _rotated_cone(t_buy, theta,
                              cp.multiply(delta_n[env_idx], theta) + buy_pt),
                _rotated_cone(t_sell, 1 - theta,
                              cp.multiply(delta_n[env_idx], 1 - theta) + sell_pt),
            ]
            objective = objective + (
                -problem.alpha[env_idx] @ (buy_pt + sell_pt)
                + risk_weight * (problem.risk_model.specific_var[env_idx] @ (t_buy + t_sell))
                + problem.gamma_tc * (problem.spreads[env_idx] @ (buy_pt - sell_pt))
                + problem.gamma_tax * (lot_rates[in_env] @ lot_sales)
            )
            self._theta = theta
            self.description.append(
                f"perspective blocks: {ne} (2 rotated cones each, {n_lots} scaled lots)"
            )

        tc = problem.trade_constraints
        if tc.n_rows:
            constraints.append(tc.matrix @ u >= tc.lower / scale)
            constraints.append(tc.matrix @ u <= tc.upper / scale)
            self.description.append(f"trade constraint rows: {tc.n_rows}")
        hc = problem.holding_constraints
        if hc.n_rows:
            h = holdings_n + u
            constraints.append(hc.matrix @ h >= hc.lower / scale)
            constraints.append(hc.matrix @ h <= hc.upper / scale)
            self.description.append(f"holding constraint rows: {hc.n_rows}")
        self.description.append(f"cash row: sum(u) == {problem.cash_delta / scale:.6g}")
        for name, cone in (("buy", "rsoc"), ("sell", "rsoc")):
            if len(env_idx):
                self.description.append(
                    f"cone list: {cone} x{len(env_idx)} ({name} branch)")

        self._u = u
        self._cvx = cp.Problem(cp.Minimize(objective), constraints)

    def solve(self) -> RelaxationSolution:
        start = time.perf_counter()
        status = run_solver(self._cvx, conic=True)
        if status == "infeasible":
            raise InfeasibleError("relaxed constraint set is infeasible")
        if status == "unbounded":
            raise SolverError("relaxation is unbounded")
        problem = self.problem
        u = self._u.value * self._scale
        u[np.abs(u) < 1e-9 * self._scale] = 0.0
        thetas = np.where(u >= 0, 1.0, 0.0)
        if self._theta is not None:
            block = np.clip(self._theta.value, 0.0, 1.0)
            block[block < THETA_SNAP] = 0.0
            block[block > 1.0 - THETA_SNAP] = 1.0
            thetas[list(self.block_assets)] = block
        return RelaxationSolution(
            u_relax=u,
            thetas=thetas,
            upper_bound=-self._cvx.value * self._scale,
            status=status,
            wall_time=time.perf_counter() - start,
            block_assets=self.block_assets,
        )

    def dump(self, path) -> None:
        """Write the documented text description of the program.

        Format: one line per record; objective terms, constraint rows, and the
        cone list, prefixed by a version header. Intended for diffing the same
        instance across solver backends.
        """
        with open(path, "w") as fh:
            fh.write("\n".join(self.description) + "\n")


def build_perspective_program(problem: RebalanceProblem) -> RelaxationProgram:
    return RelaxationProgram(problem)


def solve_relaxation(problem: RebalanceProblem) -> RelaxationSolution:
    return RelaxationProgram(problem).solve()


class _EnvelopeProgram:
    """Single-function perspective program used as a validation hook.

    Encodes a generic half-line-convex piecewise quadratic branch by filling
    per-piece increments (the convex analogue of selling lot by lot), applies
    the perspective scaling to both branches, and pins the evaluation point
    with a parameter. Optimal value equals the convex envelope at the point.
    """

    def __init__(self, f: PiecewiseQuadratic):
        if math.isinf(f.hi):
            raise ValueError("bounded domain required")
        self._f = f
        theta = cp.Variable(nonneg=True)
        self._x = cp.Parameter()
        constraints = [theta <= 1]
        total = 0.0
        anchor = 0.0 if f.lo <= 0 <= f.hi else (f.lo if f.lo > 0 else f.hi)
        base = f.evaluate(anchor)
        objective = cp.Constant(base)

        def branch_terms(side):
            nonlocal objective, total
            if side == "buy":
                lo, hi, weight = anchor, f.hi, theta
            else:
                lo, hi, weight = f.lo, anchor, 1 - theta
            if hi - lo <= 0:
                return 0.0
            branch = f.cut(lo, hi)
            fills = []
            pieces = (range(branch.num_pieces) if side == "buy"
                      else reversed(range(branch.num_pieces)))
            for p in pieces:
                a, b, _ = branch.coeffs[p]
                x0, x1 = branch.breaks[p], branch.breaks[p + 1]
                length = x1 - x0
                edge = x0 if side == "buy" else x1
                grad = 2.0 * a * edge + b  # branch slope at the near edge
                fill = cp.Variable(nonneg=True)
                constraints.append(fill <= length * weight)
                sign = 1.0 if side == "buy" else -1.0
                objective += sign * grad * fill
                if a > 0:
                    # epigraph t >= fill^2 / weight, exact at weight = 0
                    t = cp.Variable(nonneg=True)
                    constraints.append(
                        cp.SOC(t + weight, cp.vstack([t - weight, 2.0 * fill])))
                    objective += a * t
                fills.append(sign * fill)
            return cp.sum(cp.hstack(fills)) if fills else 0.0

        extent = branch_terms("buy") + branch_terms("sell")
        constraints.append(self._x == anchor + extent)
        self._cvx = cp.Problem(cp.Minimize(objective), constraints)

    def value_at(self, x: float) -> float:
        self._x.value = float(x)
        status = run_solver(self._cvx, conic=True)
        if status not in ("optimal", "optimal-inaccurate"):
            raise SolverError(f"envelope check solve ended {status}")
        return float(self._cvx.value)


def fixed_point_envelope_check(f: PiecewiseQuadratic, x) -> float:
    """Envelope value at x from the cone program (independent of the analytic
    bridge construction). Accepts a scalar or an iterable of points."""
    program = _EnvelopeProgram(f)
    if np.ndim(x) == 0:
        return program.value_at(float(x))
    return np.array([program.value_at(float(xi)) for xi in np.asarray(x)])

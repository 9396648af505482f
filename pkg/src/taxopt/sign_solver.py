"""Sign-constrained convex solve: stage 2 of the heuristic.

Fixing, per asset, whether we buy or sell makes the rebalance objective
convex: the sell-side tax liability becomes a piecewise-linear epigraph over
per-lot sell variables. Buys and sells are split into nonnegative variables
whose caps encode the sign pattern, so one parametrized program serves every
pattern (warm canonicalization across oracle enumeration and heuristic
candidates).

All dollar data is normalized by account value before the solve; solver
conditioning in raw dollars is poor.
"""

from __future__ import annotations

import time

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .backend import run_solver
from .errors import InfeasibleError, SolverError
from .lots import classify_term, lot_tax_rate, ltfo_allocate
from .problem import RebalanceProblem, SolveReport, TradeList, utility, validated

_SNAP_REL = 1e-9  # |u| below this fraction of account value is treated as zero


class SignConstrainedSolver:
    """Reusable solver for one problem instance across many sign patterns.

    Sign entries are +1 (buy only), -1 (sell only), or 0 (unconstrained; only
    valid for assets whose objective terms are convex, i.e. no loss lots).
    """

    def __init__(self, problem: RebalanceProblem):
        self.problem = validated(problem)
        n = problem.n
        scale = problem.account_value
        self._scale = scale

        self._holdings_n = problem.initial_holdings / scale
        self._buy_caps_n = problem.effective_buy_caps() / scale
        delta_n = (problem.initial_holdings - problem.benchmark) / scale

        lot_rows = []
        lot_caps = []
        lot_rates = []
        for i, pos in enumerate(problem.positions):
            for lot in pos.lots:
                lot_rows.append(i)
                lot_caps.append(lot.quantity * pos.price / scale)
                term = classify_term(lot, problem.asof, problem.tax)
                lot_rates.append(lot_tax_rate(lot, pos.price, term, problem.tax))
        n_lots = len(lot_rows)
        rows = np.asarray(lot_rows, dtype=int)
        incidence = sp.csr_matrix(
            (np.ones(n_lots), (rows, np.arange(n_lots))), shape=(n, n_lots)
        )

        buys = cp.Variable(n, nonneg=True)
        sells = cp.Variable(n, nonneg=True)
        lot_sales = cp.Variable(n_lots, nonneg=True) if n_lots else None
        factor_exp = cp.Variable(problem.risk_model.n_factors)
        self._buy_cap_param = cp.Parameter(n, nonneg=True)
        self._sell_cap_param = cp.Parameter(n, nonneg=True)
        u = buys - sells

        constraints = [
            buys <= self._buy_cap_param,
            sells <= self._sell_cap_param,
            cp.sum(u) == problem.cash_delta / scale,
            factor_exp == problem.risk_model.exposures.T @ (delta_n + u),
        ]
        if n_lots:
            constraints += [
                lot_sales <= np.asarray(lot_caps),
                incidence @ lot_sales == sells,
            ]
        else:
            constraints.append(sells == 0)
        tc = problem.trade_constraints
        if tc.n_rows:
            constraints.append(tc.matrix @ u >= tc.lower / scale)
            constraints.append(tc.matrix @ u <= tc.upper / scale)
        hc = problem.holding_constraints
        if hc.n_rows:
            h = self._holdings_n + u
            constraints.append(hc.matrix @ h >= hc.lower / scale)
            constraints.append(hc.matrix @ h <= hc.upper / scale)

        chol = problem.risk_model.factor_chol()
        risk_weight = problem.gamma_risk * scale
        objective = (
            -problem.alpha @ u
            + risk_weight * cp.sum_squares(chol @ factor_exp)
            + risk_weight * cp.sum(
                cp.multiply(problem.risk_model.specific_var, cp.square(delta_n + u)))
            + problem.gamma_tc * (problem.spreads @ (buys + sells))
        )
        if n_lots:
            objective = objective + problem.gamma_tax * (np.asarray(lot_rates) @ lot_sales)
        self._cvx = cp.Problem(cp.Minimize(objective), constraints)
        self._buys, self._sells = buys, sells

    def solve(self, signs: np.ndarray) -> tuple[TradeList, SolveReport]:
        """Solve under the given sign pattern; raises InfeasibleError when the
        pattern admits no feasible trade."""
        signs = np.asarray(signs, dtype=int)
        if signs.shape != (self.problem.n,):
            raise ValueError(f"signs shape {signs.shape}, expected ({self.problem.n},)")
        start = time.perf_counter()
        self._buy_cap_param.value = np.where(signs >= 0, self._buy_caps_n, 0.0)
        self._sell_cap_param.value = np.where(signs <= 0, self._holdings_n, 0.0)
        status = run_solver(self._cvx, conic=False)
        if status == "infeasible":
            raise InfeasibleError(f"sign pattern {signs.tolist()} is infeasible")
        if status == "unbounded":
            raise SolverError("sign-constrained problem is unbounded")
        trade = self._extract()
        value = utility(self.problem, trade)
        report = SolveReport(
            utility=value,
            upper_bound=value,
            method="sign-constrained",
            wall_time=time.perf_counter() - start,
            status=status,
        )
        return trade, report

    def _extract(self) -> TradeList:
        problem = self.problem
        u = (self._buys.value - self._sells.value) * self._scale
        snap = _SNAP_REL * self._scale
        u[np.abs(u) < snap] = 0.0
        holdings = problem.initial_holdings
        u = np.maximum(u, -holdings)  # remove solver slack before allocating lots
        allocations = {}
        for i, pos in enumerate(problem.positions):
            if u[i] < 0:
                allocations[pos.asset_id] = ltfo_allocate(
                    pos, -float(u[i]), problem.asof, problem.tax
                )
        return TradeList(u=u, allocations=allocations, post_holdings=holdings + u)


def solve_sign_constrained(
    problem: RebalanceProblem, signs
) -> tuple[TradeList, SolveReport]:
    """One-shot solve with every asset sign-constrained (+1 buy / -1 sell)."""
    signs = np.asarray(signs, dtype=int)
    if not np.all(np.abs(signs) == 1):
        raise ValueError("signs must be +1 or -1 for every asset")
    return SignConstrainedSolver(problem).solve(signs)

"""Problem data for a single tax-aware rebalance, plus the utility function.

A rebalance chooses a dollar trade vector u maximizing

    alpha'u - g_risk*(h-h_b)'V(h-h_b) - g_tc*kappa'|u| - g_tax*L(u)

subject to h = h_init + u >= 0, 1'u = cash_init - cash_target, and optional
linear constraints on u and h. V = X*Sigma*X' + D is a factor risk model and
L is the exact lot-level tax liability of the trades.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import ValidationError
from .lots import AssetPosition, SellAllocation, TaxParameters, tax_liability

CASH_REL_TOL = 1e-6


@dataclass(frozen=True)
class FactorRiskModel:
    """Covariance V = exposures * factor_cov * exposures' + diag(specific_var)."""

    exposures: np.ndarray  # n x k
    factor_cov: np.ndarray  # k x k, symmetric positive definite
    specific_var: np.ndarray  # n, positive

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.exposures, dtype=float))
        S = np.atleast_2d(np.asarray(self.factor_cov, dtype=float))
        d = np.asarray(self.specific_var, dtype=float)
        object.__setattr__(self, "exposures", X)
        object.__setattr__(self, "factor_cov", S)
        object.__setattr__(self, "specific_var", d)

    @property
    def n_assets(self) -> int:
        return self.exposures.shape[0]

    @property
    def n_factors(self) -> int:
        return self.exposures.shape[1]

    def check(self) -> list[str]:
        problems = []
        X, S, d = self.exposures, self.factor_cov, self.specific_var
        if S.shape != (X.shape[1], X.shape[1]):
            problems.append(f"factor_cov shape {S.shape} does not match k={X.shape[1]}")
            return problems
        if d.shape != (X.shape[0],):
            problems.append(f"specific_var length {d.shape} does not match n={X.shape[0]}")
        if np.max(np.abs(S - S.T)) > 1e-12 * (1.0 + np.max(np.abs(S))):
            problems.append("factor_cov is not symmetric")
        else:
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                problems.append("factor_cov is not positive definite")
        if np.any(d <= 0):
            problems.append("specific_var must be strictly positive")
        return problems

    def factor_chol(self) -> np.ndarray:
        """Upper-triangular C with C'C = factor_cov."""
        return np.linalg.cholesky(self.factor_cov).T

    def covariance(self) -> np.ndarray:
        X = self.exposures
        return X @ self.factor_cov @ X.T + np.diag(self.specific_var)

    def quad(self, vec: np.ndarray) -> tuple[float, float]:
        """(systematic, specific) components of vec' V vec."""
        y = self.exposures.T @ vec
        return float(y @ self.factor_cov @ y), float(self.specific_var @ (vec * vec))


@dataclass(frozen=True)
class LinearConstraintSet:
    """Rows lower <= A x <= upper over the trade or holdings vector."""

    matrix: np.ndarray  # m x n
    lower: np.ndarray  # m, may be -inf
    upper: np.ndarray  # m, may be +inf

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if A.size == 0:
            A = A.reshape(0, A.shape[1] if A.ndim == 2 and A.shape[1] else 0)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def empty(cls, n: int) -> "LinearConstraintSet":
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros(0))

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def check(self, n: int) -> list[str]:
        problems = []
        if self.n_rows and self.matrix.shape[1] != n:
            problems.append(f"constraint matrix has {self.matrix.shape[1]} columns, expected {n}")
        if self.lower.shape != (self.n_rows,) or self.upper.shape != (self.n_rows,):
            problems.append("constraint bound lengths do not match row count")
        elif np.any(self.lower > self.upper):
            problems.append("constraint lower bound exceeds upper bound")
        return problems

    def violations(self, x: np.ndarray, tol: float) -> list[str]:
        if not self.n_rows:
            return []
        vals = self.matrix @ x
        out = []
        for i, v in enumerate(vals):
            if v < self.lower[i] - tol or v > self.upper[i] + tol:
                out.append(
                    f"row {i}: value {v:.6g} outside [{self.lower[i]:.6g}, {self.upper[i]:.6g}]"
                )
        return out


@dataclass(frozen=True)
class RebalanceProblem:
    """Inputs of one rebalance; see module docstring for the objective."""

    asset_ids: tuple[str, ...]
    alpha: np.ndarray
    benchmark: np.ndarray
    initial_holdings: np.ndarray
    cash_init: float
    cash_target: float
    spreads: np.ndarray
    gamma_risk: float
    gamma_tc: float
    gamma_tax: float
    risk_model: FactorRiskModel
    positions: tuple[AssetPosition, ...]
    tax: TaxParameters
    asof: date
    trade_constraints: LinearConstraintSet | None = None
    holding_constraints: LinearConstraintSet | None = None
    buy_caps: np.ndarray | None = None  # per-asset; defaults to account value

    def __post_init__(self):
        for name in ("alpha", "benchmark", "initial_holdings", "spreads"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "positions", tuple(self.positions))
        if self.trade_constraints is None:
            object.__setattr__(self, "trade_constraints", LinearConstraintSet.empty(self.n))
        if self.holding_constraints is None:
            object.__setattr__(self, "holding_constraints", LinearConstraintSet.empty(self.n))
        if self.buy_caps is not None:
            object.__setattr__(self, "buy_caps", np.asarray(self.buy_caps, dtype=float))

    @property
    def n(self) -> int:
        return len(self.asset_ids)

    @property
    def account_value(self) -> float:
        return float(np.sum(self.initial_holdings) + self.cash_init)

    @property
    def cash_delta(self) -> float:
        """Required net purchase 1'u."""
        return self.cash_init - self.cash_target

    def effective_buy_caps(self) -> np.ndarray:
        caps = (np.full(self.n, self.account_value)
                if self.buy_caps is None else self.buy_caps.copy())
        return np.maximum(caps, 0.0)

    def loss_asset_mask(self) -> np.ndarray:
        """True where the position holds at least one lot at a loss."""
        mask = np.zeros(self.n, dtype=bool)
        for i, pos in enumerate(self.positions):
            mask[i] = any(lot.basis > pos.price for lot in pos.lots)
        return mask

    def exact_liability(self, u: np.ndarray) -> float:
        return sum(
            tax_liability(pos, float(u[i]), self.asof, self.tax)
            for i, pos in enumerate(self.positions)
        )


@dataclass(frozen=True)
class TradeList:
    """Dollar trades, per-asset sell allocations, and post-trade holdings."""

    u: np.ndarray
    allocations: dict[str, SellAllocation] = field(default_factory=dict)
    post_holdings: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if self.post_holdings is not None:
            object.__setattr__(self, "post_holdings",
                               np.asarray(self.post_holdings, dtype=float))


@dataclass(frozen=True)
class SolveReport:
    """Achieved utility, upper bound, and solve metadata."""

    utility: float
    upper_bound: float
    method: str
    wall_time: float
    status: str = "optimal"
    fallback_used: bool = False

    @property
    def gap(self) -> float:
        return self.upper_bound - self.utility


def cash_target(initial_holdings, cash_init: float, eta: float) -> float:
    """Desired post-trade cash: fraction eta of total portfolio value."""
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must be in [0, 1), got {eta}")
    return eta * (float(np.sum(initial_holdings)) + cash_init)


def feasibility_violations(problem: RebalanceProblem, u: np.ndarray) -> list[str]:
    """All constraint violations of a trade vector (empty list when feasible)."""
    tol = CASH_REL_TOL * max(1.0, problem.account_value)
    out = []
    h = problem.initial_holdings + u
    if np.any(h < -tol):
        worst = int(np.argmin(h))
        out.append(f"post-trade holding of {problem.asset_ids[worst]} is {h[worst]:.4f}")
    if abs(float(np.sum(u)) - problem.cash_delta) > tol:
        out.append(
            f"net purchase {float(np.sum(u)):.4f} does not match cash change "
            f"{problem.cash_delta:.4f}"
        )
    for i, pos in enumerate(problem.positions):
        if u[i] < -pos.holding - tol:
            out.append(f"{problem.asset_ids[i]}: sale exceeds position")
    out.extend(f"trade constraint {v}"
               for v in problem.trade_constraints.violations(u, tol))
    out.extend(f"holding constraint {v}"
               for v in problem.holding_constraints.violations(h, tol))
    return out


def utility(problem: RebalanceProblem, trade: TradeList) -> float:
    """Exact objective value of a trade list, with lot-level tax liability.

    Raises ValidationError listing violated constraints when infeasible.
    """
    u = trade.u
    violations = feasibility_violations(problem, u)
    if violations:
        raise ValidationError(violations)
    h = problem.initial_holdings + u
    active = h - problem.benchmark
    systematic, specific = problem.risk_model.quad(active)
    return float(
        problem.alpha @ u
        - problem.gamma_risk * (systematic + specific)
        - problem.gamma_tc * (problem.spreads @ np.abs(u))
        - problem.gamma_tax * problem.exact_liability(u)
    )


def validate(problem: RebalanceProblem) -> list[str]:
    """All data findings (empty list when the instance is consistent)."""
    out = []
    n = problem.n
    for name in ("alpha", "benchmark", "initial_holdings", "spreads"):
        vec = getattr(problem, name)
        if vec.shape != (n,):
            out.append(f"{name} has shape {vec.shape}, expected ({n},)")
    if len(problem.positions) != n:
        out.append(f"{len(problem.positions)} positions for {n} assets")
    if problem.risk_model.n_assets != n:
        out.append(f"risk model covers {problem.risk_model.n_assets} assets, expected {n}")
    out.extend(problem.risk_model.check())
    if problem.account_value <= 0:
        out.append("total portfolio value must be positive")
    if np.any(problem.spreads < 0):
        out.append("spreads must be nonnegative")
    if min(problem.gamma_risk, problem.gamma_tc, problem.gamma_tax) < 0:
        out.append("trade-off weights must be nonnegative")
    if np.any(problem.initial_holdings < 0):
        out.append("initial holdings must be nonnegative")
    if len(problem.positions) == n and problem.initial_holdings.shape == (n,):
        for i, pos in enumerate(problem.positions):
            if pos.asset_id != problem.asset_ids[i]:
                out.append(f"position {i} is {pos.asset_id}, expected {problem.asset_ids[i]}")
            if abs(pos.holding - problem.initial_holdings[i]) > 1e-6 * (
                    1.0 + problem.initial_holdings[i]):
                out.append(
                    f"{pos.asset_id}: ledger value {pos.holding:.4f} does not match "
                    f"initial holding {problem.initial_holdings[i]:.4f}"
                )
    out.extend(f"trade constraints: {p}" for p in problem.trade_constraints.check(n))
    out.extend(f"holding constraints: {p}" for p in problem.holding_constraints.check(n))
    if problem.buy_caps is not None and problem.buy_caps.shape != (n,):
        out.append(f"buy_caps has shape {problem.buy_caps.shape}, expected ({n},)")
    return out


def validated(problem: RebalanceProblem) -> RebalanceProblem:
    findings = validate(problem)
    if findings:
        raise ValidationError(findings)
    return problem

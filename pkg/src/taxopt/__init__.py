"""Tax-aware portfolio construction.

Builds trade lists that trade off expected return, active risk, transaction
cost, and lot-level capital-gains tax. The nonconvex tax term is handled by a
two-stage heuristic: a convex-envelope relaxation picks buy/sell signs (and
yields an upper bound), then a sign-constrained convex program produces the
final trade list. An exact enumeration oracle and a monthly backtest simulator
support validation.
"""

from .errors import (
    DomainError,
    InfeasibleError,
    InputFormatError,
    InvalidDateError,
    OversellError,
    SolverError,
    TaxoptError,
    UnsupportedShapeError,
    ValidationError,
)
from .lots import (
    AssetPosition,
    SellAllocation,
    TaxLot,
    TaxParameters,
    Term,
    apply_trade,
    classify_term,
    liability_curve,
    liquidate,
    lot_tax_rate,
    ltfo_allocate,
    tax_liability,
)
from .piecewise import PiecewiseQuadratic
from .envelope import (
    Bridge,
    EnvelopeDecomposition,
    approximate_tax,
    build_separable_cost,
    convex_envelope,
    envelope_bridge,
    envelope_decompose,
)
from .problem import (
    FactorRiskModel,
    LinearConstraintSet,
    RebalanceProblem,
    SolveReport,
    TradeList,
    cash_target,
    utility,
    validate,
)
from .sign_solver import SignConstrainedSolver, solve_sign_constrained
from .relaxation import (
    RelaxationSolution,
    build_perspective_program,
    fixed_point_envelope_check,
    solve_relaxation,
)
from .heuristic import (
    RoundingConfig,
    deterministic_signs,
    heuristic_solve,
    randomized_signs,
)
from .oracle import (
    OracleResult,
    enumerate_signs_solve,
    envelope_bruteforce,
    ltfo_bruteforce,
)
from .market import MarketData
from .synthetic import random_problem, synthetic_market
from .backtest import (
    BacktestConfig,
    BacktestResult,
    PeriodRecord,
    run_backtest,
    report_metrics,
    step_month,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

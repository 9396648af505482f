"""Solver backend selection and status mapping.

The optimization modules build cone programs (quadratic objective, linear
equalities/inequalities, second-order cone membership) through cvxpy; the
pluggable piece of the backend contract is the underlying solver, chosen by
the TAXOPT_SOLVER environment variable (clarabel by default; scs and cvxopt
can solve everything here, osqp only the sign-constrained QPs). Statuses map
onto {optimal, infeasible, unbounded, numerical-failure}.
"""

from __future__ import annotations

import os
import warnings

import cvxpy as cp

from .errors import SolverError

_ENV_VAR = "TAXOPT_SOLVER"

_SOLVERS = {
    "clarabel": cp.CLARABEL,
    "scs": cp.SCS,
    "osqp": cp.OSQP,
    "cvxopt": cp.CVXOPT,
}

_STATUS = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "optimal-inaccurate",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    cp.UNBOUNDED: "unbounded",
    cp.UNBOUNDED_INACCURATE: "unbounded",
}


def selected_solver(conic: bool = True) -> str:
    """Resolve TAXOPT_SOLVER to a cvxpy solver name."""
    name = os.environ.get(_ENV_VAR, "clarabel").strip().lower()
    if name not in _SOLVERS:
        raise SolverError(
            f"unknown {_ENV_VAR}={name!r}; choose one of {sorted(_SOLVERS)}"
        )
    if conic and name == "osqp":
        return _SOLVERS["clarabel"]  # osqp cannot handle the cone constraints
    return _SOLVERS[name]


# cvxpy reuses solver options from the previous solve() on the same Problem,
# so every rung spells out all the settings it relies on
_CLARABEL_DEFAULTS = {
    "tol_gap_abs": 1e-8,
    "tol_gap_rel": 1e-8,
    "tol_feas": 1e-8,
    "static_regularization_constant": 1e-8,
}

_TIGHT = {
    # upper bounds are consumed at 1e-6 * account-value precision, so the
    # duality gap must close well beyond the solver's 1e-8 default
    "tol_gap_abs": 1e-11,
    "tol_gap_rel": 1e-10,
    "tol_feas": 1e-9,
    "static_regularization_constant": 1e-8,
}


def _attempts(solver: str):
    if solver == cp.CLARABEL:
        yield solver, dict(_TIGHT)
        # progress stalls on degenerate perspective blocks; extra static
        # regularization reliably recovers full accuracy
        yield solver, {**_TIGHT, "static_regularization_constant": 1e-7}
        yield solver, dict(_CLARABEL_DEFAULTS)
        yield solver, {**_CLARABEL_DEFAULTS, "static_regularization_constant": 1e-7}
    else:
        yield solver, {}


def run_solver(prob: cp.Problem, conic: bool = True) -> str:
    """Solve in place, escalating settings until an accurate status.

    Returns one of {optimal, optimal-inaccurate, infeasible, unbounded};
    raises SolverError after exhausting the ladder (numerical-failure in the
    backend contract). A reduced-accuracy optimum is accepted and flagged
    rather than escalated to a slower solver; SCS is the recovery path when
    the primary solver fails outright.
    """
    solver = selected_solver(conic)
    inaccurate: tuple[str, dict] | None = None
    failed = True
    def attempt(name, kwargs):
        # intermediate rungs ending inaccurate are expected; silence cvxpy's
        # warning and surface the outcome through the returned status
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            prob.solve(solver=name, **kwargs)

    for name, kwargs in _attempts(solver):
        try:
            attempt(name, kwargs)
        except cp.error.SolverError:
            continue
        failed = False
        status = _STATUS.get(prob.status, "numerical-failure")
        if status in ("optimal", "infeasible", "unbounded"):
            return status
        if status == "optimal-inaccurate" and inaccurate is None:
            inaccurate = (name, kwargs)
    if inaccurate is not None:
        name, kwargs = inaccurate
        attempt(name, kwargs)
        return "optimal-inaccurate"
    if failed and solver != cp.SCS:
        try:
            attempt(cp.SCS, {"eps": 1e-7, "max_iters": 25_000})
        except cp.error.SolverError as exc:
            raise SolverError(f"all backends failed: {exc}") from exc
        status = _STATUS.get(prob.status, "numerical-failure")
        if status in ("optimal", "optimal-inaccurate", "infeasible", "unbounded"):
            return status
    raise SolverError("solver failed with status numerical-failure")

"""Optimal insurance contracts under limited commitment.

Numerical tools for the finite-horizon risk-sharing problem between a
risk-neutral principal and a CRRA agent who can walk away to autarky at
any time: the free boundary of the associated stopping problem, the dual
value function, the optimal contract along simulated income paths, and a
finite-difference cross-check.
"""

from .errors import (
    DomainError,
    InfeasiblePromiseError,
    ParameterError,
    SolverError,
)
from .model import (
    DerivedConstants,
    ModelParams,
    autarky_value,
    d_factors,
    derive_constants,
    dual_utility,
    first_best_consumption,
    laplace_normal_integral,
    normal_cdf,
    utility,
)
from .boundary import BoundaryGrid, boundary_at, boundary_residual, solve_boundary
from .valuation import (
    ValuationContext,
    classify_region,
    dual_J,
    g_infinity,
    hjb_residual,
    marginal_dual,
    obstacle_h,
    premium_Q,
    premium_Q_infinity,
    stop_value_g,
)
from .contract import (
    ContractPath,
    IncomePath,
    InfiniteHorizonContract,
    MonteCarloResult,
    infinite_horizon_contract,
    monte_carlo_check,
    run_contract,
    simulate_income,
    solve_lambda_star,
)
from .vi_oracle import FDSolution, complementarity_report, fd_boundary, solve_vi_fd

__version__ = "0.1.0"

__all__ = [
    "BoundaryGrid",
    "ContractPath",
    "DerivedConstants",
    "DomainError",
    "FDSolution",
    "IncomePath",
    "InfeasiblePromiseError",
    "InfiniteHorizonContract",
    "ModelParams",
    "MonteCarloResult",
    "ParameterError",
    "SolverError",
    "ValuationContext",
    "autarky_value",
    "boundary_at",
    "boundary_residual",
    "classify_region",
    "complementarity_report",
    "d_factors",
    "derive_constants",
    "dual_J",
    "dual_utility",
    "fd_boundary",
    "first_best_consumption",
    "g_infinity",
    "hjb_residual",
    "infinite_horizon_contract",
    "laplace_normal_integral",
    "marginal_dual",
    "monte_carlo_check",
    "normal_cdf",
    "obstacle_h",
    "premium_Q",
    "premium_Q_infinity",
    "run_contract",
    "simulate_income",
    "solve_boundary",
    "solve_lambda_star",
    "solve_vi_fd",
    "stop_value_g",
    "utility",
]

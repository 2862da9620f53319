"""Wholesale electricity-market simulation and incentive design.

Clears DC-network spot markets with and without pollution externalities,
computes marginal-contribution taxes and consumer-surplus subsidies, and solves
optimal versus strategic generation-capacity investment.
"""

from .model import (
    TimeGrid, LineSpec, NetworkTopology, PiecewiseLinearCurve, QuadraticUtility,
    GeneratorSpec, DemandSpec, ExternalitySpec, SolverSettings, ScenarioCase,
    validate_case, compute_ptdf, curve_value, curve_marginal, pwl_from_quadratic,
)
from .solver import (
    LinearProgram, MixedIntegerProgram, SolveReport,
    solve_lp, solve_milp, fix_and_price, to_lp_text, scipy_available,
)
from .spot import (
    DispatchResult, clear_market, nodal_prices, aggregate_utility,
    evaluate_welfare, single_bus_affine_clearing, demand_equilibrium_block,
)
from .incentives import (
    IncentiveReport, SchemeChecks, pigouvian_tax, surplus_subsidy,
    producer_profit, build_incentive_report, scheme_checks,
)
from .investment import (
    InvestmentResult, optimal_investment, strategic_investment,
    subsidy_best_response, investment_grid_oracle,
)
from .scenario import (
    ScenarioError, ScenarioFormatError, ScenarioValidationError, ResultBundle,
    load_scenario, save_scenario, bundled_scenario_path, case_to_document,
    build_analytical_example, build_rts24_case, emit_results,
    save_bundle, load_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "TimeGrid", "LineSpec", "NetworkTopology", "PiecewiseLinearCurve",
    "QuadraticUtility", "GeneratorSpec", "DemandSpec", "ExternalitySpec",
    "SolverSettings", "ScenarioCase", "validate_case", "compute_ptdf",
    "curve_value", "curve_marginal", "pwl_from_quadratic",
    "LinearProgram", "MixedIntegerProgram", "SolveReport", "solve_lp",
    "solve_milp", "fix_and_price", "to_lp_text", "scipy_available",
    "DispatchResult", "clear_market", "nodal_prices", "aggregate_utility",
    "evaluate_welfare", "single_bus_affine_clearing", "demand_equilibrium_block",
    "IncentiveReport", "SchemeChecks", "pigouvian_tax", "surplus_subsidy",
    "producer_profit", "build_incentive_report", "scheme_checks",
    "InvestmentResult", "optimal_investment", "strategic_investment",
    "subsidy_best_response", "investment_grid_oracle",
    "ScenarioError", "ScenarioFormatError", "ScenarioValidationError",
    "ResultBundle", "load_scenario", "save_scenario", "bundled_scenario_path",
    "case_to_document", "build_analytical_example", "build_rts24_case",
    "emit_results", "save_bundle", "load_bundle",
]

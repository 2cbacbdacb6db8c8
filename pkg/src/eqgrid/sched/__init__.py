"""Day-ahead dispatch: LP assembly, solving, and household economics."""
from .economics import BaselineCosts, baseline_costs, nem_price, outside_option, outside_options, utility
from .io import read_schedule, schedule_summary, write_schedule_csv, write_schedule_summary
from .problem import RELAX_ORDER, SLACK_PENALTY, DispatchProblem, build_problem
from .residuals import renewable_access, renewable_access_all, residuals
from .solve import (
    INFEASIBLE,
    LADDER,
    OPTIMAL,
    RELAXED,
    HighsSolver,
    LinearSolver,
    Schedule,
    SolverError,
    solve,
    solve_scenario,
)

__all__ = [
    "BaselineCosts", "DispatchProblem", "HighsSolver", "INFEASIBLE", "LADDER", "LinearSolver", "OPTIMAL",
    "RELAXED", "RELAX_ORDER", "SLACK_PENALTY", "Schedule", "SolverError", "baseline_costs", "build_problem",
    "nem_price", "outside_option", "read_schedule", "schedule_summary", "write_schedule_csv",
    "write_schedule_summary", "outside_options", "renewable_access", "renewable_access_all", "residuals",
    "solve", "solve_scenario", "utility",
]

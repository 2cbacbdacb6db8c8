"""Solving the dispatch LP and the feasibility-recovery ladder."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from ..model import Scenario
from .economics import outside_options
from .problem import RELAX_ORDER, SLACK_PENALTY, DispatchProblem, build_problem

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
RELAXED = "RelaxedFeasible"

# constraint sets tried in order until one is feasible
LADDER = tuple(RELAX_ORDER[:k] for k in range(len(RELAX_ORDER) + 1))


class SolverError(RuntimeError):
    """The backend failed for numerical reasons (not infeasibility)."""


@dataclass
class SolveResult:
    feasible: bool
    x: np.ndarray | None
    fun: float
    message: str = ""


class LinearSolver(Protocol):
    def solve(self, problem: DispatchProblem) -> SolveResult: ...


class HighsSolver:
    """HiGHS through SciPy; dual simplex for LPs so solutions are vertices.

    When HiGHS ends without a verdict (status "unknown", iteration or time
    limits) the remaining ``fallbacks`` methods are tried in turn.
    """

    def __init__(self, method: str = "highs-ds", time_limit: float | None = None,
                 fallbacks: tuple[str, ...] = ("highs-ipm", "highs")):
        self.method = method
        self.time_limit = time_limit
        self.fallbacks = tuple(m for m in fallbacks if m != method)

    def solve(self, problem: DispatchProblem) -> SolveResult:
        if problem.integrality is not None and problem.integrality.any():
            return self._solve_mip(problem)
        options = {"presolve": True}
        if self.time_limit:
            options["time_limit"] = self.time_limit
        has_ub, has_eq = problem.A_ub.shape[0] > 0, problem.A_eq.shape[0] > 0
        failure = ""
        for method in (self.method,) + self.fallbacks:
            res = linprog(
                problem.c,
                A_ub=problem.A_ub if has_ub else None,
                b_ub=problem.b_ub if has_ub else None,
                A_eq=problem.A_eq if has_eq else None,
                b_eq=problem.b_eq if has_eq else None,
                bounds=np.column_stack([problem.lb, problem.ub]),
                method=method,
                options=options,
            )
            if res.status == 0:
                return SolveResult(True, np.asarray(res.x), float(res.fun), res.message)
            if res.status == 2:
                return SolveResult(False, None, math.nan, res.message)
            failure = f"status {res.status}: {res.message}"
            log.warning("%s failed (%s); trying the next method", method, failure)
        raise SolverError(f"LP backend gave no verdict, last {failure}")

    def _solve_mip(self, problem: DispatchProblem) -> SolveResult:
        cons = []
        if problem.A_ub.shape[0]:
            cons.append(LinearConstraint(problem.A_ub, -np.inf, problem.b_ub))
        if problem.A_eq.shape[0]:
            cons.append(LinearConstraint(problem.A_eq, problem.b_eq, problem.b_eq))
        options = {"time_limit": self.time_limit} if self.time_limit else {}
        res = milp(problem.c, constraints=cons, integrality=problem.integrality,
                   bounds=Bounds(problem.lb, problem.ub), options=options)
        if res.status == 0:
            return SolveResult(True, np.asarray(res.x), float(res.fun), res.message)
        if res.status == 2:
            return SolveResult(False, None, math.nan, res.message)
        raise SolverError(f"MILP backend status {res.status}: {res.message}")


def _clean(a: np.ndarray) -> np.ndarray:
    return np.where(np.abs(a) < 1e-10, 0.0, a)


@dataclass(frozen=True)
class Schedule:
    """Solved dispatch with per-household aggregates; per-unit tensors are derived."""

    status: str
    p_grid: np.ndarray  # N x T
    solar: np.ndarray  # N x T solar delivered
    charge: np.ndarray  # N x T sent into storage
    discharge: np.ndarray  # N x T drawn from storage
    bess_charge: np.ndarray  # B x T
    bess_discharge: np.ndarray  # B x T
    soc: np.ndarray  # B x T, end of each step
    p_peak: float
    e_pen: np.ndarray
    cost_energy: float
    cost_peak: float
    cost_equity: float
    objective: float
    weights: np.ndarray
    solar_available: np.ndarray  # T, pooled generation
    n_solar: int
    relaxed: tuple[str, ...] = ()
    slacks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, RELAXED)

    @property
    def supply(self) -> np.ndarray:
        return self.p_grid + self.solar + self.discharge - self.charge

    @property
    def alpha(self) -> np.ndarray:
        """S x N x T allocation fractions; every unit is split in the same proportions."""
        frac = np.divide(self.solar, self.solar_available[None, :],
                         out=np.zeros_like(self.solar), where=self.solar_available[None, :] > 0)
        return np.broadcast_to(frac, (self.n_solar,) + frac.shape).copy()

    def _split(self, per_house: np.ndarray, per_unit: np.ndarray) -> np.ndarray:
        tot = per_unit.sum(axis=0)
        share = np.divide(per_unit, tot[None, :], out=np.zeros_like(per_unit), where=tot[None, :] > 0)
        return share[:, None, :] * per_house[None, :, :]

    @property
    def p_charge(self) -> np.ndarray:
        """B x N x T."""
        return self._split(self.charge, self.bess_charge)

    @property
    def p_discharge(self) -> np.ndarray:
        """B x N x T."""
        return self._split(self.discharge, self.bess_discharge)

    @property
    def curtailed(self) -> np.ndarray:
        return np.maximum(self.solar_available - self.solar.sum(axis=0), 0.0)


def schedule_from_solution(problem: DispatchProblem, x: np.ndarray, fun: float, status: str) -> Schedule:
    sc = problem.scenario
    N, T, B = sc.N, sc.T, sc.B

    def get(name, shape):
        if problem.has(name):
            return x[problem.index(name)].reshape(shape)
        return np.zeros(shape)

    g = get("p_grid", (N, T))
    q = get("solar", (N, T))
    c = get("charge", (N, T))
    e = get("discharge", (N, T))
    cb = get("bess_charge", (B, T))
    db = get("bess_discharge", (B, T))
    soc = get("soc", (B, T))
    peak = float(x[problem.index("p_peak")][0])
    epen = get("e_pen", (N,))
    slacks = {name: float(x[problem.index(f"slack_{name}")].sum())
              for name in RELAX_ORDER if problem.has(f"slack_{name}")}

    lam = np.array([h.lam for h in sc.households])
    cost_energy = float(np.sum(problem.weights[:, None] * sc.prices[None, :] * g))
    cost_peak = float(sc.params.c_peak * peak)
    cost_equity = float(lam @ epen)
    objective = fun - SLACK_PENALTY * sum(slacks.values())
    return Schedule(
        status=status,
        p_grid=_clean(g),
        solar=_clean(q),
        charge=_clean(c),
        discharge=_clean(e),
        bess_charge=_clean(cb),
        bess_discharge=_clean(db),
        soc=soc,
        p_peak=peak,
        e_pen=_clean(epen),
        cost_energy=cost_energy,
        cost_peak=cost_peak,
        cost_equity=cost_equity,
        objective=float(objective),
        weights=problem.weights.copy(),
        solar_available=sc.solar_matrix().sum(axis=0) if sc.S else np.zeros(T),
        n_solar=sc.S,
        relaxed=problem.relaxed,
        slacks=slacks,
    )


def infeasible_schedule(scenario: Scenario, weights, relaxed=()) -> Schedule:
    N, T, B = scenario.N, scenario.T, scenario.B
    z = np.zeros
    return Schedule(INFEASIBLE, z((N, T)), z((N, T)), z((N, T)), z((N, T)), z((B, T)), z((B, T)), z((B, T)),
                    math.nan, z(N), math.nan, math.nan, math.nan, math.nan, np.asarray(weights, dtype=float),
                    z(T), scenario.S, tuple(relaxed), {})


def solve(problem: DispatchProblem, solver: LinearSolver | None = None) -> Schedule:
    """Solve one problem as built (no relaxation beyond what it already encodes)."""
    solver = solver or HighsSolver()
    res = solver.solve(problem)
    if not res.feasible:
        return infeasible_schedule(problem.scenario, problem.weights, problem.relaxed)
    status = RELAXED if problem.relaxed else OPTIMAL
    return schedule_from_solution(problem, res.x, res.fun, status)


def solve_scenario(
    scenario: Scenario,
    weights=None,
    *,
    solver: LinearSolver | None = None,
    start_level: int = 0,
    outside: np.ndarray | None = None,
    strict: bool = False,
    strict_updown: bool = False,
) -> tuple[Schedule, int]:
    """Solve with the recovery ladder; returns the schedule and the ladder level used.

    Feasibility never depends on the weights, so callers that re-solve the
    same scenario may pass the returned level back as ``start_level``.
    """
    solver = solver or HighsSolver()
    if outside is None and scenario.params.enforce_ir:
        outside = outside_options(scenario)
    previous = None
    for level in range(start_level, len(LADDER)):
        relax = LADDER[level]
        if not scenario.params.enforce_ir and relax == ("individual_rationality",):
            continue
        if not math.isfinite(scenario.params.omega) and relax and relax[-1] == "rawlsian_floor":
            continue
        problem = build_problem(scenario, weights, relax=relax, outside=outside,
                                strict=strict, strict_updown=strict_updown)
        schedule = solve(problem, solver)
        if schedule.ok:
            if level:
                log.info("%s: feasible after relaxing %s", scenario.label, ", ".join(relax))
            return schedule, level
        previous = schedule
    if previous is None:
        previous = infeasible_schedule(scenario, weights if weights is not None else scenario.weights(),
                                       LADDER[-1])
    return previous, len(LADDER) - 1

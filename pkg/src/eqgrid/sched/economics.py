"""Per-household economics: utility, NEM pricing, outside options, no-cooperation costs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import GlobalParams, Household, Scenario


def utility(household: Household, d, p_grid):
    """Linear utility ``beta * d - lambda * p_grid`` (scalars or arrays)."""
    return household.beta * d - household.lam * p_grid


def nem_price(z, params: GlobalParams | None = None):
    """Net-metering cost of net import ``z`` (negative ``z`` is an export credit)."""
    params = params or GlobalParams()
    z_arr = np.asarray(z, dtype=float)
    out = np.where(z_arr >= 0, params.pi_plus * z_arr, params.pi_minus * z_arr)
    return float(out) if out.ndim == 0 else out


def outside_option(household: Household, own_solar, prices, params: GlobalParams | None = None) -> float:
    """Best standalone surplus of one household under net metering.

    Maximises, step by step, ``U(d) - NEM(d - own_solar) - own_solar`` over
    ``d >= 0`` where grid import ``max(d - own_solar, 0)`` costs ``p_t`` each and
    must stay within the per-step budget.  The per-step objective is concave
    piecewise linear with a single kink at ``d = own_solar``, so the optimum sits
    at one of ``0``, ``own_solar`` or the budget cap.
    """
    params = params or GlobalParams()
    sol = np.asarray(own_solar, dtype=float)
    prices = np.asarray(prices, dtype=float)
    beta, lam = household.beta, household.lam

    with np.errstate(divide="ignore"):
        g_cap = np.where(prices > 0, household.xi / np.where(prices > 0, prices, 1.0), math.inf)
    slope_import = beta - lam - params.pi_plus

    def value(d):
        z = d - sol
        return beta * d - lam * np.maximum(z, 0.0) - nem_price(z, params) - sol

    best = np.maximum(value(np.zeros_like(sol)), value(sol))
    finite = np.isfinite(g_cap)
    at_cap = np.where(finite, value(sol + np.where(finite, g_cap, 0.0)), -math.inf)
    best = np.maximum(best, at_cap)
    if slope_import > 0 and np.any(~finite):
        return math.inf
    return float(best.sum())


def outside_options(scenario: Scenario) -> np.ndarray:
    return np.array([
        outside_option(h, scenario.own_solar(i), scenario.prices, scenario.params)
        for i, h in enumerate(scenario.households)
    ])


@dataclass(frozen=True)
class BaselineCosts:
    energy: np.ndarray  # per household, $
    peak: np.ndarray  # per household, $
    grid: np.ndarray  # N x T standalone imports, MW

    @property
    def per_household(self) -> np.ndarray:
        return self.energy + self.peak

    @property
    def total(self) -> float:
        return float(self.per_household.sum())

    @property
    def energy_total(self) -> float:
        return float(self.energy.sum())


def baseline_costs(scenario: Scenario) -> BaselineCosts:
    """Cost of every household serving itself from its own PV and the grid, no shared storage."""
    D = scenario.demand_matrix()
    own = np.vstack([scenario.own_solar(i) for i in range(scenario.N)]) if scenario.N else D
    grid = np.maximum(D - own, 0.0)
    energy = grid @ scenario.prices
    peak = scenario.params.c_peak * (grid.max(axis=1) if scenario.T else np.zeros(scenario.N))
    return BaselineCosts(energy=energy, peak=peak, grid=grid)

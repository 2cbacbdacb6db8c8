"""Constraint residuals of a solved schedule, and renewable access shares."""
from __future__ import annotations

import numpy as np

from ..model import Scenario
from .solve import Schedule


def renewable_access_all(schedule: Schedule, scenario: Scenario) -> np.ndarray:
    """Net solar-plus-storage energy over total demand, per household (0 when demand is 0)."""
    local = (schedule.solar + schedule.discharge - schedule.charge).sum(axis=1)
    total = scenario.demand_matrix().sum(axis=1)
    return np.divide(local, total, out=np.zeros_like(local), where=total > 0)


def renewable_access(schedule: Schedule, scenario: Scenario, i: int) -> float:
    return float(renewable_access_all(schedule, scenario)[i])


def residuals(schedule: Schedule, scenario: Scenario) -> dict[str, float]:
    """Worst violation (>= 0 means violated by that much) of each hard constraint family."""
    p = scenario.params
    D = scenario.demand_matrix()
    g = schedule.p_grid
    supply = schedule.supply
    out = {
        "balance": float(max(np.max(supply - D * (1 + p.epsilon), initial=0.0),
                             np.max(D * (1 - p.epsilon) - supply, initial=0.0))),
        "nonnegativity": float(max(-min(np.min(a, initial=0.0) for a in
                                        (g, schedule.solar, schedule.charge, schedule.discharge,
                                         schedule.bess_charge, schedule.bess_discharge)), 0.0)),
        "peak": float(np.max(g.sum(axis=0) - schedule.p_peak, initial=0.0)),
        "ramp": float(np.max(np.abs(np.diff(g, axis=1)) - p.r_max * D[:, 1:], initial=0.0)),
    }
    avail = schedule.solar_available
    out["solar_pool"] = float(np.max(schedule.solar.sum(axis=0) - avail, initial=0.0))
    budget = scenario.prices[None, :] * g + p.c_bess * (schedule.charge + schedule.discharge)
    xi = np.array([h.xi for h in scenario.households])[:, None]
    out["budget"] = float(np.max(budget - xi, initial=0.0))

    soc_rec = soc_lo = soc_hi = terminal = power = 0.0
    for b, unit in enumerate(scenario.bess):
        prev = np.concatenate([[unit.soc_initial], schedule.soc[b, :-1]])
        rec = schedule.soc[b] - prev - unit.eta_c * schedule.bess_charge[b] + schedule.bess_discharge[b] / unit.eta_d
        soc_rec = max(soc_rec, float(np.max(np.abs(rec))))
        soc_lo = max(soc_lo, float(np.max(unit.soc_min_frac * unit.capacity_E - schedule.soc[b])))
        soc_hi = max(soc_hi, float(np.max(schedule.soc[b] - unit.soc_max_frac * unit.capacity_E)))
        terminal = max(terminal, p.terminal_soc_frac * unit.capacity_E - float(schedule.soc[b, -1]))
        power = max(power, float(np.max(schedule.bess_charge[b] + schedule.bess_discharge[b] - unit.p_max)))
    if scenario.B:
        link = max(float(np.max(np.abs(schedule.charge.sum(axis=0) - schedule.bess_charge.sum(axis=0)))),
                   float(np.max(np.abs(schedule.discharge.sum(axis=0) - schedule.bess_discharge.sum(axis=0)))))
    else:
        link = 0.0
    out.update(soc_recursion=soc_rec, soc_bounds=max(soc_lo, soc_hi, 0.0), terminal_soc=max(terminal, 0.0),
               bess_power=max(power, 0.0), bess_link=link)
    return out

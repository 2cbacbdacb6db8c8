"""Fairness and technical performance metrics."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .alloc import cooperative_gain as _gain
from .model import Scenario
from .sched import BaselineCosts, Schedule, renewable_access_all


def _check(values) -> np.ndarray:
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one value")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("values must be finite and nonnegative")
    return x


def gini(values) -> float:
    """Mean-absolute-difference Gini; 0 for an all-zero vector."""
    x = _check(values)
    total = x.sum()
    if total == 0:
        return 0.0
    n = x.size
    # sum_ij |x_i - x_j| via the sorted form, O(n log n)
    xs = np.sort(x)
    ranks = np.arange(1, n + 1)
    mad_sum = 2.0 * np.sum((2 * ranks - n - 1) * xs)
    return float(mad_sum / (2.0 * n * n * (total / n)))


def lorenz(values) -> np.ndarray:
    """(n+1) x 2 array of (population share, cumulative value share), ascending."""
    x = np.sort(_check(values))
    n = x.size
    total = x.sum()
    cum = np.cumsum(x) / total if total > 0 else np.linspace(1.0 / n, 1.0, n)
    pop = np.arange(n + 1) / n
    return np.column_stack([pop, np.concatenate([[0.0], cum])])


def access_for_equity(access) -> np.ndarray:
    """Renewable access clipped at zero: a household that net-charges storage has no access."""
    return np.maximum(np.asarray(access, dtype=float), 0.0)


def seii(incomes, final_weights) -> float:
    """(1 - Pearson correlation of income and weight) / 2."""
    x = np.asarray(incomes, dtype=float)
    y = np.asarray(final_weights, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length vectors with at least two entries")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation undefined: incomes or weights are constant")
    rho = float(np.corrcoef(x, y)[0, 1])
    return float(np.clip((1.0 - rho) / 2.0, 0.0, 1.0))


@dataclass(frozen=True)
class MetricsReport:
    gini: float
    lorenz: list
    seii: float | None
    peak_original: float
    peak_optimized: float
    peak_reduction_pct: float
    solar_utilization_pct: float | None  # None when no solar was available
    avg_bess_cycles: float | None
    cooperative_gain: float
    cooperative_cost: float
    no_coop_cost: float
    energy_cost: float
    baseline_energy_cost: float
    peak_charge: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lorenz"] = [[float(a), float(b)] for a, b in self.lorenz]
        return d


def technical_metrics(schedule: Schedule, scenario: Scenario) -> dict:
    D = scenario.demand_matrix()
    peak_original = float(D.sum(axis=0).max()) if D.size else 0.0
    peak_opt = float(schedule.p_peak)
    reduction = (peak_original - peak_opt) / peak_original * 100.0 if peak_original > 0 else 0.0
    available = float(schedule.solar_available.sum())
    util = float(schedule.solar.sum()) / available * 100.0 if available > 0 else None
    if scenario.B:
        caps = np.array([u.capacity_E for u in scenario.bess])
        cycles = float(np.mean(schedule.bess_discharge.sum(axis=1) / caps))
    else:
        cycles = None
    return {
        "peak_original": peak_original,
        "peak_optimized": peak_opt,
        "peak_reduction_pct": float(reduction),
        "solar_utilization_pct": util,
        "avg_bess_cycles": cycles,
    }


def cooperative_cost(schedule: Schedule, scenario: Scenario) -> tuple[float, float]:
    """(unweighted energy cost, total cooperative cost = energy + community peak charge)."""
    energy = float(np.sum(scenario.prices[None, :] * schedule.p_grid))
    return energy, energy + scenario.params.c_peak * float(schedule.p_peak)


def compute_metrics(schedule: Schedule, scenario: Scenario, baseline: BaselineCosts,
                    final_weights=None) -> MetricsReport:
    access = access_for_equity(renewable_access_all(schedule, scenario))
    incomes = [h.income for h in scenario.households]
    s = None
    if final_weights is not None:
        try:
            s = seii(incomes, final_weights)
        except ValueError:
            s = None
    energy, coop = cooperative_cost(schedule, scenario)
    tech = technical_metrics(schedule, scenario)
    return MetricsReport(
        gini=gini(access),
        lorenz=lorenz(access).tolist(),
        seii=s,
        cooperative_gain=_gain(baseline.total, coop),
        cooperative_cost=coop,
        no_coop_cost=baseline.total,
        energy_cost=energy,
        baseline_energy_cost=baseline.energy_total,
        peak_charge=scenario.params.c_peak * float(schedule.p_peak),
        **tech,
    )


def write_lorenz_csv(points, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["population_share", "access_share"])
        for a, b in points:
            w.writerow([f"{a:.6f}", f"{b:.6f}"])


def read_lorenz_csv(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(a), float(b)] for a, b in rows])


def metrics_from_dict(d: dict) -> MetricsReport:
    return MetricsReport(**d)

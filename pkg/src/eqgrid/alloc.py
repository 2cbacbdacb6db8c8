"""Component-wise split of the cooperative surplus: solar benefit, storage cost, peak savings, grid cost.

Each raw component is a proportional claim in dollars; only the normalised
shares are meaningful across components.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Scenario, dumps_json
from .sched import Schedule

COMPONENTS = ("solar", "bess", "peak", "grid")


def _weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise ValueError(f"need {n} positive weights")
    return w


def solar_component(schedule: Schedule, scenario: Scenario, weights) -> np.ndarray:
    w = _weights(weights, scenario.N)
    p_avg = float(np.mean(scenario.prices))
    return schedule.solar.sum(axis=1) * p_avg * w


def bess_component(schedule: Schedule, weights, c_bess: float) -> np.ndarray:
    w = _weights(weights, schedule.p_grid.shape[0])
    return (schedule.charge + schedule.discharge).sum(axis=1) * c_bess / w


def peak_component(schedule: Schedule, weights, c_peak: float) -> np.ndarray:
    w = _weights(weights, schedule.p_grid.shape[0])
    own_max = schedule.p_grid.max(axis=1) if schedule.p_grid.shape[1] else np.zeros(len(w))
    return np.maximum(schedule.p_peak - own_max, 0.0) * c_peak * w


def grid_component(schedule: Schedule, weights, c_grid: float) -> np.ndarray:
    w = _weights(weights, schedule.p_grid.shape[0])
    usage = schedule.p_grid.sum(axis=1)
    weighted = float(usage @ w)
    if weighted <= 0:
        return np.zeros_like(usage)
    return usage * c_grid / weighted


def normalize(raw) -> np.ndarray:
    x = np.asarray(raw, dtype=float)
    if np.any(x < 0):
        raise ValueError("raw allocation components must be nonnegative")
    total = x.sum()
    return x / total if total > 0 else np.zeros_like(x)


def net_shares(raw: dict) -> tuple[dict, np.ndarray]:
    """Normalise every component independently; net = solar + peak - bess - grid."""
    lengths = {len(np.asarray(raw[c])) for c in COMPONENTS}
    if len(lengths) != 1:
        raise ValueError("component vectors must have equal length")
    hat = {c: normalize(raw[c]) for c in COMPONENTS}
    return hat, hat["solar"] + hat["peak"] - hat["bess"] - hat["grid"]


def cooperative_gain(no_coop_total: float, coop_total: float) -> float:
    if not (np.isfinite(no_coop_total) and np.isfinite(coop_total)):
        raise ValueError("costs must be finite")
    return no_coop_total - coop_total


@dataclass(frozen=True)
class AllocationReport:
    ids: list
    raw: dict  # component -> per-household $ claims
    hat: dict  # component -> normalised shares
    net_share: np.ndarray
    cooperative_cost: float
    no_coop_cost: float
    cooperative_gain: float

    def to_dict(self) -> dict:
        order = np.argsort(self.ids, kind="stable")
        households = []
        for k in order:
            rec = {"id": int(self.ids[k])}
            for c in COMPONENTS:
                rec[f"phi_{c}"] = float(self.raw[c][k])
            for c in COMPONENTS:
                rec[f"hat_phi_{c}"] = float(self.hat[c][k])
            rec["net_share"] = float(self.net_share[k])
            households.append(rec)
        return {
            "households": households,
            "cooperative_cost": self.cooperative_cost,
            "no_coop_cost": self.no_coop_cost,
            "cooperative_gain": self.cooperative_gain,
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationReport":
        hs = d["households"]
        raw = {c: np.array([h[f"phi_{c}"] for h in hs]) for c in COMPONENTS}
        hat = {c: np.array([h[f"hat_phi_{c}"] for h in hs]) for c in COMPONENTS}
        return cls([h["id"] for h in hs], raw, hat, np.array([h["net_share"] for h in hs]),
                   d["cooperative_cost"], d["no_coop_cost"], d["cooperative_gain"])


def allocate(schedule: Schedule, scenario: Scenario, no_coop_cost: float, coop_cost: float,
             weights=None) -> AllocationReport:
    """Allocation of a final schedule; weights default to the ones it was solved with."""
    w = schedule.weights if weights is None else weights
    p_avg = float(np.mean(scenario.prices))
    raw = {
        "solar": solar_component(schedule, scenario, w),
        "bess": bess_component(schedule, w, scenario.params.c_bess),
        "peak": peak_component(schedule, w, scenario.params.c_peak),
        "grid": grid_component(schedule, w, p_avg),
    }
    hat, net = net_shares(raw)
    return AllocationReport(
        ids=[h.id for h in scenario.households],
        raw=raw,
        hat=hat,
        net_share=net,
        cooperative_cost=coop_cost,
        no_coop_cost=no_coop_cost,
        cooperative_gain=cooperative_gain(no_coop_cost, coop_cost),
    )

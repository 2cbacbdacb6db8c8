"""Schedule CSV and summary JSON, written with fixed precision so digests are stable."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..model import Scenario, dumps_json
from .solve import OPTIMAL, Schedule

CSV_COLUMNS = ("kind", "id", "t", "p_grid", "solar", "charge", "discharge", "soc")


def _f(x: float) -> str:
    return f"{x:.6f}"


def write_schedule_csv(schedule: Schedule, scenario: Scenario, path: str | Path) -> None:
    """Household rows carry grid/solar/charge/discharge; battery rows carry charge/discharge/soc."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, h in enumerate(scenario.households):
            for t in range(scenario.T):
                w.writerow(["household", h.id, t, _f(schedule.p_grid[i, t]), _f(schedule.solar[i, t]),
                            _f(schedule.charge[i, t]), _f(schedule.discharge[i, t]), ""])
        for b, unit in enumerate(scenario.bess):
            for t in range(scenario.T):
                w.writerow(["bess", unit.id, t, "", "", _f(schedule.bess_charge[b, t]),
                            _f(schedule.bess_discharge[b, t]), _f(schedule.soc[b, t])])


def _num(x: float):
    return None if x is None or not math.isfinite(x) else float(x)


def schedule_summary(schedule: Schedule) -> dict:
    return {
        "status": schedule.status,
        "relaxed": list(schedule.relaxed),
        "slacks": {k: float(v) for k, v in sorted(schedule.slacks.items())},
        "p_peak": _num(schedule.p_peak),
        "objective": _num(schedule.objective),
        "cost_energy": _num(schedule.cost_energy),
        "cost_peak": _num(schedule.cost_peak),
        "cost_equity": _num(schedule.cost_equity),
        "e_pen": [float(v) for v in schedule.e_pen],
        "weights": [float(v) for v in schedule.weights],
        "solar_available": [float(v) for v in schedule.solar_available],
        "n_solar": schedule.n_solar,
    }


def write_schedule_summary(schedule: Schedule, path: str | Path) -> None:
    Path(path).write_text(dumps_json(schedule_summary(schedule)))


def read_schedule(csv_path: str | Path, scenario: Scenario, summary: dict | str | Path | None = None) -> Schedule:
    """Rebuild a Schedule from its CSV; scalar fields come from the summary when given.

    Without a summary the peak is the largest pooled grid draw, the weights
    are the scenario's, and the costs are recomputed from the flows.
    """
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise FileNotFoundError(f"schedule CSV not found: {csv_path}")
    if summary is not None and not isinstance(summary, dict):
        summary = json.loads(Path(summary).read_text())
    N, T, B = scenario.N, scenario.T, scenario.B
    hidx = {h.id: i for i, h in enumerate(scenario.households)}
    bidx = {u.id: b for b, u in enumerate(scenario.bess)}
    g, q, c, e = (np.zeros((N, T)) for _ in range(4))
    cb, db, soc = (np.zeros((B, T)) for _ in range(3))
    seen = 0
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{csv_path}: expected columns {CSV_COLUMNS}")
        for row in reader:
            t = int(row["t"])
            if row["kind"] == "household":
                i = hidx[int(row["id"])]
                g[i, t], q[i, t] = float(row["p_grid"]), float(row["solar"])
                c[i, t], e[i, t] = float(row["charge"]), float(row["discharge"])
            elif row["kind"] == "bess":
                b = bidx[int(row["id"])]
                cb[b, t], db[b, t], soc[b, t] = float(row["charge"]), float(row["discharge"]), float(row["soc"])
            else:
                raise ValueError(f"{csv_path}: unknown row kind {row['kind']!r}")
            seen += 1
    if seen != (N + B) * T:
        raise ValueError(f"{csv_path}: {seen} rows, expected {(N + B) * T} for this scenario")

    p = scenario.params
    lam = np.array([h.lam for h in scenario.households])
    if summary:
        w = np.array(summary["weights"], dtype=float)
        peak = summary["p_peak"]
        epen = np.array(summary["e_pen"], dtype=float)
        status, relaxed, slacks = summary["status"], tuple(summary["relaxed"]), dict(summary["slacks"])
    else:
        w = scenario.weights()
        peak = float(g.sum(axis=0).max()) if T else 0.0
        total = scenario.demand_matrix().sum(axis=1)
        share = np.divide((q + e - c).sum(axis=1), total, out=np.zeros(N), where=total > 0)
        epen = np.abs(share - np.where(total > 0, p.theta, 0.0))
        status, relaxed, slacks = OPTIMAL, (), {}
    cost_energy = float(np.sum(w[:, None] * scenario.prices[None, :] * g))
    cost_peak = p.c_peak * peak
    cost_equity = float(lam @ epen)
    return Schedule(
        status=status, p_grid=g, solar=q, charge=c, discharge=e, bess_charge=cb, bess_discharge=db,
        soc=soc, p_peak=peak, e_pen=epen, cost_energy=cost_energy, cost_peak=cost_peak,
        cost_equity=cost_equity, objective=cost_energy + cost_peak + cost_equity, weights=w,
        solar_available=scenario.solar_matrix().sum(axis=0) if scenario.S else np.zeros(T),
        n_solar=scenario.S, relaxed=relaxed, slacks=slacks,
    )

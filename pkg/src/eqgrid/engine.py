"""End-to-end runs: scenario, equity loop, allocation, metrics, and the report directory."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .alloc import AllocationReport, allocate
from .metrics import MetricsReport, compute_metrics, cooperative_cost, write_lorenz_csv
from .model import Scenario, dumps_json, read_scenario, validate, write_scenario
from .rl import LoopAborted, PpoConfig, run_equity_loop
from .sched import (
    Schedule,
    SolverError,
    baseline_costs,
    write_schedule_csv,
    write_schedule_summary,
)
from .synth import SCENARIO_KINDS, SynthConfig, build_scenario

log = logging.getLogger(__name__)

FORMATS = frozenset({"json", "csv", "jsonl"})
ABORTED = "Aborted"


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    overrides: dict = field(default_factory=dict)  # GlobalParams fields
    out_dir: str = "run"
    formats: tuple = ("json", "csv", "jsonl")
    scenario_file: str | None = None  # when set, replaces the synthetic scenario
    loop_seed: int | None = None  # defaults to the synth seed

    def __post_init__(self):
        unknown = set(self.formats) - FORMATS
        if unknown:
            raise ValueError(f"unknown report formats {sorted(unknown)}; allowed {sorted(FORMATS)}")
        if "json" not in self.formats:
            raise ValueError("json reports are required (scenario, metrics, manifest)")


@dataclass
class RunArtifacts:
    scenario: Scenario
    history: list
    schedule: Schedule | None
    allocation: AllocationReport | None
    metrics: MetricsReport | None
    weights: np.ndarray | None
    status: str
    out_dir: Path
    manifest: dict


def load_scenario(config: RunConfig) -> Scenario:
    if config.scenario_file:
        scenario = read_scenario(config.scenario_file)
    else:
        scenario = build_scenario(config.synth)
    if config.overrides:
        scenario = scenario.with_params(**config.overrides)
    problems = validate(scenario)
    if problems:
        raise ValueError("invalid scenario: " + "; ".join(map(str, problems)))
    return scenario


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, files: list[str], **info) -> dict:
    manifest = {"files": {name: _digest(out / name) for name in sorted(files)}, **info}
    (out / "manifest.json").write_text(dumps_json(manifest))
    return manifest


def run(config: RunConfig) -> RunArtifacts:
    """Run the phases in order and write ``<out_dir>/<label>/``.

    If the loop aborts, the files written so far are listed in a manifest with
    ``complete: false`` and the error is re-raised.
    """
    scenario = load_scenario(config)
    out = Path(config.out_dir) / scenario.label
    out.mkdir(parents=True, exist_ok=True)
    files = ["scenario.json"]
    write_scenario(scenario, out / "scenario.json")

    seed = config.synth.seed if config.loop_seed is None else config.loop_seed
    history_path = out / "history.jsonl"
    fh = history_path.open("w") if "jsonl" in config.formats else None
    if fh:
        files.append("history.jsonl")

    def record(rec):
        if fh:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")
            fh.flush()

    try:
        result = run_equity_loop(scenario, config.ppo, seed, on_iteration=record)
    except (LoopAborted, SolverError) as exc:
        if fh:
            fh.close()
        _write_manifest(out, files, complete=False, status=ABORTED, error=str(exc), label=scenario.label)
        raise
    if fh:
        fh.close()

    schedule = result.schedule
    baseline = baseline_costs(scenario)
    _, coop = cooperative_cost(schedule, scenario)
    allocation = allocate(schedule, scenario, baseline.total, coop)
    metrics = compute_metrics(schedule, scenario, baseline, final_weights=result.weights)

    write_schedule_summary(schedule, out / "schedule_summary.json")
    (out / "allocation.json").write_text(allocation.to_json())
    (out / "metrics.json").write_text(dumps_json(metrics.to_dict()))
    files += ["schedule_summary.json", "allocation.json", "metrics.json"]
    if "csv" in config.formats:
        write_schedule_csv(schedule, scenario, out / "schedule.csv")
        write_lorenz_csv(metrics.lorenz, out / "lorenz.csv")
        files += ["schedule.csv", "lorenz.csv"]

    manifest = _write_manifest(
        out, files,
        complete=True,
        status=schedule.status,
        relaxed=list(schedule.relaxed),
        label=scenario.label,
        iterations=result.iterations,
        converged=result.converged,
        final_weights=[float(w) for w in result.weights],
    )
    return RunArtifacts(scenario, result.history, schedule, allocation, metrics, result.weights,
                        schedule.status, out, manifest)


# ------------------------------------------------------------------ matrix

SUMMARY_COLUMNS = (
    "scenario", "status", "relaxed", "iterations",
    "no_coop_cost", "cooperative_cost", "cooperative_gain", "energy_cost", "peak_charge",
    "peak_original", "peak_optimized", "peak_reduction_pct", "solar_utilization_pct", "avg_bess_cycles",
    "initial_gini", "gini", "seii", "error",
)


def _summary_row(kind: str, config: RunConfig) -> dict:
    row = dict.fromkeys(SUMMARY_COLUMNS)
    row["scenario"] = kind
    try:
        art = run(config)
    except (LoopAborted, SolverError, ValueError) as exc:
        row.update(status=ABORTED, error=str(exc))
        return row
    m = art.metrics
    row.update(
        status=art.status,
        relaxed="+".join(art.schedule.relaxed),
        iterations=len(art.history),
        initial_gini=art.history[0]["gini"],
        error="",
        **{k: getattr(m, k) for k in SUMMARY_COLUMNS if hasattr(m, k)},
    )
    return row


def threads_from_env(default: int | None = None) -> int:
    raw = os.environ.get("EQGRID_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"EQGRID_THREADS must be an integer, got {raw!r}") from None
        return max(n, 1)
    return default or os.cpu_count() or 1


def run_matrix(seed: int, out_dir: str | Path, *, ppo: PpoConfig | None = None, overrides: dict | None = None,
               base: SynthConfig | None = None, threads: int | None = None, kinds=SCENARIO_KINDS) -> list[dict]:
    """One run per preset, then ``summary.csv`` and ``summary.json`` in ``out_dir``.

    Runs are independent and seeded, so the worker count never changes the output.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = base or SynthConfig()
    configs = [
        RunConfig(synth=replace(base, seed=seed, scenario_kind=kind), ppo=ppo or PpoConfig(),
                  overrides=dict(overrides or {}), out_dir=str(out))
        for kind in kinds
    ]
    workers = min(threads or threads_from_env(), len(configs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_summary_row, kinds, configs))
    else:
        rows = [_summary_row(k, c) for k, c in zip(kinds, configs)]
    write_summary(rows, out)
    return rows


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_summary(rows: list[dict], out: Path) -> None:
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_cell(row[c]) for c in SUMMARY_COLUMNS])
    (out / "summary.json").write_text(dumps_json({"rows": rows}))


def read_summary_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))

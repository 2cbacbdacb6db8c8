"""Command line: eqgrid {synth,run,matrix,metrics}.

Exit codes: 0 success, 1 infeasible even after relaxation, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .engine import RunConfig, run, run_matrix
from .metrics import compute_metrics
from .model import GlobalParams, dumps_json, read_scenario, scenario_to_dict, write_scenario
from .rl import LoopAborted, PpoConfig
from .sched import SolverError, baseline_costs, read_schedule
from .synth import SCENARIO_KINDS, SynthConfig, build_scenario

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    """Optional JSON file with "synth", "ppo" and "params" sections."""
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: not valid JSON ({exc})") from None
    unknown = set(data) - {"synth", "ppo", "params"}
    if unknown:
        raise UsageError(f"{p}: unknown sections {sorted(unknown)}")
    return data


def _checked(cls, values: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(f"{where}: unknown keys {sorted(unknown)}")
    return values


def _ppo(cfg: dict, args) -> PpoConfig:
    values = dict(_checked(PpoConfig, cfg.get("ppo", {}), "ppo"))
    if "hidden" in values:
        values["hidden"] = tuple(values["hidden"])
    if getattr(args, "iterations", None) is not None:
        values["max_iterations"] = args.iterations
    return PpoConfig(**values)


def _synth(cfg: dict, args, kind=None) -> SynthConfig:
    values = dict(_checked(SynthConfig, cfg.get("synth", {}), "synth"))
    values.pop("params", None)
    if kind:
        values["scenario_kind"] = kind
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    if getattr(args, "base_csv", None):
        values["base_csv"] = args.base_csv
    return SynthConfig(**values)


def _params(cfg: dict) -> dict:
    return dict(_checked(GlobalParams, cfg.get("params", {}), "params"))


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    synth = _synth(cfg, args, args.scenario)
    params = _params(cfg)
    if params:
        synth = replace(synth, params=GlobalParams(**params))
    scenario = build_scenario(synth)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_scenario(scenario, args.out)
        print(f"wrote {args.out} ({scenario.label}, {scenario.N} households)")
    else:
        sys.stdout.write(dumps_json(scenario_to_dict(scenario)))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.scenario_file and not Path(args.scenario_file).is_file():
        raise UsageError(f"scenario file not found: {args.scenario_file}")
    if not args.scenario_file and not args.scenario:
        raise UsageError("give --scenario-file or --scenario")
    formats = tuple(args.formats.split(",")) if args.formats else ("json", "csv", "jsonl")
    config = RunConfig(
        synth=_synth(cfg, args, args.scenario),
        ppo=_ppo(cfg, args),
        overrides=_params(cfg),
        out_dir=args.out,
        formats=formats,
        scenario_file=args.scenario_file,
        loop_seed=args.seed,
    )
    try:
        art = run(config)
    except (LoopAborted, SolverError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    relaxed = f" (relaxed: {', '.join(art.schedule.relaxed)})" if art.schedule.relaxed else ""
    print(f"{art.scenario.label}: {art.status}{relaxed}; {len(art.history)} iterations; "
          f"gini {art.metrics.gini:.4f}; reports in {art.out_dir}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg = _load_config(args.config)
    rows = run_matrix(args.seed, args.out, ppo=_ppo(cfg, args), overrides=_params(cfg),
                      base=_synth(cfg, args), threads=args.threads)
    for row in rows:
        gini = "NA" if row["gini"] is None else f"{row['gini']:.4f}"
        print(f"{row['scenario']:<11} {row['status']:<16} gini {gini}")
    print(f"summary in {Path(args.out) / 'summary.csv'}")
    return EXIT_INFEASIBLE if any(r["status"] == "Aborted" for r in rows) else EXIT_OK


def cmd_metrics(args) -> int:
    for path in (args.schedule, args.scenario):
        if not Path(path).is_file():
            raise UsageError(f"file not found: {path}")
    scenario = read_scenario(args.scenario)
    summary = args.summary
    if summary is None:
        sibling = Path(args.schedule).with_name("schedule_summary.json")
        summary = sibling if sibling.is_file() else None
    elif not Path(summary).is_file():
        raise UsageError(f"file not found: {summary}")
    schedule = read_schedule(args.schedule, scenario, summary)
    weights = None
    if args.weights:
        if not Path(args.weights).is_file():
            raise UsageError(f"file not found: {args.weights}")
        data = json.loads(Path(args.weights).read_text())
        weights = np.asarray(data["final_weights"] if isinstance(data, dict) else data, dtype=float)
    report = compute_metrics(schedule, scenario, baseline_costs(scenario), final_weights=weights)
    text = dumps_json(report.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eqgrid", description="Equity-weighted community microgrid scheduling.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a scenario JSON")
    p.add_argument("--scenario", choices=SCENARIO_KINDS, default="Weekday", help="preset kind")
    p.add_argument("--seed", type=int, default=None, help="generation seed (default 1)")
    p.add_argument("--out", default=None, help="output path; stdout when omitted")
    p.add_argument("--base-csv", default=None, help="base load/PV profiles CSV instead of the embedded ones")
    p.add_argument("--config", default=None, help="JSON config with synth/params sections")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run the equity loop and write all reports")
    p.add_argument("--scenario-file", default=None, help="scenario JSON (from synth)")
    p.add_argument("--scenario", choices=SCENARIO_KINDS, default=None,
                   help="generate this preset instead of reading a file")
    p.add_argument("--iterations", type=int, default=None, help="maximum loop iterations K (default 30)")
    p.add_argument("--seed", type=int, default=None, help="agent seed (default: the generation seed)")
    p.add_argument("--out", default="run", help="output directory (default: run)")
    p.add_argument("--formats", default=None, help="comma list from json,csv,jsonl (default: all)")
    p.add_argument("--config", default=None, help="JSON config with synth/ppo/params sections")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("matrix", help="run all six presets and write a summary table")
    p.add_argument("--seed", type=int, default=1, help="seed shared by all presets (default 1)")
    p.add_argument("--out", default="run", help="output directory (default: run)")
    p.add_argument("--iterations", type=int, default=None, help="maximum loop iterations K (default 30)")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: EQGRID_THREADS or CPU count)")
    p.add_argument("--config", default=None, help="JSON config with synth/ppo/params sections")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("metrics", help="recompute metrics from a schedule CSV")
    p.add_argument("--schedule", required=True, help="schedule CSV written by run")
    p.add_argument("--scenario", required=True, help="scenario JSON the schedule was solved for")
    p.add_argument("--summary", default=None, help="schedule summary JSON (default: next to the CSV)")
    p.add_argument("--weights", default=None, help="final weights (JSON list or a manifest) for SEII")
    p.add_argument("--out", default=None, help="output path; stdout when omitted")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError) as exc:
        print(f"eqgrid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"eqgrid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

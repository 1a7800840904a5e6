"""Command-line entry point: ``generate`` a scenario suite, ``run`` the
benchmark over it, ``report`` aggregate files from saved episode logs.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments or config.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import yaml

from .domain import RewardWeights
from .harness import (
    EpisodeLog,
    RunParams,
    StepRecord,
    export_reports,
    run_suite,
)
from .planners import PLANNER_NAMES
from .scenario import ScenarioConfig, generate_suite, suite_from_json, suite_to_json
from .sim import SimConfig

DEFAULT_SEED = 20240
DEFAULT_SCENARIOS = 60


class CliError(Exception):
    """Bad arguments or config; maps to exit code 2."""


def _dataclass_from_config(cls, section: dict, label: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise CliError(f"unknown {label} config keys: {sorted(unknown)}")
    kwargs = {
        k: tuple(v) if isinstance(v, list) else v for k, v in section.items()
    }
    return cls(**kwargs)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise CliError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(f"config root must be a mapping: {path}")
    unknown = set(doc) - {"scenario", "sim", "reward", "run", "planners"}
    if unknown:
        raise CliError(f"unknown config sections: {sorted(unknown)}")
    return doc


def _build_configs(args, doc: dict):
    scn_cfg = _dataclass_from_config(ScenarioConfig, doc.get("scenario", {}), "scenario")
    sim_kwargs = dict(doc.get("sim", {}))
    if "reward" in doc:
        sim_kwargs["reward"] = _dataclass_from_config(
            RewardWeights, doc["reward"], "reward"
        )
    if getattr(args, "horizon", None) is not None:
        sim_kwargs["horizon"] = args.horizon
    sim_cfg = _dataclass_from_config(SimConfig, sim_kwargs, "sim")
    try:
        scn_cfg.validate()
        sim_cfg.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return scn_cfg, sim_cfg


def _parse_planners(spec: str):
    names = [p.strip() for p in spec.split(",") if p.strip()]
    bad = [p for p in names if p not in PLANNER_NAMES]
    if bad:
        raise CliError(f"unknown planners {bad}; choose from {list(PLANNER_NAMES)}")
    if not names:
        raise CliError("no planners selected")
    return names


def cmd_generate(args) -> int:
    doc = _load_config(args.config)
    scn_cfg, _ = _build_configs(args, doc)
    suite = generate_suite(args.seed, args.scenarios, scn_cfg)
    text = suite_to_json(args.seed, scn_cfg, suite)
    if args.out == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {len(suite)} scenarios to {args.out}")
    return 0


def cmd_run(args) -> int:
    doc = _load_config(args.config)
    scn_cfg, sim_cfg = _build_configs(args, doc)
    if args.suite:
        p = Path(args.suite)
        if not p.is_file():
            raise CliError(f"suite file not found: {args.suite}")
        _, scn_cfg, suite = suite_from_json(p.read_text())
    else:
        suite = generate_suite(args.seed, args.scenarios, scn_cfg)
    planners = _parse_planners(args.planners)
    run_doc = doc.get("run", {})
    params = RunParams(
        deadline=args.deadline if args.deadline is not None else run_doc.get("deadline", 0.05),
        n_particles=args.particles if args.particles is not None else run_doc.get("n_particles", 500),
        workers=args.workers,
        planner_options=doc.get("planners", {}),
    )
    results = run_suite(
        suite, planners, scn_cfg, sim_cfg, params, log_belief=args.log_belief
    )
    metrics = export_reports(
        results,
        args.out,
        horizon=sim_cfg.horizon,
        deadline=params.deadline,
        redact_timing=args.redact_timing,
    )
    errors = sum(lg.error is not None for logs in results.values() for lg in logs)
    width = max(len(p) for p in planners)
    for p in planners:
        m = metrics[p]
        print(
            f"{p:<{width}}  action_acc={m.action_accuracy:5.1f}%  "
            f"collision_free={m.collision_free_rate:5.1f}%  "
            f"intent_acc={m.intent_accuracy:5.1f}%  "
            f"proc={1e3 * m.avg_processing_time:.2f}ms"
        )
    print(f"reports written to {args.out}")
    if errors:
        print(f"warning: {errors} episode(s) ended in planner errors", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    src = Path(args.results)
    files = sorted(src.glob("episodes_*.jsonl"))
    if not files:
        raise CliError(f"no episodes_*.jsonl files under {args.results}")
    results = {}
    for f in files:
        name = f.stem[len("episodes_"):]
        logs = []
        for line in f.read_text().splitlines():
            d = json.loads(line)
            d.pop("schema", None)
            d["records"] = [StepRecord(**r) for r in d["records"]]
            d["steps_to_clear"] = {int(k): v for k, v in d["steps_to_clear"].items()}
            d["oracle_clear_steps"] = {
                int(k): v for k, v in d["oracle_clear_steps"].items()
            }
            d["true_intents"] = {int(k): v for k, v in d["true_intents"].items()}
            logs.append(EpisodeLog(**d))
        results[name] = logs
    export_reports(
        results,
        args.out,
        horizon=args.horizon if args.horizon is not None else 12,
        deadline=args.deadline if args.deadline is not None else 0.05,
        redact_timing=args.redact_timing,
    )
    print(f"reports written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rowbench",
        description="Right-of-way intersection benchmark: rule-based FSM vs "
        "QMDP, POMCP and DESPOT planners.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a scenario suite JSON file")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("--scenarios", type=int, default=DEFAULT_SCENARIOS)
    g.add_argument("--config", default=None, help="YAML config file")
    g.add_argument("--out", default="suite.json", help="output path, '-' for stdout")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run the benchmark and write reports")
    r.add_argument("--suite", default=None, help="suite JSON from 'generate'")
    r.add_argument("--seed", type=int, default=DEFAULT_SEED)
    r.add_argument("--scenarios", type=int, default=DEFAULT_SCENARIOS)
    r.add_argument("--horizon", type=int, default=None)
    r.add_argument("--deadline", type=float, default=None, help="seconds per decision")
    r.add_argument("--planners", default=",".join(PLANNER_NAMES))
    r.add_argument("--particles", type=int, default=None)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--config", default=None, help="YAML config file")
    r.add_argument("--out", default="results", help="report directory")
    r.add_argument("--log-belief", action="store_true")
    r.add_argument(
        "--redact-timing",
        action="store_true",
        help="zero wall-clock fields so reruns are byte-identical",
    )
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="rebuild reports from saved episode logs")
    p.add_argument("--results", required=True, help="directory with episodes_*.jsonl")
    p.add_argument("--out", default="report")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--deadline", type=float, default=None)
    p.add_argument("--redact-timing", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Common benchmark wrapper: runs every planner over identical scenarios
with uniform logging, perception latency and deadline accounting, then
computes the aggregate metrics and the figure-data exports.

Environment randomness is keyed by (scenario seed, timestep) only, so the
draw sequence is identical across planners; the per-episode draw counter is
logged to make that auditable.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _kernels as K
from . import _layout as L
from .belief import BeliefFilter, intent_marginal, pedestrian_posterior
from .domain import Action, Intent, Phase
from .planners import PLANNER_NAMES, make_planner
from .scenario import Scenario, ScenarioConfig
from .sim import SimConfig, Simulator

EPISODE_SCHEMA = "rowbench.episode/1"

_ORACLE_SEED_KEY = 1000
_PLANNER_SEED_KEYS = {name: i for i, name in enumerate(PLANNER_NAMES)}


@dataclass
class RunParams:
    deadline: float = 0.05
    n_particles: int = 500
    workers: int = 1
    planner_options: Dict[str, dict] = field(default_factory=dict)


@dataclass
class StepRecord:
    timestep: int
    action: int
    oracle_action: int
    intent_predictions: Dict[int, int]
    reward: float
    compute_time: float
    deadline_met: bool
    near_miss: bool
    active_vehicles: List[int] = field(default_factory=list)
    belief_summary: Optional[dict] = None


@dataclass
class EpisodeLog:
    scenario_id: int
    seed: int
    adversarial: bool
    planner: str
    records: List[StepRecord]
    outcome: str  # collision | cleared | timeout
    steps_to_clear: Dict[int, Optional[int]]  # vehicle id (0 = ego) -> step
    oracle_clear_steps: Dict[int, Optional[int]]
    true_intents: Dict[int, int]  # other-vehicle id -> intent
    duration: int  # env steps simulated
    env_draws: int
    error: Optional[str] = None

    @property
    def collision(self) -> bool:
        return self.outcome == "collision"


def _planner_seed(scn_seed: int, key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(scn_seed), spawn_key=(77, int(key)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _near_miss(s: np.ndarray) -> bool:
    """Two conflicting not-yet-cleared occupants predicted to enter the box
    within one step of each other."""
    vehicles = []
    if s[L.S_EGO_PHASE] < int(Phase.Cleared):
        tta = 0.0 if s[L.S_EGO_PHASE] >= 1 else s[L.S_EGO_DIST] / max(s[L.S_EGO_NOMINAL], 1e-9)
        vehicles.append((int(s[L.S_EGO_APPROACH]), int(s[L.S_EGO_INTENT]), tta))
    for j in range(L.MAX_OTHERS):
        b = L.S_OTHER0 + j * L.S_OTHER_STRIDE
        if s[b + L.OV_PRESENT] > 0.5 and s[b + L.OV_PHASE] < int(Phase.Cleared):
            tta = (
                0.0
                if s[b + L.OV_PHASE] >= 1
                else s[b + L.OV_DIST] / max(s[b + L.OV_NOMINAL], 1e-9)
            )
            vehicles.append((int(s[b + L.OV_APPROACH]), int(s[b + L.OV_INTENT]), tta))
    conflict = K.CONFLICT
    for i in range(len(vehicles)):
        for j in range(i + 1, len(vehicles)):
            ai, ii, ti = vehicles[i]
            aj, ij, tj = vehicles[j]
            if conflict[ai * 3 + ii, aj * 3 + ij] and abs(ti - tj) <= 1.0:
                return True
    return False


def _clear_steps(s: np.ndarray, prev: Dict[int, Optional[int]], t: int) -> None:
    if prev.get(0) is None and s[L.S_EGO_PHASE] == int(Phase.Cleared):
        prev[0] = t
    for j in range(L.MAX_OTHERS):
        b = L.S_OTHER0 + j * L.S_OTHER_STRIDE
        if s[b + L.OV_PRESENT] > 0.5:
            if prev.get(j + 1) is None and s[b + L.OV_PHASE] == int(Phase.Cleared):
                prev[j + 1] = t


def run_oracle_reference(
    scn: Scenario, scn_cfg: ScenarioConfig, sim_cfg: SimConfig
) -> Tuple[Dict[int, Optional[int]], bool, int]:
    """Drive the episode with the ground-truth oracle; returns per-vehicle
    clear steps, whether a collision occurred, and the episode duration."""
    sim = Simulator(scn, sim_cfg, scn_cfg)
    s = sim.reset()
    clear: Dict[int, Optional[int]] = {0: None}
    for j in range(len(scn.other_specs)):
        clear[j + 1] = None
    collision = False
    t = 0
    while t < sim_cfg.horizon:
        a = sim.ground_truth_action(s) if s[L.S_EGO_PHASE] < int(Phase.Cleared) else Action.Go
        s = sim.step(s, int(a))
        t += 1
        _clear_steps(s, clear, t)
        if s[L.S_COLLISION] > 0.5:
            collision = True
            break
        if all(v is not None for v in clear.values()):
            break
    return clear, collision, t


def run_episode(
    planner_name: str,
    scn: Scenario,
    scn_cfg: ScenarioConfig,
    sim_cfg: SimConfig,
    params: RunParams,
    oracle_clear: Optional[Dict[int, Optional[int]]] = None,
    log_belief: bool = False,
) -> EpisodeLog:
    planner = make_planner(planner_name, **params.planner_options.get(planner_name, {}))
    sim = Simulator(scn, sim_cfg, scn_cfg)
    s = sim.reset()
    seed_key = _PLANNER_SEED_KEYS.get(planner_name, 500)
    planner.reset(scn, scn_cfg, sim_cfg, _planner_seed(scn.seed, seed_key))
    filt = belief = None
    if planner.uses_belief:
        filt = BeliefFilter(
            scn, scn_cfg, sim_cfg, params.n_particles,
            _planner_seed(scn.seed, seed_key + 100),
        )
    if oracle_clear is None:
        oracle_clear, _, _ = run_oracle_reference(scn, scn_cfg, sim_cfg)
    corrected_to = 0

    true_intents = {j + 1: spec[1] for j, spec in enumerate(scn.other_specs)}
    clear: Dict[int, Optional[int]] = {0: None}
    for j in range(len(scn.other_specs)):
        clear[j + 1] = None
    records: List[StepRecord] = []
    error = None
    actions: List[int] = []
    # frames[i] observes the state at time i; a frame is delivered
    # ``perception_latency`` steps after capture
    frames = [sim.observe(s)]
    t = 0
    outcome = "timeout"
    while t < sim_cfg.horizon:
        ego_active = s[L.S_EGO_PHASE] < int(Phase.Cleared) and s[L.S_COLLISION] < 0.5
        if ego_active:
            fidx = max(t - sim_cfg.perception_latency, 0)
            obs = frames[fidx]
            try:
                if planner.uses_belief:
                    if belief is None:
                        belief = filt.init_belief(frames[0])
                        corrected_to = 0
                    while corrected_to < fidx:
                        belief = filt.update(
                            belief, actions[corrected_to], frames[corrected_to + 1]
                        )
                        corrected_to += 1
                    planning_belief = belief
                    for i in range(corrected_to, t):
                        planning_belief = filt.predict(planning_belief, actions[i])
                else:
                    planning_belief = None
                t0 = time.perf_counter()
                decision = planner.decide(t, obs=obs, belief=planning_belief)
                dt = time.perf_counter() - t0
            except Exception as exc:  # noqa: BLE001 - failed episodes are results
                error = f"{type(exc).__name__}: {exc}"
                outcome = "error"
                break
            action = decision.action
            oracle_a = sim.ground_truth_action(s)
            near = _near_miss(s)
            summary = None
            if log_belief and planning_belief is not None:
                summary = {
                    "intents": {
                        vid: [
                            round(float(x), 4)
                            for x in intent_marginal(planning_belief, vid)
                        ]
                        for vid in true_intents
                    },
                    "pedestrians": [
                        round(float(x), 4)
                        for x in pedestrian_posterior(planning_belief)
                    ],
                }
            active = [
                j + 1
                for j in range(len(scn.other_specs))
                if s[L.S_OTHER0 + j * L.S_OTHER_STRIDE + L.OV_PHASE]
                < int(Phase.Cleared)
            ]
            s2 = sim.step(s, int(action))
            r = sim.reward(s, int(action), s2)
            records.append(
                StepRecord(
                    timestep=t,
                    action=int(action),
                    oracle_action=int(oracle_a),
                    intent_predictions={
                        int(k): int(v) for k, v in decision.intent_predictions.items()
                    },
                    reward=r,
                    compute_time=dt,
                    deadline_met=dt <= params.deadline,
                    near_miss=near,
                    active_vehicles=active,
                    belief_summary=summary,
                )
            )
        else:
            action = Action.Go
            s2 = sim.step(s, int(action))
        actions.append(int(action))
        s = s2
        t += 1
        frames.append(sim.observe(s))
        _clear_steps(s, clear, t)
        if s[L.S_COLLISION] > 0.5:
            outcome = "collision"
            break
        if all(v is not None for v in clear.values()):
            outcome = "cleared"
            break
    if outcome == "timeout" and clear[0] is not None:
        outcome = "cleared"  # ego got through; someone else timed out
    return EpisodeLog(
        scenario_id=scn.id,
        seed=scn.seed,
        adversarial=scn.adversarial,
        planner=planner_name,
        records=records,
        outcome=outcome,
        steps_to_clear=clear,
        oracle_clear_steps=oracle_clear,
        true_intents=true_intents,
        duration=t,
        env_draws=sim.draw_count,
        error=error,
    )


def _episode_task(args) -> EpisodeLog:
    planner_name, scn_d, scn_cfg_d, sim_cfg_kw, params_d, oracle_clear, log_belief = args
    scn = Scenario.from_dict(scn_d)
    scn_cfg = ScenarioConfig(
        **{k: tuple(v) if isinstance(v, list) else v for k, v in scn_cfg_d.items()}
    )
    sim_cfg = sim_cfg_kw
    params = RunParams(**params_d)
    return run_episode(
        planner_name, scn, scn_cfg, sim_cfg, params, oracle_clear, log_belief
    )


def run_suite(
    suite: List[Scenario],
    planner_names: List[str],
    scn_cfg: ScenarioConfig,
    sim_cfg: SimConfig,
    params: RunParams,
    log_belief: bool = False,
) -> Dict[str, List[EpisodeLog]]:
    """Run every (scenario, planner) pair; merged deterministically so the
    result is independent of the worker count."""
    refs = {
        scn.id: run_oracle_reference(scn, scn_cfg, sim_cfg)[0] for scn in suite
    }
    jobs = [
        (
            name,
            scn.to_dict(),
            asdict(scn_cfg),
            sim_cfg,
            {
                "deadline": params.deadline,
                "n_particles": params.n_particles,
                "workers": 1,
                "planner_options": params.planner_options,
            },
            refs[scn.id],
            log_belief,
        )
        for scn in suite
        for name in planner_names
    ]
    if params.workers > 1:
        with ProcessPoolExecutor(max_workers=params.workers) as pool:
            logs = list(pool.map(_episode_task, jobs, chunksize=4))
    else:
        logs = [_episode_task(j) for j in jobs]
    out: Dict[str, List[EpisodeLog]] = {name: [] for name in planner_names}
    for lg in logs:
        out[lg.planner].append(lg)
    for name in planner_names:
        out[name].sort(key=lambda lg: lg.scenario_id)
    return out


# --- metrics ----------------------------------------------------------------

METRIC_KEYS = (
    "action_accuracy",
    "intent_accuracy",
    "collision_free_rate",
    "flow_efficiency",
    "avg_time_to_completion",
    "avg_processing_time",
    "throughput",
    "real_time_fraction",
)
LOWER_IS_BETTER = {"avg_time_to_completion", "avg_processing_time"}


@dataclass(frozen=True)
class Metrics:
    action_accuracy: float
    intent_accuracy: float
    collision_free_rate: float
    flow_efficiency: float
    avg_time_to_completion: float
    avg_processing_time: float
    throughput: float
    real_time_fraction: float
    near_miss_recovery: float  # extension metric, reported separately

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(logs: List[EpisodeLog], horizon: int = 12) -> Metrics:
    if not logs:
        raise ValueError("compute_metrics requires at least one episode log")
    steps = correct = 0
    intent_total = intent_correct = 0
    deadline_met = 0
    proc_times = []
    collision_free = 0
    nm_episodes = nm_clean = 0
    veh_total = veh_prompt = veh_cleared = 0
    completion_times = []
    sim_seconds = 0
    for lg in logs:
        for rec in lg.records:
            steps += 1
            correct += rec.action == rec.oracle_action
            deadline_met += rec.deadline_met
            proc_times.append(rec.compute_time)
            for vid in rec.active_vehicles:
                intent_total += 1
                intent_correct += rec.intent_predictions.get(vid) == lg.true_intents[vid]
        if not lg.collision:
            collision_free += 1
        if any(rec.near_miss for rec in lg.records):
            nm_episodes += 1
            nm_clean += not lg.collision
        comp = max(
            (v if v is not None else horizon) for v in lg.steps_to_clear.values()
        )
        completion_times.append(comp)
        sim_seconds += lg.duration
        for vid, cleared_at in lg.steps_to_clear.items():
            veh_total += 1
            if cleared_at is not None:
                veh_cleared += 1
                ref = lg.oracle_clear_steps.get(vid)
                if ref is None:
                    ref = horizon
                if cleared_at <= ref:
                    veh_prompt += 1
    return Metrics(
        action_accuracy=100.0 * correct / max(steps, 1),
        intent_accuracy=100.0 * intent_correct / max(intent_total, 1),
        collision_free_rate=100.0 * collision_free / len(logs),
        flow_efficiency=100.0 * veh_prompt / max(veh_total, 1),
        avg_time_to_completion=float(np.mean(completion_times)),
        avg_processing_time=float(np.mean(proc_times)) if proc_times else 0.0,
        throughput=veh_cleared / max(sim_seconds, 1),
        real_time_fraction=deadline_met / max(steps, 1),
        near_miss_recovery=100.0 * nm_clean / nm_episodes if nm_episodes else 100.0,
    )


def normalize_for_radar(per_planner: Dict[str, Metrics]) -> Dict[str, Dict[str, float]]:
    """Min-max per metric across planners; 1 is always best (lower-is-better
    metrics are inverted). Degenerate metrics map every planner to 1."""
    if len(per_planner) < 2:
        return {p: {k: 1.0 for k in METRIC_KEYS} for p in per_planner}
    out = {p: {} for p in per_planner}
    for key in METRIC_KEYS:
        vals = {p: getattr(m, key) for p, m in per_planner.items()}
        lo, hi = min(vals.values()), max(vals.values())
        for p, v in vals.items():
            if hi - lo < 1e-12:
                x = 1.0
            else:
                x = (v - lo) / (hi - lo)
                if key in LOWER_IS_BETTER:
                    x = 1.0 - x
            out[p][key] = x
    return out


# --- report files -----------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def episode_to_dict(lg: EpisodeLog) -> dict:
    d = asdict(lg)
    d["schema"] = EPISODE_SCHEMA
    return d


def export_reports(
    results: Dict[str, List[EpisodeLog]],
    out_dir,
    horizon: int = 12,
    deadline: float = 0.05,
    redact_timing: bool = False,
) -> Dict[str, Metrics]:
    """Write the metrics CSV, heatmap matrix, trajectory JSON, timing scatter,
    radar CSV and radar SVG. ``redact_timing`` zeroes wall-clock-derived
    numbers so repeated runs produce byte-identical files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    planners = list(results)
    metrics = {p: compute_metrics(results[p], horizon) for p in planners}
    if redact_timing:
        metrics = {
            p: Metrics(
                **{
                    **m.as_dict(),
                    "avg_processing_time": 0.0,
                    "real_time_fraction": 0.0,
                }
            )
            for p, m in metrics.items()
        }

    try:
        rows = ["metric," + ",".join(planners) + "\n"]
        for key in METRIC_KEYS + ("near_miss_recovery",):
            rows.append(
                key + "," + ",".join(_fmt(getattr(metrics[p], key)) for p in planners) + "\n"
            )
        (out / "metrics.csv").write_text("".join(rows))

        rows = ["scenario_id,adversarial," + ",".join(planners) + "\n"]
        by_sid = {
            p: {lg.scenario_id: lg for lg in results[p]} for p in planners
        }
        sids = sorted({lg.scenario_id for logs in results.values() for lg in logs})
        for sid in sids:
            any_lg = next(by_sid[p][sid] for p in planners if sid in by_sid[p])
            accs = []
            for p in planners:
                lg = by_sid[p].get(sid)
                if lg is None or not lg.records:
                    accs.append("")
                    continue
                acc = 100.0 * sum(
                    r.action == r.oracle_action for r in lg.records
                ) / len(lg.records)
                accs.append(_fmt(acc))
            rows.append(f"{sid},{int(any_lg.adversarial)}," + ",".join(accs) + "\n")
        (out / "accuracy_matrix.csv").write_text("".join(rows))

        traj = {}
        for sid in sids:
            entry = {}
            for p in planners:
                lg = by_sid[p].get(sid)
                if lg is None:
                    continue
                entry[p] = [Action(r.action).name for r in lg.records]
                entry["ground_truth"] = [
                    Action(r.oracle_action).name for r in lg.records
                ]
            traj[str(sid)] = entry
        (out / "trajectories.json").write_text(json.dumps(traj, indent=2) + "\n")

        rows = ["planner,scenario_id,mean_compute_time,deadline,fraction_met\n"]
        for p in planners:
            for lg in results[p]:
                if not lg.records:
                    continue
                mt = float(np.mean([r.compute_time for r in lg.records]))
                fm = float(np.mean([r.deadline_met for r in lg.records]))
                if redact_timing:
                    mt = fm = 0.0
                rows.append(f"{p},{lg.scenario_id},{_fmt(mt)},{_fmt(deadline)},{_fmt(fm)}\n")
        (out / "timing_scatter.csv").write_text("".join(rows))

        radar = normalize_for_radar(metrics)
        rows = ["metric," + ",".join(planners) + "\n"]
        for key in METRIC_KEYS:
            rows.append(key + "," + ",".join(_fmt(radar[p][key]) for p in planners) + "\n")
        (out / "radar.csv").write_text("".join(rows))
        (out / "radar.svg").write_text(_radar_svg(radar, planners))

        for p in planners:
            with (out / f"episodes_{p}.jsonl").open("w") as fh:
                for lg in results[p]:
                    fh.write(json.dumps(episode_to_dict(lg)) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing report under {out}: {exc}") from exc
    return metrics


_RADAR_COLORS = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd")


def _radar_svg(radar: Dict[str, Dict[str, float]], planners: List[str]) -> str:
    cx = cy = 260.0
    rad = 180.0
    n = len(METRIC_KEYS)
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="640" height="560" '
        'font-family="sans-serif" font-size="12">',
    ]

    def pt(i: int, r: float) -> Tuple[float, float]:
        ang = -math.pi / 2 + 2 * math.pi * i / n
        return cx + r * math.cos(ang), cy + r * math.sin(ang)

    for frac in (0.25, 0.5, 0.75, 1.0):
        ring = " ".join(f"{x:.1f},{y:.1f}" for x, y in (pt(i, rad * frac) for i in range(n)))
        lines.append(f'<polygon points="{ring}" fill="none" stroke="#cccccc"/>')
    for i, key in enumerate(METRIC_KEYS):
        x, y = pt(i, rad)
        lines.append(f'<line x1="{cx}" y1="{cy}" x2="{x:.1f}" y2="{y:.1f}" stroke="#cccccc"/>')
        tx, ty = pt(i, rad + 18)
        lines.append(
            f'<text x="{tx:.1f}" y="{ty:.1f}" text-anchor="middle">{key}</text>'
        )
    for ci, p in enumerate(planners):
        color = _RADAR_COLORS[ci % len(_RADAR_COLORS)]
        poly = " ".join(
            f"{x:.1f},{y:.1f}"
            for x, y in (
                pt(i, rad * radar[p][key]) for i, key in enumerate(METRIC_KEYS)
            )
        )
        lines.append(
            f'<polygon points="{poly}" fill="{color}" fill-opacity="0.15" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        lines.append(
            f'<rect x="20" y="{500 + 15 * ci}" width="12" height="12" fill="{color}"/>'
            f'<text x="38" y="{510 + 15 * ci}">{p}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"

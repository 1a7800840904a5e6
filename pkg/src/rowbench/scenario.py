"""Seeded scenario generation for the intersection benchmark.

A :class:`Scenario` is a pure function of ``(seed, config, adversarial)``;
suites derive per-scenario seeds from one base seed, with the adversarial
block first. Scenarios serialize to a stable JSON schema so suites are
shareable, diffable fixtures.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import List, Tuple

import numpy as np

from . import _layout as L
from .domain import ApproachDirection, Intent, exit_side, paths_conflict

SUITE_SCHEMA = "rowbench.suite/1"
SCENARIO_SCHEMA = "rowbench.scenario/1"


@dataclass(frozen=True)
class ScenarioConfig:
    intent_weights: Tuple[float, float, float] = (0.55, 0.30, 0.15)
    speed_range: Tuple[float, float] = (3.0, 8.0)
    pedestrian_prob_range: Tuple[float, float] = (0.12, 0.25)
    position_noise_sigma: float = 1.0
    arrival_noise: int = 1
    occlusion_prob: float = 0.15
    dropout_prob: float = 0.02
    slippery_prob: float = 0.12
    adversarial_fraction: float = 1.0 / 3.0
    max_other_vehicles: int = 3
    noncompliance_prob: float = 0.05
    adversarial_noncompliance_prob: float = 0.30
    lane_cue_sigma: float = 0.35
    horizon: int = 12

    def validate(self) -> None:
        probs = [
            self.occlusion_prob,
            self.dropout_prob,
            self.slippery_prob,
            self.adversarial_fraction,
            self.noncompliance_prob,
            self.adversarial_noncompliance_prob,
            *self.pedestrian_prob_range,
            *self.intent_weights,
        ]
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(sum(self.intent_weights) - 1.0) > 1e-9:
            raise ValueError("intent_weights must sum to 1")
        lo, hi = self.pedestrian_prob_range
        if lo > hi:
            raise ValueError("pedestrian_prob_range must be ordered")
        slo, shi = self.speed_range
        if slo <= 0 or slo > shi:
            raise ValueError("speed_range must be positive and ordered")
        if not 1 <= self.max_other_vehicles <= L.MAX_OTHERS:
            raise ValueError(f"max_other_vehicles must be in [1, {L.MAX_OTHERS}]")


@dataclass(frozen=True)
class Scenario:
    id: int
    seed: int
    adversarial: bool
    # (approach, intent, initial distance m, nominal speed m/step)
    ego_spec: Tuple[int, int, float, float]
    # (approach, intent, arrival offset steps, compliant)
    other_specs: Tuple[Tuple[int, int, int, bool], ...]
    # (approach, start step, duration steps)
    pedestrian_schedule: Tuple[Tuple[int, int, int], ...]
    slippery: bool

    def to_dict(self) -> dict:
        ea, ei, ed, es = self.ego_spec
        return {
            "schema": SCENARIO_SCHEMA,
            "id": self.id,
            "seed": int(self.seed),
            "adversarial": self.adversarial,
            "ego": {
                "approach": ApproachDirection(ea).name,
                "intent": Intent(ei).name,
                "distance": round(ed, 6),
                "speed": round(es, 6),
            },
            "others": [
                {
                    "approach": ApproachDirection(a).name,
                    "intent": Intent(i).name,
                    "arrival_offset": off,
                    "compliant": comp,
                }
                for a, i, off, comp in self.other_specs
            ],
            "pedestrians": [
                {"approach": ApproachDirection(a).name, "start": s, "duration": d}
                for a, s, d in self.pedestrian_schedule
            ],
            "slippery": self.slippery,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            id=d["id"],
            seed=d["seed"],
            adversarial=d["adversarial"],
            ego_spec=(
                ApproachDirection[d["ego"]["approach"]].value,
                Intent[d["ego"]["intent"]].value,
                d["ego"]["distance"],
                d["ego"]["speed"],
            ),
            other_specs=tuple(
                (
                    ApproachDirection[o["approach"]].value,
                    Intent[o["intent"]].value,
                    o["arrival_offset"],
                    o["compliant"],
                )
                for o in d["others"]
            ),
            pedestrian_schedule=tuple(
                (ApproachDirection[p["approach"]].value, p["start"], p["duration"])
                for p in d["pedestrians"]
            ),
            slippery=d["slippery"],
        )


_ADVERSARIAL_FEATURES = ("simultaneous", "pedestrian_intrusion", "runner_only")


def generate_scenario(seed: int, cfg: ScenarioConfig, adversarial: bool, sid: int = 0) -> Scenario:
    cfg.validate()
    rng = np.random.Generator(np.random.PCG64(seed))

    ego_approach = int(rng.integers(4))
    ego_intent = int(rng.choice(3, p=np.asarray(cfg.intent_weights)))
    ego_dist = float(rng.uniform(10.0, 30.0))
    ego_speed = float(rng.uniform(*cfg.speed_range))

    n_others = int(rng.integers(1, cfg.max_other_vehicles + 1))
    free = [a for a in range(4) if a != ego_approach]
    approaches = rng.permutation(np.array(free))[:n_others]
    p_noncomp = (
        cfg.adversarial_noncompliance_prob if adversarial else cfg.noncompliance_prob
    )
    others = []
    for a in approaches:
        intent = int(rng.choice(3, p=np.asarray(cfg.intent_weights)))
        offset = int(rng.integers(0, 4))
        compliant = bool(rng.random() >= p_noncomp)
        others.append([int(a), intent, offset, compliant])

    p_ped = float(rng.uniform(*cfg.pedestrian_prob_range))
    peds = []
    for a in range(4):
        if rng.random() < p_ped:
            start = int(rng.integers(0, max(cfg.horizon - 3, 1)))
            dur = int(rng.integers(2, 5))
            peds.append((a, start, dur))

    slippery = bool(rng.random() < cfg.slippery_prob)

    if adversarial:
        # every adversarial scenario hides a stop-line runner timed to cross
        # while the ego legitimately owns the box: it arrives just after the
        # ego's slot, on a conflicting path, and will not yield
        k = int(rng.integers(n_others))
        others[k][3] = False
        occ = 3 if ego_intent == int(Intent.Left) else 2
        others[k][2] = int(rng.integers(1, occ))
        cands = [
            i
            for i in range(3)
            if paths_conflict((ego_approach, ego_intent), (others[k][0], i))
        ]
        if cands and others[k][1] not in cands:
            others[k][1] = cands[int(rng.integers(len(cands)))]
        extra = _ADVERSARIAL_FEATURES[int(rng.integers(3))]
        if extra == "simultaneous" and n_others > 1:
            others[(k + 1) % n_others][2] = 0
        elif extra == "pedestrian_intrusion":
            side = (
                ego_approach
                if rng.random() < 0.5
                else int(exit_side(ApproachDirection(ego_approach), Intent(ego_intent)))
            )
            start = int(rng.integers(1, max(cfg.horizon - 5, 2)))
            peds.append((side, start, 3))

    return Scenario(
        id=sid,
        seed=int(seed),
        adversarial=adversarial,
        ego_spec=(ego_approach, ego_intent, ego_dist, ego_speed),
        other_specs=tuple(tuple(o) for o in others),
        pedestrian_schedule=tuple(sorted(peds)),
        slippery=slippery,
    )


def generate_suite(base_seed: int, n: int, cfg: ScenarioConfig) -> List[Scenario]:
    """Deterministic suite of ``n`` scenarios; the adversarial block
    (``ceil(n * adversarial_fraction)`` scenarios) comes first."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg.validate()
    n_adv = math.ceil(n * cfg.adversarial_fraction)
    seeds = np.random.SeedSequence(base_seed).generate_state(n, dtype=np.uint64)
    return [
        generate_scenario(int(seeds[i]), cfg, adversarial=i < n_adv, sid=i)
        for i in range(n)
    ]


def instantiate(scn: Scenario) -> np.ndarray:
    """Initial world-state vector at timestep 0."""
    s = np.zeros(L.STATE_SIZE)
    ea, ei, ed, esp = scn.ego_spec
    ego_eta = ed / esp
    s[L.S_EGO_APPROACH] = ea
    s[L.S_EGO_INTENT] = ei
    s[L.S_EGO_DIST] = ed
    s[L.S_EGO_SPEED] = esp
    s[L.S_EGO_NOMINAL] = esp
    s[L.S_EGO_ETA] = ego_eta

    # derive each other vehicle's kinematics from its arrival offset; keep the
    # scheduled arrival exact whenever the speed bounds allow it
    etas = [(ego_eta, ea, -1)]
    drng = np.random.Generator(np.random.PCG64(scn.seed ^ 0x9E3779B97F4A7C15))
    for j, (a, i, off, comp) in enumerate(scn.other_specs):
        eta = ego_eta + off
        speed = float(drng.uniform(3.0, 8.0))
        dist = speed * eta
        if dist > 40.0:
            dist = 40.0
            speed = min(max(dist / eta, 3.0), 8.0)
        elif dist < 5.0:
            dist = 5.0
            speed = min(max(dist / eta, 3.0), 8.0)
        eta = dist / speed
        b = L.S_OTHER0 + j * L.S_OTHER_STRIDE
        s[b + L.OV_PRESENT] = 1.0
        s[b + L.OV_APPROACH] = a
        s[b + L.OV_INTENT] = i
        s[b + L.OV_DIST] = dist
        s[b + L.OV_SPEED] = speed
        s[b + L.OV_NOMINAL] = speed
        s[b + L.OV_ETA] = eta
        s[b + L.OV_COMPLIANT] = 1.0 if comp else 0.0
        etas.append((eta, a, j))

    # arrival ranks: order of scheduled arrival, ties broken by approach index
    for rank, (_, _, j) in enumerate(
        sorted(etas, key=lambda t: (round(t[0], 6), t[1])), start=1
    ):
        if j < 0:
            s[L.S_EGO_RANK] = rank
        else:
            s[L.S_OTHER0 + j * L.S_OTHER_STRIDE + L.OV_RANK] = rank

    for a, start, dur in scn.pedestrian_schedule:
        if start == 0:
            s[L.S_PED_PRESENT + a] = 1.0
            s[L.S_PED_STEPS + a] = dur
    s[L.S_SLIPPERY] = 1.0 if scn.slippery else 0.0
    return s


def suite_to_json(base_seed: int, cfg: ScenarioConfig, suite: List[Scenario]) -> str:
    doc = {
        "schema": SUITE_SCHEMA,
        "base_seed": int(base_seed),
        "config": asdict(cfg),
        "scenarios": [s.to_dict() for s in suite],
    }
    return json.dumps(doc, indent=2) + "\n"


def suite_from_json(text: str) -> Tuple[int, ScenarioConfig, List[Scenario]]:
    doc = json.loads(text)
    if doc.get("schema") != SUITE_SCHEMA:
        raise ValueError(f"unrecognized suite schema: {doc.get('schema')!r}")
    cfg_d = doc["config"]
    cfg = ScenarioConfig(
        **{
            k: tuple(v) if isinstance(v, list) else v
            for k, v in cfg_d.items()
        }
    )
    suite = [Scenario.from_dict(d) for d in doc["scenarios"]]
    return doc["base_seed"], cfg, suite

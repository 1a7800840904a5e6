"""Uniform planner interface consumed by the benchmark harness."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..belief import Belief
from ..domain import Action, Intent
from ..scenario import Scenario, ScenarioConfig
from ..sim import SimConfig


@dataclass
class PlannerDecision:
    action: Action
    intent_predictions: Dict[int, Intent] = field(default_factory=dict)
    compute_time: float = 0.0
    diagnostics: Dict[str, float] = field(default_factory=dict)


class Planner:
    """One planner instance per episode; harness calls reset() then decide()
    once per step. ``uses_belief`` selects whether decide() receives the
    particle belief or the raw observation."""

    name: str = "base"
    uses_belief: bool = True

    def reset(
        self,
        scn: Scenario,
        scn_cfg: ScenarioConfig,
        sim_cfg: SimConfig,
        seed: int,
    ) -> None:
        raise NotImplementedError

    def decide(
        self,
        step: int,
        obs: Optional[np.ndarray] = None,
        belief: Optional[Belief] = None,
    ) -> PlannerDecision:
        raise NotImplementedError


def argmax_with_safety_tiebreak(scores) -> Action:
    """Highest score wins; exact ties resolve Stop > Yield > Go."""
    best_a, best = Action.Stop, -np.inf
    for a in (Action.Stop, Action.Yield, Action.Go):
        if scores[int(a)] > best + 1e-12:
            best_a, best = a, scores[int(a)]
    return best_a

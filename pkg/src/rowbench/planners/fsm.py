"""Deterministic rule-based baseline.

Single-frame traffic-law cascade (pedestrians first, then earlier
arrivals, right-hand vehicles on ties, left-turn conflicts) evaluated
directly on the noisy observation stream. The rules are memoryless: a
vehicle or pedestrian missing from the current frame — occluded or
dropped — simply does not take part in the cascade, and every arrival
estimate assumes the default nominal speed. Last-seen intent estimates
are retained only for the intent-prediction report; they never feed the
action choice.
"""
from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from .. import _layout as L
from ..domain import Action, Intent, Phase, paths_conflict, exit_side, occupancy_duration
from .base import Planner, PlannerDecision

_DEFAULT_SPEED = 5.0


def fsm_intent_estimate(cue: float, phase: int, threshold: float = 0.5) -> Intent:
    """Threshold rule on the lane-offset cue; a vehicle stopped at the line
    defaults to Straight unless the cue clearly says otherwise."""
    if phase == int(Phase.AtLine) and abs(cue) <= threshold:
        return Intent.Straight
    if cue < -threshold:
        return Intent.Left
    if cue > threshold:
        return Intent.Right
    return Intent.Straight


class FsmPlanner(Planner):
    name = "fsm"
    uses_belief = False

    def reset(self, scn, scn_cfg, sim_cfg, seed):
        ea, ei, _, esp = scn.ego_spec
        self.ego_approach = ea
        self.ego_intent = Intent(ei)
        self.ego_nominal = esp
        self.last_action = Action.Yield
        self.intent_report: Dict[int, Intent] = {}

    def decide(self, step, obs=None, belief=None) -> PlannerDecision:
        o = obs
        if o is None or o[L.O_DROPPED] > 0.5:
            return PlannerDecision(
                action=self.last_action, intent_predictions=dict(self.intent_report)
            )

        visible = []
        for j in range(L.MAX_OTHERS):
            b = L.O_VEH0 + j * L.O_VEH_STRIDE
            if o[b + L.OB_VISIBLE] < 0.5:
                continue
            phase = int(o[b + L.OB_PHASE])
            intent = fsm_intent_estimate(o[b + L.OB_CUE], phase)
            self.intent_report[j + 1] = intent
            visible.append((int(o[b + L.OB_APPROACH]), intent, o[b + L.OB_DIST], phase))

        ego_dist = o[L.O_EGO_DIST]
        ego_phase = int(o[L.O_EGO_PHASE])
        ego_eta = 0.0 if ego_phase >= int(Phase.AtLine) else ego_dist / self.ego_nominal
        ego_path = (self.ego_approach, self.ego_intent)
        ego_occ = occupancy_duration(self.ego_intent)
        action = Action.Go

        ped_block = (
            o[L.O_PED + self.ego_approach] > 0.5
            or o[L.O_PED + int(exit_side(self.ego_approach, self.ego_intent))] > 0.5
        )
        if ped_block:
            action = Action.Stop
        else:
            yield_flag = stop_flag = False
            for approach, intent, dist, phase in visible:
                if phase >= int(Phase.Cleared):
                    continue
                if not paths_conflict(ego_path, (approach, intent)):
                    continue
                in_box = phase == int(Phase.InIntersection)
                eta = 0.0 if phase >= int(Phase.AtLine) else dist / _DEFAULT_SPEED
                if in_box or eta < ego_eta - 0.5:
                    # earlier arrival still owns the box
                    if ego_phase == int(Phase.AtLine) and in_box:
                        stop_flag = True
                    yield_flag = True
                elif abs(eta - ego_eta) <= 0.5 and approach == (self.ego_approach + 3) % 4:
                    yield_flag = True  # simultaneous arrival, vehicle on the right
                elif (
                    self.ego_intent == Intent.Left
                    and approach == (self.ego_approach + 2) % 4
                    and intent != Intent.Left
                    and eta <= ego_eta + ego_occ + 1.0
                ):
                    yield_flag = True  # turning left across oncoming traffic
            if stop_flag:
                action = Action.Stop
            elif yield_flag:
                action = Action.Yield

        self.last_action = action
        return PlannerDecision(
            action=action, intent_predictions=dict(self.intent_report)
        )

from .base import Planner, PlannerDecision
from .despot import DespotConfig, DespotPlanner
from .fsm import FsmPlanner, fsm_intent_estimate
from .pomcp import PomcpConfig, PomcpPlanner
from .qmdp import QmdpPlanner, build_compact_model, qmdp_plan, qmdp_solve

PLANNER_NAMES = ("fsm", "qmdp", "pomcp", "despot")


def make_planner(name: str, **kwargs) -> Planner:
    if name == "fsm":
        return FsmPlanner()
    if name == "qmdp":
        return QmdpPlanner(**kwargs)
    if name == "pomcp":
        cfg = PomcpConfig(**kwargs) if kwargs else None
        return PomcpPlanner(cfg)
    if name == "despot":
        cfg = DespotConfig(**kwargs) if kwargs else None
        return DespotPlanner(cfg)
    raise ValueError(f"unknown planner {name!r}; valid: {', '.join(PLANNER_NAMES)}")

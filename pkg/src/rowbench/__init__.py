"""Seedable right-of-way benchmark for uncontrolled four-way intersections.

A compact POMDP simulation of an ego vehicle negotiating an uncontrolled
intersection under noisy, occluded perception, plus four planners over it:
a rule-based first-come-first-served FSM baseline and three belief-space
planners (QMDP, POMCP, DESPOT) sharing one particle filter.
"""
from .belief import Belief, BeliefFilter, intent_marginal, pedestrian_posterior
from .domain import (
    Action,
    ApproachDirection,
    Intent,
    Phase,
    RewardWeights,
    conflict_table,
    paths_conflict,
    right_neighbor,
)
from .harness import (
    EpisodeLog,
    Metrics,
    RunParams,
    compute_metrics,
    export_reports,
    normalize_for_radar,
    run_episode,
    run_suite,
)
from .planners import PLANNER_NAMES, make_planner
from .scenario import (
    Scenario,
    ScenarioConfig,
    generate_scenario,
    generate_suite,
    instantiate,
    suite_from_json,
    suite_to_json,
)
from .sim import SimConfig, Simulator

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ApproachDirection",
    "Belief",
    "BeliefFilter",
    "EpisodeLog",
    "Intent",
    "Metrics",
    "PLANNER_NAMES",
    "Phase",
    "RewardWeights",
    "RunParams",
    "Scenario",
    "ScenarioConfig",
    "SimConfig",
    "Simulator",
    "compute_metrics",
    "conflict_table",
    "export_reports",
    "generate_scenario",
    "generate_suite",
    "instantiate",
    "intent_marginal",
    "make_planner",
    "normalize_for_radar",
    "paths_conflict",
    "pedestrian_posterior",
    "right_neighbor",
    "run_episode",
    "run_suite",
    "suite_from_json",
    "suite_to_json",
    "__version__",
]

"""POMCP: Monte-Carlo tree search over action/observation histories with
particle beliefs, UCB1 action selection and rollout leaf estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .. import _kernels as K
from .. import _layout as L
from ..belief import Belief, intent_marginal
from ..domain import Action, Intent
from ..sim import SimConfig, model_reward, obs_key
from .base import Planner, PlannerDecision, argmax_with_safety_tiebreak

_ACTION_ORDER = (0, 1, 2)  # Stop, Yield, Go


@dataclass(frozen=True)
class PomcpConfig:
    n_simulations: int = 150
    max_depth: int = 6
    ucb_constant: float = 50.0
    rollout_policy: str = "cascade"  # or "random"
    # new tree nodes start with this many phantom visits per action, valued
    # by the compact-model Q table; the search then corrects the estimate
    # where simulations disagree
    init_count: int = 5
    # chance constraint on the root choice: actions whose simulated
    # trajectories collide more often than this are only taken when every
    # action exceeds it (then the least-colliding one wins)
    max_collision_risk: float = 0.04

    def validate(self):
        if self.n_simulations < 1 or self.max_depth < 1:
            raise ValueError("n_simulations and max_depth must be >= 1")
        if self.rollout_policy not in ("random", "cascade"):
            raise ValueError("rollout_policy must be 'random' or 'cascade'")
        if not 0.0 <= self.max_collision_risk <= 1.0:
            raise ValueError("max_collision_risk must be in [0, 1]")
        if self.init_count < 0:
            raise ValueError("init_count must be >= 0")


class _Node:
    __slots__ = ("visits", "n", "w", "children", "primed")

    def __init__(self):
        self.visits = 0
        self.n = [0, 0, 0]
        self.w = [0.0, 0.0, 0.0]
        self.children: Dict[tuple, "_Node"] = {}
        self.primed = False


class PomcpPlanner(Planner):
    name = "pomcp"
    uses_belief = True

    def __init__(self, cfg: Optional[PomcpConfig] = None):
        self.cfg = cfg or PomcpConfig()
        self.cfg.validate()

    def reset(self, scn, scn_cfg, sim_cfg, seed):
        self.scn_cfg = scn_cfg
        self.sim_cfg = sim_cfg
        self.seed = seed
        self.n_others = len(scn.other_specs)
        self._w = sim_cfg.reward
        key = (sim_cfg.reward, round(sim_cfg.gamma, 12))
        if key not in _Q_TABLE_CACHE:
            T, R = build_compact_model(sim_cfg.reward)
            _Q_TABLE_CACHE[key] = qmdp_solve(T, R, sim_cfg.gamma)
        self._q_init = _Q_TABLE_CACHE[key]

    def _prime(self, node: _Node, s: np.ndarray) -> None:
        """Seed a fresh node with compact-model values as phantom visits."""
        node.primed = True
        c = self.cfg.init_count
        if c <= 0:
            return
        q = self._q_init[K.compact_encode_core(s)]
        for a in _ACTION_ORDER:
            node.n[a] = c
            node.w[a] = c * float(q[a])

    def _rollout(self, s: np.ndarray, depth: int) -> float:
        # the tree is depth-limited but returns are not: roll out to the
        # episode horizon so clearing rewards stay inside every estimate
        steps = int(self.sim_cfg.horizon - s[L.S_TIMESTEP])
        if steps <= 0:
            return 0.0
        policy = 0 if self.cfg.rollout_policy == "random" else 1
        val, collided = K.rollout_core(
            s, steps, self.sim_cfg.gamma,
            self._cur_u[depth:], self._cur_act[depth:], policy,
            self.sim_cfg.slippery_brake_failure_prob,
            self.sim_cfg.ped_hazard_rate,
            float(self.sim_cfg.ped_hazard_duration),
            float(self.sim_cfg.horizon),
            self._w.collision_penalty, self._w.unsafe_penalty,
            self._w.progress_reward, self._w.step_cost,
        )
        if collided > 0.5:
            self._collided = True
        return float(val)

    def _simulate(self, s: np.ndarray, node: _Node, depth: int, force_a: int = -1) -> float:
        if K.is_terminal_core(s, float(self.sim_cfg.horizon)):
            return 0.0
        if depth >= self.cfg.max_depth:
            return self._rollout(s, depth)
        node.visits += 1
        a = force_a
        if a < 0:
            for cand in _ACTION_ORDER:
                if node.n[cand] == 0:
                    a = cand
                    break
        if a < 0:
            logn = math.log(node.visits)
            best = -math.inf
            for cand in _ACTION_ORDER:
                ucb = node.w[cand] / node.n[cand] + self.cfg.ucb_constant * math.sqrt(
                    logn / node.n[cand]
                )
                if ucb > best + 1e-12:
                    best, a = ucb, cand
        s2 = K.step_core(
            s, a, self._cur_u[depth], K._NO_PED_ADD,
            self.sim_cfg.slippery_brake_failure_prob, 1,
            self.sim_cfg.ped_hazard_rate, float(self.sim_cfg.ped_hazard_duration),
        )
        r = model_reward(s, a, s2, self.sim_cfg)
        if s2[L.S_COLLISION] > 0.5:
            self._collided = True
        self._depth_reached = max(self._depth_reached, depth + 1)
        if K.is_terminal_core(s2, float(self.sim_cfg.horizon)):
            g = r
        else:
            o = K.observe_core(
                s2, self._cur_obs_u[depth], self._cur_obs_n[depth],
                self.scn_cfg.dropout_prob, self.scn_cfg.occlusion_prob,
                self.scn_cfg.position_noise_sigma, self.scn_cfg.lane_cue_sigma,
            )
            key = (a, obs_key(o))
            child = node.children.get(key)
            if child is None:
                node.children[key] = child = _Node()
                g = r + self.sim_cfg.gamma * self._rollout(s2, depth + 1)
            else:
                g = r + self.sim_cfg.gamma * self._simulate(s2, child, depth + 1)
        node.n[a] += 1
        node.w[a] += g
        return g

    def decide(self, step, obs=None, belief=None) -> PlannerDecision:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(step,))
        rng = np.random.Generator(np.random.PCG64(ss))
        root = _Node()
        self._depth_reached = 0
        levels = self.cfg.max_depth + self.sim_cfg.horizon
        # paired rounds: each sampled particle gets one fixed draw block per
        # depth and replays it under all three root actions, so root value
        # differences cancel the chance outcomes common to every action
        rounds = max(self.cfg.n_simulations // len(_ACTION_ORDER), 1)
        coll = [0, 0, 0]
        for _ in range(rounds):
            s = belief.sample(rng)
            self._cur_u = rng.random((levels, L.STEP_DRAWS))
            self._cur_act = rng.random(levels)
            self._cur_obs_u = rng.random((self.cfg.max_depth, L.OBS_U_DRAWS))
            self._cur_obs_n = rng.standard_normal((self.cfg.max_depth, L.OBS_N_DRAWS))
            for a0 in _ACTION_ORDER:
                self._collided = False
                self._simulate(s.copy(), root, 0, force_a=a0)
                if self._collided:
                    coll[a0] += 1
        # highest-value root action (UCB keeps visit counts close at this
        # budget, so mean value is the sharper statistic); Stop > Yield > Go
        # on ties for safety
        q = [
            root.w[a] / root.n[a] if root.n[a] > 0 else -math.inf
            for a in _ACTION_ORDER
        ]
        # chance-constrained choice: value only ranks the actions whose
        # simulated collision rate stays under the cap; if none qualify the
        # least dangerous action is taken regardless of value
        risk = [coll[a] / max(root.n[a], 1) for a in _ACTION_ORDER]
        safe_q = [
            q[a] if risk[a] <= self.cfg.max_collision_risk else -math.inf
            for a in _ACTION_ORDER
        ]
        if max(safe_q) > -math.inf:
            best = Action(argmax_with_safety_tiebreak(safe_q))
        else:
            best = Action(argmax_with_safety_tiebreak([-r for r in risk]))
        preds = {
            vid: Intent(int(np.argmax(intent_marginal(belief, vid))))
            for vid in range(1, self.n_others + 1)
        }
        return PlannerDecision(
            action=best,
            intent_predictions=preds,
            diagnostics={
                "simulations": float(sum(root.n)),
                "tree_depth": float(self._depth_reached),
            },
        )

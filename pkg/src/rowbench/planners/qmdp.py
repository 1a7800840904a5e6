"""QMDP: value iteration on a compact fully observable abstraction, then
belief-weighted Q argmax at decision time.

The compact space is 48 states: ego phase (Approaching/AtLine/InIntersection/
Cleared) x relative-priority class (ego-first / other-first / tie) x
pedestrian-in-ego-path x active-conflict flag. The abstract transition and
reward model below is hand-built; its collision, resolution and hazard
probabilities are module constants so the model is auditable and the solver
can be checked against an independent dense value iteration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .. import _kernels as K
from ..belief import Belief, intent_marginal
from ..domain import Action, Intent, RewardWeights
from .base import Planner, PlannerDecision, argmax_with_safety_tiebreak

N_STATES = K.N_COMPACT
N_ACTIONS = 3
_PHASES, _PRIS = 4, 3

# abstract-model constants
P_REACH = 0.5  # Go from Approaching reaches the line region this step
P_ADVANCE = 0.5  # Yield from Approaching reaches the line this step
P_CONF_RESOLVE = 0.35  # active conflict clears while ego waits
P_CONF_ARISE = 0.08  # a new conflict becomes active
P_PED_CLEAR = 0.40
P_PED_ARISE = 0.04
P_COLLIDE = (0.005, 0.55, 0.30)  # entering an active conflict, by priority class
P_COLLIDE_PED = 0.80  # entering over an occupied crosswalk


def sidx(phase: int, pri: int, ped: int, conf: int) -> int:
    return ((phase * _PRIS + pri) * 2 + ped) * 2 + conf


class QmdpConvergenceError(RuntimeError):
    pass


def build_compact_model(w: RewardWeights) -> Tuple[np.ndarray, np.ndarray]:
    """Dense (T, R) of the compact MDP; T is (S, A, S'), R is (S, A)."""
    T = np.zeros((N_STATES, N_ACTIONS, N_STATES))
    R = np.zeros((N_STATES, N_ACTIONS))

    def env_branches(ped: int, conf: int, waiting: bool):
        """(prob, ped', conf') pairs for the ambient world evolution."""
        if conf == 1:
            p_c = [(P_CONF_RESOLVE if waiting else 0.15, 0), (None, 1)]
            p_c[1] = (1.0 - p_c[0][0], 1)
        else:
            p_c = [(1.0 - P_CONF_ARISE, 0), (P_CONF_ARISE, 1)]
        if ped == 1:
            p_p = [(P_PED_CLEAR, 0), (1.0 - P_PED_CLEAR, 1)]
        else:
            p_p = [(1.0 - P_PED_ARISE, 0), (P_PED_ARISE, 1)]
        return [
            (pc * pp, pv, cv) for pp, pv in p_p for pc, cv in p_c
        ]

    def add_entry(
        s: int, a: int, pri: int, ped: int, conf: int, mass: float, from_phase: int
    ):
        """Ego crosses the stop line into the box with probability ``mass``."""
        pc = P_COLLIDE[pri] if conf == 1 else 0.0
        if ped == 1:
            pc = 1.0 - (1.0 - pc) * (1.0 - P_COLLIDE_PED)
        R[s, a] += mass * pc * w.collision_penalty
        # a clean entry earns the shaping reward for each phase advanced
        R[s, a] += mass * (1.0 - pc) * w.progress_reward * (2 - from_phase)
        T[s, a, sidx(3, pri, 0, 0)] += mass * pc  # wreck ends the episode
        T[s, a, sidx(2, pri, 0, 0)] += mass * (1.0 - pc)

    for phase in range(_PHASES):
        for pri in range(_PRIS):
            for ped in range(2):
                for conf in range(2):
                    s = sidx(phase, pri, ped, conf)
                    if phase == 3:
                        for a in range(N_ACTIONS):
                            T[s, a, s] = 1.0
                        continue
                    if phase == 2:
                        # committed: Go clears; braking in the box stalls there
                        a = int(Action.Go)
                        T[s, a, sidx(3, pri, 0, 0)] = 1.0
                        R[s, a] = w.step_cost + w.progress_reward
                        for a in (int(Action.Stop), int(Action.Yield)):
                            T[s, a, s] = 1.0
                            R[s, a] = w.step_cost
                        continue
                    for a in range(N_ACTIONS):
                        R[s, a] = w.step_cost
                        if a == int(Action.Go) and ped == 1:
                            R[s, a] += w.unsafe_penalty  # oracle demands Stop
                    # --- Go ---
                    a = int(Action.Go)
                    enter_p = 1.0 if phase == 1 else P_REACH
                    add_entry(s, a, pri, ped, conf, enter_p, phase)
                    if enter_p < 1.0:
                        for p, pv, cv in env_branches(ped, conf, waiting=False):
                            T[s, a, sidx(0, pri, pv, cv)] += (1.0 - enter_p) * p
                    # --- Yield ---
                    a = int(Action.Yield)
                    if phase == 1 and ped == 0 and conf == 0:
                        # clear to proceed, but a yielding driver hesitates
                        T[s, a, sidx(2, pri, 0, 0)] = P_ADVANCE
                        R[s, a] += P_ADVANCE * w.progress_reward
                        for p, pv, cv in env_branches(ped, conf, waiting=True):
                            T[s, a, sidx(1, pri, pv, cv)] += (1.0 - P_ADVANCE) * p
                    elif phase == 1 and ped == 0:
                        # waiting at the line: rolls in as soon as the
                        # conflict resolves, unlike a hard stop
                        for p, pv, cv in env_branches(ped, conf, waiting=True):
                            if cv == 0:
                                T[s, a, sidx(2, pri, 0, 0)] += p
                                R[s, a] += p * w.progress_reward
                            else:
                                T[s, a, sidx(1, pri, pv, cv)] += p
                    else:
                        creep = P_ADVANCE if (phase == 0 and ped == 0) else 0.0
                        if creep > 0.0:
                            R[s, a] += creep * w.progress_reward
                        for p, pv, cv in env_branches(ped, conf, waiting=True):
                            if creep > 0.0:
                                T[s, a, sidx(1, pri, pv, cv)] += creep * p
                                T[s, a, sidx(0, pri, pv, cv)] += (1.0 - creep) * p
                            else:
                                T[s, a, sidx(phase, pri, pv, cv)] += p
                    # --- Stop ---
                    a = int(Action.Stop)
                    for p, pv, cv in env_branches(ped, conf, waiting=True):
                        T[s, a, sidx(phase, pri, pv, cv)] += p
    assert np.allclose(T.sum(axis=2), 1.0)
    return T, R


def qmdp_solve(
    T: np.ndarray,
    R: np.ndarray,
    gamma: float,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Fixed point of the Bellman operator, sup-norm tolerance ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    Q = np.zeros((N_STATES, N_ACTIONS))
    for _ in range(max_iter):
        V = Q.max(axis=1)
        Qn = R + gamma * T @ V
        if np.abs(Qn - Q).max() < tol:
            return Qn
        Q = Qn
    raise QmdpConvergenceError(f"value iteration did not converge in {max_iter} sweeps")


def qmdp_plan(b: Belief, Q: np.ndarray) -> Action:
    idx = K.compact_encode_batch(b.particles)
    scores = b.weights @ Q[idx]
    return argmax_with_safety_tiebreak(scores)


class QmdpPlanner(Planner):
    name = "qmdp"
    uses_belief = True

    def __init__(self, tol: float = 1e-9):
        self.tol = tol
        self._cache = {}

    def reset(self, scn, scn_cfg, sim_cfg, seed):
        key = (sim_cfg.reward, round(sim_cfg.gamma, 12))
        if key not in self._cache:
            T, R = build_compact_model(sim_cfg.reward)
            self._cache[key] = qmdp_solve(T, R, sim_cfg.gamma, self.tol)
        self.Q = self._cache[key]
        self.n_others = len(scn.other_specs)

    def decide(self, step, obs=None, belief=None) -> PlannerDecision:
        action = qmdp_plan(belief, self.Q)
        preds = {
            vid: Intent(int(np.argmax(intent_marginal(belief, vid))))
            for vid in range(1, self.n_others + 1)
        }
        return PlannerDecision(action=action, intent_predictions=preds)

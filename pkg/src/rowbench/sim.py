"""Ground-truth world dynamics and the rule-of-the-road oracle.

Wraps the jitted kernels with per-step random streams that depend only on
``(scenario seed, timestep)``, never on the actions taken, so every planner
experiences the identical sequence of environment draws on a given scenario.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import _layout as L
from .domain import Action, RewardWeights
from .scenario import Scenario, ScenarioConfig, instantiate


@dataclass(frozen=True)
class SimConfig:
    gamma: float = 0.95
    horizon: int = 12
    reward: RewardWeights = field(default_factory=RewardWeights)
    slippery_brake_failure_prob: float = 0.2
    perception_latency: int = 1
    # generative-model pedestrian hazard used by belief tracking and planners
    ped_hazard_rate: float = 0.005
    ped_hazard_duration: int = 3

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.reward.validate()


_ZERO_PED = np.zeros(4)


def env_draws(seed: int, t: int):
    """Fixed-size random block for environment step/observation ``t``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(t),))
    rng = np.random.Generator(np.random.PCG64(ss))
    u_step = rng.random(L.STEP_DRAWS)
    u_obs = rng.random(L.OBS_U_DRAWS)
    n_obs = rng.standard_normal(L.OBS_N_DRAWS)
    return u_step, u_obs, n_obs


class Simulator:
    """Single-episode ground-truth dynamics for one scenario."""

    def __init__(self, scn: Scenario, sim_cfg: SimConfig, scn_cfg: ScenarioConfig):
        sim_cfg.validate()
        self.scn = scn
        self.cfg = sim_cfg
        self.noise = scn_cfg
        self.draw_count = 0

    def reset(self) -> np.ndarray:
        self.draw_count = 0
        return instantiate(self.scn)

    def ped_add_for(self, t: int) -> np.ndarray:
        add = np.zeros(4)
        for a, start, dur in self.scn.pedestrian_schedule:
            if start == t:
                add[a] = dur
        return add

    def step(self, s: np.ndarray, action: int) -> np.ndarray:
        t_next = int(s[L.S_TIMESTEP]) + 1
        u_step, _, _ = env_draws(self.scn.seed, int(s[L.S_TIMESTEP]))
        self.draw_count += L.STEP_DRAWS + L.OBS_U_DRAWS + L.OBS_N_DRAWS
        return K.step_core(
            s,
            int(action),
            u_step,
            self.ped_add_for(t_next),
            self.cfg.slippery_brake_failure_prob,
            0,
            0.0,
            0.0,
        )

    def observe(self, s: np.ndarray) -> np.ndarray:
        _, u_obs, n_obs = env_draws(self.scn.seed, int(s[L.S_TIMESTEP]))
        return K.observe_core(
            s,
            u_obs,
            n_obs,
            self.noise.dropout_prob,
            self.noise.occlusion_prob,
            self.noise.position_noise_sigma,
            self.noise.lane_cue_sigma,
        )

    def ground_truth_action(self, s: np.ndarray) -> Action:
        """Safe action computed with full knowledge of the current state,
        including compliance flags. Pedestrian arrivals only become relevant
        once they are in the state, so no schedule peek is needed."""
        return Action(int(K.oracle_action_core(s, -1, _ZERO_PED, 0)))

    def reward(self, s: np.ndarray, action: int, s_next: np.ndarray) -> float:
        w = self.cfg.reward
        oa = int(self.ground_truth_action(s))
        return float(
            K.reward_core(
                s, int(action), s_next, oa,
                w.collision_penalty, w.unsafe_penalty, w.progress_reward, w.step_cost,
            )
        )

    def is_terminal(self, s: np.ndarray) -> bool:
        return bool(K.is_terminal_core(s, float(self.cfg.horizon)))


# --- generative model (what belief tracking and the tree planners simulate) --


def generative_step(
    s: np.ndarray, action: int, rng: np.random.Generator, sim_cfg: SimConfig
) -> np.ndarray:
    """One step of the planners' internal model: same dynamics, but pedestrian
    arrivals follow a per-step hazard rate instead of the hidden schedule."""
    u = rng.random(L.STEP_DRAWS)
    return K.step_core(
        s,
        int(action),
        u,
        _ZERO_PED,
        sim_cfg.slippery_brake_failure_prob,
        1,
        sim_cfg.ped_hazard_rate,
        float(sim_cfg.ped_hazard_duration),
    )


def generative_observe(
    s: np.ndarray, rng: np.random.Generator, scn_cfg: ScenarioConfig
) -> np.ndarray:
    u = rng.random(L.OBS_U_DRAWS)
    n = rng.standard_normal(L.OBS_N_DRAWS)
    return K.observe_core(
        s,
        u,
        n,
        scn_cfg.dropout_prob,
        scn_cfg.occlusion_prob,
        scn_cfg.position_noise_sigma,
        scn_cfg.lane_cue_sigma,
    )


def model_reward(s, action, s_next, sim_cfg: SimConfig) -> float:
    """Reward as the planners evaluate it (schedule-blind oracle term)."""
    w = sim_cfg.reward
    oa = int(K.oracle_action_core(s, -1, _ZERO_PED, 0))
    return float(
        K.reward_core(
            s, int(action), s_next, oa,
            w.collision_penalty, w.unsafe_penalty, w.progress_reward, w.step_cost,
        )
    )


def obs_key(o: np.ndarray) -> tuple:
    """Coarse discrete key of an observation, used to index tree branches."""
    if o[L.O_DROPPED] > 0.5:
        return ("dropped",)
    parts = [int(o[L.O_EGO_PHASE]), int(o[L.O_EGO_DIST] / 4.0)]
    for j in range(L.MAX_OTHERS):
        b = L.O_VEH0 + j * L.O_VEH_STRIDE
        if o[b + L.OB_VISIBLE] < 0.5:
            parts.append(-1)
        else:
            cue = o[b + L.OB_CUE]
            parts.append(
                (
                    int(o[b + L.OB_APPROACH]),
                    int(o[b + L.OB_DIST] / 4.0),
                    int(o[b + L.OB_PHASE]),
                    -1 if cue < -0.5 else (1 if cue > 0.5 else 0),
                )
            )
    for a in range(4):
        parts.append(int(o[L.O_PED + a]))
    return tuple(parts)

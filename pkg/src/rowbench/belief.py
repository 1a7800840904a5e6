"""Weighted-particle belief over the hidden world state.

Particles are full state vectors; the hidden fields (other vehicles'
intents and compliance, pedestrian presence, road condition) are sampled
from the configured priors and re-weighted against each observation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import _layout as L
from .domain import Intent, Phase
from .scenario import Scenario, ScenarioConfig, instantiate
from .sim import SimConfig


@dataclass(frozen=True)
class Belief:
    particles: np.ndarray  # (n, STATE_SIZE)
    weights: np.ndarray  # (n,), sums to 1
    history_length: int = 0
    degenerate: bool = False  # last update hit total weight collapse

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        i = int(rng.choice(self.n, p=self.weights))
        return self.particles[i].copy()


class UnknownVehicleError(KeyError):
    pass


def _reassign_ranks(p: np.ndarray) -> None:
    etas = [(round(p[L.S_EGO_ETA], 6), int(p[L.S_EGO_APPROACH]), -1)]
    for j in range(L.MAX_OTHERS):
        b = L.S_OTHER0 + j * L.S_OTHER_STRIDE
        if p[b + L.OV_PRESENT] > 0.5:
            etas.append((round(p[b + L.OV_ETA], 6), int(p[b + L.OV_APPROACH]), j))
    for rank, (_, _, j) in enumerate(sorted(etas), start=1):
        if j < 0:
            p[L.S_EGO_RANK] = rank
        else:
            p[L.S_OTHER0 + j * L.S_OTHER_STRIDE + L.OV_RANK] = rank


class BeliefFilter:
    """Bootstrap filter with systematic resampling and reinvigoration."""

    def __init__(
        self,
        scn: Scenario,
        scn_cfg: ScenarioConfig,
        sim_cfg: SimConfig,
        n_particles: int,
        seed: int,
    ):
        if n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        self.scn = scn
        self.scn_cfg = scn_cfg
        self.sim_cfg = sim_cfg
        self.n = n_particles
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def init_belief(self, first_obs: np.ndarray) -> Belief:
        """Prior particles: the scenario's vehicle roster with every hidden
        field re-drawn from its prior. Intents, compliance, pedestrian state
        and road condition never come from the scenario's ground truth."""
        template = instantiate(self.scn)
        weights = np.asarray(self.scn_cfg.intent_weights)
        P = np.empty((self.n, L.STATE_SIZE))
        for k in range(self.n):
            p = template.copy()
            for j in range(L.MAX_OTHERS):
                b = L.S_OTHER0 + j * L.S_OTHER_STRIDE
                if p[b + L.OV_PRESENT] < 0.5:
                    continue
                p[b + L.OV_INTENT] = int(self.rng.choice(3, p=weights))
                # the filter cannot know which suite block it is in, so its
                # compliance prior is the mixture over both blocks
                p_runner = (
                    1.0 - self.scn_cfg.adversarial_fraction
                ) * self.scn_cfg.noncompliance_prob + (
                    self.scn_cfg.adversarial_fraction
                    * self.scn_cfg.adversarial_noncompliance_prob
                )
                p[b + L.OV_COMPLIANT] = 0.0 if self.rng.random() < p_runner else 1.0
                ob = L.O_VEH0 + j * L.O_VEH_STRIDE
                if first_obs[L.O_DROPPED] < 0.5 and first_obs[ob + L.OB_VISIBLE] > 0.5:
                    d = first_obs[ob + L.OB_DIST] + self.rng.normal(
                        0.0, self.scn_cfg.position_noise_sigma
                    )
                    p[b + L.OV_DIST] = max(d, 0.1)
                # the arrival slot is announced, so the first range reading
                # pins the nominal speed up to measurement noise; sampling
                # speed independently starves the filter of hypotheses that
                # stay consistent with later readings
                nom = p[b + L.OV_DIST] / max(p[b + L.OV_ETA], 0.5)
                nom *= 1.0 + self.rng.normal(0.0, 0.08)
                lo, hi = self.scn_cfg.speed_range
                nom = min(max(nom, 0.8 * lo), 1.2 * hi)
                p[b + L.OV_NOMINAL] = nom
                p[b + L.OV_SPEED] = nom
            for a in range(4):
                p[L.S_PED_PRESENT + a] = 0.0
                p[L.S_PED_STEPS + a] = 0.0
                if first_obs[L.O_DROPPED] < 0.5 and first_obs[L.O_PED + a] > 0.5:
                    p[L.S_PED_PRESENT + a] = 1.0
                    p[L.S_PED_STEPS + a] = self.sim_cfg.ped_hazard_duration
            p[L.S_SLIPPERY] = (
                1.0 if self.rng.random() < self.scn_cfg.slippery_prob else 0.0
            )
            _reassign_ranks(p)
            P[k] = p
        # condition the prior draw on every first-frame channel (rank and
        # intent cue included), then resample back to uniform weights
        lik = K.likelihood_batch(
            P,
            first_obs,
            self.scn_cfg.position_noise_sigma,
            self.scn_cfg.lane_cue_sigma,
        )
        total = float(lik.sum())
        if total > 1e-300:
            idx = K.systematic_resample(lik / total, float(self.rng.random()))
            P = P[idx].copy()
        w = np.full(self.n, 1.0 / self.n)
        return Belief(P, w, history_length=0)

    def update(self, b: Belief, action: int, obs: np.ndarray) -> Belief:
        U = self.rng.random((b.n, L.STEP_DRAWS))
        P = K.step_batch(
            b.particles,
            int(action),
            U,
            self.sim_cfg.slippery_brake_failure_prob,
            self.sim_cfg.ped_hazard_rate,
            float(self.sim_cfg.ped_hazard_duration),
        )
        # weight against the raw propagated particles first so inconsistent
        # speed hypotheses still pay the full likelihood penalty
        lik = K.likelihood_batch(
            P,
            obs,
            self.scn_cfg.position_noise_sigma,
            self.scn_cfg.lane_cue_sigma,
        )
        if obs[L.O_DROPPED] < 0.5:
            # ego odometry is exact: pin phase, distance and speed, and reset
            # the transit countdown for particles whose phase was wrong
            op = float(obs[L.O_EGO_PHASE])
            mism = P[:, L.S_EGO_PHASE] != op
            if mism.any() and op == float(Phase.InIntersection):
                P[mism, L.S_EGO_OCC] = np.where(
                    P[mism, L.S_EGO_INTENT] == float(Intent.Left), 3.0, 2.0
                )
            P[:, L.S_EGO_PHASE] = op
            P[:, L.S_EGO_DIST] = float(obs[L.O_EGO_DIST])
            P[:, L.S_EGO_SPEED] = float(obs[L.O_EGO_SPEED])
            # phase is sensed exactly for every visible vehicle and only ever
            # advances, so a particle that ran a vehicle ahead of the observed
            # phase can never become consistent again: snap it back
            for j in range(L.MAX_OTHERS):
                ob = L.O_VEH0 + j * L.O_VEH_STRIDE
                if obs[ob + L.OB_VISIBLE] < 0.5:
                    continue
                vb = L.S_OTHER0 + j * L.S_OTHER_STRIDE
                op = float(obs[ob + L.OB_PHASE])
                od = max(float(obs[ob + L.OB_DIST]), 0.0)
                wrong = (P[:, vb + L.OV_PRESENT] > 0.5) & (
                    P[:, vb + L.OV_PHASE] > op
                )
                if not wrong.any():
                    continue
                P[wrong, vb + L.OV_PHASE] = op
                if op == float(Phase.Approaching):
                    P[wrong, vb + L.OV_DIST] = max(od, 0.1)
                    P[wrong, vb + L.OV_SPEED] = P[wrong, vb + L.OV_NOMINAL]
                elif op == float(Phase.AtLine):
                    P[wrong, vb + L.OV_DIST] = 0.0
                    P[wrong, vb + L.OV_SPEED] = 0.0
                else:  # in the box
                    P[wrong, vb + L.OV_DIST] = 0.0
                    occ = np.where(
                        P[wrong, vb + L.OV_INTENT] == float(Intent.Left), 3.0, 2.0
                    )
                    P[wrong, vb + L.OV_OCC] = occ
            # crosswalk occupancy is sensed directly; clamp it wherever the
            # approach was not occluded so no phantom-pedestrian mass survives
            for a in range(4):
                sa = obs[L.O_PED + a]
                if sa < -0.5:
                    continue
                if sa > 0.5:
                    absent = P[:, L.S_PED_PRESENT + a] < 0.5
                    P[absent, L.S_PED_STEPS + a] = float(
                        self.sim_cfg.ped_hazard_duration
                    )
                    P[:, L.S_PED_PRESENT + a] = 1.0
                else:
                    P[:, L.S_PED_PRESENT + a] = 0.0
                    P[:, L.S_PED_STEPS + a] = 0.0
        w = b.weights * lik
        total = float(w.sum())
        degenerate = total <= 1e-300
        if degenerate:
            # every hypothesis contradicted the observation: keep the
            # propagated particles, reset weights, and jitter them apart
            P = self._reinvigorate(P)
            w = np.full(b.n, 1.0 / b.n)
        else:
            w = w / total
        ess = 1.0 / float(np.square(w).sum())
        if ess < b.n / 2.0:
            idx = K.systematic_resample(w, float(self.rng.random()))
            P = P[idx].copy()
            w = np.full(b.n, 1.0 / b.n)
        return Belief(P, w, history_length=b.history_length + 1, degenerate=degenerate)

    def predict(self, b: Belief, action: int) -> Belief:
        """Propagate one step without an observation (used to bridge the
        perception latency: the newest frame describes the previous state).

        The propagation is deterministic — median draws, no hazard
        injection — so bridging only advances each hypothesis' kinematics.
        Widening the belief with hazards that no observation will ever
        confirm would systematically bias the bridged decision."""
        U = np.full((b.n, L.STEP_DRAWS), 0.5)
        P = K.step_batch(
            b.particles,
            int(action),
            U,
            0.0,
            0.0,
            float(self.sim_cfg.ped_hazard_duration),
        )
        return Belief(P, b.weights.copy(), history_length=b.history_length + 1)

    def posterior_weights(self, b: Belief, action: int, obs: np.ndarray) -> np.ndarray:
        """Normalized weights after propagation and re-weighting but before
        resampling (exposed for exact-filter comparisons)."""
        U = self.rng.random((b.n, L.STEP_DRAWS))
        P = K.step_batch(
            b.particles, int(action), U,
            self.sim_cfg.slippery_brake_failure_prob,
            self.sim_cfg.ped_hazard_rate,
            float(self.sim_cfg.ped_hazard_duration),
        )
        w = b.weights * K.likelihood_batch(
            P, obs, self.scn_cfg.position_noise_sigma, self.scn_cfg.lane_cue_sigma
        )
        return w / w.sum()

    def _reinvigorate(self, P: np.ndarray) -> np.ndarray:
        out = P.copy()
        weights = np.asarray(self.scn_cfg.intent_weights)
        for k in range(out.shape[0]):
            slots = [
                j
                for j in range(L.MAX_OTHERS)
                if out[k, L.S_OTHER0 + j * L.S_OTHER_STRIDE + L.OV_PRESENT] > 0.5
            ]
            if not slots:
                continue
            j = slots[int(self.rng.integers(len(slots)))]
            b = L.S_OTHER0 + j * L.S_OTHER_STRIDE
            if out[k, b + L.OV_PHASE] < K.INBOX:
                d = out[k, b + L.OV_DIST] + self.rng.normal(
                    0.0, self.scn_cfg.position_noise_sigma
                )
                out[k, b + L.OV_DIST] = max(d, 0.0)
            # re-draw one hidden discrete field
            if self.rng.random() < 0.5:
                out[k, b + L.OV_INTENT] = int(self.rng.choice(3, p=weights))
            else:
                out[k, b + L.OV_COMPLIANT] = (
                    0.0
                    if self.rng.random() < max(self.scn_cfg.noncompliance_prob, 0.5)
                    else 1.0
                )
        return out


def intent_marginal(b: Belief, vehicle_id: int) -> np.ndarray:
    """Posterior over the intent of other-vehicle ``vehicle_id`` (1-based)."""
    j = vehicle_id - 1
    if not 0 <= j < L.MAX_OTHERS:
        raise UnknownVehicleError(vehicle_id)
    base = L.S_OTHER0 + j * L.S_OTHER_STRIDE
    present = b.particles[:, base + L.OV_PRESENT] > 0.5
    if not present.any():
        raise UnknownVehicleError(vehicle_id)
    out = np.zeros(3)
    intents = b.particles[present, base + L.OV_INTENT].astype(int)
    w = b.weights[present]
    for i in range(3):
        out[i] = w[intents == i].sum()
    s = out.sum()
    return out / s if s > 0 else np.full(3, 1.0 / 3.0)


def pedestrian_posterior(b: Belief) -> np.ndarray:
    """Per-approach probability that a pedestrian is crossing."""
    out = np.zeros(4)
    for a in range(4):
        out[a] = float(b.weights[b.particles[:, L.S_PED_PRESENT + a] > 0.5].sum())
    return out

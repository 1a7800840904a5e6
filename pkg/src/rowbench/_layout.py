"""Flat array encodings of world states and observations.

The simulator, belief filter and tree planners all run on fixed-size
float64 vectors so the hot loops can be jitted (see :mod:`rowbench._kernels`).
This module owns the layout constants and the converters to and from the
friendly dataclasses in :mod:`rowbench.domain`.
"""
from __future__ import annotations

import numpy as np

from .domain import (
    ApproachDirection,
    Intent,
    PedestrianFlag,
    Phase,
    VehicleState,
    WorldState,
)

MAX_OTHERS = 3

# --- state vector -----------------------------------------------------------
# ego block
S_EGO_APPROACH = 0
S_EGO_INTENT = 1
S_EGO_DIST = 2
S_EGO_SPEED = 3
S_EGO_NOMINAL = 4
S_EGO_PHASE = 5
S_EGO_OCC = 6
S_EGO_RANK = 7
S_EGO_ETA = 8
# per-other block, base S_OTHER0 + i * S_OTHER_STRIDE
S_OTHER0 = 9
S_OTHER_STRIDE = 11
OV_PRESENT = 0
OV_APPROACH = 1
OV_INTENT = 2
OV_DIST = 3
OV_SPEED = 4
OV_NOMINAL = 5
OV_PHASE = 6
OV_OCC = 7
OV_RANK = 8
OV_ETA = 9
OV_COMPLIANT = 10
# tail
S_PED_PRESENT = S_OTHER0 + MAX_OTHERS * S_OTHER_STRIDE  # 42..45
S_PED_STEPS = S_PED_PRESENT + 4  # 46..49
S_SLIPPERY = S_PED_STEPS + 4  # 50
S_TIMESTEP = S_SLIPPERY + 1  # 51
S_COLLISION = S_TIMESTEP + 1  # 52
STATE_SIZE = S_COLLISION + 1

# --- observation vector -----------------------------------------------------
O_DROPPED = 0
O_EGO_DIST = 1
O_EGO_PHASE = 2
O_EGO_SPEED = 3
O_VEH0 = 4
O_VEH_STRIDE = 6
OB_VISIBLE = 0
OB_APPROACH = 1
OB_DIST = 2
OB_RANK = 3
OB_PHASE = 4
OB_CUE = 5
O_PED = O_VEH0 + MAX_OTHERS * O_VEH_STRIDE  # 22..25, -1 = occluded
O_TIMESTEP = O_PED + 4  # 26
OBS_SIZE = O_TIMESTEP + 1

# random-draw budgets per step (fixed so environment streams are
# action-independent and identical across planners)
STEP_DRAWS = 12  # [0] brake failure, [1..4] ped hazard, [5..7] speed jitter, [9..11] compliance jitter
OBS_U_DRAWS = 11  # [0] dropout, [1..3] occlusion, [4..6] rank, [7..10] ped occl
OBS_N_DRAWS = 6  # [0..2] distance noise, [3..5] lane-offset noise

# lane-offset cue centre per intent: Left leans -1, Straight 0, Right +1
INTENT_CUE = np.array([0.0, -1.0, 1.0])


def encode_state(w: WorldState) -> np.ndarray:
    v = np.zeros(STATE_SIZE)
    e = w.ego
    v[S_EGO_APPROACH] = int(e.approach)
    v[S_EGO_INTENT] = int(e.intent)
    v[S_EGO_DIST] = e.distance_to_line
    v[S_EGO_SPEED] = e.speed
    v[S_EGO_NOMINAL] = e.nominal_speed
    v[S_EGO_PHASE] = int(e.phase)
    v[S_EGO_OCC] = e.occupancy_remaining
    v[S_EGO_RANK] = e.arrival_rank
    v[S_EGO_ETA] = e.scheduled_eta
    for i, o in enumerate(w.others):
        b = S_OTHER0 + i * S_OTHER_STRIDE
        v[b + OV_PRESENT] = 1.0
        v[b + OV_APPROACH] = int(o.approach)
        v[b + OV_INTENT] = int(o.intent)
        v[b + OV_DIST] = o.distance_to_line
        v[b + OV_SPEED] = o.speed
        v[b + OV_NOMINAL] = o.nominal_speed
        v[b + OV_PHASE] = int(o.phase)
        v[b + OV_OCC] = o.occupancy_remaining
        v[b + OV_RANK] = o.arrival_rank
        v[b + OV_ETA] = o.scheduled_eta
        v[b + OV_COMPLIANT] = 1.0 if o.compliant else 0.0
    for a in range(4):
        v[S_PED_PRESENT + a] = 1.0 if w.pedestrians[a].present else 0.0
        v[S_PED_STEPS + a] = w.pedestrians[a].steps_remaining
    v[S_SLIPPERY] = 1.0 if w.slippery else 0.0
    v[S_TIMESTEP] = w.timestep
    v[S_COLLISION] = 1.0 if w.collision_occurred else 0.0
    return v


def decode_state(v: np.ndarray) -> WorldState:
    ego = VehicleState(
        id=0,
        approach=ApproachDirection(int(v[S_EGO_APPROACH])),
        intent=Intent(int(v[S_EGO_INTENT])),
        arrival_rank=int(v[S_EGO_RANK]),
        distance_to_line=float(v[S_EGO_DIST]),
        speed=float(v[S_EGO_SPEED]),
        nominal_speed=float(v[S_EGO_NOMINAL]),
        compliant=True,
        phase=Phase(int(v[S_EGO_PHASE])),
        occupancy_remaining=int(v[S_EGO_OCC]),
        scheduled_eta=float(v[S_EGO_ETA]),
    )
    others = []
    for i in range(MAX_OTHERS):
        b = S_OTHER0 + i * S_OTHER_STRIDE
        if v[b + OV_PRESENT] < 0.5:
            continue
        others.append(
            VehicleState(
                id=i + 1,
                approach=ApproachDirection(int(v[b + OV_APPROACH])),
                intent=Intent(int(v[b + OV_INTENT])),
                arrival_rank=int(v[b + OV_RANK]),
                distance_to_line=float(v[b + OV_DIST]),
                speed=float(v[b + OV_SPEED]),
                nominal_speed=float(v[b + OV_NOMINAL]),
                compliant=v[b + OV_COMPLIANT] > 0.5,
                phase=Phase(int(v[b + OV_PHASE])),
                occupancy_remaining=int(v[b + OV_OCC]),
                scheduled_eta=float(v[b + OV_ETA]),
            )
        )
    peds = tuple(
        PedestrianFlag(
            present=v[S_PED_PRESENT + a] > 0.5,
            steps_remaining=int(v[S_PED_STEPS + a]),
        )
        for a in range(4)
    )
    return WorldState(
        ego=ego,
        others=tuple(others),
        pedestrians=peds,
        slippery=v[S_SLIPPERY] > 0.5,
        timestep=int(v[S_TIMESTEP]),
        collision_occurred=v[S_COLLISION] > 0.5,
    )

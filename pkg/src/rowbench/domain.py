"""Core vocabulary for the four-way intersection world.

Approaches, intents, actions and the crossing/merging relation between
planned paths through the shared conflict box. Everything here is an
immutable value; the heavy numeric code works on array encodings of these
types (see :mod:`rowbench._layout`).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class ApproachDirection(enum.IntEnum):
    North = 0
    East = 1
    South = 2
    West = 3


class Intent(enum.IntEnum):
    Straight = 0
    Left = 1
    Right = 2


class Action(enum.IntEnum):
    Stop = 0
    Yield = 1
    Go = 2


class Phase(enum.IntEnum):
    Approaching = 0
    AtLine = 1
    InIntersection = 2
    Cleared = 3


def right_neighbor(a: ApproachDirection) -> ApproachDirection:
    """Approach whose vehicles sit on the right-hand side of a vehicle
    arriving from ``a`` (right-hand traffic): North->West, West->South,
    South->East, East->North."""
    return ApproachDirection((int(a) + 3) % 4)


def opposite(a: ApproachDirection) -> ApproachDirection:
    return ApproachDirection((int(a) + 2) % 4)


def exit_side(a: ApproachDirection, i: Intent) -> ApproachDirection:
    """Side of the intersection a movement leaves through."""
    if i == Intent.Straight:
        return ApproachDirection((int(a) + 2) % 4)
    if i == Intent.Left:
        return ApproachDirection((int(a) + 1) % 4)
    return ApproachDirection((int(a) + 3) % 4)


# Quadrant cells of the conflict box, labelled by the approach that enters
# through them under right-hand traffic: NW=0 (North entry), NE=1 (East),
# SE=2 (South), SW=3 (West). Cell 4 is the centre, crossed by left turns.
_CENTER = 4


def _path_cells(a: int, i: int) -> frozenset:
    if i == Intent.Straight:
        return frozenset({a, (a + 3) % 4})
    if i == Intent.Left:
        return frozenset({a, _CENTER, (a + 2) % 4})
    return frozenset({a})


def paths_conflict(a, b) -> bool:
    """True iff two planned paths cross or merge inside the conflict box.

    ``a`` and ``b`` are ``(ApproachDirection, Intent)`` pairs. Symmetric and
    total. Opposing left turns pass clear of each other (each keeps to its
    own side of the centre) and are declared non-conflicting.
    """
    (aa, ai), (ba, bi) = (int(a[0]), int(a[1])), (int(b[0]), int(b[1]))
    if aa == ba:
        return True  # same entry lane
    if ai == Intent.Left and bi == Intent.Left and (aa + 2) % 4 == ba:
        return False
    if _path_cells(aa, ai) & _path_cells(ba, bi):
        return True
    return exit_side(ApproachDirection(aa), Intent(ai)) == exit_side(
        ApproachDirection(ba), Intent(bi)
    )


def conflict_table() -> np.ndarray:
    """12x12 boolean table indexed by ``approach * 3 + intent``."""
    t = np.zeros((12, 12), dtype=np.bool_)
    for aa in range(4):
        for ai in range(3):
            for ba in range(4):
                for bi in range(3):
                    t[aa * 3 + ai, ba * 3 + bi] = paths_conflict(
                        (aa, ai), (ba, bi)
                    )
    return t


_TABLE_HEADER = (
    "# Conflict relation between planned paths through the intersection box.\n"
    "# One row per ordered pair: approach_a,intent_a,approach_b,intent_b,conflict\n"
    "# conflict=1 iff the paths cross or merge (same entry lane, crossing\n"
    "# quadrant cells, or shared exit lane); opposing left turns are 0.\n"
)


def export_conflict_table(path) -> None:
    """Write the full 144-row conflict fixture for auditing."""
    lines = [_TABLE_HEADER, "approach_a,intent_a,approach_b,intent_b,conflict\n"]
    for aa in ApproachDirection:
        for ai in Intent:
            for ba in ApproachDirection:
                for bi in Intent:
                    c = int(paths_conflict((aa, ai), (ba, bi)))
                    lines.append(
                        f"{aa.name},{ai.name},{ba.name},{bi.name},{c}\n"
                    )
    Path(path).write_text("".join(lines))


def bundled_conflict_table_path() -> Path:
    return Path(__file__).parent / "data" / "conflict_table.csv"


@dataclass(frozen=True)
class VehicleState:
    """One vehicle, ego or other. Distances in metres, speeds in m per step."""

    id: int
    approach: ApproachDirection
    intent: Intent
    arrival_rank: int
    distance_to_line: float
    speed: float
    nominal_speed: float
    compliant: bool = True
    phase: Phase = Phase.Approaching
    occupancy_remaining: int = 0
    scheduled_eta: float = 0.0


@dataclass(frozen=True)
class PedestrianFlag:
    present: bool = False
    steps_remaining: int = 0


@dataclass(frozen=True)
class WorldState:
    """Full hidden ground truth for one timestep."""

    ego: VehicleState
    others: tuple = ()
    pedestrians: tuple = (
        PedestrianFlag(),
        PedestrianFlag(),
        PedestrianFlag(),
        PedestrianFlag(),
    )
    slippery: bool = False
    timestep: int = 0
    collision_occurred: bool = False


@dataclass(frozen=True)
class RewardWeights:
    """Signs are the contract; magnitudes make one collision dominate any
    efficiency gain over a 12-step horizon."""

    collision_penalty: float = -100.0
    unsafe_penalty: float = -10.0
    progress_reward: float = 10.0
    step_cost: float = -1.0

    def validate(self) -> None:
        if not (self.collision_penalty < self.unsafe_penalty < 0):
            raise ValueError("require collision_penalty < unsafe_penalty < 0")
        if not self.progress_reward > 0:
            raise ValueError("progress_reward must be positive")
        if self.step_cost > 0:
            raise ValueError("step_cost must be <= 0")


def occupancy_duration(i: Intent) -> int:
    """Steps a vehicle occupies the conflict box: left turns take longer."""
    return 3 if i == Intent.Left else 2

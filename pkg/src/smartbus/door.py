"""Smart bus-door state machine.

A door may open normally only when the perception side has flagged a
detected stop AND the bus is geometrically inside the stop's proximity
radius; either signal alone is not enough.  Any other open request is
recorded as an emergency open: it is reported (the caller must emit the
alert), not blocked, since the driver may genuinely need the door.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

from . import geo

DEFAULT_PROXIMITY_RADIUS_M = 30.0


class DoorStatus(str, Enum):
    CLOSED = "closed"
    OPEN_NORMAL = "open_normal"
    OPEN_EMERGENCY = "open_emergency"


class OutcomeKind(str, Enum):
    NORMAL_OPEN = "normal_open"
    EMERGENCY_OPEN = "emergency_open"


class DoorStateError(RuntimeError):
    """Illegal transition requested (open an open door, close a closed one)."""


@dataclass(frozen=True)
class DoorState:
    status: DoorStatus
    last_transition: float


@dataclass(frozen=True)
class DoorOutcome:
    kind: OutcomeKind
    stop_id: Optional[str]
    distance_to_stop_m: float

    def __post_init__(self):
        if self.kind is OutcomeKind.NORMAL_OPEN and self.stop_id is None:
            raise ValueError("normal_open requires a stop_id")


def nearest_stop(
    position: geo.Point, stops: Mapping[str, geo.Point]
) -> tuple[Optional[str], float]:
    """Closest stop and its distance; (None, inf) for an empty registry."""
    best_id, best_dist = None, math.inf
    for stop_id in sorted(stops):
        dist = geo.distance_m(position, stops[stop_id])
        if dist < best_dist:
            best_id, best_dist = stop_id, dist
    return best_id, best_dist


class Door:
    """Single door owned by one bus; transitions are serialized by the owner."""

    def __init__(self, now: float = 0.0):
        self._state = DoorState(DoorStatus.CLOSED, now)

    @property
    def state(self) -> DoorState:
        return self._state

    @property
    def is_open(self) -> bool:
        return self._state.status is not DoorStatus.CLOSED

    def request_open(
        self,
        bus_position: geo.Point,
        stops: Mapping[str, geo.Point],
        stop_detected_flag: bool,
        proximity_radius_m: float = DEFAULT_PROXIMITY_RADIUS_M,
        now: float = 0.0,
    ) -> DoorOutcome:
        """Open the door, deciding between a normal and an emergency open.

        The emergency branch only classifies; emitting the alert envelope
        is the caller's job so this stays transport-free.
        """
        if proximity_radius_m <= 0:
            raise ValueError("proximity_radius_m must be strictly positive")
        if self.is_open:
            raise DoorStateError(f"door already {self._state.status.value}")
        stop_id, distance = nearest_stop(bus_position, stops)
        if stop_detected_flag and stop_id is not None and distance <= proximity_radius_m:
            outcome = DoorOutcome(OutcomeKind.NORMAL_OPEN, stop_id, distance)
            self._state = DoorState(DoorStatus.OPEN_NORMAL, now)
        else:
            outcome = DoorOutcome(OutcomeKind.EMERGENCY_OPEN, None, distance)
            self._state = DoorState(DoorStatus.OPEN_EMERGENCY, now)
        return outcome

    def close(self, now: float = 0.0) -> DoorState:
        if not self.is_open:
            raise DoorStateError("door already closed")
        self._state = DoorState(DoorStatus.CLOSED, now)
        return self._state

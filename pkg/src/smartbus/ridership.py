"""RFID punch ledger and ridership aggregation.

The reader hardware does not encode direction, so it is inferred by
toggling: a card not currently onboard boards, a card onboard exits, and
the first-ever punch of a card is always a board.  Toggling is scoped per
(card, bus); the fleet-level view (and cross-bus anomalies) live with the
server, which sees every bus's punches.

Aggregation buckets are calendar-aligned in UTC; weekly buckets start
Monday 00:00.
"""

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Optional


class Direction(str, Enum):
    BOARD = "board"
    EXIT = "exit"


class Granularity(str, Enum):
    HOURLY = "hourly"
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"


class CapacityError(RuntimeError):
    """Board refused: bus full and standing not allowed."""


class OrderError(ValueError):
    """Punch timestamp earlier than the ledger's latest record."""


@dataclass(frozen=True)
class PunchRecord:
    card_id: str
    direction: Direction
    timestamp: float  # POSIX seconds, UTC
    stop_id: Optional[str]
    bus_id: str


@dataclass
class OccupancyState:
    capacity: int
    standing_allowed: bool = True
    onboard: set = field(default_factory=set)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be a positive integer")


@dataclass(frozen=True)
class RidershipBucket:
    bucket_start: datetime
    granularity: Granularity
    boardings: int


class Ledger:
    """Append-only punch history for one bus (single writer)."""

    def __init__(self, bus_id: str):
        self.bus_id = bus_id
        self.records: list[PunchRecord] = []

    @property
    def last_timestamp(self) -> Optional[float]:
        return self.records[-1].timestamp if self.records else None

    def append(self, record: PunchRecord) -> None:
        self.records.append(record)


def punch(
    state: OccupancyState,
    history: Ledger,
    card_id: str,
    timestamp: float,
    stop_id: Optional[str] = None,
) -> PunchRecord:
    """Apply one card tap: infer direction, update occupancy, append record."""
    last = history.last_timestamp
    if last is not None and timestamp < last:
        raise OrderError(
            f"punch at {timestamp} precedes ledger tail {last} on {history.bus_id}"
        )
    if card_id in state.onboard:
        direction = Direction.EXIT
        state.onboard.discard(card_id)
    else:
        if not state.standing_allowed and len(state.onboard) >= state.capacity:
            raise CapacityError(
                f"{history.bus_id} full ({state.capacity}); standing not allowed"
            )
        direction = Direction.BOARD
        state.onboard.add(card_id)
    record = PunchRecord(card_id, direction, timestamp, stop_id, history.bus_id)
    history.append(record)
    return record


def seats_available(state: OccupancyState) -> int:
    return max(state.capacity - len(state.onboard), 0)


# --- calendar bucketing


def _floor_bucket(moment: datetime, granularity: Granularity) -> datetime:
    moment = moment.astimezone(timezone.utc)
    if granularity is Granularity.HOURLY:
        return moment.replace(minute=0, second=0, microsecond=0)
    day = moment.replace(hour=0, minute=0, second=0, microsecond=0)
    if granularity is Granularity.DAILY:
        return day
    if granularity is Granularity.WEEKLY:
        return day - timedelta(days=day.weekday())
    return day.replace(day=1)


def _next_bucket(bucket: datetime, granularity: Granularity) -> datetime:
    if granularity is Granularity.HOURLY:
        return bucket + timedelta(hours=1)
    if granularity is Granularity.DAILY:
        return bucket + timedelta(days=1)
    if granularity is Granularity.WEEKLY:
        return bucket + timedelta(days=7)
    if bucket.month == 12:
        return bucket.replace(year=bucket.year + 1, month=1)
    return bucket.replace(month=bucket.month + 1)


def aggregate(
    records,
    window_start: datetime,
    window_end: datetime,
    granularity: Granularity,
) -> list[RidershipBucket]:
    """Count boardings into calendar buckets covering [start, end).

    Exits are not counted.  Every bucket the window touches is emitted,
    zeros included, so report consumers see gaps explicitly.
    """
    if window_start >= window_end:
        raise ValueError("window_start must precede window_end")
    granularity = Granularity(granularity)
    start = window_start.astimezone(timezone.utc)
    end = window_end.astimezone(timezone.utc)

    counts: dict[datetime, int] = {}
    for record in records:
        if record.direction is not Direction.BOARD:
            continue
        moment = datetime.fromtimestamp(record.timestamp, tz=timezone.utc)
        if not start <= moment < end:
            continue
        bucket = _floor_bucket(moment, granularity)
        counts[bucket] = counts.get(bucket, 0) + 1

    buckets = []
    cursor = _floor_bucket(start, granularity)
    while cursor < end:
        buckets.append(RidershipBucket(cursor, granularity, counts.get(cursor, 0)))
        cursor = _next_bucket(cursor, granularity)
    return buckets


# --- ledger persistence: timestamp,bus_id,card_id,direction,stop_id


def format_ledger_line(record: PunchRecord) -> str:
    stop = record.stop_id if record.stop_id is not None else ""
    return (
        f"{record.timestamp!r},{record.bus_id},{record.card_id},"
        f"{record.direction.value},{stop}"
    )


def parse_ledger_lines(lines) -> list[PunchRecord]:
    records = []
    for line_no, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        parts = text.split(",")
        if len(parts) != 5:
            raise ValueError(f"ledger line {line_no}: expected 5 fields")
        ts, bus_id, card_id, direction, stop = parts
        records.append(
            PunchRecord(
                card_id,
                Direction(direction),
                float(ts),
                stop or None,
                bus_id,
            )
        )
    return records


def write_ledger_file(path, records) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(format_ledger_line(record) + "\n")


def read_ledger_file(path) -> list[PunchRecord]:
    with open(path, encoding="utf-8") as handle:
        return parse_ledger_lines(handle)

"""Scenario documents: schema, loading, and whole-file validation.

Scenarios are versioned JSON.  Validation is exhaustive: every problem in
the document is reported, not just the first, so authors fix a file in one
pass.
"""

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from ..netproto import ChannelConfig
from ..perception import DetectorModel, ObjectClass
from .routes import Route

SCHEMA_VERSION = 1
DEFAULT_START_TIME = "2025-01-06T00:00:00Z"


class ScenarioError(ValueError):
    """Invalid scenario; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class StopSpec:
    stop_id: str
    position: tuple
    proximity_radius_m: float = 30.0
    clock_skew_s: float = 0.0
    soc_trace: Optional[list] = None  # 24 hourly fractions; None = always on


@dataclass(frozen=True)
class BusSpec:
    bus_id: str
    route_id: str
    capacity: int = 40
    speed_mps: float = 10.0
    dwell_s: float = 8.0
    standing_allowed: bool = True


@dataclass(frozen=True)
class PassengerSpec:
    card_id: str
    board_stop: str
    time_s: float
    exit_stop: Optional[str] = None


@dataclass(frozen=True)
class HazardSpec:
    bus_id: str
    object_id: str
    class_label: ObjectClass
    time_s: float
    duration_s: float
    distance_m: float
    in_blind_zone: bool


@dataclass(frozen=True)
class DoorRequestSpec:
    bus_id: str
    time_s: float


@dataclass(frozen=True)
class SonarSpec:
    noise_sigma_m: float = 0.02
    max_range_m: float = 4.0


@dataclass(frozen=True)
class RetransmitSpec:
    interval_ms: float = 500.0
    max_retries: int = 20


@dataclass
class ScenarioConfig:
    name: str
    duration_s: float
    root_seed: int
    start_epoch: float
    routes: dict
    stops: dict
    buses: dict
    passengers: list
    hazards: list
    door_requests: list
    detector: DetectorModel = field(default_factory=DetectorModel)
    stop_sign_threshold: float = 0.5
    sonar: SonarSpec = field(default_factory=SonarSpec)
    collision_threshold_m: float = 1.0
    perception_hz: float = 10.0
    telemetry_hz: float = 1.0
    default_speed_mps: float = 8.0
    bus_server_channel: ChannelConfig = field(default_factory=ChannelConfig)
    server_stop_channel: ChannelConfig = field(default_factory=ChannelConfig)
    retransmit: RetransmitSpec = field(default_factory=RetransmitSpec)

    @property
    def duration_ms(self) -> int:
        return int(round(self.duration_s * 1000))


def _parse_start(text: str, errors: list[str]) -> float:
    try:
        moment = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        errors.append(f"start_time_utc: cannot parse {text!r}")
        return 0.0
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.timestamp()


def _chan(doc: dict, name: str, errors: list[str]) -> ChannelConfig:
    spec = doc.get(name, {})
    latency = spec.get("latency_ms", [0.0, 0.0])
    try:
        return ChannelConfig(
            loss_probability=float(spec.get("loss_probability", 0.0)),
            latency_min_ms=float(latency[0]),
            latency_max_ms=float(latency[1]),
        )
    except (ValueError, TypeError, IndexError) as exc:
        errors.append(f"channels.{name}: {exc}")
        return ChannelConfig()


def _sorted_by_time(entries: list, label: str, errors: list[str]) -> None:
    times = [e.get("time_s", 0.0) for e in entries]
    if any(b < a for a, b in zip(times, times[1:])):
        errors.append(f"{label}: entries must be sorted by time_s")


def load_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document; raises with ALL errors."""
    errors: list[str] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"not valid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario must be a JSON object"])

    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    duration_s = doc.get("duration_s", 0)
    if not isinstance(duration_s, (int, float)) or duration_s <= 0:
        errors.append("duration_s: must be a positive number")
        duration_s = 1.0

    start_epoch = _parse_start(doc.get("start_time_utc", DEFAULT_START_TIME), errors)

    routes: dict[str, Route] = {}
    for idx, spec in enumerate(doc.get("routes", [])):
        rid = spec.get("id", f"<route #{idx}>")
        points = spec.get("points", [])
        bad = False
        for p in points:
            if (
                not isinstance(p, (list, tuple))
                or len(p) != 2
                or not all(isinstance(c, (int, float)) for c in p)
                or not -90 <= p[0] <= 90
                or not -180 <= p[1] <= 180
            ):
                errors.append(f"route {rid}: invalid point {p!r}")
                bad = True
        if bad:
            continue
        try:
            routes[rid] = Route(rid, [tuple(p) for p in points], bool(spec.get("circular", False)))
        except ValueError as exc:
            errors.append(str(exc))
    seen_routes = [spec.get("id") for spec in doc.get("routes", [])]
    if len(set(seen_routes)) != len(seen_routes):
        errors.append("routes: duplicate route ids")

    stops: dict[str, StopSpec] = {}
    for spec in doc.get("stops", []):
        sid = spec.get("id", "<unnamed stop>")
        if sid in stops:
            errors.append(f"stop {sid}: duplicate id")
        position = spec.get("position", [0, 0])
        radius = float(spec.get("proximity_radius_m", 30.0))
        if radius <= 0:
            errors.append(f"stop {sid}: proximity_radius_m must be > 0")
        trace = spec.get("soc_trace")
        if trace is not None:
            if len(trace) != 24 or not all(
                isinstance(v, (int, float)) and 0 <= v <= 1 for v in trace
            ):
                errors.append(f"stop {sid}: soc_trace needs 24 values in [0, 1]")
                trace = None
            else:
                trace = [float(v) for v in trace]
        stops[sid] = StopSpec(
            sid,
            (float(position[0]), float(position[1])),
            radius,
            float(spec.get("clock_skew_s", 0.0)),
            trace,
        )

    buses: dict[str, BusSpec] = {}
    for spec in doc.get("buses", []):
        bid = spec.get("id", "<unnamed bus>")
        if bid in buses:
            errors.append(f"bus {bid}: duplicate id")
        rid = spec.get("route")
        if rid not in routes:
            errors.append(f"bus {bid}: references missing route {rid!r}")
        capacity = int(spec.get("capacity", 40))
        if capacity < 1:
            errors.append(f"bus {bid}: capacity must be >= 1")
        speed = float(spec.get("speed_mps", 10.0))
        if speed < 0:
            errors.append(f"bus {bid}: speed_mps must be >= 0")
        dwell = float(spec.get("dwell_s", 8.0))
        if dwell < 0:
            errors.append(f"bus {bid}: dwell_s must be >= 0")
        buses[bid] = BusSpec(
            bid, rid, capacity, speed, dwell, bool(spec.get("standing_allowed", True))
        )

    passengers = []
    cards = set()
    for spec in doc.get("passengers", []):
        card = spec.get("card", "<unnamed card>")
        if card in cards:
            errors.append(f"passenger {card}: duplicate card")
        cards.add(card)
        board = spec.get("board_stop")
        if board not in stops:
            errors.append(f"passenger {card}: references missing stop {board!r}")
        exit_stop = spec.get("exit_stop")
        if exit_stop is not None and exit_stop not in stops:
            errors.append(f"passenger {card}: references missing exit stop {exit_stop!r}")
        time_s = float(spec.get("time_s", 0.0))
        if time_s < 0:
            errors.append(f"passenger {card}: time_s must be >= 0")
        passengers.append(PassengerSpec(card, board, time_s, exit_stop))
    _sorted_by_time(doc.get("passengers", []), "passengers", errors)

    hazards = []
    for idx, spec in enumerate(doc.get("hazards", [])):
        oid = spec.get("object_id", f"hazard#{idx}")
        bid = spec.get("bus")
        if bid not in buses:
            errors.append(f"hazard {oid}: references missing bus {bid!r}")
        try:
            cls = ObjectClass(spec.get("class", "person"))
        except ValueError:
            errors.append(f"hazard {oid}: unknown class {spec.get('class')!r}")
            cls = ObjectClass.PERSON
        distance = float(spec.get("distance_m", 0.0))
        if distance < 0:
            errors.append(f"hazard {oid}: distance_m must be >= 0")
        duration = float(spec.get("duration_s", 0.0))
        if duration <= 0:
            errors.append(f"hazard {oid}: duration_s must be > 0")
        hazards.append(
            HazardSpec(
                bid,
                oid,
                cls,
                float(spec.get("time_s", 0.0)),
                duration,
                distance,
                bool(spec.get("in_blind_zone", True)),
            )
        )
    _sorted_by_time(doc.get("hazards", []), "hazards", errors)

    door_requests = []
    for spec in doc.get("door_requests", []):
        bid = spec.get("bus")
        if bid not in buses:
            errors.append(f"door_request: references missing bus {bid!r}")
        door_requests.append(DoorRequestSpec(bid, float(spec.get("time_s", 0.0))))
    _sorted_by_time(doc.get("door_requests", []), "door_requests", errors)

    det_spec = doc.get("detector", {})
    try:
        detector = DetectorModel(
            miss_rate=float(det_spec.get("miss_rate", 0.0)),
            spurious_rate=float(det_spec.get("spurious_rate", 0.0)),
            confidence_lo=float(det_spec.get("confidence_lo", 0.5)),
            confidence_hi=float(det_spec.get("confidence_hi", 1.0)),
        )
    except ValueError as exc:
        errors.append(f"detector: {exc}")
        detector = DetectorModel()
    threshold = float(det_spec.get("stop_sign_threshold", 0.5))
    if not 0 <= threshold <= 1:
        errors.append("detector.stop_sign_threshold: must be within [0, 1]")

    sonar_spec = doc.get("sonar", {})
    sonar = SonarSpec(
        float(sonar_spec.get("noise_sigma_m", 0.02)),
        float(sonar_spec.get("max_range_m", 4.0)),
    )
    if sonar.noise_sigma_m < 0:
        errors.append("sonar.noise_sigma_m: must be >= 0")
    if sonar.max_range_m <= 0:
        errors.append("sonar.max_range_m: must be > 0")

    channels = doc.get("channels", {})
    bus_server = _chan(channels, "bus_server", errors)
    server_stop = _chan(channels, "server_stop", errors)

    retx_spec = doc.get("retransmit", {})
    retransmit = RetransmitSpec(
        float(retx_spec.get("interval_ms", 500.0)),
        int(retx_spec.get("max_retries", 20)),
    )
    if retransmit.interval_ms <= 0:
        errors.append("retransmit.interval_ms: must be > 0")
    if retransmit.max_retries < 0:
        errors.append("retransmit.max_retries: must be >= 0")

    if errors:
        raise ScenarioError(errors)

    return ScenarioConfig(
        name=str(doc.get("name", "unnamed")),
        duration_s=float(duration_s),
        root_seed=int(doc.get("root_seed", 0)),
        start_epoch=start_epoch,
        routes=routes,
        stops=stops,
        buses=buses,
        passengers=passengers,
        hazards=hazards,
        door_requests=door_requests,
        detector=detector,
        stop_sign_threshold=threshold,
        sonar=sonar,
        collision_threshold_m=float(doc.get("collision_threshold_m", 1.0)),
        perception_hz=float(doc.get("perception_hz", 10.0)),
        telemetry_hz=float(doc.get("telemetry_hz", 1.0)),
        default_speed_mps=float(doc.get("default_speed_mps", 8.0)),
        bus_server_channel=bus_server,
        server_stop_channel=server_stop,
        retransmit=retransmit,
    )


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as handle:
        return load_scenario(handle.read())

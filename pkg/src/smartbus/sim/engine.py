"""Deterministic discrete-event engine orchestrating the whole network.

One heap drives everything: perception ticks (detector, sonar gating,
buzzer/LED, per-frame scoring, door logic), telemetry ticks, channel
deliveries, retransmission timers, stop power ticks, and scheduled driver
door requests.  Ties pop in (time, node id, event kind) order and every
random draw comes from a named per-subsystem stream derived from the root
seed, so a (scenario, seed) pair always produces byte-identical logs.

Time is integer milliseconds from scenario start.  Source ticks stop at
the configured duration; pending deliveries and retransmissions then drain
(retry chains are bounded), so a finished log is quiescent by
construction.
"""

import heapq
import json
import math
from dataclasses import dataclass

from .. import door as door_mod
from .. import netproto, ridership, stopnode
from ..kernels import DetRng, derive_seed
from ..perception import (
    ObjectClass,
    SonarReading,
    TruthObject,
    detect_frame,
    evaluate_collision,
    evaluate_stop_sign,
    read_sonar_with_rng,
    score_frame,
    sonar_gate,
)
from ..server import Store

STOP_TICK_MS = 1000


@dataclass(frozen=True)
class EventRecord:
    t_ms: int
    node: str
    kind: str
    detail: dict

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t_ms, "node": self.node, "kind": self.kind, "detail": self.detail},
            separators=(",", ":"),
            allow_nan=False,
        )


class EventLog:
    """Ordered run record; the substrate every property test greps."""

    def __init__(self, records=None):
        self.records: list[EventRecord] = list(records or [])

    def append(self, t_ms: int, node: str, kind: str, detail: dict) -> None:
        self.records.append(EventRecord(t_ms, node, kind, detail))

    def of_kind(self, kind: str) -> list[EventRecord]:
        return [r for r in self.records if r.kind == kind]

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_jsonl())

    @classmethod
    def parse(cls, lines) -> "EventLog":
        records = []
        for line in lines:
            if not line.strip():
                continue
            doc = json.loads(line)
            records.append(EventRecord(doc["t"], doc["node"], doc["kind"], doc["detail"]))
        return cls(records)

    @classmethod
    def read(cls, path) -> "EventLog":
        with open(path, encoding="utf-8") as handle:
            return cls.parse(handle)


def tally_rows(log: EventLog):
    """Per-frame tally rows (renumbered 1..N) from a run's frame events."""
    rows = []
    from ..perception import FrameTally

    for record in log.of_kind("frame"):
        d = record.detail
        rows.append(
            (
                len(rows) + 1,
                FrameTally(d["tp"], d["fp"], d["fn"], d["tn"]),
                bool(d["buzzer"]),
                bool(d["led"]),
            )
        )
    return rows


class _Link:
    """One simulated direction between two nodes."""

    def __init__(self, name, channel, retx=None):
        self.name = name
        self.channel = channel
        self.retx = retx
        self.logged_failures = 0


class _Passenger:
    def __init__(self, spec):
        self.spec = spec
        self.state = "waiting"
        self.bus = None


class _Bus:
    def __init__(self, spec, route, config, root_seed):
        self.id = spec.bus_id
        self.spec = spec
        self.route = route
        self.chainage = 0.0
        self.lap = 0
        self.at_stop = None
        self.served = set()
        self.door = door_mod.Door(0.0)
        self.occupancy = ridership.OccupancyState(spec.capacity, spec.standing_allowed)
        self.ledger = ridership.Ledger(spec.bus_id)
        self.frame_counter = 0
        self.last_led = False
        self.seq = 0
        self.punch_index = 0
        self.door_events = 0
        self.rng_det = DetRng(derive_seed(root_seed, f"detector:{spec.bus_id}"))
        self.rng_sonar = DetRng(derive_seed(root_seed, f"sonar:{spec.bus_id}"))
        # stops projected onto this route, ordered by chainage
        self.route_stops = []

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq


class _Stop:
    def __init__(self, spec):
        self.id = spec.stop_id
        self.spec = spec
        self.display = stopnode.DisplayState(clock_offset_s=spec.clock_skew_s)
        self.ack_seq = 0

    def next_ack_seq(self) -> int:
        self.ack_seq += 1
        return self.ack_seq


class Engine:
    """Single-run state; use :func:`run` unless tests need the innards."""

    def __init__(self, config, server_log_path=None):
        self.config = config
        self.log = EventLog()
        self._heap = []
        self._counter = 0
        self.tick_ms = max(1, int(round(1000.0 / config.perception_hz)))
        self.telemetry_ms = max(1, int(round(1000.0 / config.telemetry_hz)))
        self.duration_ms = config.duration_ms
        root = config.root_seed

        self.store = Store(scenario=config, log_path=server_log_path)
        self.stop_registry = {
            sid: spec.position for sid, spec in sorted(config.stops.items())
        }

        self.buses: dict[str, _Bus] = {}
        for bid, spec in sorted(config.buses.items()):
            bus = _Bus(spec, config.routes[spec.route_id], config, root)
            stops = []
            for sid, sspec in sorted(config.stops.items()):
                chainage, offset = bus.route.project(sspec.position)
                if offset <= 50.0:
                    stops.append((chainage, sid))
            bus.route_stops = sorted(stops)
            self.buses[bid] = bus

        self.stops: dict[str, _Stop] = {
            sid: _Stop(spec) for sid, spec in sorted(config.stops.items())
        }

        retx_args = dict(
            interval_ms=config.retransmit.interval_ms,
            max_retries=config.retransmit.max_retries,
        )

        def channel(label, base):
            cfg = netproto.ChannelConfig(
                base.loss_probability,
                base.latency_min_ms,
                base.latency_max_ms,
                derive_seed(root, label),
            )
            return netproto.SimulatedChannel(cfg)

        self.bus_up: dict[str, _Link] = {}
        self.bus_down: dict[str, _Link] = {}
        for bid in sorted(self.buses):
            self.bus_up[bid] = _Link(
                f"{bid}>server",
                channel(f"chan:{bid}>server", config.bus_server_channel),
                netproto.RetransmitQueue(**retx_args),
            )
            self.bus_down[bid] = _Link(
                f"server>{bid}", channel(f"chan:server>{bid}", config.bus_server_channel)
            )
        self.stop_down: dict[str, _Link] = {}
        self.stop_up: dict[str, _Link] = {}
        for sid in sorted(self.stops):
            self.stop_down[sid] = _Link(
                f"server>{sid}",
                channel(f"chan:server>{sid}", config.server_stop_channel),
                netproto.RetransmitQueue(**retx_args),
            )
            self.stop_up[sid] = _Link(
                f"{sid}>server", channel(f"chan:{sid}>server", config.server_stop_channel)
            )

        self.passengers = {p.card_id: _Passenger(p) for p in config.passengers}
        self.waiting: dict[str, list] = {sid: [] for sid in self.stops}
        for spec in config.passengers:
            self.waiting[spec.board_stop].append(self.passengers[spec.card_id])

        self.hazards: dict[str, list] = {bid: [] for bid in self.buses}
        for hz in config.hazards:
            self.hazards[hz.bus_id].append(hz)
        self._hazard_index = {bid: 0 for bid in self.buses}
        self._active_hazards = {bid: [] for bid in self.buses}

    # --- scheduling

    def _schedule(self, t_ms: int, node: str, kind: str, payload=None) -> None:
        self._counter += 1
        heapq.heappush(self._heap, (t_ms, node, kind, self._counter, payload))

    def _epoch(self, t_ms: int) -> float:
        return self.config.start_epoch + t_ms / 1000.0

    # --- transmission helpers

    def _transmit(self, link: _Link, envelope, t_ms: int, dest: str) -> None:
        latency = link.channel.transmit(t_ms)
        if latency is None:
            self.log.append(
                t_ms,
                dest,
                "send_drop",
                {"link": link.name, "kind": envelope.kind, "seq": envelope.seq},
            )
            return
        self._schedule(t_ms + max(1, math.ceil(latency)), dest, "deliver", envelope)

    def _send_tracked(self, owner: str, link: _Link, envelope, t_ms: int, dest: str) -> None:
        self._transmit(link, envelope, t_ms, dest)
        link.retx.track(envelope, t_ms)
        self._schedule(
            t_ms + math.ceil(link.retx.interval_ms), owner, "retx", (link, dest)
        )

    def _run_retx(self, owner: str, link: _Link, dest: str, t_ms: int) -> None:
        for envelope in link.retx.due(t_ms):
            state = link.retx.entry_state(envelope.key())
            self.log.append(
                t_ms,
                owner,
                "retransmit",
                {
                    "link": link.name,
                    "kind": envelope.kind,
                    "seq": envelope.seq,
                    "attempt": state["attempts"] if state else link.retx.max_retries,
                },
            )
            self._transmit(link, envelope, t_ms, dest)
            self._schedule(
                t_ms + math.ceil(link.retx.interval_ms), owner, "retx", (link, dest)
            )
        while link.logged_failures < len(link.retx.failed):
            failed = link.retx.failed[link.logged_failures]
            self.log.append(
                t_ms,
                owner,
                "delivery_failed",
                {"link": link.name, "kind": failed.kind, "seq": failed.seq},
            )
            link.logged_failures += 1

    # --- bus behaviour

    def _active_truths(self, bus: _Bus, t_ms: int) -> list:
        pending = self.hazards[bus.id]
        index = self._hazard_index[bus.id]
        active = self._active_hazards[bus.id]
        while index < len(pending) and pending[index].time_s * 1000.0 <= t_ms:
            hz = pending[index]
            active.append((int(round((hz.time_s + hz.duration_s) * 1000)), hz))
            index += 1
        self._hazard_index[bus.id] = index
        active[:] = [(end, hz) for end, hz in active if end > t_ms]
        return [
            TruthObject(hz.object_id, hz.class_label, hz.distance_m, hz.in_blind_zone)
            for _, hz in active
        ]

    def _advance_bus(self, bus: _Bus, dt_s: float) -> None:
        old = bus.chainage
        dist = bus.spec.speed_mps * dt_s
        length = bus.route.length_m
        wrapped = bus.route.circular and old + dist >= length
        new = bus.route.advance(old, dist)

        hits = []
        if not wrapped:
            for chainage, sid in bus.route_stops:
                if old < chainage <= new and (sid, bus.lap) not in bus.served:
                    hits.append((chainage, sid, bus.lap))
        else:
            for chainage, sid in bus.route_stops:
                if chainage > old and (sid, bus.lap) not in bus.served:
                    hits.append((chainage, sid, bus.lap))
                elif chainage <= new and (sid, bus.lap + 1) not in bus.served:
                    hits.append((chainage + length, sid, bus.lap + 1))
            hits.sort()
        if hits:
            travel, sid, lap = hits[0]
            bus.chainage = travel % length if bus.route.circular else travel
            bus.lap = lap
            bus.at_stop = sid
        else:
            bus.chainage = new
            if wrapped:
                bus.lap += 1

    def _visible_sign(self, bus: _Bus):
        """Nearest stop sign along the route, if inside its stop's radius."""
        best = None
        length = bus.route.length_m
        for chainage, sid in bus.route_stops:
            d = abs(chainage - bus.chainage)
            if bus.route.circular:
                d = min(d, length - d)
            if d <= self.config.stops[sid].proximity_radius_m and (
                best is None or d < best[1]
            ):
                best = (sid, d)
        return best

    def _perception_tick(self, bus: _Bus, t_ms: int) -> None:
        if bus.at_stop is None:
            self._advance_bus(bus, self.tick_ms / 1000.0)
        bus.frame_counter += 1

        truths = self._active_truths(bus, t_ms)
        sign = self._visible_sign(bus)
        if sign is not None:
            truths.append(
                TruthObject(f"sign:{sign[0]}", ObjectClass.STOP_SIGN, sign[1], False)
            )

        detections = detect_frame(truths, self.config.detector, bus.rng_det)
        gate = sonar_gate(detections)
        reading = None
        if gate:
            hazard_distances = [tr.distance_m for tr in truths if tr.is_hazard]
            if hazard_distances:
                reading = read_sonar_with_rng(
                    min(hazard_distances), self.config.sonar.noise_sigma_m, bus.rng_sonar
                )
            else:
                # nothing physically in the zone: ranger reports max range
                reading = SonarReading(self.config.sonar.max_range_m, True)
            self.log.append(
                t_ms,
                bus.id,
                "sonar_read",
                {"frame": bus.frame_counter, "distance_m": reading.distance_m},
            )
        buzzer = evaluate_collision(gate, reading, self.config.collision_threshold_m)
        led = evaluate_stop_sign(detections, self.config.stop_sign_threshold)
        tally = score_frame(truths, detections)
        hazard_detections = sum(
            1 for d in detections if d.class_label is not ObjectClass.STOP_SIGN
        )
        self.log.append(
            t_ms,
            bus.id,
            "frame",
            {
                "frame": bus.frame_counter,
                "tp": tally.tp,
                "fp": tally.fp,
                "fn": tally.fn,
                "tn": tally.tn,
                "gate": gate,
                "buzzer": buzzer,
                "led": led,
                "detections": len(detections),
                "hazard_detections": hazard_detections,
            },
        )
        if buzzer:
            self.log.append(
                t_ms,
                bus.id,
                "buzzer",
                {"frame": bus.frame_counter, "distance_m": reading.distance_m},
            )
        bus.last_led = led

        if (
            bus.at_stop is not None
            and not bus.door.is_open
            and (bus.at_stop, bus.lap) not in bus.served
            and led
        ):
            outcome = self._open_door(bus, t_ms, led)
            if outcome.kind is door_mod.OutcomeKind.NORMAL_OPEN:
                bus.served.add((bus.at_stop, bus.lap))
            self._schedule(
                t_ms + int(round(bus.spec.dwell_s * 1000)), bus.id, "door_close", None
            )
        if (
            bus.door.state.status is door_mod.DoorStatus.OPEN_NORMAL
            and bus.at_stop is not None
        ):
            self._process_punches(bus, bus.at_stop, t_ms)

        next_t = t_ms + self.tick_ms
        if next_t <= self.duration_ms:
            self._schedule(next_t, bus.id, "perception", None)

    def _open_door(self, bus: _Bus, t_ms: int, stop_detected: bool):
        position = bus.route.position_at(bus.chainage)
        nearest_id, _ = door_mod.nearest_stop(position, self.stop_registry)
        radius = (
            self.config.stops[nearest_id].proximity_radius_m
            if nearest_id is not None
            else door_mod.DEFAULT_PROXIMITY_RADIUS_M
        )
        outcome = bus.door.request_open(
            position, self.stop_registry, stop_detected, radius, self._epoch(t_ms)
        )
        bus.door_events += 1
        event_id = f"{bus.id}-door-{bus.door_events}"
        distance = None if math.isinf(outcome.distance_to_stop_m) else outcome.distance_to_stop_m
        self.log.append(
            t_ms,
            bus.id,
            "door_open",
            {
                "kind": outcome.kind.value,
                "stop": outcome.stop_id,
                "distance_m": distance,
                "radius_m": radius,
                "event_id": event_id,
            },
        )
        if outcome.kind is door_mod.OutcomeKind.EMERGENCY_OPEN:
            envelope = netproto.Envelope(
                bus.next_seq(),
                bus.id,
                self._epoch(t_ms),
                "alert",
                {
                    "bus_id": bus.id,
                    "alert": "emergency_door_open",
                    "stop_id": outcome.stop_id,
                    "distance_m": distance,
                    "door_event_id": event_id,
                },
            )
            self.log.append(
                t_ms,
                bus.id,
                "alert_sent",
                {"seq": envelope.seq, "event_id": event_id},
            )
            self._send_tracked(bus.id, self.bus_up[bus.id], envelope, t_ms, "server")
        return outcome

    def _send_punch(self, bus: _Bus, record, t_ms: int) -> None:
        bus.punch_index += 1
        self.log.append(
            t_ms,
            bus.id,
            "punch",
            {
                "card": record.card_id,
                "direction": record.direction.value,
                "stop": record.stop_id,
                "index": bus.punch_index,
            },
        )
        envelope = netproto.Envelope(
            bus.next_seq(),
            bus.id,
            self._epoch(t_ms),
            "punch",
            {
                "bus_id": bus.id,
                "card_id": record.card_id,
                "direction": record.direction.value,
                "stop_id": record.stop_id,
                "ts": record.timestamp,
                "punch_index": bus.punch_index,
            },
        )
        self._send_tracked(bus.id, self.bus_up[bus.id], envelope, t_ms, "server")

    def _process_punches(self, bus: _Bus, stop_id: str, t_ms: int) -> None:
        ts = self._epoch(t_ms)
        for card in sorted(bus.occupancy.onboard):
            pax = self.passengers.get(card)
            if (
                pax is not None
                and pax.state == "onboard"
                and pax.bus == bus.id
                and pax.spec.exit_stop == stop_id
            ):
                record = ridership.punch(bus.occupancy, bus.ledger, card, ts, stop_id)
                pax.state = "done"
                self._send_punch(bus, record, t_ms)
        for pax in list(self.waiting[stop_id]):
            if pax.state != "waiting" or pax.spec.time_s * 1000.0 > t_ms:
                continue
            try:
                record = ridership.punch(
                    bus.occupancy, bus.ledger, pax.spec.card_id, ts, stop_id
                )
            except ridership.CapacityError:
                self.log.append(
                    t_ms,
                    bus.id,
                    "punch_rejected",
                    {"card": pax.spec.card_id, "reason": "capacity"},
                )
                continue
            pax.state = "onboard"
            pax.bus = bus.id
            self.waiting[stop_id].remove(pax)
            self._send_punch(bus, record, t_ms)

    def _telemetry_tick(self, bus: _Bus, t_ms: int) -> None:
        position = bus.route.position_at(bus.chainage)
        speed = 0.0 if bus.at_stop is not None else bus.spec.speed_mps
        seats = ridership.seats_available(bus.occupancy)
        envelope = netproto.Envelope(
            bus.next_seq(),
            bus.id,
            self._epoch(t_ms),
            "telemetry",
            {
                "bus_id": bus.id,
                "lat": position[0],
                "lon": position[1],
                "speed_mps": speed,
                "occupancy": len(bus.occupancy.onboard),
                "seats_available": seats,
                "ts": self._epoch(t_ms),
            },
        )
        self.log.append(
            t_ms,
            bus.id,
            "telemetry_sent",
            {"seq": envelope.seq, "occupancy": len(bus.occupancy.onboard), "seats": seats},
        )
        self._send_tracked(bus.id, self.bus_up[bus.id], envelope, t_ms, "server")
        next_t = t_ms + self.telemetry_ms
        if next_t <= self.duration_ms:
            self._schedule(next_t, bus.id, "telemetry", None)

    # --- server / stop behaviour

    def _server_deliver(self, envelope, t_ms: int) -> None:
        if envelope.kind == "ack":
            link = self.stop_down.get(envelope.sender)
            if link is not None:
                link.retx.ack(envelope.payload["sender"], envelope.payload["seq"])
            return
        applied, ack = self.store.ingest(envelope)
        self.log.append(
            t_ms,
            "server",
            "ingest",
            {
                "kind": envelope.kind,
                "sender": envelope.sender,
                "seq": envelope.seq,
                "applied": applied,
            },
        )
        down = self.bus_down.get(envelope.sender)
        if down is not None:
            self._transmit(down, ack, t_ms, envelope.sender)
        if applied and envelope.kind == "telemetry":
            self._broadcast_seats(envelope.payload["bus_id"], t_ms)

    def _broadcast_seats(self, bus_id: str, t_ms: int) -> None:
        latest = self.store.latest_location(bus_id)
        for sid in sorted(self.stops):
            envelope = netproto.Envelope(
                self.store.next_seq(),
                "server",
                self._epoch(t_ms),
                "seat_broadcast",
                {
                    "bus_id": bus_id,
                    "stop_id": sid,
                    "seats_available": latest.seats_available,
                    "eta_s": self.store.eta_or_none(bus_id, sid),
                },
            )
            self.log.append(
                t_ms,
                "server",
                "broadcast_sent",
                {
                    "stop": sid,
                    "seq": envelope.seq,
                    "bus": bus_id,
                    "seats": latest.seats_available,
                    "eta_s": envelope.payload["eta_s"],
                },
            )
            self._send_tracked("server", self.stop_down[sid], envelope, t_ms, sid)

    def _stop_deliver(self, stop: _Stop, envelope, t_ms: int) -> None:
        if envelope.kind != "seat_broadcast":
            return
        if not stop.display.powered:
            self.log.append(
                t_ms, stop.id, "broadcast_unpowered", {"seq": envelope.seq}
            )
            return
        new_state = stopnode.apply_broadcast(stop.display, envelope)
        if new_state is not stop.display:
            stop.display = new_state
            b = new_state.last_broadcast
            self.log.append(
                t_ms,
                stop.id,
                "display_update",
                {
                    "bus": b.bus_id,
                    "seats": b.seats_available,
                    "eta_s": b.eta_s,
                    "seq": b.applied_seq,
                },
            )
        ack = netproto.Envelope(
            stop.next_ack_seq(),
            stop.id,
            self._epoch(t_ms),
            "ack",
            {"sender": envelope.sender, "seq": envelope.seq},
        )
        self._transmit(self.stop_up[stop.id], ack, t_ms, "server")

    def _bus_deliver(self, bus: _Bus, envelope, t_ms: int) -> None:
        if envelope.kind == "ack":
            self.bus_up[bus.id].retx.ack(
                envelope.payload["sender"], envelope.payload["seq"]
            )

    def _stop_tick(self, stop: _Stop, t_ms: int) -> None:
        if stop.spec.soc_trace is not None:
            sample = stop.spec.soc_trace[(t_ms // 3_600_000) % 24]
        else:
            sample = 1.0
        new_state = stopnode.tick_power(stop.display, sample)
        if new_state.powered != stop.display.powered:
            self.log.append(
                t_ms, stop.id, "stop_power", {"powered": new_state.powered}
            )
        stop.display = new_state
        next_t = t_ms + STOP_TICK_MS
        if next_t <= self.duration_ms:
            self._schedule(next_t, stop.id, "stop_tick", None)

    def _door_request(self, bus: _Bus, t_ms: int) -> None:
        if bus.door.is_open:
            self.log.append(
                t_ms, bus.id, "door_request_rejected", {"reason": "already_open"}
            )
            return
        self._open_door(bus, t_ms, bus.last_led)
        self._schedule(
            t_ms + int(round(bus.spec.dwell_s * 1000)), bus.id, "door_close", None
        )

    def _door_close(self, bus: _Bus, t_ms: int) -> None:
        if not bus.door.is_open:
            return
        bus.door.close(self._epoch(t_ms))
        self.log.append(t_ms, bus.id, "door_close", {})
        if bus.at_stop is not None:
            bus.at_stop = None

    # --- main loop

    def run(self) -> EventLog:
        config = self.config
        self.log.append(
            0,
            "sim",
            "run_start",
            {
                "scenario": config.name,
                "seed": config.root_seed,
                "schema_version": 1,
                "collision_threshold_m": config.collision_threshold_m,
            },
        )
        for bid in sorted(self.buses):
            self._schedule(self.tick_ms, bid, "perception", None)
            self._schedule(self.telemetry_ms, bid, "telemetry", None)
        for sid in sorted(self.stops):
            self._schedule(STOP_TICK_MS, sid, "stop_tick", None)
        for request in self.config.door_requests:
            self._schedule(
                int(round(request.time_s * 1000)), request.bus_id, "door_request", None
            )

        last_t = 0
        while self._heap:
            t_ms, node, kind, _, payload = heapq.heappop(self._heap)
            last_t = max(last_t, t_ms)
            if kind == "perception":
                self._perception_tick(self.buses[node], t_ms)
            elif kind == "telemetry":
                self._telemetry_tick(self.buses[node], t_ms)
            elif kind == "deliver":
                if node == "server":
                    self._server_deliver(payload, t_ms)
                elif node in self.stops:
                    self._stop_deliver(self.stops[node], payload, t_ms)
                elif node in self.buses:
                    self._bus_deliver(self.buses[node], payload, t_ms)
            elif kind == "retx":
                link, dest = payload
                self._run_retx(node, link, dest, t_ms)
            elif kind == "stop_tick":
                self._stop_tick(self.stops[node], t_ms)
            elif kind == "door_request":
                self._door_request(self.buses[node], t_ms)
            elif kind == "door_close":
                self._door_close(self.buses[node], t_ms)

        t_end = max(self.duration_ms, last_t)
        for bid in sorted(self.buses):
            bus = self.buses[bid]
            boards = sum(
                1
                for r in bus.ledger.records
                if r.direction is ridership.Direction.BOARD
            )
            exits = len(bus.ledger.records) - boards
            self.log.append(
                t_end,
                bid,
                "bus_final",
                {
                    "onboard": len(bus.occupancy.onboard),
                    "boards": boards,
                    "exits": exits,
                    "chainage_m": bus.chainage,
                },
            )
        for sid in sorted(self.stops):
            stop = self.stops[sid]
            b = stop.display.last_broadcast
            self.log.append(
                t_end,
                sid,
                "display_final",
                {
                    "powered": stop.display.powered,
                    "bus": b.bus_id if b else None,
                    "seats": b.seats_available if b else None,
                    "eta_s": b.eta_s if b else None,
                    "seq": b.applied_seq if b else None,
                },
            )
        self.log.append(
            t_end,
            "server",
            "server_final",
            {
                "occupancy": {bid: self.store.occupancy(bid) for bid in sorted(self.buses)},
                "applied": self.store.applied_count,
                "alerts": len(self.store.alerts()),
            },
        )
        self.log.append(t_end, "sim", "run_end", {})
        self.store.close()
        return self.log


def run(config, server_log_path=None) -> EventLog:
    """Execute a scenario to quiescence and return its event log."""
    return Engine(config, server_log_path=server_log_path).run()


def run_with_state(config, server_log_path=None) -> tuple[EventLog, Engine]:
    """Like :func:`run` but also hands back the engine for inspection."""
    engine = Engine(config, server_log_path=server_log_path)
    log = engine.run()
    return log, engine

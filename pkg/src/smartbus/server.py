"""Telemetry ingestion and query service with append-only persistence.

The store applies envelopes exactly once (dedup on sender/seq), appends
each newly applied envelope to a newline-delimited JSON log, and keeps
derived indexes in memory: latest telemetry per bus, a rolling speed
window for ETAs, punch records for occupancy and ridership reports, and
received alerts.  Restarting from the log rebuilds identical indexes, so
every query answers the same before and after a crash.

Occupancy is count-based (applied boards minus exits per bus) rather than
keyed off arrival order, so late retransmissions cannot corrupt it.
"""

import bisect
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from . import netproto, ridership

SPEED_WINDOW = 5  # telemetry points in the rolling ETA mean
OFF_ROUTE_TOLERANCE_M = 50.0


class AuthError(PermissionError):
    """Credential missing or below the required role."""


class NotFoundError(KeyError):
    """Unknown bus/stop or no data yet."""


class NoEtaError(RuntimeError):
    """The stop is behind the bus or off its route."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class IngestError(ValueError):
    """Envelope rejected at ingestion (bad kind or malformed payload)."""


@dataclass(frozen=True)
class TelemetryRecord:
    bus_id: str
    lat: float
    lon: float
    speed_mps: float
    occupancy: int
    seats_available: int
    ts: float

    def __post_init__(self):
        if not -90 <= self.lat <= 90 or not -180 <= self.lon <= 180:
            raise ValueError("position out of range")
        if self.speed_mps < 0 or self.occupancy < 0 or self.seats_available < 0:
            raise ValueError("speed/occupancy/seats must be non-negative")


@dataclass(frozen=True)
class Credential:
    role: str
    secret: str


def load_credentials(path) -> dict[str, Credential]:
    """Read ``role:secret`` lines; returns secret -> credential."""
    table = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            role, _, secret = line.partition(":")
            if role not in ("admin", "user") or not secret:
                raise ValueError(f"bad credential line {line!r}")
            table[secret] = Credential(role, secret)
    return table


INGESTIBLE_KINDS = ("telemetry", "punch", "alert")


class Store:
    """Single-writer envelope store with derived query indexes."""

    def __init__(self, scenario=None, log_path=None, default_speed_mps: float = 8.0):
        self._lock = threading.Lock()
        self._dedup = netproto.DedupState()
        self._log_path = log_path
        self._log_handle = None
        self._seq = 0
        self.default_speed_mps = default_speed_mps

        self._latest: dict[str, TelemetryRecord] = {}
        self._speeds: dict[str, list] = {}  # bus -> [(ts, speed)] sorted by ts
        self._punches: dict[str, list] = {}  # bus -> [(punch_index, record)]
        self._board_counts: dict[str, int] = {}
        self._exit_counts: dict[str, int] = {}
        self._alerts: list[netproto.Envelope] = []
        self._card_location: dict[str, str] = {}  # card -> bus currently aboard
        self.anomalies: list[str] = []
        self.applied_count = 0

        self._routes = {}
        self._bus_routes = {}
        self._stop_positions = {}
        self._stop_chainage = {}  # (route_id, stop_id) -> chainage or None
        if scenario is not None:
            self.attach_network(scenario)
            self.default_speed_mps = scenario.default_speed_mps

        if log_path is not None:
            self._replay_log(log_path)
            self._log_handle = open(log_path, "ab")

    def attach_network(self, scenario) -> None:
        """Adopt routes/stops/bus assignments for ETA queries."""
        self._routes = dict(scenario.routes)
        self._bus_routes = {bid: spec.route_id for bid, spec in scenario.buses.items()}
        self._stop_positions = {sid: spec.position for sid, spec in scenario.stops.items()}
        self._stop_chainage = {}
        for rid, route in self._routes.items():
            for sid, spec in scenario.stops.items():
                chainage, offset = route.project(spec.position)
                self._stop_chainage[(rid, sid)] = (
                    chainage if offset <= OFF_ROUTE_TOLERANCE_M else None
                )

    def close(self) -> None:
        if self._log_handle is not None:
            self._log_handle.close()
            self._log_handle = None

    def _replay_log(self, path) -> None:
        try:
            handle = open(path, "rb")
        except FileNotFoundError:
            return
        with handle:
            for line in handle:
                if line.strip():
                    self._apply(netproto.decode(line), persist=False)

    def next_seq(self) -> int:
        with self._lock:
            self._seq += 1
            return self._seq

    # --- ingestion

    def ingest(self, envelope: netproto.Envelope) -> tuple[bool, netproto.Envelope]:
        """Apply an envelope once; returns (applied, ack).

        Duplicates are acknowledged again without re-applying, so senders
        running an at-least-once policy converge.
        """
        if envelope.kind not in INGESTIBLE_KINDS:
            raise IngestError(f"kind {envelope.kind!r} is not ingestible")
        with self._lock:
            applied = self._apply(envelope, persist=True)
            self._seq += 1
            ack = netproto.Envelope(
                self._seq,
                "server",
                envelope.ts,
                "ack",
                {"sender": envelope.sender, "seq": envelope.seq},
            )
            return applied, ack

    def _apply(self, envelope: netproto.Envelope, persist: bool) -> bool:
        if not self._dedup.apply_once(envelope):
            return False
        payload = envelope.payload
        if envelope.kind == "telemetry":
            record = TelemetryRecord(
                str(payload["bus_id"]),
                float(payload["lat"]),
                float(payload["lon"]),
                float(payload["speed_mps"]),
                int(payload["occupancy"]),
                int(payload["seats_available"]),
                float(payload.get("ts", envelope.ts)),
            )
            current = self._latest.get(record.bus_id)
            if current is None or record.ts >= current.ts:
                self._latest[record.bus_id] = record
            bisect.insort(
                self._speeds.setdefault(record.bus_id, []),
                (record.ts, record.speed_mps),
            )
        elif envelope.kind == "punch":
            bus_id = str(payload["bus_id"])
            card = str(payload["card_id"])
            direction = ridership.Direction(payload["direction"])
            record = ridership.PunchRecord(
                card,
                direction,
                float(payload.get("ts", envelope.ts)),
                payload.get("stop_id"),
                bus_id,
            )
            entry = (int(payload["punch_index"]), record)
            bisect.insort(self._punches.setdefault(bus_id, []), entry)
            if direction is ridership.Direction.BOARD:
                self._board_counts[bus_id] = self._board_counts.get(bus_id, 0) + 1
                elsewhere = self._card_location.get(card)
                if elsewhere is not None and elsewhere != bus_id:
                    self.anomalies.append(
                        f"card {card} boarded {bus_id} while recorded aboard {elsewhere}"
                    )
                self._card_location[card] = bus_id
            else:
                self._exit_counts[bus_id] = self._exit_counts.get(bus_id, 0) + 1
                self._card_location.pop(card, None)
        elif envelope.kind == "alert":
            self._alerts.append(envelope)
        self.applied_count += 1
        if persist and self._log_handle is not None:
            self._log_handle.write(netproto.encode(envelope))
            self._log_handle.flush()
        return True

    # --- queries

    def latest_location(self, bus_id: str) -> TelemetryRecord:
        with self._lock:
            record = self._latest.get(bus_id)
        if record is None:
            raise NotFoundError(f"no telemetry for bus {bus_id!r}")
        return record

    def occupancy(self, bus_id: str) -> int:
        with self._lock:
            return self._board_counts.get(bus_id, 0) - self._exit_counts.get(bus_id, 0)

    def alerts(self) -> list[netproto.Envelope]:
        with self._lock:
            return list(self._alerts)

    def punch_records(self) -> list[ridership.PunchRecord]:
        with self._lock:
            out = []
            for entries in self._punches.values():
                out.extend(record for _, record in entries)
        return out

    def _rolling_speed(self, bus_id: str) -> float:
        history = self._speeds.get(bus_id, [])
        if len(history) < 2:
            return self.default_speed_mps
        window = [speed for _, speed in history[-SPEED_WINDOW:]]
        mean = sum(window) / len(window)
        # A bus dwelling through the whole window reports zero speed; fall
        # back to the network default rather than returning an infinite ETA.
        return mean if mean > 0.0 else self.default_speed_mps

    def eta_seconds(self, bus_id: str, stop_id: str) -> float:
        """Remaining along-route distance over the rolling mean speed."""
        with self._lock:
            record = self._latest.get(bus_id)
            if record is None:
                raise NotFoundError(f"no telemetry for bus {bus_id!r}")
            route_id = self._bus_routes.get(bus_id)
            route = self._routes.get(route_id)
            if route is None:
                raise NotFoundError(f"bus {bus_id!r} has no route")
            if stop_id not in self._stop_positions:
                raise NotFoundError(f"unknown stop {stop_id!r}")
            stop_chain = self._stop_chainage.get((route_id, stop_id))
            if stop_chain is None:
                raise NoEtaError("off_route")
            bus_chain, _ = route.project((record.lat, record.lon))
            remaining = stop_chain - bus_chain
            if route.circular:
                remaining %= route.length_m
            if remaining < -1.0:
                raise NoEtaError("stop_behind")
            remaining = max(remaining, 0.0)
            speed = self._rolling_speed(bus_id)
        return remaining / speed

    def eta_or_none(self, bus_id: str, stop_id: str) -> Optional[float]:
        try:
            return self.eta_seconds(bus_id, stop_id)
        except (NoEtaError, NotFoundError):
            return None

    def passenger_report(
        self,
        credential: Credential,
        window_start: datetime,
        window_end: datetime,
        granularity: ridership.Granularity,
    ) -> list[ridership.RidershipBucket]:
        if credential is None or credential.role != "admin":
            raise AuthError("passenger reports require the admin role")
        return ridership.aggregate(
            self.punch_records(), window_start, window_end, granularity
        )


# --- HTTP front end


def _parse_moment(text: str) -> datetime:
    try:
        return datetime.fromtimestamp(float(text), tz=timezone.utc)
    except ValueError:
        pass
    moment = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment


class _Handler(BaseHTTPRequestHandler):
    store: Store = None
    credentials: dict = {}

    def log_message(self, *args):  # quiet by default; diagnostics go to tests
        pass

    def _reply(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _credential(self) -> Optional[Credential]:
        secret = self.headers.get("X-Auth")
        if secret is None:
            return None
        return self.credentials.get(secret)

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        query = parse_qs(url.query)
        try:
            if parts == ["healthz"]:
                self._reply(200, {"status": "ok"})
            elif len(parts) == 3 and parts[0] == "bus" and parts[2] == "location":
                record = self.store.latest_location(parts[1])
                self._reply(
                    200,
                    {
                        "bus_id": record.bus_id,
                        "lat": record.lat,
                        "lon": record.lon,
                        "speed_mps": record.speed_mps,
                        "occupancy": record.occupancy,
                        "seats_available": record.seats_available,
                        "ts": record.ts,
                    },
                )
            elif len(parts) == 3 and parts[0] == "bus" and parts[2] == "eta":
                stop = query.get("stop", [None])[0]
                if stop is None:
                    self._reply(400, {"error": "missing stop parameter"})
                    return
                try:
                    eta = self.store.eta_seconds(parts[1], stop)
                    self._reply(200, {"bus_id": parts[1], "stop_id": stop, "eta_s": eta})
                except NoEtaError as exc:
                    self._reply(
                        200,
                        {"bus_id": parts[1], "stop_id": stop, "eta_s": None, "reason": exc.reason},
                    )
            elif parts == ["report"]:
                credential = self._credential()
                start = _parse_moment(query["from"][0])
                end = _parse_moment(query["to"][0])
                granularity = ridership.Granularity(
                    query.get("granularity", ["hourly"])[0]
                )
                buckets = self.store.passenger_report(credential, start, end, granularity)
                self._reply(
                    200,
                    {
                        "buckets": [
                            {
                                "bucket_start": b.bucket_start.isoformat(),
                                "granularity": b.granularity.value,
                                "boardings": b.boardings,
                            }
                            for b in buckets
                        ]
                    },
                )
            else:
                self._reply(404, {"error": "unknown path"})
        except AuthError:
            self._reply(403, {"error": "forbidden"})
        except NotFoundError as exc:
            self._reply(404, {"error": str(exc)})
        except (KeyError, ValueError) as exc:
            self._reply(400, {"error": f"bad request: {exc}"})

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/ingest":
            self._reply(404, {"error": "unknown path"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        try:
            envelope = netproto.decode(body)
            applied, ack = self.store.ingest(envelope)
        except (netproto.DecodeError, IngestError) as exc:
            self._reply(400, {"error": str(exc)})
            return
        self._reply(
            200,
            {
                "applied": applied,
                "ack": json.loads(netproto.encode(ack).decode()),
            },
        )


def make_http_server(
    store: Store, listen: tuple, credentials: Optional[dict] = None
) -> ThreadingHTTPServer:
    """Build (not start) the HTTP front end bound to ``listen``."""
    handler = type(
        "BoundHandler", (_Handler,), {"store": store, "credentials": credentials or {}}
    )
    return ThreadingHTTPServer(listen, handler)


class BroadcastHub:
    """TCP push service for stop displays (real-network mode).

    Stops connect, send one plain-text line with their stop id, and then
    receive seat-broadcast envelopes as they happen.  TCP supplies
    ordering and reliability on this hop; the last broadcast per stop is
    replayed on reconnect.
    """

    def __init__(self, store: Store, listen: tuple):
        import socketserver

        hub = self

        class _StopConn(socketserver.StreamRequestHandler):
            def handle(self):
                stop_id = self.rfile.readline().decode().strip()
                if not stop_id:
                    return
                with hub._lock:
                    hub._conns[stop_id] = self.wfile
                    last = hub._last.get(stop_id)
                try:
                    if last is not None:
                        self.wfile.write(netproto.encode(last))
                    while True:  # hold the connection; acks are drained and ignored
                        if not self.rfile.readline():
                            break
                except OSError:
                    pass
                finally:
                    with hub._lock:
                        if hub._conns.get(stop_id) is self.wfile:
                            del hub._conns[stop_id]

        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._lock = threading.Lock()
        self._conns: dict = {}
        self._last: dict = {}
        self._store = store
        self.server = _Server(listen, _StopConn)

    @property
    def address(self):
        return self.server.server_address

    def serve_forever(self):
        self.server.serve_forever()

    def shutdown(self):
        self.server.shutdown()
        self.server.server_close()

    def push_for_bus(self, bus_id: str, stop_ids, now_ts: float) -> None:
        """Send the bus's current seats/ETA to every subscribed stop."""
        try:
            latest = self._store.latest_location(bus_id)
        except NotFoundError:
            return
        for stop_id in stop_ids:
            envelope = netproto.Envelope(
                self._store.next_seq(),
                "server",
                now_ts,
                "seat_broadcast",
                {
                    "bus_id": bus_id,
                    "stop_id": stop_id,
                    "seats_available": latest.seats_available,
                    "eta_s": self._store.eta_or_none(bus_id, stop_id),
                },
            )
            with self._lock:
                self._last[stop_id] = envelope
                wfile = self._conns.get(stop_id)
            if wfile is None:
                continue
            try:
                wfile.write(netproto.encode(envelope))
                wfile.flush()
            except OSError:
                with self._lock:
                    self._conns.pop(stop_id, None)

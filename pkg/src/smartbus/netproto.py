"""Message schema, framing, dedup, and channel transports.

Envelopes travel as single lines of compact UTF-8 JSON with a fixed field
order (seq, sender, ts, kind, payload), newline-terminated, so streams are
trivially splittable and human-auditable.  Delivery is at-least-once:
senders retransmit on a fixed interval until acked, and receivers make
application idempotent by deduplicating on (sender, seq).

Two transports share the envelope layer: a seeded, lossy simulated channel
(deterministic: same config and send schedule means the same delivery log)
and a plain TCP line stream for real node processes, where ordering and
reliability come from TCP itself.
"""

import heapq
import json
import socket
from dataclasses import dataclass, field
from typing import Optional

from .kernels import DetRng, channel_fate

KINDS = ("telemetry", "punch", "seat_broadcast", "alert", "ack")

#: Payload keys each kind must carry (extras are allowed and preserved).
REQUIRED_PAYLOAD_KEYS = {
    "telemetry": ("bus_id", "lat", "lon", "speed_mps", "occupancy", "seats_available"),
    "punch": ("bus_id", "card_id", "direction", "punch_index"),
    "seat_broadcast": ("bus_id", "stop_id", "seats_available", "eta_s"),
    "alert": ("bus_id", "alert"),
    "ack": ("sender", "seq"),
}

DEFAULT_RETRY_INTERVAL_MS = 500.0
DEFAULT_MAX_RETRIES = 20


class DecodeError(ValueError):
    """Malformed wire data; names the offending field."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"bad envelope field {fieldname!r}: {message}")
        self.fieldname = fieldname


class TransportError(ConnectionError):
    """Socket-level failure; callers may reconnect and resend."""


@dataclass(frozen=True)
class Envelope:
    seq: int
    sender: str
    ts: float
    kind: str
    payload: dict

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DecodeError("kind", f"unknown kind {self.kind!r}")

    def key(self) -> tuple[str, int]:
        return (self.sender, self.seq)


def encode(envelope: Envelope) -> bytes:
    """One newline-terminated JSON line, fields in fixed order."""
    doc = {
        "seq": envelope.seq,
        "sender": envelope.sender,
        "ts": envelope.ts,
        "kind": envelope.kind,
        "payload": envelope.payload,
    }
    return (json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n").encode()


def decode(data) -> Envelope:
    """Parse and validate one encoded envelope line."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError("<line>", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DecodeError("<line>", "envelope must be a JSON object")
    for name in ("seq", "sender", "ts", "kind", "payload"):
        if name not in doc:
            raise DecodeError(name, "missing")
    if not isinstance(doc["seq"], int) or isinstance(doc["seq"], bool) or doc["seq"] < 0:
        raise DecodeError("seq", "must be a non-negative integer")
    if not isinstance(doc["sender"], str) or not doc["sender"]:
        raise DecodeError("sender", "must be a non-empty string")
    if not isinstance(doc["ts"], (int, float)) or isinstance(doc["ts"], bool):
        raise DecodeError("ts", "must be a number")
    if doc["kind"] not in KINDS:
        raise DecodeError("kind", f"unknown kind {doc['kind']!r}")
    if not isinstance(doc["payload"], dict):
        raise DecodeError("payload", "must be an object")
    for key in REQUIRED_PAYLOAD_KEYS[doc["kind"]]:
        if key not in doc["payload"]:
            raise DecodeError(f"payload.{key}", f"required for kind {doc['kind']!r}")
    return Envelope(doc["seq"], doc["sender"], float(doc["ts"]), doc["kind"], doc["payload"])


class DedupState:
    """Tracks applied (sender, seq) pairs so retransmissions apply once.

    Full per-sender seq sets (not just a high-water mark): lossy channels
    reorder, and a late first copy of a lower seq must still apply.
    """

    def __init__(self):
        self._applied: dict[str, set[int]] = {}

    @property
    def highest_applied(self) -> dict[str, int]:
        return {sender: max(seqs) for sender, seqs in self._applied.items() if seqs}

    def seen(self, envelope: Envelope) -> bool:
        seqs = self._applied.get(envelope.sender)
        return seqs is not None and envelope.seq in seqs

    def apply_once(self, envelope: Envelope) -> bool:
        """True exactly once per (sender, seq); False for every replay."""
        seqs = self._applied.setdefault(envelope.sender, set())
        if envelope.seq in seqs:
            return False
        seqs.add(envelope.seq)
        return True


def apply_once(state: DedupState, envelope: Envelope) -> bool:
    return state.apply_once(envelope)


@dataclass(frozen=True)
class ChannelConfig:
    loss_probability: float = 0.0
    latency_min_ms: float = 0.0
    latency_max_ms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must be within [0, 1]")
        if not 0.0 <= self.latency_min_ms <= self.latency_max_ms:
            raise ValueError("need 0 <= latency_min_ms <= latency_max_ms")


class ChannelClosedError(RuntimeError):
    pass


class SimulatedChannel:
    """Seeded lossy channel: drop or delay each send independently.

    ``transmit`` draws one fate (two uniforms, always) and returns the
    latency for delivered sends; ``send``/``poll`` layer a pending queue on
    top for callers that want mailbox semantics.
    """

    def __init__(self, config: ChannelConfig):
        self.config = config
        self._rng = DetRng(config.seed)
        self._pending: list = []
        self._counter = 0
        self._open = True
        self.sent = 0
        self.dropped = 0

    def close(self) -> None:
        self._open = False

    def transmit(self, now_ms: float) -> Optional[float]:
        """Fate of one send: latency in ms, or None if dropped."""
        if not self._open:
            raise ChannelClosedError("channel is closed")
        delivered, latency = channel_fate(
            self._rng,
            self.config.loss_probability,
            self.config.latency_min_ms,
            self.config.latency_max_ms,
        )
        self.sent += 1
        if not delivered:
            self.dropped += 1
            return None
        return latency

    def send(self, envelope: Envelope, now_ms: float) -> Optional[float]:
        """Queue a send; returns the delivery time (ms) or None if dropped."""
        latency = self.transmit(now_ms)
        if latency is None:
            return None
        deliver_at = now_ms + latency
        self._counter += 1
        heapq.heappush(self._pending, (deliver_at, self._counter, envelope))
        return deliver_at

    def poll(self, now_ms: float) -> list[Envelope]:
        """Envelopes whose delivery time has arrived, in delivery order."""
        out = []
        while self._pending and self._pending[0][0] <= now_ms:
            out.append(heapq.heappop(self._pending)[2])
        return out


class RetransmitQueue:
    """Fixed-interval at-least-once sender state.

    Each tracked envelope is resent every ``interval_ms`` until acked, up
    to ``max_retries`` resends, after which it is marked failed and
    surfaced via ``failed``.
    """

    def __init__(
        self,
        interval_ms: float = DEFAULT_RETRY_INTERVAL_MS,
        max_retries: int = DEFAULT_MAX_RETRIES,
    ):
        self.interval_ms = interval_ms
        self.max_retries = max_retries
        self._entries: dict[tuple[str, int], dict] = {}
        self.failed: list[Envelope] = []

    def track(self, envelope: Envelope, now_ms: float) -> None:
        self._entries[envelope.key()] = {
            "envelope": envelope,
            "next_due": now_ms + self.interval_ms,
            "attempts": 0,
        }

    def ack(self, sender: str, seq: int) -> bool:
        """Clear a pending envelope; False if it was unknown (late ack)."""
        return self._entries.pop((sender, seq), None) is not None

    def pending(self) -> list[Envelope]:
        return [entry["envelope"] for entry in self._entries.values()]

    def due(self, now_ms: float) -> list[Envelope]:
        """Envelopes to resend now; exhausts and fails over-limit entries."""
        resend = []
        for key in list(self._entries):
            entry = self._entries[key]
            if entry["next_due"] > now_ms:
                continue
            if entry["attempts"] >= self.max_retries:
                self.failed.append(entry["envelope"])
                del self._entries[key]
                continue
            entry["attempts"] += 1
            entry["next_due"] = now_ms + self.interval_ms
            resend.append(entry["envelope"])
        return resend

    def entry_state(self, key: tuple[str, int]) -> Optional[dict]:
        return self._entries.get(key)


class LineSocket:
    """Newline-delimited envelope stream over a TCP socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buffer = b""
        self._sock.setblocking(False)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 5.0) -> "LineSocket":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(
                f"cannot reach {host}:{port} ({exc}); retry once the peer is up"
            ) from exc
        return cls(sock)

    def send_line(self, line: bytes) -> None:
        try:
            self._sock.sendall(line)
        except OSError as exc:
            raise TransportError(f"send failed ({exc}); reconnect and resend") from exc

    def send_envelope(self, envelope: Envelope) -> None:
        self.send_line(encode(envelope))

    def poll(self) -> list[Envelope]:
        """Decode every complete line currently buffered on the socket."""
        try:
            while True:
                chunk = self._sock.recv(65536)
                if not chunk:
                    raise TransportError("peer closed the connection; reconnect")
                self._buffer += chunk
        except (BlockingIOError, InterruptedError):
            pass
        except socket.timeout:
            pass
        out = []
        while b"\n" in self._buffer:
            line, self._buffer = self._buffer.split(b"\n", 1)
            if line.strip():
                out.append(decode(line))
        return out

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

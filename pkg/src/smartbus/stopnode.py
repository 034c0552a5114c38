"""Solar-powered stop display node.

The display holds the most recent seat broadcast (highest applied sequence
wins; stale retransmissions are ignored), a receiver-local clock with a
fixed skew standing in for the RTC, and a powered flag driven by the
battery state-of-charge.  Rendering is a pure function of state and local
time: a fixed four-line text frame, blank while unpowered.
"""

import time as _time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Optional

from . import netproto

NO_DATA = "NO DATA"
BLANK_FRAME = ["", "", "", ""]


@dataclass(frozen=True)
class Broadcast:
    bus_id: str
    seats_available: int
    eta_s: Optional[float]
    applied_seq: int


@dataclass(frozen=True)
class DisplayState:
    last_broadcast: Optional[Broadcast] = None
    clock_offset_s: float = 0.0
    powered: bool = True


def apply_broadcast(state: DisplayState, envelope: netproto.Envelope) -> DisplayState:
    """Fold one seat broadcast into the display.

    No-op (same state back) while unpowered or when the sequence is not
    newer than the last applied one; content survives power loss and is
    refreshed by the next broadcast after power returns.
    """
    if envelope.kind != "seat_broadcast":
        raise ValueError(f"display cannot apply kind {envelope.kind!r}")
    if not state.powered:
        return state
    if state.last_broadcast is not None and envelope.seq <= state.last_broadcast.applied_seq:
        return state
    payload = envelope.payload
    eta = payload.get("eta_s")
    return replace(
        state,
        last_broadcast=Broadcast(
            str(payload["bus_id"]),
            int(payload["seats_available"]),
            float(eta) if eta is not None else None,
            envelope.seq,
        ),
    )


def tick_power(state: DisplayState, soc_sample: float) -> DisplayState:
    """Update the powered flag from a state-of-charge sample in [0, 1]."""
    if not 0.0 <= soc_sample <= 1.0:
        raise ValueError("soc_sample must be within [0, 1]")
    return replace(state, powered=soc_sample > 0.0)


def render(state: DisplayState, local_time_s: float) -> list[str]:
    """Four display lines: clock, bus id, seats, ETA; blank when dark."""
    if not state.powered:
        return list(BLANK_FRAME)
    clock = datetime.fromtimestamp(
        local_time_s + state.clock_offset_s, tz=timezone.utc
    ).strftime("%H:%M")
    if state.last_broadcast is None:
        return [clock, NO_DATA, NO_DATA, NO_DATA]
    b = state.last_broadcast
    eta_line = f"ETA {round(b.eta_s)}s" if b.eta_s is not None else NO_DATA
    return [clock, f"BUS {b.bus_id}", f"SEATS {b.seats_available}", eta_line]


def run_stop_node(
    host: str,
    port: int,
    stop_id: str,
    clock_skew_s: float = 0.0,
    soc_trace: Optional[list] = None,
    max_frames: Optional[int] = None,
    tick_s: float = 1.0,
    out=None,
) -> DisplayState:
    """Live display loop against a broadcast service over TCP.

    Subscribes with a plain-text stop id line, then alternates polling for
    broadcasts, acking each one, and printing the rendered frame.  Runs
    until ``max_frames`` frames have been printed (or forever).
    """
    import sys

    out = out or sys.stdout
    link = netproto.LineSocket.connect(host, port)
    link.send_line(f"{stop_id}\n".encode())
    state = DisplayState(clock_offset_s=clock_skew_s)
    ack_seq = 0
    frames = 0
    try:
        while max_frames is None or frames < max_frames:
            now = _time.time()
            if soc_trace is not None:
                hour = int(now // 3600) % 24
                state = tick_power(state, soc_trace[hour])
            for envelope in link.poll():
                if envelope.kind != "seat_broadcast":
                    continue
                state = apply_broadcast(state, envelope)
                if state.powered:
                    ack_seq += 1
                    link.send_envelope(
                        netproto.Envelope(
                            ack_seq,
                            stop_id,
                            now,
                            "ack",
                            {"sender": envelope.sender, "seq": envelope.seq},
                        )
                    )
            for line in render(state, now):
                print(line, file=out)
            print("", file=out, flush=True)
            frames += 1
            _time.sleep(tick_s)
    finally:
        link.close()
    return state

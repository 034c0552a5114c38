"""Event-log invariant checker.

Everything here is checkable from a log alone, with no access to the
scenario or the engine: alert pairing, sonar power gating, door state
legality, punch-while-open causality, occupancy conservation, and
display sequence monotonicity.  Used by ``replay --check`` and the
property suites.
"""

from collections import defaultdict

from .engine import EventLog


def check_log(log: EventLog) -> list[str]:
    """Return every invariant violation found (empty list = clean log)."""
    problems: list[str] = []
    records = log.records

    threshold = 1.0
    for r in records:
        if r.kind == "run_start":
            threshold = r.detail.get("collision_threshold_m", 1.0)
            break

    last_t = None
    for r in records:
        if last_t is not None and r.t_ms < last_t:
            problems.append(f"time went backwards at {r.t_ms} ({r.kind})")
        last_t = r.t_ms

    # buzzer implies an active gate on the same frame and a reading inside
    # the collision threshold
    frames = {}
    for r in records:
        if r.kind == "frame":
            frames[(r.node, r.detail["frame"])] = r.detail
    for r in records:
        if r.kind != "buzzer":
            continue
        frame = frames.get((r.node, r.detail["frame"]))
        if frame is None:
            problems.append(f"buzzer without frame record: {r.node} #{r.detail['frame']}")
            continue
        if not frame["gate"]:
            problems.append(f"buzzer with inactive sonar: {r.node} #{r.detail['frame']}")
        if not frame["buzzer"]:
            problems.append(f"buzzer event not flagged in frame: {r.node} #{r.detail['frame']}")
        if r.detail["distance_m"] >= threshold:
            problems.append(
                f"buzzer at {r.detail['distance_m']:.3f} m >= {threshold} m threshold"
            )

    # power gating: one sonar read per gated frame
    sonar_counts = defaultdict(int)
    gated_frames = defaultdict(int)
    for r in records:
        if r.kind == "sonar_read":
            sonar_counts[r.node] += 1
        elif r.kind == "frame" and r.detail["gate"]:
            gated_frames[r.node] += 1
    for node in set(sonar_counts) | set(gated_frames):
        if sonar_counts[node] != gated_frames[node]:
            problems.append(
                f"{node}: {sonar_counts[node]} sonar reads != "
                f"{gated_frames[node]} gated frames"
            )

    # gate requires at least one non-sign detection
    for r in records:
        if r.kind == "frame" and r.detail["gate"] and r.detail["hazard_detections"] < 1:
            problems.append(f"{r.node} frame {r.detail['frame']}: gate without detection")

    # door legality, alert pairing, punches only through a normally open door
    door_open = defaultdict(lambda: None)  # bus -> outcome kind or None
    emergency_ids = []
    alert_ids = []
    for r in records:
        if r.kind == "door_open":
            if door_open[r.node] is not None:
                problems.append(f"{r.node}: door opened while already open at {r.t_ms}")
            door_open[r.node] = r.detail["kind"]
            if r.detail["kind"] == "emergency_open":
                emergency_ids.append(r.detail["event_id"])
            else:
                if r.detail["distance_m"] is None or (
                    r.detail["distance_m"] > r.detail["radius_m"]
                ):
                    problems.append(
                        f"{r.node}: normal open outside radius at {r.t_ms} "
                        f"({r.detail['distance_m']} > {r.detail['radius_m']})"
                    )
        elif r.kind == "door_close":
            if door_open[r.node] is None:
                problems.append(f"{r.node}: door closed while closed at {r.t_ms}")
            door_open[r.node] = None
        elif r.kind == "alert_sent":
            alert_ids.append(r.detail["event_id"])
        elif r.kind == "punch":
            if door_open[r.node] != "normal_open":
                problems.append(
                    f"{r.node}: punch for {r.detail['card']} at {r.t_ms} "
                    "without a normally open door"
                )
    if sorted(emergency_ids) != sorted(alert_ids):
        problems.append(
            f"emergency opens {sorted(emergency_ids)} and alerts "
            f"{sorted(alert_ids)} are not one-to-one"
        )

    # conservation: onboard == boards - exits, and the server agrees when
    # every punch envelope made it through
    failed_punches = any(
        r.kind == "delivery_failed" and r.detail["kind"] == "punch" for r in records
    )
    bus_finals = {r.node: r.detail for r in records if r.kind == "bus_final"}
    for node, detail in bus_finals.items():
        if detail["onboard"] != detail["boards"] - detail["exits"]:
            problems.append(
                f"{node}: onboard {detail['onboard']} != boards-exits "
                f"{detail['boards'] - detail['exits']}"
            )
    for r in records:
        if r.kind != "server_final" or failed_punches:
            continue
        for bus_id, occupancy in r.detail["occupancy"].items():
            final = bus_finals.get(bus_id)
            if final is not None and occupancy != final["boards"] - final["exits"]:
                problems.append(
                    f"server occupancy for {bus_id} is {occupancy}, "
                    f"bus ledger says {final['boards'] - final['exits']}"
                )

    # applied envelopes are unique per (sender, seq)
    applied = set()
    for r in records:
        if r.kind == "ingest" and r.detail["applied"]:
            key = (r.detail["sender"], r.detail["seq"])
            if key in applied:
                problems.append(f"envelope {key} applied twice")
            applied.add(key)

    # display applied sequence strictly increases per stop
    last_seq = defaultdict(lambda: -1)
    for r in records:
        if r.kind == "display_update":
            if r.detail["seq"] <= last_seq[r.node]:
                problems.append(
                    f"{r.node}: display seq {r.detail['seq']} after {last_seq[r.node]}"
                )
            last_seq[r.node] = r.detail["seq"]

    return problems

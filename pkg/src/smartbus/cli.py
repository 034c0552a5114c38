"""Command-line entry point.

Subcommands: simulate, replay, validate, serve, busnode, stopnode,
energy-report, metrics-report.  Exit codes are stable for scripting:
0 success, 2 I/O problems, 3 validation/parse failures, 64 usage errors.
Listen address and server log path may come from SMARTBUS_LISTEN and
SMARTBUS_LOG when the flags are omitted.
"""

import argparse
import json
import os
import sys
import time

from . import energy, metrics, perception
from .sim import checks as sim_checks
from .sim.engine import EventLog, run, tally_rows
from .sim.scenario import ScenarioError, load_scenario_file

EXIT_OK = 0
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _split_listen(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def build_parser() -> _Parser:
    parser = _Parser(prog="smartbus", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("simulate", parser_class=_Parser, help="run a scenario to quiescence")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the scenario root seed")
    p.add_argument("--out", default=None, help="write the event log (JSONL) here")
    p.add_argument("--tally-out", default=None, help="write the per-frame tally log here")
    p.add_argument("--server-log", default=None, help="persist the server envelope log here")

    p = sub.add_parser("replay", parser_class=_Parser, help="summarize or verify an event log")
    p.add_argument("--log", required=True, help="event log (JSONL) to read")
    p.add_argument("--check", action="store_true", help="verify run invariants")

    p = sub.add_parser("validate", parser_class=_Parser, help="validate a scenario file")
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("serve", parser_class=_Parser, help="run the telemetry service")
    p.add_argument("--scenario", required=True, help="scenario file providing routes/stops")
    p.add_argument("--listen", default=None, help="host:port (env SMARTBUS_LISTEN)")
    p.add_argument("--log", default=None, help="append-only envelope log (env SMARTBUS_LOG)")
    p.add_argument("--credentials", default=None, help="role:secret lines for /report auth")
    p.add_argument("--broadcast", default=None, help="host:port for the stop display push feed")

    p = sub.add_parser("busnode", parser_class=_Parser, help="drive one bus against a live server")
    p.add_argument("--scenario", required=True)
    p.add_argument("--bus", required=True, help="bus id from the scenario")
    p.add_argument("--server", required=True, help="host:port of the telemetry service")
    p.add_argument("--duration", type=float, default=None, help="simulated seconds to run")
    p.add_argument("--time-scale", type=float, default=10.0, help="sim seconds per wall second")

    p = sub.add_parser("stopnode", parser_class=_Parser, help="run a stop display against a live feed")
    p.add_argument("--server", required=True, help="host:port of the broadcast feed")
    p.add_argument("--stop", required=True, help="stop id to subscribe as")
    p.add_argument("--skew", type=float, default=0.0, help="receiver clock skew in seconds")
    p.add_argument("--soc-trace", default=None, help="CSV of 24 hourly state-of-charge values")
    p.add_argument("--frames", type=int, default=None, help="frames to render before exiting")

    p = sub.add_parser("energy-report", parser_class=_Parser, help="stop display sizing report")
    p.add_argument("--profile", default=None, help="component CSV (default: bundled profile)")
    p.add_argument("--bound", choices=["min", "max"], default="max")
    p.add_argument("--sun-hours", type=float, default=5.0)
    p.add_argument("--voltage", type=float, default=12.0)
    p.add_argument("--led-hours", type=float, choices=[10.0, 24.0], default=10.0)

    p = sub.add_parser("metrics-report", parser_class=_Parser, help="detection metrics from a tally log")
    p.add_argument("--tally-log", required=True, help="per-frame tally log")
    p.add_argument("--json", action="store_true", help="emit machine-readable JSON")
    p.add_argument(
        "--reference",
        default=None,
        metavar="P,R",
        help="precision,recall fractions to cross-check against",
    )
    return parser


def _cmd_simulate(args) -> int:
    try:
        config = load_scenario_file(args.scenario)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioError as exc:
        print("scenario is invalid:", file=sys.stderr)
        for problem in exc.errors:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        config.root_seed = args.seed
    log = run(config, server_log_path=args.server_log)
    if args.out:
        log.write(args.out)
    if args.tally_out:
        perception.write_tally_log_file(args.tally_out, tally_rows(log))
    print(f"simulated {config.name!r}: {len(log.records)} events")
    if args.out:
        print(f"event log written to {args.out}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        log = EventLog.read(args.log)
    except OSError as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"log is malformed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    kinds = {}
    for record in log.records:
        kinds[record.kind] = kinds.get(record.kind, 0) + 1
    print(f"{len(log.records)} events over {log.records[-1].t_ms if log.records else 0} ms")
    for kind in sorted(kinds):
        print(f"  {kind}: {kinds[kind]}")
    if args.check:
        problems = sim_checks.check_log(log)
        if problems:
            print("invariant violations:", file=sys.stderr)
            for problem in problems:
                print(f"  - {problem}", file=sys.stderr)
            return EXIT_VALIDATION
        print("all invariants hold")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        config = load_scenario_file(args.scenario)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioError as exc:
        print("scenario is invalid:", file=sys.stderr)
        for problem in exc.errors:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    print(
        f"scenario {config.name!r} is valid: {len(config.routes)} routes, "
        f"{len(config.stops)} stops, {len(config.buses)} buses"
    )
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import BroadcastHub, Store, load_credentials, make_http_server

    listen_text = args.listen or os.environ.get("SMARTBUS_LISTEN", "127.0.0.1:8340")
    log_path = args.log or os.environ.get("SMARTBUS_LOG") or None
    try:
        config = load_scenario_file(args.scenario)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioError as exc:
        print("scenario is invalid:", file=sys.stderr)
        for problem in exc.errors:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    credentials = {}
    if args.credentials:
        try:
            credentials = load_credentials(args.credentials)
        except OSError as exc:
            print(f"cannot read credentials: {exc}", file=sys.stderr)
            return EXIT_IO
        except ValueError as exc:
            print(f"credentials file invalid: {exc}", file=sys.stderr)
            return EXIT_VALIDATION

    store = Store(scenario=config, log_path=log_path)
    httpd = make_http_server(store, _split_listen(listen_text), credentials)
    hub = None
    if args.broadcast:
        hub = BroadcastHub(store, _split_listen(args.broadcast))
        stop_ids = sorted(config.stops)

        def on_applied(envelope):
            if envelope.kind == "telemetry":
                hub.push_for_bus(envelope.payload["bus_id"], stop_ids, envelope.ts)

        store.on_applied = on_applied
        import threading

        threading.Thread(target=hub.serve_forever, daemon=True).start()
        print(f"broadcast feed on {hub.address[0]}:{hub.address[1]}")
    host, port = httpd.server_address[:2]
    print(f"serving on {host}:{port}" + (f", log at {log_path}" if log_path else ""))
    sys.stdout.flush()
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        if hub is not None:
            hub.shutdown()
        httpd.server_close()
        store.close()
    return EXIT_OK


def _cmd_busnode(args) -> int:
    from .busnode import run_bus_node

    try:
        config = load_scenario_file(args.scenario)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioError as exc:
        print(f"scenario is invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.bus not in config.buses:
        print(f"bus {args.bus!r} is not in the scenario", file=sys.stderr)
        return EXIT_VALIDATION
    host, port = _split_listen(args.server)
    try:
        sent = run_bus_node(
            config,
            args.bus,
            host,
            port,
            duration_s=args.duration,
            time_scale=args.time_scale,
        )
    except ConnectionError as exc:
        print(f"server unreachable: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"bus {args.bus} sent {sent} envelopes")
    return EXIT_OK


def _cmd_stopnode(args) -> int:
    from .stopnode import run_stop_node

    trace = None
    if args.soc_trace:
        try:
            trace = energy.load_irradiance_file(args.soc_trace)
        except OSError as exc:
            print(f"cannot read soc trace: {exc}", file=sys.stderr)
            return EXIT_IO
        except energy.ProfileError as exc:
            print(f"soc trace invalid: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    host, port = _split_listen(args.server)
    try:
        run_stop_node(
            host,
            port,
            args.stop,
            clock_skew_s=args.skew,
            soc_trace=trace,
            max_frames=args.frames,
        )
    except ConnectionError as exc:
        print(f"broadcast feed unreachable: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _cmd_energy_report(args) -> int:
    if args.profile:
        try:
            profile = energy.load_profile_file(args.profile)
        except OSError as exc:
            print(f"cannot read profile: {exc}", file=sys.stderr)
            return EXIT_IO
        except energy.ProfileError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_VALIDATION
    else:
        profile = energy.default_profile()
    print(
        energy.render_report(
            profile,
            args.bound,
            args.sun_hours,
            args.voltage,
            led_hours=args.led_hours,
        )
    )
    return EXIT_OK


def _cmd_metrics_report(args) -> int:
    try:
        rows = perception.parse_tally_log_file(args.tally_log)
    except OSError as exc:
        print(f"cannot read tally log: {exc}", file=sys.stderr)
        return EXIT_IO
    except perception.TallyFormatError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    matrix = metrics.aggregate(tally for _, tally, _, _ in rows)
    reference = None
    if args.reference:
        try:
            p_text, r_text = args.reference.split(",")
            reference = {"precision": float(p_text), "recall": float(r_text)}
        except ValueError:
            print("--reference must look like 0.988,0.936", file=sys.stderr)
            return EXIT_USAGE
    if args.json:
        print(json.dumps(metrics.summary_json(matrix), indent=2))
    else:
        print(metrics.summary_report(matrix, reference))
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "replay": _cmd_replay,
    "validate": _cmd_validate,
    "serve": _cmd_serve,
    "busnode": _cmd_busnode,
    "stopnode": _cmd_stopnode,
    "energy-report": _cmd_energy_report,
    "metrics-report": _cmd_metrics_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())


def console_main():  # pragma: no cover - thin wrapper for the entry point
    sys.exit(main())

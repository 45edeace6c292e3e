"""Command line front end.

Subcommands:

- ``run``     simulate a scenario, print the event log, optionally save
              state and render a report directory
- ``routes``  print a router's best routes or its whole candidate table
- ``trace``   walk a packet between two addresses hop by hop
- ``report``  render delimited tables and figures from a saved run

Exit codes: 0 success (for ``run``: quiescent and converged), 1 run
finished but not converged, 2 scenario/state parse error, 3 invariant
violation, 4 unknown router, node or address.
"""

from __future__ import annotations

import argparse
import ipaddress
import json
import sys
from typing import Optional

from .engine import Simulation, TimeInPast, UnknownTarget
from .forwarding import Packet, format_trace, forward_packet
from .model import InvariantViolation, SimulationError, UnknownName
from .msrouter import RoutingMode, format_table
from .report import write_report
from .scenario import parse_scenario
from .snapshot import SnapshotView, build_snapshot

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_UNKNOWN = 4

DEFAULT_UNTIL_MS = 10000


def _add_run_source(p: argparse.ArgumentParser, state_too: bool = True) -> None:
    p.add_argument("--scenario", help="scenario file to simulate")
    p.add_argument(
        "--approach",
        choices=[m.value for m in RoutingMode],
        help="where the routing protocol runs (cp: at the SMF, up: at the UPF)",
    )
    p.add_argument(
        "--until",
        type=int,
        default=DEFAULT_UNTIL_MS,
        help=f"simulated milliseconds to run (default {DEFAULT_UNTIL_MS})",
    )
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    if state_too:
        p.add_argument("--state", help="saved run state (JSON) to query instead")
        p.add_argument(
            "--inline",
            action="store_true",
            help="run --scenario first, then query the fresh result",
        )


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--output",
        choices=["human", "machine"],
        default="human",
        help="human: aligned text; machine: tab separated",
    )


def _parse_file(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None
    result = parse_scenario(text)
    if not result.ok:
        for d in result.diagnostics:
            print(f"{path}:{d.line}: [{d.kind}] {d.message}", file=sys.stderr)
        return None
    return result.scenario


def _simulate(args) -> Optional[tuple[Simulation, object]]:
    scenario = _parse_file(args.scenario)
    if scenario is None:
        return None
    approach = RoutingMode(args.approach or "cp")
    sim = Simulation(scenario, approach, seed=args.seed)
    stats = sim.run_until(args.until)
    return sim, stats


EMPTY_STATE = "empty"


def _obtain_state(args) -> Optional[dict]:
    """State dict from --state, or from an inline run of --scenario.

    Returns the sentinel EMPTY_STATE when a named state file does not
    exist yet: querying before any run is not an error, just empty.
    """
    if getattr(args, "state", None) and not args.scenario:
        try:
            with open(args.state, encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            print(
                f"notice: no saved run at {args.state}; nothing computed yet",
                file=sys.stderr,
            )
            return EMPTY_STATE
        except (OSError, ValueError) as exc:
            print(f"error: cannot load state: {exc}", file=sys.stderr)
            return None
    if not args.scenario:
        print(
            "error: need --state or --scenario (nothing to query)", file=sys.stderr
        )
        return None
    out = _simulate(args)
    if out is None:
        return None
    sim, stats = out
    return build_snapshot(sim, stats)


def _cmd_run(args) -> int:
    out = _simulate(args)
    if out is None:
        return EXIT_PARSE
    sim, stats = out
    for line in sim.log.lines:
        print(line)
    problems = sim.audit()
    data = build_snapshot(sim, stats)
    if args.state:
        with open(args.state, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")
    if args.report_dir:
        for path in write_report(data, args.report_dir):
            print(f"wrote {path}", file=sys.stderr)
    if args.output == "machine":
        print(f"result\tquiescent={stats.quiescent}\tconverged={stats.converged}")
    else:
        print(
            f"finished t={sim.now} quiescent={stats.quiescent} "
            f"converged={stats.converged}"
        )
        for note in stats.notes:
            print(f"  note: {note}")
    if problems:
        for p in problems:
            print(f"invariant: {p}", file=sys.stderr)
        return EXIT_INVARIANT
    if not (stats.quiescent and stats.converged):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_routes(args) -> int:
    data = _obtain_state(args)
    if data is None:
        return EXIT_PARSE
    if data == EMPTY_STATE:
        print(format_table([], str, machine=args.output == "machine"))
        return EXIT_OK
    try:
        view = SnapshotView(data)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    nid = view.router_names.get(args.router)
    if nid is None:
        known = ", ".join(sorted(view.router_names)) or "none"
        print(
            f"error: unknown router {args.router!r} (known: {known})",
            file=sys.stderr,
        )
        return EXIT_UNKNOWN
    entries = (view.candidates_of(nid) if args.all else view.table_of(nid)) or []
    print(
        format_table(entries, view.iface_display, machine=args.output == "machine")
    )
    return EXIT_OK


def _resolve_endpoint(view: SnapshotView, text: str, role: str):
    """A node name or an IPv4 address -> (node_id, address)."""
    net = view.network
    try:
        node = net.node_by_name(text)
        addrs = node.addresses()
        if not addrs:
            print(f"error: {role} node {text!r} has no addresses", file=sys.stderr)
            return None
        return node.id, min(addrs)
    except UnknownName:
        pass
    try:
        addr = ipaddress.IPv4Address(text)
    except ValueError:
        print(f"error: {role} {text!r} is neither a node nor an address", file=sys.stderr)
        return None
    owner = net.owner_of_address(addr)
    if owner is None:
        print(f"error: no interface owns {role} address {addr}", file=sys.stderr)
        return None
    return owner.node, addr


def _cmd_trace(args) -> int:
    data = _obtain_state(args)
    if data is None:
        return EXIT_PARSE
    if data == EMPTY_STATE:
        print("error: no saved run to trace against", file=sys.stderr)
        return EXIT_PARSE
    view = SnapshotView(data)
    src = _resolve_endpoint(view, args.src, "source")
    if src is None:
        return EXIT_UNKNOWN
    dst = _resolve_endpoint(view, args.dst, "destination")
    if dst is None:
        return EXIT_UNKNOWN
    packet = Packet(src=src[1], dst=dst[1], ttl=args.ttl)
    record = forward_packet(view, src[0], packet)
    print(format_trace(record, machine=args.output == "machine"))
    return EXIT_OK


def _cmd_report(args) -> int:
    data = _obtain_state(args)
    if data is None:
        return EXIT_PARSE
    if data == EMPTY_STATE:
        print("error: no saved run to report on", file=sys.stderr)
        return EXIT_PARSE
    for path in write_report(data, args.out_dir):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msrsim",
        description="Mobile-system router simulator: one IP router per UPF, "
        "its interfaces borrowed from PDU sessions and N6 attachments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario")
    _add_run_source(p_run, state_too=False)
    p_run.add_argument("--state", help="write run state (JSON) here")
    p_run.add_argument("--report-dir", help="also render a report directory")
    _add_output(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_routes = sub.add_parser("routes", help="show a router's routes")
    _add_run_source(p_routes)
    p_routes.add_argument("--router", required=True, help="router name, e.g. msr1")
    p_routes.add_argument(
        "--all", action="store_true", help="all candidate routes, not only best"
    )
    _add_output(p_routes)
    p_routes.set_defaults(func=_cmd_routes)

    p_trace = sub.add_parser("trace", help="walk a packet through the network")
    _add_run_source(p_trace)
    p_trace.add_argument("--src", required=True, help="source node name or address")
    p_trace.add_argument("--dst", required=True, help="destination node name or address")
    p_trace.add_argument("--ttl", type=int, default=64)
    _add_output(p_trace)
    p_trace.set_defaults(func=_cmd_trace)

    p_report = sub.add_parser("report", help="render tables and figures for a run")
    _add_run_source(p_report)
    p_report.add_argument("--out-dir", required=True, help="directory for the report")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.scenario:
        parser.error("run requires --scenario")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (UnknownTarget, UnknownName) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN
    except (TimeInPast, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

"""Mobile-system router simulation: a 5G system seen as one IP router per UPF."""

from .engine import Event, EventKind, RunStats, Simulation
from .forwarding import Outcome, Packet, TraceRecord, format_trace, forward_packet
from .lsproto import (
    DEAD_INTERVAL_MS,
    HELLO_INTERVAL_MS,
    LinkStateRouter,
    RoutingEntry,
    compute_candidates,
    compute_spf,
)
from .mobile import MobileSystem, PduSession
from .model import (
    InterfaceId,
    Link,
    Network,
    Node,
    NodeKind,
    SimulationError,
)
from .msrouter import (
    ForwardingRule,
    MsRouter,
    RoutingMode,
    format_table,
    reserve_pdu_iface_address,
    translate_routes,
)
from .report import write_report
from .scenario import ParseResult, Scenario, parse_scenario, serialize_scenario
from .snapshot import SnapshotView, build_snapshot, save_snapshot

__version__ = "0.1.0"

__all__ = [
    "DEAD_INTERVAL_MS",
    "HELLO_INTERVAL_MS",
    "Event",
    "EventKind",
    "ForwardingRule",
    "InterfaceId",
    "Link",
    "LinkStateRouter",
    "MobileSystem",
    "MsRouter",
    "Network",
    "Node",
    "NodeKind",
    "Outcome",
    "Packet",
    "ParseResult",
    "PduSession",
    "RoutingEntry",
    "RoutingMode",
    "RunStats",
    "Scenario",
    "Simulation",
    "SimulationError",
    "SnapshotView",
    "TraceRecord",
    "build_snapshot",
    "compute_candidates",
    "compute_spf",
    "format_table",
    "format_trace",
    "forward_packet",
    "parse_scenario",
    "reserve_pdu_iface_address",
    "save_snapshot",
    "serialize_scenario",
    "translate_routes",
    "write_report",
]

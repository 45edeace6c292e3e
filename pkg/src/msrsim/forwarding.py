"""Hop-by-hop packet forwarding over a simulated network state.

Works against any view object exposing ``network``, ``table_of(node_id)``,
``rules_of(node_id)`` and ``iface_display(iface_id)``; a live simulation
and a loaded state file both qualify.  Routers forward by longest prefix
match on their computed tables, UPFs by their installed rules, hosts pick
the cheapest gateway on an attached subnet, and non-routing UEs relay
frames inside their subnet without consuming TTL.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import Interface, InterfaceId, IpAddress, Link, NodeId, NodeKind

DEFAULT_TTL = 64
_STEP_LIMIT = 512


class Outcome(Enum):
    DELIVERED = "Delivered"
    NO_ROUTE = "NoRoute"
    TTL_EXCEEDED = "TtlExceeded"
    LINK_DOWN = "LinkDown"


@dataclass(frozen=True)
class Packet:
    src: IpAddress
    dst: IpAddress
    ttl: int = DEFAULT_TTL


@dataclass
class Hop:
    node: str
    ingress: Optional[str]
    egress: Optional[str]


@dataclass
class TraceRecord:
    outcome: Outcome
    hops: list[Hop] = field(default_factory=list)
    total_metric: int = 0
    detail: str = ""


@dataclass
class _Reach:
    """One interface reachable on an L2 segment, with the path that found it."""

    iface: Interface
    legs: list[tuple[Link, InterfaceId]]
    metric: int
    bridges: list[NodeId]


def _link_name(view, link: Link) -> str:
    net = view.network
    return (
        f"{net.node(link.a.node).name}.{view.iface_display(link.a)}"
        f"--{net.node(link.b.node).name}.{view.iface_display(link.b)}"
    )


def _segment_scan(view, start: InterfaceId) -> tuple[list[_Reach], list[Link]]:
    """Breadth-first walk of one subnet's L2 segment from an interface.

    Crosses non-routing UE nodes (they bridge their same-subnet
    interfaces) and stops at every other node.  Returns each reachable
    far interface with its path, plus any down links that bounded the
    search.
    """
    net = view.network
    subnet = net.iface(start).subnet
    reached: list[_Reach] = []
    down: list[Link] = []
    seen = {start}
    queue: deque[tuple[InterfaceId, list, int, list]] = deque(
        [(start, [], 0, [])]
    )
    while queue:
        cur, legs, metric, bridges = queue.popleft()
        for link in sorted(net.links_of_iface(cur), key=lambda l: l.id):
            far_id = link.other(cur)
            if far_id in seen:
                continue
            if not link.up:
                down.append(link)
                continue
            seen.add(far_id)
            far = net.iface(far_id)
            if not far.up:
                continue
            path = legs + [(link, cur)]
            cost = metric + link.metric_from(cur)
            reached.append(_Reach(far, path, cost, list(bridges)))
            node = net.node(far_id.node)
            if node.kind is NodeKind.UE:
                for iface in node.iface_list():
                    if (
                        iface.id != far_id
                        and iface.subnet == subnet
                        and iface.up
                        and iface.id not in seen
                    ):
                        seen.add(iface.id)
                        queue.append(
                            (iface.id, path, cost, bridges + [node.id])
                        )
    return reached, down


def _find_on_segment(
    view, egress: InterfaceId, addr: IpAddress
) -> tuple[Optional[_Reach], Optional[Link]]:
    reached, down = _segment_scan(view, egress)
    for r in reached:
        if r.iface.address == addr:
            return r, None
    blocked = min(down, key=lambda l: l.id) if down else None
    return None, blocked


def _node_decision(view, node, dst: IpAddress):
    """Pick (next_hop, egress_iface_id) at one node, or None when routeless."""
    net = view.network
    for iface in node.iface_list():
        if iface.up and dst in iface.subnet:
            return dst, iface.id
    if node.kind is NodeKind.UPF:
        rules = view.rules_of(node.id) or []
        best = None
        for rule in rules:
            if dst in rule.match_prefix:
                if best is None or rule.match_prefix.prefixlen > best.match_prefix.prefixlen:
                    best = rule
        if best is not None:
            return best.next_hop, best.egress
        return None
    if node.runs_routing:
        table = view.table_of(node.id) or []
        best = None
        for entry in table:
            if dst in entry.destination:
                if best is None or entry.destination.prefixlen > best.destination.prefixlen:
                    best = entry
        if best is not None:
            return best.next_hop, best.destination_interface
        return None
    if node.kind is NodeKind.HOST:
        return _host_gateway(view, node, dst)
    return None


def _router_metric_to(view, router_node, dst: IpAddress) -> Optional[int]:
    for iface in router_node.iface_list():
        if dst in iface.subnet:
            return 0
    table = view.table_of(router_node.id) or []
    best = None
    for entry in table:
        if dst in entry.destination:
            if (
                best is None
                or entry.destination.prefixlen > best.destination.prefixlen
            ):
                best = entry
    return best.metric if best is not None else None


def _host_gateway(view, node, dst: IpAddress):
    """Cheapest attached gateway: segment path cost plus the gateway's metric."""
    net = view.network
    best: Optional[tuple[int, int, IpAddress, InterfaceId]] = None
    for iface in node.iface_list():
        if not iface.up:
            continue
        reached, _down = _segment_scan(view, iface.id)
        for r in reached:
            gw_node = net.node(r.iface.id.node)
            if not (gw_node.runs_routing or gw_node.kind is NodeKind.UPF):
                continue
            remote = _router_metric_to(view, gw_node, dst)
            if remote is None:
                continue
            score = (r.metric + remote, int(r.iface.address))
            if best is None or score < (best[0], best[1]):
                best = (score[0], score[1], r.iface.address, iface.id)
    if best is None:
        return None
    return best[2], best[3]


def forward_packet(view, src_node_id: NodeId, packet: Packet) -> TraceRecord:
    """Walk a packet from a source node until delivery or failure."""
    net = view.network
    node = net.node(src_node_id)
    ttl = packet.ttl
    record = TraceRecord(outcome=Outcome.NO_ROUTE)
    ingress: Optional[str] = None
    for _ in range(_STEP_LIMIT):
        if packet.dst in node.addresses():
            record.hops.append(Hop(node.name, ingress, None))
            record.outcome = Outcome.DELIVERED
            return record
        decision = _node_decision(view, node, packet.dst)
        if decision is None:
            record.hops.append(Hop(node.name, ingress, None))
            record.outcome = Outcome.NO_ROUTE
            record.detail = node.name
            return record
        next_hop, egress_id = decision
        if not net.has_iface(egress_id) or not net.iface(egress_id).up:
            record.hops.append(Hop(node.name, ingress, None))
            record.outcome = Outcome.NO_ROUTE
            record.detail = node.name
            return record
        if node.runs_routing or node.kind is NodeKind.UPF:
            ttl -= 1
            if ttl <= 0:
                record.hops.append(Hop(node.name, ingress, None))
                record.outcome = Outcome.TTL_EXCEEDED
                record.detail = node.name
                return record
        reach, blocked = _find_on_segment(view, egress_id, next_hop)
        if reach is None:
            record.hops.append(
                Hop(node.name, ingress, view.iface_display(egress_id))
            )
            if blocked is not None:
                record.outcome = Outcome.LINK_DOWN
                record.detail = _link_name(view, blocked)
            else:
                record.outcome = Outcome.NO_ROUTE
                record.detail = node.name
            return record
        record.hops.append(Hop(node.name, ingress, view.iface_display(egress_id)))
        record.total_metric += reach.metric
        for bridge_id in reach.bridges:
            bridge = net.node(bridge_id)
            record.hops.append(Hop(bridge.name, "(bridge)", "(bridge)"))
        node = net.node(reach.iface.id.node)
        ingress = view.iface_display(reach.iface.id)
    record.outcome = Outcome.NO_ROUTE
    record.detail = "step limit"
    return record


def format_trace(record: TraceRecord, machine: bool = False) -> str:
    """Render a trace; machine form is tab separated, one hop per line."""
    if machine:
        lines = [
            f"{i}\t{h.node}\t{h.ingress or '-'}\t{h.egress or '-'}"
            for i, h in enumerate(record.hops, start=1)
        ]
        lines.append(
            f"outcome\t{record.outcome.value}\t{record.total_metric}\t{record.detail or '-'}"
        )
        return "\n".join(lines)
    lines = []
    for i, h in enumerate(record.hops, start=1):
        left = f"{i:>3}. {h.node}"
        parts = []
        if h.ingress:
            parts.append(f"in={h.ingress}")
        if h.egress:
            parts.append(f"out={h.egress}")
        lines.append(left + ("  " + " ".join(parts) if parts else ""))
    tail = f"outcome={record.outcome.value} total_metric={record.total_metric}"
    if record.detail:
        tail += f" ({record.detail})"
    lines.append(tail)
    return "\n".join(lines)

"""Router view of a UPF: interfaces, names, reservations, forwarding rules.

A UPF is presented to the routing world as one router whose interfaces
are its N6 attachments plus one interface per active PDU session.  The
session interfaces borrow an address out of the UE's own subnet, so the
router is on-link with whatever sits at the far end of the session.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .lsproto import LinkStateRouter, RouterId, RoutingEntry, router_id_str
from .model import (
    InterfaceId,
    IpAddress,
    IpPrefix,
    NodeId,
    SimulationError,
    host_addresses,
)

logger = logging.getLogger(__name__)


class SubnetExhausted(SimulationError):
    pass


class MsrIfaceKind(Enum):
    N6 = "n6"
    PDU_SESSION = "pdu"


class RoutingMode(Enum):
    CP_BASED = "cp"  # protocol speaks from the control plane, relayed via tunnels
    UP_BASED = "up"  # protocol runs on the UPF itself


@dataclass(frozen=True)
class MsrInterface:
    """One router-level interface of a mobile-system router."""

    id: InterfaceId  # the backing interface on the UPF node
    kind: MsrIfaceKind
    source_id: int  # N6 ordinal, or PDU session id
    name: str
    address: IpAddress
    subnet: IpPrefix


@dataclass(frozen=True)
class ForwardingRule:
    match_prefix: IpPrefix
    next_hop: IpAddress
    egress: InterfaceId
    priority: int  # longest-prefix wins; priority equals the prefix length


def map_interface_name(kind: MsrIfaceKind, source_id: int) -> str:
    """Stable router-level interface name: ``n6-<ordinal>`` / ``pdu-<session>``."""
    return f"{kind.value}-{source_id}"


def reserve_pdu_iface_address(
    ue_addr: IpAddress, ue_subnet: IpPrefix, in_use: set[IpAddress]
) -> IpAddress:
    """Pick the session-interface address inside the UE's subnet.

    Policy: the numerically lowest free host address that is neither the
    UE's own address nor assigned anywhere else.  The chosen address is
    added to ``in_use`` so back-to-back reservations stay disjoint.
    """
    for cand in host_addresses(ue_subnet):
        if cand == ue_addr or cand in in_use:
            continue
        in_use.add(cand)
        return cand
    raise SubnetExhausted(f"no free host address left in {ue_subnet}")


@dataclass
class MsRouter:
    """Routing identity of one UPF."""

    upf: NodeId
    name: str
    mode: RoutingMode
    router_id: RouterId = 0
    n6: dict[int, MsrInterface] = field(default_factory=dict)
    sessions: dict[int, MsrInterface] = field(default_factory=dict)
    instance: Optional[LinkStateRouter] = None
    table: list[RoutingEntry] = field(default_factory=list)
    candidates: list[RoutingEntry] = field(default_factory=list)

    def enumerate_interfaces(self) -> list[MsrInterface]:
        """Deterministic interface order: N6 by ordinal, then sessions by id."""
        out = [self.n6[o] for o in sorted(self.n6)]
        out.extend(self.sessions[s] for s in sorted(self.sessions))
        return out

    def iface_named(self, name: str) -> Optional[MsrInterface]:
        for iface in self.enumerate_interfaces():
            if iface.name == name:
                return iface
        return None

    def iface_by_id(self, iid: InterfaceId) -> Optional[MsrInterface]:
        for iface in self.enumerate_interfaces():
            if iface.id == iid:
                return iface
        return None

    def iface_name(self, iid: InterfaceId) -> str:
        found = self.iface_by_id(iid)
        return found.name if found else str(iid)

    def refresh_router_id(self) -> None:
        # Highest N6 address; an unattached UPF falls back to its node id,
        # which cannot collide with real 172.x/10.x addresses.
        self.router_id = max(
            (int(i.address) for i in self.n6.values()), default=self.upf
        )
        if self.instance is not None:
            self.instance.router_id = self.router_id


def translate_routes(
    table: list[RoutingEntry],
    router: MsRouter,
    on_drop: Optional[Callable[[RoutingEntry, str], None]] = None,
) -> list[ForwardingRule]:
    """Turn the computed table into user-plane forwarding rules.

    Entries whose egress interface no longer exists on the router (a
    session released mid-flight, say) are dropped with a diagnostic
    rather than installed blind.
    """
    rules: list[ForwardingRule] = []
    for entry in table:
        iface = router.iface_by_id(entry.destination_interface)
        if iface is None:
            reason = f"egress {entry.destination_interface} is gone"
            logger.warning(
                "%s: dropping rule for %s: %s", router.name, entry.destination, reason
            )
            if on_drop is not None:
                on_drop(entry, reason)
            continue
        rules.append(
            ForwardingRule(
                match_prefix=entry.destination,
                next_hop=entry.next_hop,
                egress=entry.destination_interface,
                priority=entry.destination.prefixlen,
            )
        )
    return rules


TABLE_HEADER = ("Destination", "Next Hop", "Destination interface", "Metric")


def format_table(
    entries: list[RoutingEntry],
    iface_name: Callable[[InterfaceId], str],
    machine: bool = False,
) -> str:
    """Render routing entries as the four-column table.

    Rows are sorted by (destination, metric).  ``machine`` swaps the
    aligned layout for tab-separated lines without a header.
    """
    rows = [
        (
            str(e.destination),
            str(e.next_hop),
            iface_name(e.destination_interface),
            str(e.metric),
        )
        for e in sorted(
            entries,
            key=lambda e: (
                int(e.destination.network_address),
                e.destination.prefixlen,
                e.metric,
                int(e.next_hop),
            ),
        )
    ]
    if machine:
        return "\n".join("\t".join(r) for r in rows)
    widths = [
        max(len(TABLE_HEADER[c]), max((len(r[c]) for r in rows), default=0))
        for c in range(4)
    ]
    lines = [
        "  ".join(TABLE_HEADER[c].ljust(widths[c]) for c in range(4)).rstrip()
    ]
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in range(4)).rstrip())
    return "\n".join(lines)

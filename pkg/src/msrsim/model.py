"""Static network model: addressing, nodes, interfaces, links.

The model is deliberately dumb: it stores topology and enforces structural
invariants (address uniqueness, subnet coherence, metric ranges).  Protocol
state lives in :mod:`msrsim.lsproto`, dynamics in :mod:`msrsim.engine`.
"""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Optional

logger = logging.getLogger(__name__)

# 32-bit IPv4 throughout; the stdlib types already carry the invariants we
# need (a strict IPv4Network rejects host bits set below the mask).
IpAddress = ipaddress.IPv4Address
IpPrefix = ipaddress.IPv4Network

METRIC_MIN = 1
METRIC_MAX = 65535
DEFAULT_PREFIX_LEN = 24

NodeId = int
LinkId = int


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class DuplicateName(SimulationError):
    pass


class UnknownName(SimulationError):
    pass


class SubnetMismatch(SimulationError):
    pass


class MetricOutOfRange(SimulationError):
    pass


class InvariantViolation(SimulationError):
    pass


class NodeKind(Enum):
    HOST = "host"
    EXTERNAL_ROUTER = "external-router"
    UE_ROUTER = "ue-router"
    N6_ROUTER = "n6-router"
    UE = "ue"
    UPF = "upf"
    SMF = "smf"


# Kinds that natively speak the routing protocol.  UPFs participate too, but
# only through their mobile-system half (CP relay or UP instance), never as
# plain nodes.
ROUTING_KINDS = frozenset(
    {NodeKind.EXTERNAL_ROUTER, NodeKind.UE_ROUTER, NodeKind.N6_ROUTER}
)


class AdminState(Enum):
    UP = "up"
    DOWN = "down"


class LinkState(Enum):
    UP = "up"
    DOWN = "down"


class InterfaceId(NamedTuple):
    """Identity of an interface: owning node plus node-local ordinal."""

    node: NodeId
    ordinal: int

    def __str__(self) -> str:
        return f"{self.node}.{self.ordinal}"


@dataclass
class Interface:
    id: InterfaceId
    address: IpAddress
    subnet: IpPrefix
    name: str
    admin_state: AdminState = AdminState.UP

    @property
    def up(self) -> bool:
        return self.admin_state is AdminState.UP


@dataclass
class Node:
    id: NodeId
    name: str
    kind: NodeKind
    interfaces: dict[int, Interface] = field(default_factory=dict)

    @property
    def runs_routing(self) -> bool:
        return self.kind in ROUTING_KINDS

    def iface_list(self) -> list[Interface]:
        return [self.interfaces[o] for o in sorted(self.interfaces)]

    def addresses(self) -> set[IpAddress]:
        return {i.address for i in self.interfaces.values()}


@dataclass
class Link:
    """Point-to-point pipe between two interfaces sharing one subnet.

    A multi-access segment is modeled as several links inside the same
    subnet; an interface may therefore appear in more than one link.
    Metrics are directional: ``metric_ab`` applies from endpoint ``a``
    toward ``b``.
    """

    id: LinkId
    a: InterfaceId
    b: InterfaceId
    metric_ab: int
    metric_ba: int
    state: LinkState = LinkState.UP

    @property
    def up(self) -> bool:
        return self.state is LinkState.UP

    def other(self, iface: InterfaceId) -> InterfaceId:
        if iface == self.a:
            return self.b
        if iface == self.b:
            return self.a
        raise InvariantViolation(f"interface {iface} is not on link {self.id}")

    def metric_from(self, iface: InterfaceId) -> int:
        """Cost of crossing this link starting at ``iface``."""
        return self.metric_ab if iface == self.a else self.metric_ba


def contains(prefix: IpPrefix, addr: IpAddress) -> bool:
    """True iff ``addr`` falls inside ``prefix`` (mask-aware)."""
    return addr in prefix


def parse_prefix(text: str) -> IpPrefix:
    """Parse ``a.b.c.d/len`` strictly: host bits below the mask must be 0."""
    return ipaddress.IPv4Network(text, strict=True)


def host_addresses(prefix: IpPrefix) -> Iterator[IpAddress]:
    """Usable host addresses of a prefix, ascending.

    /31 yields both addresses, /32 yields none; anything wider excludes
    the network and broadcast addresses.
    """
    if prefix.prefixlen >= 32:
        return iter(())
    if prefix.prefixlen == 31:
        return iter((prefix.network_address, prefix.broadcast_address))
    return prefix.hosts()


def check_metric(metric: int) -> int:
    if not (METRIC_MIN <= metric <= METRIC_MAX):
        raise MetricOutOfRange(
            f"metric {metric} outside [{METRIC_MIN}, {METRIC_MAX}]"
        )
    return metric


class Network:
    """Mutable topology: nodes with interfaces, joined by links."""

    def __init__(self) -> None:
        self.nodes: dict[NodeId, Node] = {}
        self.links: dict[LinkId, Link] = {}
        self._by_name: dict[str, NodeId] = {}
        self._addr_owner: dict[IpAddress, InterfaceId] = {}
        self._next_node = 1
        self._next_link = 1

    # -- nodes ---------------------------------------------------------

    def add_node(self, kind: NodeKind, name: str) -> NodeId:
        if name in self._by_name:
            raise DuplicateName(f"node name {name!r} already in use")
        nid = self._next_node
        self._next_node += 1
        self.nodes[nid] = Node(id=nid, name=name, kind=kind)
        self._by_name[name] = nid
        return nid

    def node(self, nid: NodeId) -> Node:
        try:
            return self.nodes[nid]
        except KeyError:
            raise UnknownName(f"no node with id {nid}") from None

    def node_by_name(self, name: str) -> Node:
        try:
            return self.nodes[self._by_name[name]]
        except KeyError:
            raise UnknownName(f"no node named {name!r}") from None

    def node_names(self) -> dict[NodeId, str]:
        return {nid: n.name for nid, n in self.nodes.items()}

    # -- interfaces ----------------------------------------------------

    def add_interface(
        self,
        nid: NodeId,
        ordinal: int,
        address: IpAddress,
        subnet: IpPrefix,
        name: Optional[str] = None,
        via_mobile_system: bool = False,
    ) -> InterfaceId:
        node = self.node(nid)
        if ordinal in node.interfaces:
            raise InvariantViolation(
                f"{node.name} already has an interface with ordinal {ordinal}"
            )
        if node.kind is NodeKind.HOST and node.interfaces:
            raise InvariantViolation(f"host {node.name} may have only one interface")
        if node.kind is NodeKind.UPF and not via_mobile_system:
            # UPF interfaces exist only as mobile-system attachments
            # (N6 interfaces or per-session reservations).
            raise InvariantViolation(
                f"interfaces of UPF {node.name} are managed by the mobile system"
            )
        if not contains(subnet, address):
            raise SubnetMismatch(f"{address} is not inside {subnet}")
        if address in self._addr_owner:
            raise InvariantViolation(f"address {address} already assigned")
        iid = InterfaceId(nid, ordinal)
        iface = Interface(
            id=iid,
            address=address,
            subnet=subnet,
            name=name if name is not None else f"eth{ordinal}",
        )
        node.interfaces[ordinal] = iface
        self._addr_owner[address] = iid
        return iid

    def remove_interface(self, iid: InterfaceId) -> None:
        """Drop an interface together with every link it anchors."""
        iface = self.iface(iid)
        for link in list(self.links_of_iface(iid)):
            del self.links[link.id]
        del self.nodes[iid.node].interfaces[iid.ordinal]
        del self._addr_owner[iface.address]

    def iface(self, iid: InterfaceId) -> Interface:
        try:
            return self.nodes[iid.node].interfaces[iid.ordinal]
        except KeyError:
            raise UnknownName(f"no interface {iid}") from None

    def has_iface(self, iid: InterfaceId) -> bool:
        return iid.node in self.nodes and iid.ordinal in self.nodes[iid.node].interfaces

    def owner_of_address(self, addr: IpAddress) -> Optional[InterfaceId]:
        return self._addr_owner.get(addr)

    def all_addresses(self) -> set[IpAddress]:
        return set(self._addr_owner)

    def interfaces(self) -> Iterator[Interface]:
        for nid in sorted(self.nodes):
            for ordinal in sorted(self.nodes[nid].interfaces):
                yield self.nodes[nid].interfaces[ordinal]

    # -- links ---------------------------------------------------------

    def add_link(
        self,
        a: InterfaceId,
        b: InterfaceId,
        metric_ab: int,
        metric_ba: Optional[int] = None,
    ) -> LinkId:
        if metric_ba is None:
            metric_ba = metric_ab
        ia, ib = self.iface(a), self.iface(b)
        if a == b:
            raise InvariantViolation("a link needs two distinct interfaces")
        if ia.subnet != ib.subnet:
            raise SubnetMismatch(
                f"link endpoints disagree on subnet: {ia.subnet} vs {ib.subnet}"
            )
        check_metric(metric_ab)
        check_metric(metric_ba)
        lid = self._next_link
        self._next_link += 1
        self.links[lid] = Link(id=lid, a=a, b=b, metric_ab=metric_ab, metric_ba=metric_ba)
        return lid

    def link(self, lid: LinkId) -> Link:
        try:
            return self.links[lid]
        except KeyError:
            raise UnknownName(f"no link with id {lid}") from None

    def links_of_iface(self, iid: InterfaceId) -> list[Link]:
        return [l for l in self.links.values() if iid in (l.a, l.b)]

    def links_of_node(self, nid: NodeId) -> list[Link]:
        return [
            l for l in self.links.values() if l.a.node == nid or l.b.node == nid
        ]

    def find_link(self, a: InterfaceId, b: InterfaceId) -> Optional[Link]:
        for link in self.links.values():
            if {link.a, link.b} == {a, b}:
                return link
        return None

    def set_link_state(self, lid: LinkId, state: LinkState) -> None:
        self.link(lid).state = state

    def set_link_metrics(
        self, lid: LinkId, metric_ab: int, metric_ba: Optional[int] = None
    ) -> None:
        link = self.link(lid)
        link.metric_ab = check_metric(metric_ab)
        link.metric_ba = check_metric(metric_ab if metric_ba is None else metric_ba)

    # -- audits ---------------------------------------------------------

    def audit(self) -> list[str]:
        """Structural invariant check; returns human-readable violations."""
        problems: list[str] = []
        seen: dict[IpAddress, InterfaceId] = {}
        for iface in self.interfaces():
            if iface.address in seen:
                problems.append(
                    f"address {iface.address} assigned to both "
                    f"{seen[iface.address]} and {iface.id}"
                )
            seen[iface.address] = iface.id
            if not contains(iface.subnet, iface.address):
                problems.append(f"interface {iface.id} outside its subnet")
        for link in self.links.values():
            ia, ib = self.iface(link.a), self.iface(link.b)
            if ia.subnet != ib.subnet:
                problems.append(f"link {link.id} spans two subnets")
        for node in self.nodes.values():
            if node.kind is NodeKind.HOST and len(node.interfaces) > 1:
                problems.append(f"host {node.name} has {len(node.interfaces)} interfaces")
        return problems

"""Mobile-system behavior: PDU sessions, GTP relay, CP/UP control messages.

Two ways to realize the per-UPF router exist side by side:

* CP-based: the protocol instance speaks from the control plane.  The
  UPF is configured to relay routing messages between its interfaces and
  the CP through per-interface GTP tunnels, so external routers see
  packets indistinguishable from locally generated ones.
* UP-based: the CP triggers the UPF to run the protocol itself; the UPF
  reports its table back, and the CP answers with user-plane rules.

Either way the object below only keeps state and enforces preconditions;
message timing and delivery live in :mod:`msrsim.engine`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .model import (
    InterfaceId,
    IpAddress,
    IpPrefix,
    Network,
    NodeId,
    NodeKind,
    SimulationError,
    contains,
)
from .msrouter import (
    ForwardingRule,
    MsrIfaceKind,
    MsrInterface,
    MsRouter,
    RoutingMode,
    map_interface_name,
    reserve_pdu_iface_address,
)

logger = logging.getLogger(__name__)

# Session-backed interfaces live in a separate ordinal space on the UPF
# and UE nodes so they never collide with declared N6/LAN ordinals.
SESSION_ORDINAL_BASE = 1000


class AddressInUse(SimulationError):
    pass


class UnknownSession(SimulationError):
    pass


class ModeMismatch(SimulationError):
    pass


class UnknownInterface(SimulationError):
    pass


class UnknownTeid(SimulationError):
    pass


class InvalidRule(SimulationError):
    pass


class SessionState(Enum):
    ACTIVE = "active"
    RELEASED = "released"


@dataclass
class PduSession:
    id: int
    ue: NodeId
    upf: NodeId
    ue_addr: IpAddress
    ue_subnet: IpPrefix
    reserved_addr: IpAddress
    link: int
    metric: int
    state: SessionState = SessionState.ACTIVE


@dataclass(frozen=True)
class GtpTunnel:
    teid: int
    upf: NodeId
    interface: InterfaceId


@dataclass(frozen=True)
class GtpPdu:
    """GTP framing reduced to what matters here: a TEID around a payload."""

    teid: int
    payload: Any


class CpUpKind(Enum):
    CONFIGURE_RELAY = "configure-relay"
    INSTALL_RULES = "install-rules"
    TRIGGER_ROUTING = "trigger-routing"
    REPORT_TABLE = "report-table"


@dataclass(frozen=True)
class CpUpMessage:
    kind: CpUpKind
    upf: NodeId
    payload: Any = None


class MobileSystem:
    """Sessions, tunnels and rule state for every UPF behind one SMF."""

    def __init__(self, network: Network, smf: NodeId, mode: RoutingMode) -> None:
        self.network = network
        self.smf = smf
        self.mode = mode
        self.routers: dict[NodeId, MsRouter] = {}
        self.sessions: dict[int, PduSession] = {}
        self.rules: dict[NodeId, list[ForwardingRule]] = {}
        self.relay_enabled: dict[NodeId, bool] = {}
        self.triggered: dict[NodeId, bool] = {}
        self._tunnels: dict[NodeId, dict[int, InterfaceId]] = {}
        self._teid_of: dict[NodeId, dict[InterfaceId, int]] = {}
        self._next_session = 1
        self._next_teid: dict[NodeId, int] = {}

    # -- registration ------------------------------------------------------

    def add_upf(self, upf: NodeId, name: str) -> MsRouter:
        router = MsRouter(upf=upf, name=name, mode=self.mode)
        router.refresh_router_id()
        self.routers[upf] = router
        self.rules[upf] = []
        self.relay_enabled[upf] = False
        self.triggered[upf] = False
        self._tunnels[upf] = {}
        self._teid_of[upf] = {}
        self._next_teid[upf] = 1
        return router

    def router(self, upf: NodeId) -> MsRouter:
        try:
            return self.routers[upf]
        except KeyError:
            raise UnknownInterface(f"node {upf} is not a registered UPF") from None

    def router_named(self, name: str) -> Optional[MsRouter]:
        for router in self.routers.values():
            if router.name == name:
                return router
        return None

    # -- interface lifecycle -------------------------------------------------

    def attach_n6(
        self, upf: NodeId, ordinal: int, address: IpAddress, subnet: IpPrefix
    ) -> MsrInterface:
        router = self.router(upf)
        name = map_interface_name(MsrIfaceKind.N6, ordinal)
        iid = self.network.add_interface(
            upf, ordinal, address, subnet, name=name, via_mobile_system=True
        )
        iface = MsrInterface(
            id=iid,
            kind=MsrIfaceKind.N6,
            source_id=ordinal,
            name=name,
            address=address,
            subnet=subnet,
        )
        router.n6[ordinal] = iface
        router.refresh_router_id()
        if self.relay_enabled[upf]:
            self._bind_tunnel(upf, iid)
        return iface

    def establish_pdu_session(
        self,
        ue: NodeId,
        upf: NodeId,
        ue_addr: IpAddress,
        ue_subnet: IpPrefix,
        metric: int,
    ) -> PduSession:
        """Create a session: UE leg, reserved router leg, connecting link."""
        router = self.router(upf)
        ue_node = self.network.node(ue)
        if ue_node.kind not in (NodeKind.UE, NodeKind.UE_ROUTER):
            raise ModeMismatch(f"{ue_node.name} cannot anchor a pdu session")
        if not contains(ue_subnet, ue_addr):
            raise AddressInUse(f"{ue_addr} is outside {ue_subnet}")
        if self.network.owner_of_address(ue_addr) is not None:
            raise AddressInUse(f"address {ue_addr} already assigned")

        sid = self._next_session
        self._next_session += 1
        ordinal = SESSION_ORDINAL_BASE + sid
        name = map_interface_name(MsrIfaceKind.PDU_SESSION, sid)

        ue_iface = self.network.add_interface(
            ue, ordinal, ue_addr, ue_subnet, name=name
        )
        in_use = self.network.all_addresses()
        reserved = reserve_pdu_iface_address(ue_addr, ue_subnet, in_use)
        upf_iface = self.network.add_interface(
            upf, ordinal, reserved, ue_subnet, name=name, via_mobile_system=True
        )
        link = self.network.add_link(upf_iface, ue_iface, metric)

        router.sessions[sid] = MsrInterface(
            id=upf_iface,
            kind=MsrIfaceKind.PDU_SESSION,
            source_id=sid,
            name=name,
            address=reserved,
            subnet=ue_subnet,
        )
        if self.mode is RoutingMode.CP_BASED and self.relay_enabled[upf]:
            self._bind_tunnel(upf, upf_iface)
        session = PduSession(
            id=sid,
            ue=ue,
            upf=upf,
            ue_addr=ue_addr,
            ue_subnet=ue_subnet,
            reserved_addr=reserved,
            link=link,
            metric=metric,
        )
        self.sessions[sid] = session
        return session

    def release_pdu_session(self, sid: int) -> PduSession:
        """Tear a session down: interfaces, link, tunnel and reservation go."""
        session = self.sessions.get(sid)
        if session is None or session.state is SessionState.RELEASED:
            raise UnknownSession(f"no active pdu session {sid}")
        router = self.router(session.upf)
        msr_iface = router.sessions.pop(sid)
        teid = self._teid_of[session.upf].pop(msr_iface.id, None)
        if teid is not None:
            del self._tunnels[session.upf][teid]
        ordinal = SESSION_ORDINAL_BASE + sid
        self.network.remove_interface(InterfaceId(session.upf, ordinal))
        if self.network.has_iface(InterfaceId(session.ue, ordinal)):
            self.network.remove_interface(InterfaceId(session.ue, ordinal))
        session.state = SessionState.RELEASED
        return session

    def active_sessions(self) -> list[PduSession]:
        return [
            self.sessions[s]
            for s in sorted(self.sessions)
            if self.sessions[s].state is SessionState.ACTIVE
        ]

    # -- GTP relay (CP-based only) ---------------------------------------------

    def _bind_tunnel(self, upf: NodeId, iface: InterfaceId) -> GtpTunnel:
        teid = self._next_teid[upf]
        self._next_teid[upf] += 1
        self._tunnels[upf][teid] = iface
        self._teid_of[upf][iface] = teid
        return GtpTunnel(teid=teid, upf=upf, interface=iface)

    def cp_configure_relay(self, upf: NodeId) -> list[GtpTunnel]:
        """Bind one tunnel per router interface; UPF starts relaying."""
        router = self.router(upf)
        if self.mode is not RoutingMode.CP_BASED:
            raise ModeMismatch("relay configuration belongs to the cp-based mode")
        self.relay_enabled[upf] = True
        out = []
        for iface in router.enumerate_interfaces():
            if iface.id not in self._teid_of[upf]:
                out.append(self._bind_tunnel(upf, iface.id))
        return out

    def teid_for(self, upf: NodeId, iface: InterfaceId) -> Optional[int]:
        return self._teid_of.get(upf, {}).get(iface)

    def tunnel_map(self, upf: NodeId) -> dict[int, InterfaceId]:
        return dict(self._tunnels.get(upf, {}))

    def cp_send_routing_msg(self, upf: NodeId, iface: InterfaceId, msg: Any) -> GtpPdu:
        """SMF-side encapsulation toward the UPF interface ``iface``."""
        if self.mode is not RoutingMode.CP_BASED:
            raise ModeMismatch("cp_send_routing_msg requires the cp-based mode")
        teid = self.teid_for(upf, iface)
        if teid is None:
            router = self.routers.get(upf)
            known = [i.name for i in router.enumerate_interfaces()] if router else []
            raise UnknownInterface(
                f"no tunnel for interface {iface} on upf {upf} (known: {known})"
            )
        return GtpPdu(teid=teid, payload=msg)

    def cp_receive_routing_msg(
        self, upf: NodeId, pdu: GtpPdu
    ) -> tuple[MsrInterface, Any]:
        """SMF-side decapsulation of a PDU the UPF relayed upward."""
        iface = self._tunnels.get(upf, {}).get(pdu.teid)
        if iface is None:
            raise UnknownTeid(f"upf {upf} has no tunnel with teid {pdu.teid}")
        msr_iface = self.router(upf).iface_by_id(iface)
        if msr_iface is None:
            raise UnknownTeid(f"teid {pdu.teid} maps to a vanished interface {iface}")
        return msr_iface, pdu.payload

    def relay_up(self, upf: NodeId, iface: InterfaceId, msg: Any) -> Optional[GtpPdu]:
        """UPF-side wrap of a received routing message, wire toward the CP.

        Returns None when the UPF is not relaying (mode/flag/binding), in
        which case the message is simply dropped.
        """
        if self.mode is not RoutingMode.CP_BASED or not self.relay_enabled.get(upf):
            return None
        teid = self.teid_for(upf, iface)
        if teid is None:
            return None
        return GtpPdu(teid=teid, payload=msg)

    # -- UP-based control -----------------------------------------------------

    def up_trigger_routing(self, upf: NodeId) -> None:
        self.router(upf)
        if self.mode is not RoutingMode.UP_BASED:
            raise ModeMismatch("trigger-routing belongs to the up-based mode")
        self.triggered[upf] = True

    def up_report_table(self, upf: NodeId) -> CpUpMessage:
        router = self.router(upf)
        if self.mode is not RoutingMode.UP_BASED:
            raise ModeMismatch("report-table belongs to the up-based mode")
        return CpUpMessage(
            kind=CpUpKind.REPORT_TABLE, upf=upf, payload=list(router.table)
        )

    # -- rules ------------------------------------------------------------------

    def install_rules(self, upf: NodeId, rules: list[ForwardingRule]) -> None:
        """Atomically replace the UPF's rule set; reject unsound rules."""
        router = self.router(upf)
        for rule in rules:
            iface = router.iface_by_id(rule.egress)
            if iface is None:
                raise InvalidRule(f"rule for {rule.match_prefix}: unknown egress {rule.egress}")
            if not contains(iface.subnet, rule.next_hop):
                raise InvalidRule(
                    f"rule for {rule.match_prefix}: next hop {rule.next_hop} "
                    f"is off-link for {iface.name} ({iface.subnet})"
                )
            if rule.priority != rule.match_prefix.prefixlen:
                raise InvalidRule(
                    f"rule for {rule.match_prefix}: priority {rule.priority} "
                    f"does not equal the prefix length"
                )
        self.rules[upf] = list(rules)

    # -- audits -------------------------------------------------------------------

    def audit(self) -> list[str]:
        problems: list[str] = []
        for upf in sorted(self.routers):
            router = self.routers[upf]
            node = self.network.node(upf)
            mirror = {i.id for i in router.enumerate_interfaces()}
            actual = {i.id for i in node.iface_list()}
            if mirror != actual:
                problems.append(
                    f"{router.name}: router view {sorted(mirror)} "
                    f"!= upf interfaces {sorted(actual)}"
                )
            tunnels = self._tunnels[upf]
            back = self._teid_of[upf]
            if len(tunnels) != len(back) or any(
                back.get(iface) != teid for teid, iface in tunnels.items()
            ):
                problems.append(f"{router.name}: teid mapping is not a bijection")
            if self.mode is RoutingMode.CP_BASED and self.relay_enabled[upf]:
                unbound = mirror - set(back)
                if unbound:
                    problems.append(f"{router.name}: interfaces without tunnels: {sorted(unbound)}")
        for session in self.active_sessions():
            if session.reserved_addr == session.ue_addr:
                problems.append(f"session {session.id}: reservation equals the ue address")
            if not contains(session.ue_subnet, session.reserved_addr):
                problems.append(f"session {session.id}: reservation off-subnet")
        return problems

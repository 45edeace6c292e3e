"""Deterministic discrete-event simulation driving the routing machinery.

Events are processed in (time_ms, sequence) order from a binary heap;
everything the run produces (adjacency formation, LSDB contents, rule
installs, the event log) is a pure function of (scenario, approach,
seed).  Determinism is a hard contract here: tests diff whole logs.
"""

from __future__ import annotations

import heapq
import ipaddress
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from . import lsproto
from .lsproto import (
    DEAD_INTERVAL_MS,
    HELLO_INTERVAL_MS,
    HelloMsg,
    LinkStateRouter,
    Lsa,
    NeighborEvent,
    NeighborState,
    derive_router_id,
)
from .mobile import (
    SESSION_ORDINAL_BASE,
    AddressInUse,
    CpUpKind,
    CpUpMessage,
    GtpPdu,
    MobileSystem,
    UnknownSession,
    UnknownTeid,
)
from .model import (
    InterfaceId,
    InvariantViolation,
    IpAddress,
    LinkState,
    Network,
    NodeId,
    NodeKind,
    SimulationError,
    UnknownName,
)
from .msrouter import MsRouter, RoutingMode, translate_routes
from .scenario import DEFAULT_PDU_METRIC, EventDecl, Scenario

logger = logging.getLogger(__name__)

DEFAULT_LINK_LATENCY_MS = 1
DEFAULT_CPUP_LATENCY_MS = 1
_BRIDGE_HOP_LIMIT = 8


class TimeInPast(SimulationError):
    pass


class UnknownTarget(SimulationError):
    pass


class EventKind(Enum):
    DELIVER_MSG = "DeliverMsg"
    TIMER = "Timer"
    LINK_DOWN = "LinkDown"
    LINK_UP = "LinkUp"
    METRIC_CHANGE = "MetricChange"
    PDU_ESTABLISH = "PduEstablish"
    PDU_RELEASE = "PduRelease"
    CP_UP_DELIVER = "CpUpDeliver"


@dataclass
class Event:
    time_ms: int
    kind: EventKind
    data: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunStats:
    end_ms: int
    processed: dict[str, int] = field(default_factory=dict)
    quiescent: bool = False
    converged: bool = False
    notes: list[str] = field(default_factory=list)


class EventLog:
    """Append-only run log; every line is reproducible byte for byte."""

    def __init__(self) -> None:
        self.lines: list[str] = []

    def kind_line(self, t: int, kind: EventKind, detail: str) -> None:
        self.lines.append(f"t={t} kind={kind.value} {detail}".rstrip())

    def step(self, t: int, entity: str, code: str, label: str) -> None:
        self.lines.append(f"t={t} {entity} {code} {label}")

    def warn(self, t: int, entity: str, text: str) -> None:
        self.lines.append(f"t={t} {entity} warn {text}")

    def text(self) -> str:
        return "\n".join(self.lines) + ("\n" if self.lines else "")


class Simulation:
    """One simulated run of a scenario under a chosen approach."""

    def __init__(
        self,
        scenario: Scenario,
        approach: RoutingMode,
        seed: Optional[int] = None,
        link_latency_ms: int = DEFAULT_LINK_LATENCY_MS,
        cpup_latency_ms: int = DEFAULT_CPUP_LATENCY_MS,
        loss_rate: float = 0.0,
    ) -> None:
        self.scenario = scenario
        self.approach = RoutingMode(approach)
        self.seed = scenario.seed if seed is None else seed
        self.link_latency_ms = link_latency_ms
        self.cpup_latency_ms = cpup_latency_ms
        self.loss_rate = loss_rate
        self.rng = random.Random(self.seed)

        self.now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, Event]] = []
        self.log = EventLog()
        self.violations: list[str] = []

        self.network = Network()
        self.instances: dict[NodeId, LinkStateRouter] = {}
        self.tables: dict[NodeId, list[lsproto.RoutingEntry]] = {}
        self._dirty: set[NodeId] = set()
        self._exchanged: set[NodeId] = set()
        self._forwarding_active: set[NodeId] = set()

        self._build()

    # -- construction ------------------------------------------------------

    def _build(self) -> None:
        sc = self.scenario
        for decl in sc.nodes:
            self.network.add_node(decl.kind, decl.name)

        upf_ids = [
            self.network.node_by_name(d.name).id
            for d in sc.nodes
            if d.kind is NodeKind.UPF
        ]
        smf_ids = [
            self.network.node_by_name(d.name).id
            for d in sc.nodes
            if d.kind is NodeKind.SMF
        ]
        if upf_ids and not smf_ids:
            raise InvariantViolation("a scenario with upfs needs an smf")
        self.smf_id: Optional[NodeId] = smf_ids[0] if smf_ids else None
        self.mobile = MobileSystem(
            self.network, self.smf_id if self.smf_id is not None else -1, self.approach
        )
        for index, upf in enumerate(upf_ids, start=1):
            self.mobile.add_upf(upf, f"msr{index}")

        for decl in sc.ifaces:
            node = self.network.node_by_name(decl.node)
            if node.kind is NodeKind.UPF:
                self.mobile.attach_n6(node.id, decl.ordinal, decl.address, decl.subnet)
            else:
                self.network.add_interface(
                    node.id, decl.ordinal, decl.address, decl.subnet
                )
        for decl in sc.links:
            a = self.network.node_by_name(decl.a_node)
            b = self.network.node_by_name(decl.b_node)
            self.network.add_link(
                InterfaceId(a.id, decl.a_ordinal),
                InterfaceId(b.id, decl.b_ordinal),
                decl.metric_ab,
                decl.metric_ba,
            )

        # Routing participants: external routers natively, one instance per
        # UPF for its mobile-system router.
        for nid in sorted(self.network.nodes):
            node = self.network.nodes[nid]
            if node.runs_routing:
                rid = derive_router_id(node.addresses(), fallback=nid)
                self.instances[nid] = LinkStateRouter(self.network, nid, rid)
                self.tables[nid] = []
        smf_name = (
            self.network.node(self.smf_id).name if self.smf_id is not None else "smf"
        )
        for upf in sorted(self.mobile.routers):
            msr = self.mobile.routers[upf]
            msr.refresh_router_id()
            inst = LinkStateRouter(self.network, upf, msr.router_id)
            msr.instance = inst
            self.instances[upf] = inst
            self.tables[upf] = []
            upf_name = self.network.node(upf).name
            if self.approach is RoutingMode.CP_BASED:
                self.log.step(0, smf_name, "A1.S1", f"proto-init {msr.name}")
                self.mobile.cp_configure_relay(upf)
                self.log.step(0, smf_name, "A1.S2", f"configure-relay {upf_name}")
            else:
                self.log.step(0, smf_name, "A2.S1", f"trigger-routing {upf_name}")
                self.mobile.up_trigger_routing(upf)
                self.log.step(0, upf_name, "A2.S2", f"proto-init {msr.name}")

        for decl in sc.pdus:
            self._do_establish(
                decl.ue, decl.upf, decl.ue_address, decl.subnet, decl.metric
            )

        for key in sorted(self.instances):
            self.instances[key].originate_lsa(0)

        for key in sorted(self.instances):
            self.schedule(Event(0, EventKind.TIMER, {"timer": "tick", "key": key}))
        for decl in sc.events:
            self.schedule(_event_from_decl(decl))

    # -- scheduling --------------------------------------------------------

    def schedule(self, event: Event) -> None:
        if event.time_ms < self.now:
            raise TimeInPast(
                f"cannot schedule at t={event.time_ms}; now is t={self.now}"
            )
        self._seq += 1
        heapq.heappush(self._queue, (event.time_ms, self._seq, event))

    def inject(self, kind: str, args: tuple[str, ...], at_ms: int) -> None:
        """Schedule an external control action, validated eagerly."""
        decl = EventDecl(time_ms=at_ms, kind=kind, args=tuple(str(a) for a in args))
        event = _event_from_decl(decl)
        self._validate_target(event)
        self.schedule(event)

    def _validate_target(self, event: Event) -> None:
        data = event.data
        if event.kind in (EventKind.LINK_DOWN, EventKind.LINK_UP, EventKind.METRIC_CHANGE):
            ref = data["ref"]
            if ref[0] == "pdu":
                if ref[1] not in self.mobile.sessions:
                    raise UnknownTarget(f"no pdu session {ref[1]}")
            else:
                for name in (ref[1], ref[3]):
                    try:
                        self.network.node_by_name(name)
                    except UnknownName:
                        raise UnknownTarget(f"no node named {name!r}") from None
        elif event.kind is EventKind.PDU_ESTABLISH:
            for name in (data["ue"], data["upf"]):
                try:
                    self.network.node_by_name(name)
                except UnknownName:
                    raise UnknownTarget(f"no node named {name!r}") from None
        elif event.kind is EventKind.PDU_RELEASE:
            if data["sid"] not in self.mobile.sessions:
                raise UnknownTarget(f"no pdu session {data['sid']}")

    # -- main loop ------------------------------------------------------------

    def run_until(self, until_ms: int) -> RunStats:
        """Process every event at or before ``until_ms``; report run state."""
        if until_ms < self.now:
            raise TimeInPast(f"cannot run back to t={until_ms} from t={self.now}")
        stats = RunStats(end_ms=until_ms)
        while self._queue and self._queue[0][0] <= until_ms:
            _, _, event = heapq.heappop(self._queue)
            self.now = event.time_ms
            self._process(event)
            stats.processed[event.kind.value] = (
                stats.processed.get(event.kind.value, 0) + 1
            )
            if not self._queue or self._queue[0][0] > self.now:
                self._flush_dirty()
        self.now = until_ms
        quiescent, reason = self._peek_quiescent()
        stats.quiescent = quiescent
        if reason:
            stats.notes.append(reason)
        converged, problems = self._converged(quiescent)
        stats.converged = converged
        stats.notes.extend(problems)
        return stats

    # -- event processing --------------------------------------------------------

    def _process(self, event: Event) -> None:
        data = event.data
        if event.kind is EventKind.TIMER:
            if data["timer"] == "tick":
                self._tick(data["key"])
            else:
                self._check_expiry(data["key"])
        elif event.kind is EventKind.DELIVER_MSG:
            self._deliver_link_msg(
                data["link"], data["to"], data["msg"], data.get("hops", 0)
            )
        elif event.kind is EventKind.CP_UP_DELIVER:
            self._deliver_cpup(data)
        elif event.kind in (EventKind.LINK_DOWN, EventKind.LINK_UP):
            self._apply_link_state(event.kind, data["ref"])
        elif event.kind is EventKind.METRIC_CHANGE:
            self._apply_metric_change(data)
        elif event.kind is EventKind.PDU_ESTABLISH:
            self._apply_establish(data)
        elif event.kind is EventKind.PDU_RELEASE:
            self._apply_release(data["sid"])

    # timers ------------------------------------------------------------------

    def _tick(self, key: NodeId) -> None:
        inst = self.instances.get(key)
        if inst is not None:
            emissions = []
            for iface in inst.interfaces():
                if not self.network.links_of_iface(iface.id):
                    continue
                emissions.append((iface.id, inst.make_hello(iface.id, self.now)))
            self._send_from(key, emissions)
        self.schedule(
            Event(self.now + HELLO_INTERVAL_MS, EventKind.TIMER, {"timer": "tick", "key": key})
        )

    def _check_expiry(self, key: NodeId) -> None:
        inst = self.instances.get(key)
        if inst is None:
            return
        lost_full = inst.stale_full_neighbors(self.now)
        inst.expire(self.now)
        if lost_full:
            self._reoriginate(key)

    def _schedule_expiry(self, key: NodeId) -> None:
        self.schedule(
            Event(
                self.now + DEAD_INTERVAL_MS + 1,
                EventKind.TIMER,
                {"timer": "expiry", "key": key},
            )
        )

    # message transport -----------------------------------------------------------

    def _is_cp_router(self, key: NodeId) -> bool:
        return (
            key in self.mobile.routers and self.approach is RoutingMode.CP_BASED
        )

    def _send_from(self, key: NodeId, emissions: list[tuple[InterfaceId, Any]]) -> None:
        """Transport instance emissions; CP-hosted speakers go via the SMF pipe."""
        if not emissions:
            return
        if key in self.mobile.routers and key not in self._exchanged:
            self._exchanged.add(key)
            msr = self.mobile.routers[key]
            if self.approach is RoutingMode.CP_BASED:
                self.log.step(
                    self.now, self._smf_name(), "A1.S3", f"routing-exchange {msr.name}"
                )
            else:
                self.log.step(
                    self.now, self.network.node(key).name, "A2.S3",
                    f"routing-exchange {msr.name}",
                )
        if self._is_cp_router(key):
            for iface_id, msg in emissions:
                pdu = self.mobile.cp_send_routing_msg(key, iface_id, msg)
                self.schedule(
                    Event(
                        self.now + self.cpup_latency_ms,
                        EventKind.CP_UP_DELIVER,
                        {"dir": "to-upf", "upf": key, "msg": pdu},
                    )
                )
        else:
            for iface_id, msg in emissions:
                self._emit_on_links(iface_id, msg)

    def _emit_on_links(self, iface_id: InterfaceId, msg: Any, hops: int = 0) -> None:
        for link in sorted(
            self.network.links_of_iface(iface_id), key=lambda l: l.id
        ):
            if not link.up:
                continue
            if self.loss_rate and self.rng.random() < self.loss_rate:
                continue
            self.schedule(
                Event(
                    self.now + self.link_latency_ms,
                    EventKind.DELIVER_MSG,
                    {"link": link.id, "to": link.other(iface_id), "msg": msg, "hops": hops},
                )
            )

    def _deliver_link_msg(
        self, link_id: int, to_iface: InterfaceId, msg: Any, hops: int
    ) -> None:
        link = self.network.links.get(link_id)
        if link is None or not link.up or not self.network.has_iface(to_iface):
            return
        node = self.network.node(to_iface.node)
        if node.kind is NodeKind.UPF:
            if self.approach is RoutingMode.CP_BASED:
                pdu = self.mobile.relay_up(node.id, to_iface, msg)
                if pdu is not None:
                    self.schedule(
                        Event(
                            self.now + self.cpup_latency_ms,
                            EventKind.CP_UP_DELIVER,
                            {"dir": "to-smf", "upf": node.id, "msg": pdu, "link": link_id},
                        )
                    )
            elif self.mobile.triggered.get(node.id):
                self._handle_routing(node.id, to_iface, msg, link)
        elif node.runs_routing:
            self._handle_routing(node.id, to_iface, msg, link)
        elif node.kind is NodeKind.UE:
            # A non-routing UE bridges its session leg and its local subnet.
            if hops < _BRIDGE_HOP_LIMIT:
                arrival = self.network.iface(to_iface)
                for iface in node.iface_list():
                    if iface.id == to_iface or iface.subnet != arrival.subnet:
                        continue
                    if iface.up:
                        self._emit_on_links(iface.id, msg, hops=hops + 1)

    def _deliver_cpup(self, data: dict[str, Any]) -> None:
        upf: NodeId = data["upf"]
        msg = data["msg"]
        if data["dir"] == "to-upf":
            if isinstance(msg, GtpPdu):
                iface = self.mobile.tunnel_map(upf).get(msg.teid)
                if iface is None or not self.network.has_iface(iface):
                    self.log.warn(
                        self.now, self.network.node(upf).name,
                        f"drop: teid {msg.teid} unbound",
                    )
                    return
                self._emit_on_links(iface, msg.payload)
            elif isinstance(msg, CpUpMessage) and msg.kind is CpUpKind.INSTALL_RULES:
                self._apply_install(upf, msg.payload)
        else:  # to-smf
            if isinstance(msg, GtpPdu):
                try:
                    msr_iface, payload = self.mobile.cp_receive_routing_msg(upf, msg)
                except UnknownTeid:
                    self.log.warn(
                        self.now, self._smf_name(), f"drop: stale teid {msg.teid}"
                    )
                    return
                link = self.network.links.get(data.get("link", -1))
                self._handle_routing(upf, msr_iface.id, payload, link)
            elif isinstance(msg, CpUpMessage) and msg.kind is CpUpKind.REPORT_TABLE:
                msr = self.mobile.routers[upf]
                rules = translate_routes(
                    msg.payload,
                    msr,
                    on_drop=lambda e, why: self.log.warn(
                        self.now, self._smf_name(), f"{msr.name} drop-route {e.destination}: {why}"
                    ),
                )
                self.schedule(
                    Event(
                        self.now + self.cpup_latency_ms,
                        EventKind.CP_UP_DELIVER,
                        {
                            "dir": "to-upf",
                            "upf": upf,
                            "msg": CpUpMessage(CpUpKind.INSTALL_RULES, upf, rules),
                        },
                    )
                )

    def _apply_install(self, upf: NodeId, rules: list) -> None:
        msr = self.mobile.routers[upf]
        upf_name = self.network.node(upf).name
        live = [r for r in rules if msr.iface_by_id(r.egress) is not None]
        if len(live) != len(rules):
            self.log.warn(
                self.now, upf_name, f"dropped {len(rules) - len(live)} stale rules"
            )
        self.mobile.install_rules(upf, live)
        prefix = "A1" if self.approach is RoutingMode.CP_BASED else "A2"
        self.log.step(
            self.now, upf_name, f"{prefix}.S6", f"install-rules rules={len(live)}"
        )
        if upf not in self._forwarding_active:
            self._forwarding_active.add(upf)
            self.log.step(self.now, upf_name, f"{prefix}.S7", "forwarding-active")

    # routing-message handling ---------------------------------------------------

    def _handle_routing(
        self, key: NodeId, iface_id: InterfaceId, msg: Any, link
    ) -> None:
        inst = self.instances.get(key)
        if inst is None or not self.network.has_iface(iface_id):
            return
        if isinstance(msg, HelloMsg):
            cost = link.metric_from(iface_id) if link is not None else None
            outcome = inst.process_hello(iface_id, msg, self.now, cost)
            self._schedule_expiry(key)
            if outcome is NeighborEvent.NEW_ADJACENCY:
                lsa = inst.originate_lsa(self.now)
                emissions = inst.db_sync(iface_id)
                emissions.extend(inst.flood(lsa))
                self._send_from(key, emissions)
                self._dirty.add(key)
            elif outcome is NeighborEvent.REMOVED:
                self._reoriginate(key)
        elif isinstance(msg, Lsa):
            result, emissions = inst.receive_lsa(iface_id, msg)
            if result is lsproto.InstallResult.INSTALLED:
                self._send_from(key, emissions)
                self._dirty.add(key)

    def _reoriginate(self, key: NodeId) -> None:
        inst = self.instances[key]
        lsa = inst.originate_lsa(self.now)
        self._send_from(key, inst.flood(lsa))
        self._dirty.add(key)

    # structural events -------------------------------------------------------------

    def _resolve_link_ref(self, ref: tuple) -> Optional[int]:
        if ref[0] == "pdu":
            session = self.mobile.sessions.get(ref[1])
            if session is None or session.state.value != "active":
                return None
            return session.link
        try:
            a = self.network.node_by_name(ref[1])
            b = self.network.node_by_name(ref[3])
        except UnknownName:
            return None
        link = self.network.find_link(
            InterfaceId(a.id, ref[2]), InterfaceId(b.id, ref[4])
        )
        return link.id if link is not None else None

    @staticmethod
    def _ref_text(ref: tuple) -> str:
        if ref[0] == "pdu":
            return f"session={ref[1]}"
        return f"a={ref[1]}.{ref[2]} b={ref[3]}.{ref[4]}"

    def _apply_link_state(self, kind: EventKind, ref: tuple) -> None:
        link_id = self._resolve_link_ref(ref)
        if link_id is None:
            self.log.warn(self.now, "engine", f"{kind.value}: no such link ({self._ref_text(ref)})")
            return
        link = self.network.link(link_id)
        want = LinkState.DOWN if kind is EventKind.LINK_DOWN else LinkState.UP
        if link.state is want:
            self.log.warn(
                self.now, "engine", f"{kind.value}: link already {want.value} ({self._ref_text(ref)})"
            )
            return
        link.state = want
        self.log.kind_line(self.now, kind, self._ref_text(ref))

    def _instance_key_for_node(self, nid: NodeId) -> Optional[NodeId]:
        return nid if nid in self.instances else None

    def _apply_metric_change(self, data: dict[str, Any]) -> None:
        ref = data["ref"]
        link_id = self._resolve_link_ref(ref)
        if link_id is None:
            self.log.warn(self.now, "engine", f"MetricChange: no such link ({self._ref_text(ref)})")
            return
        link = self.network.link(link_id)
        self.network.set_link_metrics(link_id, data["metric_ab"], data["metric_ba"])
        self.log.kind_line(
            self.now,
            EventKind.METRIC_CHANGE,
            f"{self._ref_text(ref)} metric_ab={link.metric_ab} metric_ba={link.metric_ba}",
        )
        for nid in sorted({link.a.node, link.b.node}):
            key = self._instance_key_for_node(nid)
            if key is not None:
                self._reoriginate(key)

    def _do_establish(self, ue_name, upf_name, addr, subnet, metric) -> bool:
        ue = self.network.node_by_name(ue_name)
        upf = self.network.node_by_name(upf_name)
        try:
            session = self.mobile.establish_pdu_session(
                ue.id, upf.id, addr, subnet, metric
            )
        except (AddressInUse, SimulationError) as exc:
            self.log.warn(self.now, "engine", f"PduEstablish failed: {exc}")
            return False
        msr = self.mobile.routers[upf.id]
        self.log.kind_line(
            self.now,
            EventKind.PDU_ESTABLISH,
            f"session={session.id} ue={ue.name} upf={upf.name} "
            f"addr={session.ue_addr}/{session.ue_subnet.prefixlen} "
            f"reserved={session.reserved_addr} iface={msr.sessions[session.id].name} "
            f"metric={session.metric}",
        )
        return True

    def _apply_establish(self, data: dict[str, Any]) -> None:
        ok = self._do_establish(
            data["ue"], data["upf"], data["addr"], data["subnet"], data["metric"]
        )
        if not ok:
            return
        upf = self.network.node_by_name(data["upf"])
        ue = self.network.node_by_name(data["ue"])
        self._reoriginate(upf.id)
        if ue.id in self.instances:
            self._reoriginate(ue.id)

    def _apply_release(self, sid: int) -> None:
        try:
            session = self.mobile.release_pdu_session(sid)
        except UnknownSession as exc:
            self.log.warn(self.now, "engine", f"PduRelease failed: {exc}")
            return
        self.log.kind_line(self.now, EventKind.PDU_RELEASE, f"session={sid}")
        for nid in sorted({session.upf, session.ue}):
            key = self._instance_key_for_node(nid)
            if key is None:
                continue
            self.instances[key].drop_interface_state(
                InterfaceId(nid, SESSION_ORDINAL_BASE + sid)
            )
            self._reoriginate(key)

    # table maintenance ---------------------------------------------------------------

    def _smf_name(self) -> str:
        return (
            self.network.node(self.smf_id).name if self.smf_id is not None else "smf"
        )

    def _flush_dirty(self) -> None:
        """Recompute routes for touched instances once per timestamp."""
        for key in sorted(self._dirty):
            inst = self.instances[key]
            routes = inst.compute_routes()
            if routes == self.tables[key]:
                continue
            self.tables[key] = routes
            msr = self.mobile.routers.get(key)
            if msr is None:
                continue
            msr.table = routes
            upf_name = self.network.node(key).name
            if self.approach is RoutingMode.CP_BASED:
                self.log.step(
                    self.now, self._smf_name(), "A1.S4",
                    f"table-computed {msr.name} routes={len(routes)}",
                )
                rules = translate_routes(
                    routes,
                    msr,
                    on_drop=lambda e, why: self.log.warn(
                        self.now, self._smf_name(),
                        f"{msr.name} drop-route {e.destination}: {why}",
                    ),
                )
                self.log.step(
                    self.now, self._smf_name(), "A1.S5",
                    f"translate-rules {msr.name} rules={len(rules)}",
                )
                self.schedule(
                    Event(
                        self.now + self.cpup_latency_ms,
                        EventKind.CP_UP_DELIVER,
                        {
                            "dir": "to-upf",
                            "upf": key,
                            "msg": CpUpMessage(CpUpKind.INSTALL_RULES, key, rules),
                        },
                    )
                )
            else:
                self.log.step(
                    self.now, upf_name, "A2.S4", f"table-computed routes={len(routes)}"
                )
                report = self.mobile.up_report_table(key)
                self.log.step(
                    self.now, upf_name, "A2.S5",
                    f"report-table routes={len(routes)}",
                )
                self.schedule(
                    Event(
                        self.now + self.cpup_latency_ms,
                        EventKind.CP_UP_DELIVER,
                        {"dir": "to-smf", "upf": key, "msg": report},
                    )
                )
        self._dirty.clear()

    # quiescence ----------------------------------------------------------------------

    def _delivery_targets(
        self, link_id: int, to_iface: InterfaceId, depth: int = 0
    ) -> list[tuple[NodeId, InterfaceId]]:
        """Instances a pending on-link message will eventually reach."""
        link = self.network.links.get(link_id)
        if link is None or not link.up or not self.network.has_iface(to_iface):
            return []
        node = self.network.node(to_iface.node)
        if node.kind is NodeKind.UPF:
            if self.approach is RoutingMode.CP_BASED:
                if self.mobile.relay_up(node.id, to_iface, None) is not None:
                    return [(node.id, to_iface)]
                return []
            return [(node.id, to_iface)] if self.mobile.triggered.get(node.id) else []
        if node.runs_routing:
            return [(node.id, to_iface)]
        if node.kind is NodeKind.UE and depth < 4:
            arrival = self.network.iface(to_iface)
            out: list[tuple[NodeId, InterfaceId]] = []
            for iface in node.iface_list():
                if iface.id == to_iface or iface.subnet != arrival.subnet or not iface.up:
                    continue
                for nxt in sorted(self.network.links_of_iface(iface.id), key=lambda l: l.id):
                    if nxt.up:
                        out.extend(
                            self._delivery_targets(nxt.id, nxt.other(iface.id), depth + 1)
                        )
            return out
        return []

    def _hello_can_arrive(
        self, key: NodeId, iface_id: InterfaceId, rid: lsproto.RouterId
    ) -> bool:
        """True when the ordinary hello cadence still refreshes this record."""
        rid_to_key = {inst.router_id: k for k, inst in self.instances.items()}
        src_key = rid_to_key.get(rid)
        if src_key is None:
            return False
        src = self.instances[src_key]
        for iface in src.interfaces():
            if self._is_cp_router(src_key) and self.mobile.teid_for(
                src_key, iface.id
            ) is None:
                continue
            for link in self.network.links_of_iface(iface.id):
                if not link.up:
                    continue
                targets = self._delivery_targets(link.id, link.other(iface.id))
                if (key, iface_id) in targets:
                    return True
        return False

    def _classify_msg(
        self,
        key: NodeId,
        iface_id: InterfaceId,
        msg: Any,
        arrival: int,
        refreshes: dict,
    ) -> Optional[str]:
        """None when processing the message cannot change routing state."""
        inst = self.instances.get(key)
        if inst is None:
            return None
        if isinstance(msg, Lsa):
            stored = inst.lsdb.get(msg.origin)
            if stored is None or msg.seq > stored.seq:
                return f"lsa from {lsproto.router_id_str(msg.origin)} in flight"
            return None
        if isinstance(msg, HelloMsg):
            rec = inst.neighbors.get((iface_id, msg.sender))
            if (
                rec is not None
                and rec.state is NeighborState.FULL
                and inst.router_id in msg.seen_neighbors
            ):
                slot = (key, iface_id, msg.sender)
                refreshes[slot] = max(refreshes.get(slot, 0), arrival)
                return None
            return f"hello from {lsproto.router_id_str(msg.sender)} would change adjacency"
        return None

    def _peek_quiescent(self) -> tuple[bool, str]:
        """Inspect pending events: is any of them able to change routing state?

        Scripted future events and bare hello cadence do not count;
        in-flight LSAs, pending rule installs, hellos that would create
        or drop an adjacency, and expiries that would fire all do.
        """
        refreshes: dict[tuple, int] = {}
        expiries: list[tuple[int, NodeId]] = []
        blocking: list[str] = []
        for time_ms, _seq, event in sorted(self._queue, key=lambda e: (e[0], e[1])):
            data = event.data
            if event.kind in (
                EventKind.LINK_DOWN,
                EventKind.LINK_UP,
                EventKind.METRIC_CHANGE,
                EventKind.PDU_ESTABLISH,
                EventKind.PDU_RELEASE,
            ):
                continue
            if event.kind is EventKind.TIMER:
                if data["timer"] == "expiry":
                    expiries.append((time_ms, data["key"]))
                continue
            if event.kind is EventKind.DELIVER_MSG:
                for key, iface_id in self._delivery_targets(data["link"], data["to"]):
                    why = self._classify_msg(key, iface_id, data["msg"], time_ms, refreshes)
                    if why:
                        blocking.append(why)
            elif event.kind is EventKind.CP_UP_DELIVER:
                msg = data["msg"]
                if isinstance(msg, CpUpMessage):
                    blocking.append(f"{msg.kind.value} in flight")
                    continue
                upf = data["upf"]
                iface = self.mobile.tunnel_map(upf).get(msg.teid)
                if iface is None or not self.network.has_iface(iface):
                    continue
                if data["dir"] == "to-smf":
                    why = self._classify_msg(upf, iface, msg.payload, time_ms, refreshes)
                    if why:
                        blocking.append(why)
                else:
                    for nxt in sorted(self.network.links_of_iface(iface), key=lambda l: l.id):
                        if not nxt.up:
                            continue
                        for key, iid in self._delivery_targets(nxt.id, nxt.other(iface)):
                            why = self._classify_msg(key, iid, msg.payload, time_ms, refreshes)
                            if why:
                                blocking.append(why)
        for key in sorted(self.instances):
            inst = self.instances[key]
            for (iface_id, rid), rec in sorted(inst.neighbors.items()):
                # An INIT record with its partner still sending is an
                # adjacency mid-formation: the next cadence tick will
                # change state even though nothing is in flight yet.
                if rec.state is NeighborState.INIT and self._hello_can_arrive(
                    key, iface_id, rid
                ):
                    blocking.append(
                        f"adjacency {lsproto.router_id_str(inst.router_id)}-"
                        f"{lsproto.router_id_str(rid)} still forming"
                    )
        latest_due: dict[NodeId, int] = {}
        for due, key in expiries:
            latest_due[key] = max(latest_due.get(key, 0), due)
        for key in sorted(latest_due):
            inst = self.instances.get(key)
            if inst is None:
                continue
            due = latest_due[key]
            for (iface_id, rid), rec in sorted(inst.neighbors.items()):
                if self._hello_can_arrive(key, iface_id, rid):
                    # Cadence keeps the record fresh; the timer re-validates
                    # lazily when it fires and removes nothing.
                    continue
                last = rec.last_heard_ms
                slot = (key, iface_id, rid)
                if slot in refreshes and refreshes[slot] <= due:
                    last = max(last, refreshes[slot])
                if due - last > DEAD_INTERVAL_MS:
                    blocking.append(
                        f"neighbor {lsproto.router_id_str(rid)} of "
                        f"{lsproto.router_id_str(inst.router_id)} about to expire"
                    )
        if blocking:
            return False, blocking[0]
        return True, ""

    def _adjacency_components(self) -> list[list[NodeId]]:
        rid_to_key = {inst.router_id: key for key, inst in self.instances.items()}
        neigh: dict[NodeId, set[NodeId]] = {k: set() for k in self.instances}
        for key, inst in self.instances.items():
            for rec in inst.full_neighbors():
                other = rid_to_key.get(rec.id)
                if other is None:
                    continue
                back = any(
                    r.id == inst.router_id
                    for r in self.instances[other].full_neighbors()
                )
                if back:
                    neigh[key].add(other)
                    neigh[other].add(key)
        seen: set[NodeId] = set()
        components = []
        for key in sorted(self.instances):
            if key in seen:
                continue
            stack, comp = [key], []
            while stack:
                cur = stack.pop()
                if cur in seen:
                    continue
                seen.add(cur)
                comp.append(cur)
                stack.extend(neigh[cur] - seen)
            components.append(sorted(comp))
        return components

    def _converged(self, quiescent: bool) -> tuple[bool, list[str]]:
        problems: list[str] = []
        if not quiescent:
            problems.append("not quiescent")
        for comp in self._adjacency_components():
            reference = self.instances[comp[0]].lsdb
            for key in comp[1:]:
                if not self.instances[key].lsdb.identical_to(reference):
                    problems.append(
                        f"lsdb of node {key} differs from node {comp[0]} in its component"
                    )
        for upf in sorted(self.mobile.routers):
            msr = self.mobile.routers[upf]
            expected = translate_routes(msr.table, msr)
            if self.mobile.rules[upf] != expected:
                problems.append(f"{msr.name}: installed rules lag the table")
        return (not problems, problems)

    # views -------------------------------------------------------------------------

    def table_of(self, nid: NodeId) -> Optional[list[lsproto.RoutingEntry]]:
        return self.tables.get(nid)

    def rules_of(self, nid: NodeId) -> Optional[list]:
        return self.mobile.rules.get(nid)

    def candidates_of(self, nid: NodeId) -> Optional[list[lsproto.RoutingEntry]]:
        inst = self.instances.get(nid)
        if inst is None:
            return None
        return inst.compute_all_candidates()

    def iface_display(self, iface_id: InterfaceId) -> str:
        if self.network.has_iface(iface_id):
            return self.network.iface(iface_id).name
        return str(iface_id)

    def audit(self) -> list[str]:
        problems = self.network.audit()
        problems.extend(self.mobile.audit())
        problems.extend(self.violations)
        for upf in sorted(self.mobile.routers):
            for rule in self.mobile.rules[upf]:
                msr = self.mobile.routers[upf]
                iface = msr.iface_by_id(rule.egress)
                if iface is None:
                    problems.append(f"{msr.name}: rule egress {rule.egress} vanished")
        return problems


def _event_from_decl(decl: EventDecl) -> Event:
    """Scenario/inject argument forms to a typed engine event."""
    args = decl.args
    if decl.kind in ("link-down", "link-up", "metric-change"):
        if args and args[0] == "pdu":
            ref = ("pdu", int(args[1]))
            rest = args[2:]
        else:
            a_node, a_ord = args[0].rsplit(".", 1)
            b_node, b_ord = args[1].rsplit(".", 1)
            ref = ("endpoints", a_node, int(a_ord), b_node, int(b_ord))
            rest = args[2:]
        if decl.kind == "metric-change":
            metric_ab = int(rest[0])
            metric_ba = int(rest[1]) if len(rest) > 1 else metric_ab
            return Event(
                decl.time_ms,
                EventKind.METRIC_CHANGE,
                {"ref": ref, "metric_ab": metric_ab, "metric_ba": metric_ba},
            )
        kind = EventKind.LINK_DOWN if decl.kind == "link-down" else EventKind.LINK_UP
        return Event(decl.time_ms, kind, {"ref": ref})
    if decl.kind == "pdu-establish":
        addr_s = args[2]
        if "/" in addr_s:
            addr_part, plen_s = addr_s.split("/", 1)
            plen = int(plen_s)
        else:
            addr_part, plen = addr_s, 24
        addr = ipaddress.IPv4Address(addr_part)
        subnet = ipaddress.ip_network(f"{addr}/{plen}", strict=False)
        metric = int(args[3]) if len(args) > 3 else DEFAULT_PDU_METRIC
        return Event(
            decl.time_ms,
            EventKind.PDU_ESTABLISH,
            {"ue": args[0], "upf": args[1], "addr": addr, "subnet": subnet, "metric": metric},
        )
    if decl.kind == "pdu-release":
        return Event(decl.time_ms, EventKind.PDU_RELEASE, {"sid": int(args[0])})
    raise UnknownTarget(f"unsupported event kind {decl.kind!r}")

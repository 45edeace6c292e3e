"""Scenario files: a line-oriented description of topology and timed events.

Grammar (one declaration per line, ``#`` starts a comment):

    [node]  <name> <kind>
    [iface] <node> <ordinal> <addr>/<len>
    [link]  <nodeA>.<ord> <nodeB>.<ord> <metric_ab> [<metric_ba>]
    [pdu]   <ue> <upf> <ue_addr>/<len> [<metric>]
    [event] <time_ms> <kind> <args...>
    [seed]  <n>

Kinds for ``[node]``: host, external-router, ue-router, n6-router, ue,
upf, smf.  Event kinds: link-down, link-up, pdu-establish, pdu-release,
metric-change.  ``link-down``/``link-up`` take either two endpoints
(``a.0 b.1``) or ``pdu <session-id>``.  A bare address defaults to /24.
Parsing never raises: the result is either a validated Scenario or a
list of line-tagged diagnostics.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Optional

from .model import (
    DEFAULT_PREFIX_LEN,
    METRIC_MAX,
    METRIC_MIN,
    IpAddress,
    IpPrefix,
    NodeKind,
)

_KIND_NAMES = {k.value: k for k in NodeKind}

EVENT_KINDS = ("link-down", "link-up", "pdu-establish", "pdu-release", "metric-change")


@dataclass(frozen=True)
class NodeDecl:
    name: str
    kind: NodeKind


@dataclass(frozen=True)
class IfaceDecl:
    node: str
    ordinal: int
    address: IpAddress
    prefix_len: int

    @property
    def subnet(self) -> IpPrefix:
        return ipaddress.ip_network(f"{self.address}/{self.prefix_len}", strict=False)


@dataclass(frozen=True)
class LinkDecl:
    a_node: str
    a_ordinal: int
    b_node: str
    b_ordinal: int
    metric_ab: int
    metric_ba: int


@dataclass(frozen=True)
class PduDecl:
    ue: str
    upf: str
    ue_address: IpAddress
    prefix_len: int
    metric: int

    @property
    def subnet(self) -> IpPrefix:
        return ipaddress.ip_network(
            f"{self.ue_address}/{self.prefix_len}", strict=False
        )


@dataclass(frozen=True)
class EventDecl:
    time_ms: int
    kind: str
    args: tuple[str, ...]


@dataclass
class Scenario:
    nodes: list[NodeDecl] = field(default_factory=list)
    ifaces: list[IfaceDecl] = field(default_factory=list)
    links: list[LinkDecl] = field(default_factory=list)
    pdus: list[PduDecl] = field(default_factory=list)
    events: list[EventDecl] = field(default_factory=list)
    seed: int = 0

    def subnets(self) -> list[IpPrefix]:
        found = {i.subnet for i in self.ifaces} | {p.subnet for p in self.pdus}
        return sorted(found, key=lambda p: (int(p.network_address), p.prefixlen))

    def node_kind(self, name: str) -> Optional[NodeKind]:
        for decl in self.nodes:
            if decl.name == name:
                return decl.kind
        return None


@dataclass(frozen=True)
class Diagnostic:
    line: int
    kind: str  # "syntax" | "unknown-reference" | "invariant"
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.kind}: {self.message}"


@dataclass
class ParseResult:
    scenario: Optional[Scenario]
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.scenario is not None


DEFAULT_PDU_METRIC = 10


def _parse_addr_len(token: str) -> tuple[IpAddress, int]:
    if "/" in token:
        addr_s, len_s = token.split("/", 1)
        plen = int(len_s)
        if not (0 <= plen <= 32):
            raise ValueError(f"prefix length {plen} outside [0, 32]")
    else:
        addr_s, plen = token, DEFAULT_PREFIX_LEN
    return ipaddress.IPv4Address(addr_s), plen


def _parse_endpoint(token: str) -> tuple[str, int]:
    node, _, ord_s = token.rpartition(".")
    if not node:
        raise ValueError(f"endpoint {token!r} must look like <node>.<ordinal>")
    return node, int(ord_s)


def _parse_metric(token: str) -> int:
    metric = int(token)
    if not (METRIC_MIN <= metric <= METRIC_MAX):
        raise ValueError(f"metric {metric} outside [{METRIC_MIN}, {METRIC_MAX}]")
    return metric


class _Parser:
    def __init__(self) -> None:
        self.sc = Scenario()
        self.diags: list[Diagnostic] = []

    def fail(self, line: int, kind: str, message: str) -> None:
        self.diags.append(Diagnostic(line=line, kind=kind, message=message))

    # one handler per section tag ---------------------------------------

    def on_node(self, line: int, args: list[str]) -> None:
        if len(args) != 2:
            return self.fail(line, "syntax", "[node] wants: <name> <kind>")
        name, kind_s = args
        kind = _KIND_NAMES.get(kind_s)
        if kind is None:
            return self.fail(
                line,
                "syntax",
                f"unknown node kind {kind_s!r} (one of {', '.join(sorted(_KIND_NAMES))})",
            )
        if any(d.name == name for d in self.sc.nodes):
            return self.fail(line, "invariant", f"duplicate node name {name!r}")
        self.sc.nodes.append(NodeDecl(name=name, kind=kind))

    def on_iface(self, line: int, args: list[str]) -> None:
        if len(args) != 3:
            return self.fail(line, "syntax", "[iface] wants: <node> <ordinal> <addr>/<len>")
        name, ord_s, addr_s = args
        try:
            ordinal = int(ord_s)
            address, plen = _parse_addr_len(addr_s)
        except ValueError as exc:
            return self.fail(line, "syntax", str(exc))
        self.sc.ifaces.append(
            IfaceDecl(node=name, ordinal=ordinal, address=address, prefix_len=plen)
        )
        self._check_iface(line, self.sc.ifaces[-1])

    def on_link(self, line: int, args: list[str]) -> None:
        if len(args) not in (3, 4):
            return self.fail(
                line, "syntax", "[link] wants: <a>.<ord> <b>.<ord> <metric_ab> [<metric_ba>]"
            )
        try:
            a_node, a_ord = _parse_endpoint(args[0])
            b_node, b_ord = _parse_endpoint(args[1])
            metric_ab = _parse_metric(args[2])
            metric_ba = _parse_metric(args[3]) if len(args) == 4 else metric_ab
        except ValueError as exc:
            return self.fail(line, "syntax", str(exc))
        decl = LinkDecl(a_node, a_ord, b_node, b_ord, metric_ab, metric_ba)
        self.sc.links.append(decl)
        self._check_link(line, decl)

    def on_pdu(self, line: int, args: list[str]) -> None:
        if len(args) not in (3, 4):
            return self.fail(
                line, "syntax", "[pdu] wants: <ue> <upf> <ue_addr>/<len> [<metric>]"
            )
        try:
            address, plen = _parse_addr_len(args[2])
            metric = _parse_metric(args[3]) if len(args) == 4 else DEFAULT_PDU_METRIC
        except ValueError as exc:
            return self.fail(line, "syntax", str(exc))
        decl = PduDecl(ue=args[0], upf=args[1], ue_address=address,
                       prefix_len=plen, metric=metric)
        self.sc.pdus.append(decl)
        self._check_pdu(line, decl)

    def on_event(self, line: int, args: list[str]) -> None:
        if len(args) < 2:
            return self.fail(line, "syntax", "[event] wants: <time_ms> <kind> <args...>")
        try:
            time_ms = int(args[0])
        except ValueError:
            return self.fail(line, "syntax", f"bad event time {args[0]!r}")
        if time_ms < 0:
            return self.fail(line, "syntax", "event time must be >= 0")
        kind = args[1]
        if kind not in EVENT_KINDS:
            return self.fail(
                line, "syntax", f"unknown event kind {kind!r} (one of {', '.join(EVENT_KINDS)})"
            )
        decl = EventDecl(time_ms=time_ms, kind=kind, args=tuple(args[2:]))
        self.sc.events.append(decl)
        self._check_event(line, decl)

    def on_seed(self, line: int, args: list[str]) -> None:
        if len(args) != 1:
            return self.fail(line, "syntax", "[seed] wants: <n>")
        try:
            self.sc.seed = int(args[0])
        except ValueError:
            self.fail(line, "syntax", f"bad seed {args[0]!r}")

    # cross-reference checks --------------------------------------------

    def _kind_of(self, name: str) -> Optional[NodeKind]:
        return self.sc.node_kind(name)

    def _require_node(self, line: int, name: str) -> bool:
        if self._kind_of(name) is None:
            self.fail(line, "unknown-reference", f"node {name!r} not declared")
            return False
        return True

    def _find_iface(self, node: str, ordinal: int) -> Optional[IfaceDecl]:
        for decl in self.sc.ifaces:
            if decl.node == node and decl.ordinal == ordinal:
                return decl
        return None

    def _check_iface(self, line: int, decl: IfaceDecl) -> None:
        if not self._require_node(line, decl.node):
            return
        kind = self._kind_of(decl.node)
        others = [d for d in self.sc.ifaces if d is not decl]
        if any(d.node == decl.node and d.ordinal == decl.ordinal for d in others):
            self.fail(
                line, "invariant", f"{decl.node} already has interface {decl.ordinal}"
            )
        if any(d.address == decl.address for d in others) or any(
            p.ue_address == decl.address for p in self.sc.pdus
        ):
            self.fail(line, "invariant", f"address {decl.address} already in use")
        if kind is NodeKind.HOST and sum(d.node == decl.node for d in others):
            self.fail(line, "invariant", f"host {decl.node} may have only one interface")
        if decl.address == decl.subnet.network_address and decl.prefix_len < 31:
            self.fail(line, "invariant", f"{decl.address} is the subnet address of {decl.subnet}")

    def _check_link(self, line: int, decl: LinkDecl) -> None:
        ok_a = self._require_node(line, decl.a_node)
        ok_b = self._require_node(line, decl.b_node)
        if not (ok_a and ok_b):
            return
        a = self._find_iface(decl.a_node, decl.a_ordinal)
        b = self._find_iface(decl.b_node, decl.b_ordinal)
        if a is None:
            return self.fail(
                line, "unknown-reference",
                f"interface {decl.a_node}.{decl.a_ordinal} not declared",
            )
        if b is None:
            return self.fail(
                line, "unknown-reference",
                f"interface {decl.b_node}.{decl.b_ordinal} not declared",
            )
        if a.subnet != b.subnet:
            self.fail(
                line, "invariant",
                f"link endpoints disagree on subnet: {a.subnet} vs {b.subnet}",
            )

    def _check_pdu(self, line: int, decl: PduDecl) -> None:
        ok_ue = self._require_node(line, decl.ue)
        ok_upf = self._require_node(line, decl.upf)
        if ok_ue and self._kind_of(decl.ue) not in (NodeKind.UE, NodeKind.UE_ROUTER):
            self.fail(line, "invariant", f"{decl.ue} is not a ue or ue-router")
        if ok_upf and self._kind_of(decl.upf) is not NodeKind.UPF:
            self.fail(line, "invariant", f"{decl.upf} is not a upf")
        used = [d.address for d in self.sc.ifaces] + [
            p.ue_address for p in self.sc.pdus if p is not decl
        ]
        if decl.ue_address in used:
            self.fail(line, "invariant", f"address {decl.ue_address} already in use")

    def _check_event(self, line: int, decl: EventDecl) -> None:
        args = decl.args
        if decl.kind in ("link-down", "link-up"):
            if len(args) == 2 and args[0] == "pdu":
                try:
                    int(args[1])
                except ValueError:
                    self.fail(line, "syntax", f"bad session id {args[1]!r}")
                return
            if len(args) != 2:
                return self.fail(
                    line, "syntax",
                    f"{decl.kind} wants: <a>.<ord> <b>.<ord>  |  pdu <session-id>",
                )
            for token in args:
                try:
                    node, _ = _parse_endpoint(token)
                except ValueError as exc:
                    return self.fail(line, "syntax", str(exc))
                self._require_node(line, node)
        elif decl.kind == "pdu-establish":
            if len(args) not in (3, 4):
                return self.fail(
                    line, "syntax", "pdu-establish wants: <ue> <upf> <addr>/<len> [<metric>]"
                )
            try:
                _parse_addr_len(args[2])
                if len(args) == 4:
                    _parse_metric(args[3])
            except ValueError as exc:
                return self.fail(line, "syntax", str(exc))
            self._require_node(line, args[0])
            self._require_node(line, args[1])
        elif decl.kind == "pdu-release":
            if len(args) != 1:
                return self.fail(line, "syntax", "pdu-release wants: <session-id>")
            try:
                int(args[0])
            except ValueError:
                self.fail(line, "syntax", f"bad session id {args[0]!r}")
        elif decl.kind == "metric-change":
            if len(args) not in (3, 4):
                return self.fail(
                    line, "syntax",
                    "metric-change wants: <a>.<ord> <b>.<ord> <metric_ab> [<metric_ba>]",
                )
            try:
                _parse_endpoint(args[0])
                _parse_endpoint(args[1])
                _parse_metric(args[2])
                if len(args) == 4:
                    _parse_metric(args[3])
            except ValueError as exc:
                self.fail(line, "syntax", str(exc))

    def finish(self) -> None:
        if self.sc.pdus:
            kinds = [d.kind for d in self.sc.nodes]
            if NodeKind.UPF not in kinds or NodeKind.SMF not in kinds:
                self.fail(
                    0, "invariant",
                    "pdu sessions need at least one upf and one smf in the scenario",
                )


_SECTIONS = {
    "[node]": _Parser.on_node,
    "[iface]": _Parser.on_iface,
    "[link]": _Parser.on_link,
    "[pdu]": _Parser.on_pdu,
    "[event]": _Parser.on_event,
    "[seed]": _Parser.on_seed,
}


def parse_scenario(text: str) -> ParseResult:
    """Parse scenario text.  Total: bad input yields diagnostics, not raises."""
    parser = _Parser()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        handler = _SECTIONS.get(tokens[0])
        if handler is None:
            parser.fail(
                lineno, "syntax",
                f"unknown section {tokens[0]!r} (one of {', '.join(sorted(_SECTIONS))})",
            )
            continue
        handler(parser, lineno, tokens[1:])
    parser.finish()
    if parser.diags:
        return ParseResult(scenario=None, diagnostics=parser.diags)
    return ParseResult(scenario=parser.sc, diagnostics=[])


def serialize_scenario(sc: Scenario) -> str:
    """Canonical text for a scenario; parses back to an equal Scenario."""
    out: list[str] = []
    if sc.seed:
        out.append(f"[seed] {sc.seed}")
    for n in sc.nodes:
        out.append(f"[node] {n.name} {n.kind.value}")
    for i in sc.ifaces:
        out.append(f"[iface] {i.node} {i.ordinal} {i.address}/{i.prefix_len}")
    for l in sc.links:
        out.append(
            f"[link] {l.a_node}.{l.a_ordinal} {l.b_node}.{l.b_ordinal} "
            f"{l.metric_ab} {l.metric_ba}"
        )
    for p in sc.pdus:
        out.append(f"[pdu] {p.ue} {p.upf} {p.ue_address}/{p.prefix_len} {p.metric}")
    for e in sc.events:
        out.append(f"[event] {e.time_ms} {e.kind} {' '.join(e.args)}".rstrip())
    return "\n".join(out) + "\n"

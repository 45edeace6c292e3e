"""Saving a finished run to JSON and loading it back for queries.

A state file captures everything forwarding and reporting need
(topology, computed tables, candidate tables, installed rules, session
bookkeeping and the event log) so ``routes``, ``trace`` and ``report``
can work without re-running the simulation.
"""

from __future__ import annotations

import ipaddress
import json
from typing import Any, Optional

from .lsproto import RoutingEntry
from .model import AdminState, InterfaceId, LinkState, Network, NodeId, NodeKind
from .msrouter import ForwardingRule

FORMAT_VERSION = 1


def _entry_row(view, entry: RoutingEntry) -> dict[str, Any]:
    iid = entry.destination_interface
    return {
        "destination": str(entry.destination),
        "next_hop": str(entry.next_hop),
        "iface": [view.network.node(iid.node).name, iid.ordinal],
        "iface_name": view.iface_display(iid),
        "metric": entry.metric,
    }


def _rule_row(view, rule: ForwardingRule) -> dict[str, Any]:
    return {
        "match": str(rule.match_prefix),
        "next_hop": str(rule.next_hop),
        "egress": [view.network.node(rule.egress.node).name, rule.egress.ordinal],
        "egress_name": view.iface_display(rule.egress),
        "priority": rule.priority,
    }


def build_snapshot(sim, stats=None) -> dict[str, Any]:
    net = sim.network
    nodes = []
    for nid in sorted(net.nodes):
        node = net.nodes[nid]
        nodes.append(
            {
                "name": node.name,
                "kind": node.kind.value,
                "ifaces": [
                    {
                        "ordinal": iface.id.ordinal,
                        "name": iface.name,
                        "address": str(iface.address),
                        "prefix": str(iface.subnet),
                        "admin": iface.admin_state.value,
                    }
                    for iface in node.iface_list()
                ],
            }
        )
    links = []
    for lid in sorted(net.links):
        link = net.links[lid]
        links.append(
            {
                "a": [net.node(link.a.node).name, link.a.ordinal],
                "b": [net.node(link.b.node).name, link.b.ordinal],
                "metric_ab": link.metric_ab,
                "metric_ba": link.metric_ba,
                "state": link.state.value,
            }
        )
    sessions = []
    for sid in sorted(sim.mobile.sessions):
        s = sim.mobile.sessions[sid]
        sessions.append(
            {
                "id": s.id,
                "ue": net.node(s.ue).name,
                "upf": net.node(s.upf).name,
                "address": str(s.ue_addr),
                "prefix": str(s.ue_subnet),
                "reserved": str(s.reserved_addr),
                "metric": s.metric,
                "state": s.state.value,
            }
        )
    routers = []
    for upf in sorted(sim.mobile.routers):
        msr = sim.mobile.routers[upf]
        routers.append(
            {
                "name": msr.name,
                "node": net.node(upf).name,
                "router_id": str(ipaddress.IPv4Address(msr.instance.router_id))
                if msr.instance is not None
                else str(msr.router_id),
                "type": "msr",
                "table": [_entry_row(sim, e) for e in sim.table_of(upf) or []],
                "candidates": [
                    _entry_row(sim, e) for e in sim.candidates_of(upf) or []
                ],
                "rules": [_rule_row(sim, r) for r in sim.rules_of(upf) or []],
            }
        )
    for nid in sorted(sim.instances):
        if nid in sim.mobile.routers:
            continue
        inst = sim.instances[nid]
        routers.append(
            {
                "name": net.node(nid).name,
                "node": net.node(nid).name,
                "router_id": str(ipaddress.IPv4Address(inst.router_id)),
                "type": "router",
                "table": [_entry_row(sim, e) for e in sim.table_of(nid) or []],
                "candidates": [
                    _entry_row(sim, e) for e in sim.candidates_of(nid) or []
                ],
            }
        )
    return {
        "format": FORMAT_VERSION,
        "approach": sim.approach.value,
        "seed": sim.seed,
        "now": sim.now,
        "quiescent": stats.quiescent if stats is not None else None,
        "converged": stats.converged if stats is not None else None,
        "nodes": nodes,
        "links": links,
        "sessions": sessions,
        "routers": routers,
        "log": list(sim.log.lines),
    }


def save_snapshot(sim, path: str, stats=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(build_snapshot(sim, stats), fh, indent=2)
        fh.write("\n")


class SnapshotView:
    """Read-only forwarding/report view rebuilt from a state file."""

    def __init__(self, data: dict[str, Any]) -> None:
        if data.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported state format {data.get('format')!r}")
        self.data = data
        self.approach: str = data["approach"]
        self.log: list[str] = list(data.get("log", []))
        self.network = Network()
        self._ids: dict[str, NodeId] = {}
        for nd in data["nodes"]:
            nid = self.network.add_node(NodeKind(nd["kind"]), nd["name"])
            self._ids[nd["name"]] = nid
            for ifd in nd["ifaces"]:
                prefix = ipaddress.ip_network(ifd["prefix"])
                iid = self.network.add_interface(
                    nid,
                    ifd["ordinal"],
                    ipaddress.IPv4Address(ifd["address"]),
                    prefix,
                    name=ifd["name"],
                    via_mobile_system=NodeKind(nd["kind"]) is NodeKind.UPF,
                )
                if ifd.get("admin") == "down":
                    self.network.iface(iid).admin_state = AdminState.DOWN
        for ld in data["links"]:
            a = InterfaceId(self._ids[ld["a"][0]], ld["a"][1])
            b = InterfaceId(self._ids[ld["b"][0]], ld["b"][1])
            lid = self.network.add_link(a, b, ld["metric_ab"], ld["metric_ba"])
            if ld["state"] == "down":
                self.network.link(lid).state = LinkState.DOWN
        self._tables: dict[NodeId, list[RoutingEntry]] = {}
        self._candidates: dict[NodeId, list[RoutingEntry]] = {}
        self._rules: dict[NodeId, list[ForwardingRule]] = {}
        self.router_names: dict[str, NodeId] = {}
        for rd in data["routers"]:
            nid = self._ids[rd["node"]]
            self.router_names[rd["name"]] = nid
            self._tables[nid] = [self._entry(row) for row in rd["table"]]
            self._candidates[nid] = [
                self._entry(row) for row in rd.get("candidates", [])
            ]
            if rd["type"] == "msr":
                self._rules[nid] = [self._rule(row) for row in rd.get("rules", [])]

    def _entry(self, row: dict[str, Any]) -> RoutingEntry:
        return RoutingEntry(
            destination=ipaddress.ip_network(row["destination"]),
            next_hop=ipaddress.IPv4Address(row["next_hop"]),
            destination_interface=InterfaceId(
                self._ids[row["iface"][0]], row["iface"][1]
            ),
            metric=row["metric"],
        )

    def _rule(self, row: dict[str, Any]) -> ForwardingRule:
        return ForwardingRule(
            match_prefix=ipaddress.ip_network(row["match"]),
            next_hop=ipaddress.IPv4Address(row["next_hop"]),
            egress=InterfaceId(self._ids[row["egress"][0]], row["egress"][1]),
            priority=row["priority"],
        )

    @classmethod
    def load(cls, path: str) -> "SnapshotView":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def node_id(self, name: str) -> Optional[NodeId]:
        return self._ids.get(name)

    def table_of(self, nid: NodeId) -> Optional[list[RoutingEntry]]:
        return self._tables.get(nid)

    def candidates_of(self, nid: NodeId) -> Optional[list[RoutingEntry]]:
        return self._candidates.get(nid)

    def rules_of(self, nid: NodeId) -> Optional[list[ForwardingRule]]:
        return self._rules.get(nid)

    def iface_display(self, iface_id: InterfaceId) -> str:
        if self.network.has_iface(iface_id):
            return self.network.iface(iface_id).name
        return str(iface_id)

"""Run reports: delimited tables plus rendered figures.

Everything is derived from a saved run state, so reports can be built
long after a simulation finished.  Output directory contents:

- ``summary.tsv``       run metadata, key/value
- ``routers.tsv``       one row per routing participant
- ``routes_<name>.tsv`` candidate routes per router, best rows flagged
- ``events.tsv``        the event log, columns split out
- ``topology.png``      node/link diagram
- ``steps.png``         setup-step timeline per mobile-system router
"""

from __future__ import annotations

import ipaddress
import os
import re
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import networkx as nx

from .snapshot import SnapshotView

_STEP_RE = re.compile(r"^t=(\d+) (\S+) (A[12]\.S(\d)) (.*)$")
_KIND_RE = re.compile(r"^t=(\d+) kind=(\S+) ?(.*)$")
_WARN_RE = re.compile(r"^t=(\d+) (\S+) warn (.*)$")

_KIND_COLORS = {
    "host": "#b0b0b0",
    "external-router": "#4878a8",
    "ue-router": "#48a878",
    "n6-router": "#4878a8",
    "ue": "#78c8a0",
    "upf": "#e08840",
    "smf": "#9868c8",
}


def _tsv(path: str, rows: list[list[Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def _write_route_files(data: dict, out_dir: str) -> list[str]:
    paths = []

    def row_key(row: dict) -> tuple:
        return (row["destination"], row["next_hop"], row["iface_name"], row["metric"])

    for rd in data["routers"]:
        best = {row_key(row) for row in rd["table"]}
        rows: list[list[Any]] = [
            ["destination", "next_hop", "interface", "metric", "best"]
        ]
        cand = sorted(
            rd.get("candidates", []),
            key=lambda r: (
                int(ipaddress.ip_network(r["destination"]).network_address),
                ipaddress.ip_network(r["destination"]).prefixlen,
                r["metric"],
                int(ipaddress.IPv4Address(r["next_hop"])),
            ),
        )
        for row in cand:
            rows.append(
                [
                    row["destination"],
                    row["next_hop"],
                    row["iface_name"],
                    row["metric"],
                    "yes" if row_key(row) in best else "no",
                ]
            )
        path = os.path.join(out_dir, f"routes_{rd['name']}.tsv")
        _tsv(path, rows)
        paths.append(path)
    return paths


def _write_events(data: dict, out_dir: str) -> str:
    rows: list[list[Any]] = [["t", "entity", "tag", "detail"]]
    for line in data.get("log", []):
        m = _STEP_RE.match(line)
        if m:
            rows.append([m.group(1), m.group(2), m.group(3), m.group(5)])
            continue
        m = _KIND_RE.match(line)
        if m:
            rows.append([m.group(1), "engine", m.group(2), m.group(3)])
            continue
        m = _WARN_RE.match(line)
        if m:
            rows.append([m.group(1), m.group(2), "warn", m.group(3)])
            continue
        rows.append(["", "", "raw", line])
    path = os.path.join(out_dir, "events.tsv")
    _tsv(path, rows)
    return path


def _draw_topology(view: SnapshotView, out_dir: str) -> str:
    graph = nx.Graph()
    net = view.network
    for nid in sorted(net.nodes):
        node = net.nodes[nid]
        graph.add_node(node.name, kind=node.kind.value)
    edge_labels = {}
    edge_styles = []
    for lid in sorted(net.links):
        link = net.links[lid]
        a = net.node(link.a.node).name
        b = net.node(link.b.node).name
        graph.add_edge(a, b)
        label = (
            str(link.metric_ab)
            if link.metric_ab == link.metric_ba
            else f"{link.metric_ab}/{link.metric_ba}"
        )
        edge_labels[(a, b)] = label
        session_leg = net.iface(link.a).name.startswith("pdu-") or net.iface(
            link.b
        ).name.startswith("pdu-")
        edge_styles.append(
            (
                (a, b),
                "red" if not link.up else ("#e08840" if session_leg else "#606060"),
                "dotted" if not link.up else ("dashed" if session_leg else "solid"),
            )
        )
    pos = nx.spring_layout(graph, seed=7)
    fig, ax = plt.subplots(figsize=(9, 7))
    colors = [_KIND_COLORS.get(graph.nodes[n]["kind"], "#cccccc") for n in graph.nodes]
    nx.draw_networkx_nodes(graph, pos, node_color=colors, node_size=900, ax=ax)
    nx.draw_networkx_labels(graph, pos, font_size=8, ax=ax)
    for (a, b), color, style in edge_styles:
        nx.draw_networkx_edges(
            graph, pos, edgelist=[(a, b)], edge_color=color, style=style, ax=ax
        )
    nx.draw_networkx_edge_labels(graph, pos, edge_labels=edge_labels, font_size=7, ax=ax)
    ax.set_title("topology (dashed: session leg, dotted red: down)")
    ax.axis("off")
    path = os.path.join(out_dir, "topology.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def _draw_steps(data: dict, out_dir: str) -> str:
    upf_to_msr = {
        rd["node"]: rd["name"] for rd in data["routers"] if rd["type"] == "msr"
    }
    msr_names = sorted(upf_to_msr.values())
    series: dict[str, list[tuple[int, int]]] = {m: [] for m in msr_names}
    for line in data.get("log", []):
        m = _STEP_RE.match(line)
        if not m:
            continue
        t, entity, step = int(m.group(1)), m.group(2), int(m.group(4))
        label = m.group(5)
        target = None
        for name in msr_names:
            if re.search(rf"\b{re.escape(name)}\b", label):
                target = name
                break
        if target is None:
            target = upf_to_msr.get(entity)
        if target is None and len(msr_names) == 1:
            target = msr_names[0]
        if target is not None:
            series[target].append((t, step))
    fig, ax = plt.subplots(figsize=(9, 4))
    for name in msr_names:
        pts = sorted(series[name])
        if not pts:
            continue
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_yticks(range(1, 8))
    ax.set_yticklabels([f"S{i}" for i in range(1, 8)])
    ax.set_xlabel("time (ms)")
    ax.set_title(f"setup steps, approach={data.get('approach')}")
    if msr_names:
        ax.legend()
    ax.grid(True, alpha=0.3)
    path = os.path.join(out_dir, "steps.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def write_report(data: dict, out_dir: str) -> list[str]:
    """Render every report artifact for a saved run; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    view = SnapshotView(data)
    paths = []
    summary_rows = [
        ["key", "value"],
        ["approach", data.get("approach")],
        ["seed", data.get("seed")],
        ["end_ms", data.get("now")],
        ["quiescent", data.get("quiescent")],
        ["converged", data.get("converged")],
        ["nodes", len(data.get("nodes", []))],
        ["links", len(data.get("links", []))],
        ["sessions", len(data.get("sessions", []))],
        ["routers", len(data.get("routers", []))],
    ]
    summary = os.path.join(out_dir, "summary.tsv")
    _tsv(summary, summary_rows)
    paths.append(summary)

    router_rows: list[list[Any]] = [
        ["name", "node", "type", "router_id", "routes", "candidates", "rules"]
    ]
    for rd in data["routers"]:
        router_rows.append(
            [
                rd["name"],
                rd["node"],
                rd["type"],
                rd["router_id"],
                len(rd["table"]),
                len(rd.get("candidates", [])),
                len(rd.get("rules", [])) if rd["type"] == "msr" else "-",
            ]
        )
    routers = os.path.join(out_dir, "routers.tsv")
    _tsv(routers, router_rows)
    paths.append(routers)

    paths.extend(_write_route_files(data, out_dir))
    paths.append(_write_events(data, out_dir))
    paths.append(_draw_topology(view, out_dir))
    paths.append(_draw_steps(data, out_dir))
    return paths

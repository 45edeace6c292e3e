"""Single-area link-state routing: hellos, LSAs, flooding, SPF.

The protocol is deliberately small: Hello-based neighbor discovery,
sequence-numbered link-state advertisements flooded to every adjacent
router, one replicated LSDB, and Dijkstra over the advertised graph.
There are no internal timers; the simulation engine drives time by
calling into instances with explicit ``now_ms`` values.  Advertisements
are re-originated only when something changed, never periodically, so a
converged network goes quiet.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Union

from .model import (
    AdminState,
    Interface,
    InterfaceId,
    IpAddress,
    IpPrefix,
    Network,
    NodeId,
    SimulationError,
)

logger = logging.getLogger(__name__)

HELLO_INTERVAL_MS = 1000
DEAD_INTERVAL_MS = 4 * HELLO_INTERVAL_MS

# Router identity is a 32-bit number; by convention the numerically
# highest interface address of the participant.
RouterId = int


class InterfaceDown(SimulationError):
    pass


def derive_router_id(addresses: Iterable[IpAddress], fallback: int = 0) -> RouterId:
    """Highest interface address as a 32-bit id; ``fallback`` when none."""
    ints = [int(a) for a in addresses]
    return max(ints) if ints else fallback


def router_id_str(rid: RouterId) -> str:
    return str(IpAddress(rid))


class NeighborState(Enum):
    INIT = "init"  # heard them; they have not yet listed us
    FULL = "full"  # bidirectional visibility confirmed


class NeighborEvent(Enum):
    NEW_ADJACENCY = "new-adjacency"
    REFRESHED = "refreshed"
    NO_CHANGE = "no-change"
    REMOVED = "removed"


class InstallResult(Enum):
    INSTALLED = "installed"
    DUPLICATE = "duplicate"
    STALE_IGNORED = "stale-ignored"


@dataclass(frozen=True)
class HelloMsg:
    sender: RouterId
    sender_addr: IpAddress
    seen_neighbors: tuple[RouterId, ...]
    hello_interval_ms: int = HELLO_INTERVAL_MS
    dead_interval_ms: int = DEAD_INTERVAL_MS


@dataclass
class NeighborRecord:
    id: RouterId
    addr: IpAddress
    via_interface: InterfaceId
    state: NeighborState
    last_heard_ms: int
    # Egress cost toward this neighbor, cached from the link the last
    # hello arrived on; keeps the advertised metric stable while a dead
    # link waits out the dead interval.
    last_cost: int = 0


@dataclass(frozen=True)
class AdjacencyEntry:
    """This router can reach ``neighbor`` directly at ``metric``."""

    neighbor: RouterId
    metric: int


@dataclass(frozen=True)
class PrefixEntry:
    """This router attaches ``prefix``; reachable at ``metric`` beyond it."""

    prefix: IpPrefix
    metric: int


LsaEntry = Union[AdjacencyEntry, PrefixEntry]


@dataclass(frozen=True)
class Lsa:
    origin: RouterId
    seq: int
    entries: tuple[LsaEntry, ...]
    originated_at_ms: int = 0

    def adjacencies(self) -> list[AdjacencyEntry]:
        return [e for e in self.entries if isinstance(e, AdjacencyEntry)]

    def prefixes(self) -> list[PrefixEntry]:
        return [e for e in self.entries if isinstance(e, PrefixEntry)]

    def adjacency_to(self, rid: RouterId) -> Optional[AdjacencyEntry]:
        for e in self.entries:
            if isinstance(e, AdjacencyEntry) and e.neighbor == rid:
                return e
        return None


class Lsdb(dict):
    """Newest LSA per origin, keyed by RouterId."""

    def install(self, lsa: Lsa) -> InstallResult:
        stored: Optional[Lsa] = self.get(lsa.origin)
        if stored is None or lsa.seq > stored.seq:
            self[lsa.origin] = lsa
            return InstallResult.INSTALLED
        if lsa.seq == stored.seq:
            return InstallResult.DUPLICATE
        return InstallResult.STALE_IGNORED

    def identical_to(self, other: "Lsdb") -> bool:
        return dict(self) == dict(other)


def install_lsa(lsdb: Lsdb, lsa: Lsa) -> InstallResult:
    return lsdb.install(lsa)


@dataclass(frozen=True)
class RoutingEntry:
    destination: IpPrefix
    next_hop: IpAddress
    destination_interface: InterfaceId
    metric: int


@dataclass(frozen=True)
class FirstHop:
    """Where packets leave this router when the path starts at a neighbor."""

    neighbor: RouterId
    addr: IpAddress
    interface: InterfaceId
    cost: int

    @property
    def key(self) -> tuple[int, int]:
        # Tie-break order: lowest next-hop address, then lowest ordinal.
        return (int(self.addr), self.interface.ordinal)


def _usable_edges(lsdb: Lsdb) -> dict[RouterId, list[AdjacencyEntry]]:
    """Directed adjacency map keeping only bidirectionally advertised links."""
    edges: dict[RouterId, list[AdjacencyEntry]] = {}
    for origin in sorted(lsdb):
        lsa = lsdb[origin]
        usable = []
        for adj in lsa.adjacencies():
            back = lsdb.get(adj.neighbor)
            if back is not None and back.adjacency_to(origin) is not None:
                usable.append(adj)
        edges[origin] = sorted(usable, key=lambda a: a.neighbor)
    return edges


def _dijkstra(
    edges: dict[RouterId, list[AdjacencyEntry]],
    sources: list[tuple[int, tuple[int, int], RouterId]],
    skip: Optional[RouterId] = None,
) -> dict[RouterId, tuple[int, tuple[int, int]]]:
    """Shortest paths over the advertised graph.

    ``sources`` seeds the heap with (cost, first-hop key, router); the
    first-hop key rides along unchanged so equal-cost paths resolve to
    the lowest next-hop address, then the lowest egress ordinal.
    """
    best: dict[RouterId, tuple[int, tuple[int, int]]] = {}
    heap = list(sources)
    heapq.heapify(heap)
    while heap:
        dist, key, rid = heapq.heappop(heap)
        if rid == skip:
            continue
        if rid in best and (dist, key) >= best[rid]:
            continue
        best[rid] = (dist, key)
        for adj in edges.get(rid, ()):
            if adj.neighbor == skip:
                continue
            cand = (dist + adj.metric, key)
            if adj.neighbor not in best or cand < best[adj.neighbor]:
                heapq.heappush(heap, (cand[0], cand[1], adj.neighbor))
    return best


def _own_prefixes(lsdb: Lsdb, self_id: RouterId) -> set[IpPrefix]:
    own = lsdb.get(self_id)
    return {p.prefix for p in own.prefixes()} if own is not None else set()


def _prefix_sort_key(entry: RoutingEntry) -> tuple:
    return (
        int(entry.destination.network_address),
        entry.destination.prefixlen,
        entry.metric,
        int(entry.next_hop),
    )


def compute_spf(
    lsdb: Lsdb, self_id: RouterId, first_hops: dict[RouterId, FirstHop]
) -> list[RoutingEntry]:
    """Best route per reachable prefix not attached to ``self_id``.

    A link enters the graph only when both endpoints advertise it; a
    half-dead adjacency (one side already re-originated, the other still
    carrying a stale LSA) therefore never attracts traffic.
    """
    if self_id not in lsdb:
        raise SimulationError(f"lsdb has no LSA for self ({router_id_str(self_id)})")
    edges = _usable_edges(lsdb)
    own = _own_prefixes(lsdb, self_id)

    sources: list[tuple[int, tuple[int, int], RouterId]] = []
    for adj in edges.get(self_id, ()):
        fh = first_hops.get(adj.neighbor)
        if fh is None:
            continue
        sources.append((adj.metric, fh.key, adj.neighbor))
    dist = _dijkstra(edges, sources, skip=self_id)

    fh_by_key = {fh.key: fh for fh in first_hops.values()}
    best: dict[IpPrefix, tuple[int, tuple[int, int], RouterId]] = {}
    for origin in sorted(lsdb):
        if origin == self_id or origin not in dist:
            continue
        d, key = dist[origin]
        for pfx in lsdb[origin].prefixes():
            if pfx.prefix in own:
                continue
            cand = (d + pfx.metric, key, origin)
            cur = best.get(pfx.prefix)
            if cur is None or cand < cur:
                best[pfx.prefix] = cand
    entries = [
        RoutingEntry(
            destination=prefix,
            next_hop=fh_by_key[key].addr,
            destination_interface=fh_by_key[key].interface,
            metric=metric,
        )
        for prefix, (metric, key, _origin) in best.items()
    ]
    return sorted(entries, key=_prefix_sort_key)


def compute_candidates(
    lsdb: Lsdb, self_id: RouterId, first_hops: dict[RouterId, FirstHop]
) -> list[RoutingEntry]:
    """Every per-neighbor route alternative, best path through each neighbor.

    The installed table keeps only the cheapest row per destination; this
    is the full view a routing-table dump with alternatives shows.
    """
    edges = _usable_edges(lsdb)
    own = _own_prefixes(lsdb, self_id)
    out: list[RoutingEntry] = []
    for rid in sorted(first_hops):
        fh = first_hops[rid]
        back = lsdb.get(rid)
        if back is None or back.adjacency_to(self_id) is None:
            continue
        dist = _dijkstra(edges, [(0, fh.key, rid)], skip=self_id)
        best: dict[IpPrefix, int] = {}
        for origin in sorted(lsdb):
            if origin == self_id or origin not in dist:
                continue
            d, _key = dist[origin]
            for pfx in lsdb[origin].prefixes():
                if pfx.prefix in own:
                    continue
                total = fh.cost + d + pfx.metric
                if pfx.prefix not in best or total < best[pfx.prefix]:
                    best[pfx.prefix] = total
        for prefix, metric in best.items():
            out.append(
                RoutingEntry(
                    destination=prefix,
                    next_hop=fh.addr,
                    destination_interface=fh.interface,
                    metric=metric,
                )
            )
    return sorted(out, key=_prefix_sort_key)


class LinkStateRouter:
    """One routing participant: neighbor tracking, LSDB, origination, SPF.

    The instance reads its interfaces and link costs straight from the
    shared :class:`Network`; for a mobile-system router the node is the
    UPF even when the protocol itself executes in the control plane.
    """

    def __init__(self, network: Network, node_id: NodeId, router_id: RouterId) -> None:
        self.network = network
        self.node_id = node_id
        self.router_id = router_id
        self.lsdb = Lsdb()
        self.neighbors: dict[tuple[InterfaceId, RouterId], NeighborRecord] = {}
        self.seq = 0

    # -- interface view --------------------------------------------------

    def interfaces(self) -> list[Interface]:
        return [
            i for i in self.network.node(self.node_id).iface_list()
            if i.admin_state is AdminState.UP
        ]

    def _records_on(self, iface: InterfaceId) -> list[NeighborRecord]:
        return [
            self.neighbors[k]
            for k in sorted(self.neighbors)
            if k[0] == iface
        ]

    # -- hello ------------------------------------------------------------

    def make_hello(self, iface_id: InterfaceId, now_ms: int) -> HelloMsg:
        iface = self.network.iface(iface_id)
        if iface.admin_state is not AdminState.UP:
            raise InterfaceDown(f"interface {iface.name} on node {iface_id.node} is down")
        seen = sorted(
            {
                r.id
                for r in self._records_on(iface_id)
                if now_ms - r.last_heard_ms <= DEAD_INTERVAL_MS
            }
        )
        return HelloMsg(
            sender=self.router_id,
            sender_addr=iface.address,
            seen_neighbors=tuple(seen),
        )

    def process_hello(
        self,
        iface_id: InterfaceId,
        msg: HelloMsg,
        now_ms: int,
        cost: Optional[int] = None,
    ) -> NeighborEvent:
        """Account for a received hello; returns what changed adjacency-wise."""
        key = (iface_id, msg.sender)
        rec = self.neighbors.get(key)
        bidirectional = self.router_id in msg.seen_neighbors
        if rec is None:
            rec = NeighborRecord(
                id=msg.sender,
                addr=msg.sender_addr,
                via_interface=iface_id,
                state=NeighborState.INIT,
                last_heard_ms=now_ms,
                last_cost=cost if cost is not None else 0,
            )
            self.neighbors[key] = rec
            if not bidirectional:
                return NeighborEvent.NO_CHANGE
        rec.last_heard_ms = now_ms
        rec.addr = msg.sender_addr
        if cost is not None:
            rec.last_cost = cost
        if bidirectional and rec.state is NeighborState.INIT:
            rec.state = NeighborState.FULL
            return NeighborEvent.NEW_ADJACENCY
        if not bidirectional and rec.state is NeighborState.FULL:
            # One-way visibility regressed; drop the adjacency.
            rec.state = NeighborState.INIT
            return NeighborEvent.REMOVED
        return NeighborEvent.REFRESHED

    def expire(self, now_ms: int) -> list[tuple[RouterId, NeighborEvent]]:
        """Drop neighbors silent for longer than the dead interval."""
        removed: list[tuple[RouterId, NeighborEvent]] = []
        for key in sorted(self.neighbors, key=lambda k: (k[1], k[0])):
            rec = self.neighbors[key]
            if now_ms - rec.last_heard_ms > DEAD_INTERVAL_MS:
                del self.neighbors[key]
                removed.append((rec.id, NeighborEvent.REMOVED))
        return removed

    def stale_full_neighbors(self, now_ms: int) -> bool:
        """True when a Full neighbor has gone silent past the dead interval."""
        return any(
            r.state is NeighborState.FULL
            and now_ms - r.last_heard_ms > DEAD_INTERVAL_MS
            for r in self.neighbors.values()
        )

    def drop_interface_state(self, iface_id: InterfaceId) -> bool:
        """Forget neighbors on a removed interface; True if a Full one went."""
        lost_full = False
        for key in [k for k in self.neighbors if k[0] == iface_id]:
            if self.neighbors[key].state is NeighborState.FULL:
                lost_full = True
            del self.neighbors[key]
        return lost_full

    def full_neighbors(self) -> list[NeighborRecord]:
        return [
            self.neighbors[k]
            for k in sorted(self.neighbors, key=lambda k: (k[1], k[0]))
            if self.neighbors[k].state is NeighborState.FULL
        ]

    # -- costs --------------------------------------------------------------

    def _egress_cost(self, rec: NeighborRecord) -> int:
        """Live link cost toward a neighbor, cached cost while links are down."""
        costs = [
            link.metric_from(rec.via_interface)
            for link in self.network.links_of_iface(rec.via_interface)
            if link.up and self.network.iface(link.other(rec.via_interface)).address == rec.addr
        ]
        return min(costs) if costs else rec.last_cost

    def _output_cost(self, iface_id: InterfaceId) -> int:
        recs = [
            r for r in self._records_on(iface_id) if r.state is NeighborState.FULL
        ]
        if not recs:
            return 0  # stub interface: no routing neighbor behind it
        live = [
            link.metric_from(iface_id)
            for link in self.network.links_of_iface(iface_id)
            if link.up
        ]
        if live:
            return min(live)
        return min(r.last_cost for r in recs)

    # -- origination and flooding --------------------------------------------

    def originate_lsa(self, now_ms: int) -> Lsa:
        """Fresh LSA for the current local view; installed into own LSDB."""
        self.seq += 1
        adjacencies: dict[RouterId, int] = {}
        for rec in self.full_neighbors():
            cost = self._egress_cost(rec)
            if rec.id not in adjacencies or cost < adjacencies[rec.id]:
                adjacencies[rec.id] = cost
        prefixes: dict[IpPrefix, int] = {}
        for iface in self.interfaces():
            cost = self._output_cost(iface.id)
            if iface.subnet not in prefixes or cost < prefixes[iface.subnet]:
                prefixes[iface.subnet] = cost
        entries: list[LsaEntry] = [
            AdjacencyEntry(neighbor=rid, metric=m)
            for rid, m in sorted(adjacencies.items())
        ]
        entries.extend(
            PrefixEntry(prefix=p, metric=m)
            for p, m in sorted(
                prefixes.items(), key=lambda kv: (int(kv[0].network_address), kv[0].prefixlen)
            )
        )
        lsa = Lsa(
            origin=self.router_id,
            seq=self.seq,
            entries=tuple(entries),
            originated_at_ms=now_ms,
        )
        self.lsdb.install(lsa)
        return lsa

    def flood(
        self, lsa: Lsa, arrival_iface: Optional[InterfaceId] = None
    ) -> list[tuple[InterfaceId, Lsa]]:
        """Emission list: every Full-neighbor interface except the arrival one."""
        out = []
        for iface in self.interfaces():
            if iface.id == arrival_iface:
                continue
            if any(
                r.state is NeighborState.FULL for r in self._records_on(iface.id)
            ):
                out.append((iface.id, lsa))
        return out

    def db_sync(self, iface_id: InterfaceId) -> list[tuple[InterfaceId, Lsa]]:
        """Whole-LSDB push for a freshly Full interface (no DD exchange)."""
        return [(iface_id, self.lsdb[origin]) for origin in sorted(self.lsdb)]

    def receive_lsa(
        self, iface_id: InterfaceId, lsa: Lsa
    ) -> tuple[InstallResult, list[tuple[InterfaceId, Lsa]]]:
        result = self.lsdb.install(lsa)
        if result is InstallResult.INSTALLED:
            return result, self.flood(lsa, arrival_iface=iface_id)
        return result, []

    # -- route computation -----------------------------------------------------

    def first_hops(self) -> dict[RouterId, FirstHop]:
        hops: dict[RouterId, FirstHop] = {}
        for rec in self.full_neighbors():
            cost = self._egress_cost(rec)
            cand = FirstHop(
                neighbor=rec.id,
                addr=rec.addr,
                interface=rec.via_interface,
                cost=cost,
            )
            cur = hops.get(rec.id)
            if cur is None or (cand.cost, cand.key) < (cur.cost, cur.key):
                hops[rec.id] = cand
        return hops

    def compute_routes(self) -> list[RoutingEntry]:
        return compute_spf(self.lsdb, self.router_id, self.first_hops())

    def compute_all_candidates(self) -> list[RoutingEntry]:
        return compute_candidates(self.lsdb, self.router_id, self.first_hops())

from __future__ import annotations

import ipaddress

import pytest
from hypothesis import given
from hypothesis import strategies as st

from msrsim.lsproto import (
    DEAD_INTERVAL_MS,
    HELLO_INTERVAL_MS,
    AdjacencyEntry,
    FirstHop,
    HelloMsg,
    InstallResult,
    InterfaceDown,
    LinkStateRouter,
    Lsa,
    Lsdb,
    NeighborEvent,
    NeighborState,
    PrefixEntry,
    compute_candidates,
    compute_spf,
    derive_router_id,
    router_id_str,
)
from msrsim.model import (
    AdminState,
    InterfaceId,
    Network,
    NodeKind,
    SimulationError,
)


def addr(text: str) -> ipaddress.IPv4Address:
    return ipaddress.IPv4Address(text)


def net(text: str) -> ipaddress.IPv4Network:
    return ipaddress.IPv4Network(text)


def pair_net() -> tuple[Network, LinkStateRouter, LinkStateRouter]:
    """Two routers joined by one metric-5 link."""
    n = Network()
    a = n.add_node(NodeKind.EXTERNAL_ROUTER, "a")
    b = n.add_node(NodeKind.EXTERNAL_ROUTER, "b")
    ia = n.add_interface(a, 1, addr("10.0.0.1"), net("10.0.0.0/24"))
    ib = n.add_interface(b, 1, addr("10.0.0.2"), net("10.0.0.0/24"))
    n.add_link(ia, ib, 5)
    ra = LinkStateRouter(n, a, router_id=101)
    rb = LinkStateRouter(n, b, router_id=102)
    return n, ra, rb


def exchange_hellos(
    ra: LinkStateRouter,
    ia: InterfaceId,
    rb: LinkStateRouter,
    ib: InterfaceId,
    now: int,
    cost_at_a: int,
    cost_at_b: int,
) -> list[NeighborEvent]:
    """One hello each way; returns the two receiver-side events."""
    ev_b = rb.process_hello(ib, ra.make_hello(ia, now), now, cost=cost_at_b)
    ev_a = ra.process_hello(ia, rb.make_hello(ib, now), now, cost=cost_at_a)
    return [ev_b, ev_a]


def iface_of(router: LinkStateRouter, ordinal: int) -> InterfaceId:
    return InterfaceId(router.node_id, ordinal)


def test_hello_bootstrap_reaches_full_both_sides():
    _, ra, rb = pair_net()
    ia, ib = iface_of(ra, 1), iface_of(rb, 1)
    first = exchange_hellos(ra, ia, rb, ib, now=0, cost_at_a=5, cost_at_b=5)
    # b only learns of a; a already sees itself listed and goes Full
    assert first == [NeighborEvent.NO_CHANGE, NeighborEvent.NEW_ADJACENCY]
    second = exchange_hellos(ra, ia, rb, ib, now=1000, cost_at_a=5, cost_at_b=5)
    assert second == [NeighborEvent.NEW_ADJACENCY, NeighborEvent.REFRESHED]
    assert [r.id for r in ra.full_neighbors()] == [102]
    assert [r.id for r in rb.full_neighbors()] == [101]


def test_one_sided_hello_regresses_full_to_init():
    _, ra, rb = pair_net()
    ia, ib = iface_of(ra, 1), iface_of(rb, 1)
    exchange_hellos(ra, ia, rb, ib, 0, 5, 5)
    exchange_hellos(ra, ia, rb, ib, 1000, 5, 5)
    # b restarts and no longer lists a
    amnesia = HelloMsg(sender=102, sender_addr=addr("10.0.0.2"), seen_neighbors=())
    assert ra.process_hello(ia, amnesia, 2000) is NeighborEvent.REMOVED
    assert ra.neighbors[(ia, 102)].state is NeighborState.INIT
    assert ra.full_neighbors() == []


def test_make_hello_requires_admin_up():
    n, ra, _ = pair_net()
    ia = iface_of(ra, 1)
    n.iface(ia).admin_state = AdminState.DOWN
    with pytest.raises(InterfaceDown):
        ra.make_hello(ia, 0)


def test_hello_stops_listing_silent_neighbors():
    _, ra, rb = pair_net()
    ia, ib = iface_of(ra, 1), iface_of(rb, 1)
    exchange_hellos(ra, ia, rb, ib, 0, 5, 5)
    assert ra.make_hello(ia, DEAD_INTERVAL_MS).seen_neighbors == (102,)
    assert ra.make_hello(ia, DEAD_INTERVAL_MS + 1).seen_neighbors == ()


def test_expire_drops_silent_neighbors():
    _, ra, rb = pair_net()
    ia, ib = iface_of(ra, 1), iface_of(rb, 1)
    exchange_hellos(ra, ia, rb, ib, 0, 5, 5)
    exchange_hellos(ra, ia, rb, ib, 1000, 5, 5)
    assert not ra.stale_full_neighbors(1000 + DEAD_INTERVAL_MS)
    assert ra.expire(1000 + DEAD_INTERVAL_MS) == []
    assert ra.stale_full_neighbors(1001 + DEAD_INTERVAL_MS)
    assert ra.expire(1001 + DEAD_INTERVAL_MS) == [(102, NeighborEvent.REMOVED)]
    assert ra.neighbors == {}


def test_drop_interface_state_reports_lost_adjacency():
    _, ra, rb = pair_net()
    ia, ib = iface_of(ra, 1), iface_of(rb, 1)
    exchange_hellos(ra, ia, rb, ib, 0, 5, 5)
    assert rb.drop_interface_state(ib) is False  # only Init so far
    exchange_hellos(ra, ia, rb, ib, 0, 5, 5)
    assert ra.drop_interface_state(ia) is True
    assert ra.neighbors == {}


def test_lsdb_keeps_newest_sequence():
    db = Lsdb()
    assert db.install(Lsa(origin=9, seq=2, entries=())) is InstallResult.INSTALLED
    assert db.install(Lsa(origin=9, seq=2, entries=())) is InstallResult.DUPLICATE
    assert db.install(Lsa(origin=9, seq=1, entries=())) is InstallResult.STALE_IGNORED
    assert db.install(Lsa(origin=9, seq=5, entries=())) is InstallResult.INSTALLED
    assert db[9].seq == 5


@given(st.lists(st.integers(min_value=1, max_value=50), min_size=1, max_size=20))
def test_lsdb_install_is_monotone(seqs: list[int]):
    db = Lsdb()
    high = 0
    for seq in seqs:
        result = db.install(Lsa(origin=1, seq=seq, entries=()))
        if seq > high:
            assert result is InstallResult.INSTALLED
            high = seq
        elif seq == db[1].seq:
            assert result is InstallResult.DUPLICATE
        else:
            assert result is InstallResult.STALE_IGNORED
        assert db[1].seq == high
    assert db[1].seq == max(seqs)


def triangle() -> tuple[Network, dict[str, LinkStateRouter]]:
    """s-a cost 1, s-b cost 4, a-b cost 1; a and b carry one stub prefix each."""
    n = Network()
    nodes = {name: n.add_node(NodeKind.EXTERNAL_ROUTER, name) for name in "sab"}
    ifs = {
        ("s", 1): n.add_interface(nodes["s"], 1, addr("10.0.1.1"), net("10.0.1.0/24")),
        ("a", 1): n.add_interface(nodes["a"], 1, addr("10.0.1.2"), net("10.0.1.0/24")),
        ("s", 2): n.add_interface(nodes["s"], 2, addr("10.0.2.1"), net("10.0.2.0/24")),
        ("b", 1): n.add_interface(nodes["b"], 1, addr("10.0.2.2"), net("10.0.2.0/24")),
        ("a", 2): n.add_interface(nodes["a"], 2, addr("10.0.3.1"), net("10.0.3.0/24")),
        ("b", 2): n.add_interface(nodes["b"], 2, addr("10.0.3.2"), net("10.0.3.0/24")),
        ("a", 3): n.add_interface(nodes["a"], 3, addr("10.9.0.1"), net("10.9.0.0/24")),
        ("b", 3): n.add_interface(nodes["b"], 3, addr("10.8.0.1"), net("10.8.0.0/24")),
    }
    n.add_link(ifs[("s", 1)], ifs[("a", 1)], 1)
    n.add_link(ifs[("s", 2)], ifs[("b", 1)], 4)
    n.add_link(ifs[("a", 2)], ifs[("b", 2)], 1)
    routers = {
        name: LinkStateRouter(n, nodes[name], router_id=100 + i)
        for i, name in enumerate("sab", start=1)
    }
    return n, routers


def converge(n: Network, routers: dict[str, LinkStateRouter], now: int = 0) -> None:
    """Drive hellos over every link until Full, then share every LSA."""
    for _ in range(2):
        for link in n.links.values():
            xa, xb = link.a, link.b
            ra = next(r for r in routers.values() if r.node_id == xa.node)
            rb = next(r for r in routers.values() if r.node_id == xb.node)
            rb.process_hello(xb, ra.make_hello(xa, now), now, cost=link.metric_from(xb))
            ra.process_hello(xa, rb.make_hello(xb, now), now, cost=link.metric_from(xa))
    lsas = [r.originate_lsa(now) for r in routers.values()]
    for r in routers.values():
        for lsa in lsas:
            r.lsdb.install(lsa)


def test_originate_stub_prefix_metric_zero():
    n, routers = triangle()
    converge(n, routers)
    lsa_a = routers["a"].lsdb[102]
    stubs = {p.prefix: p.metric for p in lsa_a.prefixes()}
    assert stubs[net("10.9.0.0/24")] == 0
    # transit prefixes advertise the local output cost instead
    assert stubs[net("10.0.1.0/24")] == 1
    assert stubs[net("10.0.3.0/24")] == 1


def test_spf_picks_cheapest_path_and_metric_adds_up():
    n, routers = triangle()
    converge(n, routers)
    table = {e.destination: e for e in routers["s"].compute_routes()}
    # stub behind b: direct costs 4, the detour through a costs 1+1
    best_b = table[net("10.8.0.0/24")]
    assert best_b.metric == 2
    assert best_b.next_hop == addr("10.0.1.2")
    assert best_b.destination_interface.ordinal == 1
    assert table[net("10.9.0.0/24")].metric == 1


def test_candidates_cover_each_neighbor_and_contain_the_best():
    n, routers = triangle()
    converge(n, routers)
    s = routers["s"]
    cands = s.compute_all_candidates()
    stub = net("10.8.0.0/24")
    per_neighbor = sorted(
        (c.metric, str(c.next_hop)) for c in cands if c.destination == stub
    )
    assert per_neighbor == [(2, "10.0.1.2"), (4, "10.0.2.2")]
    best = {e.destination: e.metric for e in s.compute_routes()}
    grouped: dict = {}
    for c in cands:
        grouped.setdefault(c.destination, []).append(c.metric)
    assert {d: min(ms) for d, ms in grouped.items()} == best


def test_spf_requires_own_lsa():
    db = Lsdb()
    db.install(Lsa(origin=7, seq=1, entries=()))
    with pytest.raises(SimulationError):
        compute_spf(db, self_id=1, first_hops={})


def test_spf_ignores_one_sided_adjacencies():
    prefix = net("10.8.0.0/24")
    hops = {
        2: FirstHop(neighbor=2, addr=addr("10.0.0.2"), interface=InterfaceId(1, 1), cost=5)
    }
    # the neighbor's stored lsa does not list us back yet: no usable edge
    db = Lsdb()
    db.install(Lsa(origin=1, seq=1, entries=(AdjacencyEntry(neighbor=2, metric=5),)))
    db.install(Lsa(origin=2, seq=1, entries=(PrefixEntry(prefix, 0),)))
    assert compute_spf(db, self_id=1, first_hops=hops) == []
    assert compute_candidates(db, self_id=1, first_hops=hops) == []

    # a stale third-party claim: 2 advertises dead router 9, 9 is silent
    db.install(
        Lsa(
            origin=2,
            seq=2,
            entries=(
                AdjacencyEntry(neighbor=1, metric=5),
                AdjacencyEntry(neighbor=9, metric=1),
            ),
        )
    )
    db.install(Lsa(origin=9, seq=1, entries=(PrefixEntry(prefix, 0),)))
    routes = compute_spf(db, self_id=1, first_hops=hops)
    assert routes == []  # 9 never confirmed the adjacency, so its prefix stays out


def test_spf_tie_breaks_on_lower_next_hop_address():
    prefix = net("10.8.0.0/24")
    db = Lsdb()
    db.install(
        Lsa(
            origin=1,
            seq=1,
            entries=(
                AdjacencyEntry(neighbor=2, metric=5),
                AdjacencyEntry(neighbor=3, metric=5),
            ),
        )
    )
    for origin in (2, 3):
        db.install(
            Lsa(
                origin=origin,
                seq=1,
                entries=(AdjacencyEntry(neighbor=1, metric=5), PrefixEntry(prefix, 0)),
            )
        )
    hops = {
        2: FirstHop(neighbor=2, addr=addr("10.0.2.9"), interface=InterfaceId(1, 2), cost=5),
        3: FirstHop(neighbor=3, addr=addr("10.0.1.9"), interface=InterfaceId(1, 1), cost=5),
    }
    entries = compute_spf(db, self_id=1, first_hops=hops)
    assert len(entries) == 1
    assert entries[0].next_hop == addr("10.0.1.9")  # lower address wins the tie


@pytest.mark.parametrize(
    "metrics, expect_ordinal, expect_cost",
    [((3, 7), 1, 3), ((7, 3), 2, 3), ((3, 3), 1, 3)],
)
def test_first_hop_prefers_cheap_then_low_ordinal(metrics, expect_ordinal, expect_cost):
    n = Network()
    s = n.add_node(NodeKind.EXTERNAL_ROUTER, "s")
    t = n.add_node(NodeKind.EXTERNAL_ROUTER, "t")
    s1 = n.add_interface(s, 1, addr("10.0.0.1"), net("10.0.0.0/24"))
    s2 = n.add_interface(s, 2, addr("10.0.0.3"), net("10.0.0.0/24"))
    t1 = n.add_interface(t, 1, addr("10.0.0.2"), net("10.0.0.0/24"))
    n.add_link(s1, t1, metrics[0])
    n.add_link(s2, t1, metrics[1])
    rs = LinkStateRouter(n, s, router_id=201)
    rt = LinkStateRouter(n, t, router_id=202)
    for now in (0, 1000):
        hello_t = rt.make_hello(t1, now)
        rs.process_hello(s1, hello_t, now, cost=metrics[0])
        rs.process_hello(s2, hello_t, now, cost=metrics[1])
        for iface, cost in ((s1, metrics[0]), (s2, metrics[1])):
            rt.process_hello(t1, rs.make_hello(iface, now), now, cost=cost)
    hops = rs.first_hops()
    assert set(hops) == {202}
    assert hops[202].interface.ordinal == expect_ordinal
    assert hops[202].cost == expect_cost
    # both records collapse to one adjacency at the cheaper metric
    lsa = rs.originate_lsa(2000)
    assert lsa.adjacencies() == [AdjacencyEntry(neighbor=202, metric=3)]
    assert lsa.prefixes() == [PrefixEntry(prefix=net("10.0.0.0/24"), metric=3)]


def test_flood_skips_arrival_interface_and_stub_interfaces():
    n, routers = triangle()
    converge(n, routers)
    s = routers["s"]
    fresh = Lsa(origin=102, seq=99, entries=())
    result, emissions = s.receive_lsa(iface_of(s, 1), fresh)
    assert result is InstallResult.INSTALLED
    assert [(i.node, i.ordinal) for i, _ in emissions] == [(s.node_id, 2)]
    assert all(lsa is fresh for _, lsa in emissions)
    again = s.receive_lsa(iface_of(s, 2), fresh)
    assert again == (InstallResult.DUPLICATE, [])
    # a copy of the stub-only view: no Full neighbor behind a -> no emission
    a = routers["a"]
    stub_emissions = a.flood(fresh, arrival_iface=iface_of(a, 1))
    assert [(i.node, i.ordinal) for i, _ in stub_emissions] == [(a.node_id, 2)]


def test_db_sync_pushes_whole_database_in_origin_order():
    n, routers = triangle()
    converge(n, routers)
    s = routers["s"]
    out = s.db_sync(iface_of(s, 2))
    assert [lsa.origin for _, lsa in out] == [101, 102, 103]
    assert all(iface == iface_of(s, 2) for iface, _ in out)


def test_lsdb_identity_after_convergence():
    n, routers = triangle()
    converge(n, routers)
    assert routers["s"].lsdb.identical_to(routers["a"].lsdb)
    assert routers["a"].lsdb.identical_to(routers["b"].lsdb)


def test_derive_router_id_and_text_form():
    rid = derive_router_id([addr("10.0.0.2"), addr("10.0.0.9"), addr("10.0.0.5")])
    assert rid == int(addr("10.0.0.9"))
    assert router_id_str(rid) == "10.0.0.9"
    assert derive_router_id([], fallback=7) == 7


def test_hello_interval_divides_dead_interval():
    assert DEAD_INTERVAL_MS == 4 * HELLO_INTERVAL_MS

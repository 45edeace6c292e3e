from __future__ import annotations

import ipaddress

import pytest
from hypothesis import given
from hypothesis import strategies as st

from msrsim.lsproto import RoutingEntry
from msrsim.model import InterfaceId, host_addresses
from msrsim.msrouter import (
    MsRouter,
    MsrIfaceKind,
    MsrInterface,
    RoutingMode,
    SubnetExhausted,
    format_table,
    map_interface_name,
    reserve_pdu_iface_address,
    translate_routes,
)


def addr(text: str) -> ipaddress.IPv4Address:
    return ipaddress.IPv4Address(text)


def net(text: str) -> ipaddress.IPv4Network:
    return ipaddress.IPv4Network(text)


def msr_iface(kind: MsrIfaceKind, source_id: int, address: str, subnet: str) -> MsrInterface:
    ordinal = source_id if kind is MsrIfaceKind.N6 else 1000 + source_id
    return MsrInterface(
        id=InterfaceId(5, ordinal),
        kind=kind,
        source_id=source_id,
        name=map_interface_name(kind, source_id),
        address=addr(address),
        subnet=net(subnet),
    )


def sample_router() -> MsRouter:
    r = MsRouter(upf=5, name="msr1", mode=RoutingMode.CP_BASED)
    r.n6[1] = msr_iface(MsrIfaceKind.N6, 1, "172.16.2.2", "172.16.2.0/24")
    r.n6[2] = msr_iface(MsrIfaceKind.N6, 2, "172.16.4.2", "172.16.4.0/24")
    r.sessions[1] = msr_iface(MsrIfaceKind.PDU_SESSION, 1, "172.16.6.2", "172.16.6.0/24")
    r.sessions[2] = msr_iface(MsrIfaceKind.PDU_SESSION, 2, "172.16.7.2", "172.16.7.0/24")
    return r


def test_interface_names_follow_source():
    assert map_interface_name(MsrIfaceKind.N6, 1) == "n6-1"
    assert map_interface_name(MsrIfaceKind.N6, 2) == "n6-2"
    assert map_interface_name(MsrIfaceKind.PDU_SESSION, 7) == "pdu-7"


def test_reservation_matches_worked_example():
    # ue holds 172.16.6.10/24; the router borrows the lowest free address
    in_use = {addr("172.16.6.10")}
    got = reserve_pdu_iface_address(addr("172.16.6.10"), net("172.16.6.0/24"), in_use)
    assert got == addr("172.16.6.1")
    assert got in in_use  # reservation recorded for the next caller


def test_reservation_skips_ue_address_when_it_is_lowest():
    in_use: set = set()
    got = reserve_pdu_iface_address(addr("172.16.6.1"), net("172.16.6.0/24"), in_use)
    assert got == addr("172.16.6.2")


def test_reservation_exhausted():
    subnet = net("10.0.0.0/30")  # single usable host besides the ue
    in_use = {addr("10.0.0.1")}
    reserve_pdu_iface_address(addr("10.0.0.1"), subnet, in_use)
    with pytest.raises(SubnetExhausted):
        reserve_pdu_iface_address(addr("10.0.0.1"), subnet, in_use)


@given(
    st.integers(min_value=0, max_value=253),
    st.sets(st.integers(min_value=0, max_value=253), max_size=40),
)
def test_reservation_invariants(ue_off: int, used_offs: set[int]):
    subnet = net("10.1.2.0/24")
    base = int(subnet.network_address) + 1
    ue = ipaddress.IPv4Address(base + ue_off)
    in_use = {ipaddress.IPv4Address(base + o) for o in used_offs} | {ue}
    before = set(in_use)
    got = reserve_pdu_iface_address(ue, subnet, in_use)
    assert got != ue
    assert got not in before
    assert got in in_use
    assert got in subnet
    lower = [h for h in host_addresses(subnet) if h < got]
    assert all(h in before for h in lower)  # nothing free below the pick


def test_enumerate_interfaces_orders_n6_then_sessions():
    r = sample_router()
    assert [i.name for i in r.enumerate_interfaces()] == [
        "n6-1", "n6-2", "pdu-1", "pdu-2",
    ]
    assert r.iface_named("pdu-2").source_id == 2
    assert r.iface_named("absent") is None
    iid = r.n6[2].id
    assert r.iface_by_id(iid).name == "n6-2"
    assert r.iface_name(iid) == "n6-2"
    assert r.iface_name(InterfaceId(99, 99)) == str(InterfaceId(99, 99))


def test_router_id_is_highest_n6_address():
    r = sample_router()
    r.refresh_router_id()
    assert r.router_id == int(addr("172.16.4.2"))
    bare = MsRouter(upf=17, name="msr9", mode=RoutingMode.UP_BASED)
    bare.refresh_router_id()
    assert bare.router_id == 17  # unattached: node id as a placeholder


def entry(dest: str, nh: str, iface: InterfaceId, metric: int) -> RoutingEntry:
    return RoutingEntry(
        destination=net(dest), next_hop=addr(nh),
        destination_interface=iface, metric=metric,
    )


def test_translate_routes_builds_prefix_priority_rules():
    r = sample_router()
    table = [
        entry("172.16.1.0/24", "172.16.4.1", r.n6[2].id, 292),
        entry("172.16.9.0/24", "172.16.6.1", r.sessions[1].id, 68),
    ]
    rules = translate_routes(table, r)
    assert [(str(x.match_prefix), str(x.next_hop), x.priority) for x in rules] == [
        ("172.16.1.0/24", "172.16.4.1", 24),
        ("172.16.9.0/24", "172.16.6.1", 24),
    ]
    assert rules[0].egress == r.n6[2].id


def test_translate_routes_drops_vanished_egress():
    r = sample_router()
    gone = InterfaceId(5, 1003)  # a session interface that no longer exists
    table = [
        entry("172.16.1.0/24", "172.16.4.1", r.n6[2].id, 292),
        entry("172.16.8.0/24", "172.16.8.1", gone, 40),
    ]
    dropped: list[tuple[RoutingEntry, str]] = []
    rules = translate_routes(table, r, on_drop=lambda e, why: dropped.append((e, why)))
    assert len(rules) == 1
    assert len(dropped) == 1
    assert dropped[0][0].destination == net("172.16.8.0/24")
    assert "gone" in dropped[0][1]


def test_format_table_human_layout():
    r = sample_router()
    table = [
        entry("172.16.9.0/24", "172.16.6.1", r.sessions[1].id, 68),
        entry("172.16.1.0/24", "172.16.4.1", r.n6[2].id, 292),
        entry("172.16.1.0/24", "172.16.2.1", r.n6[1].id, 338),
    ]
    text = format_table(table, r.iface_name)
    lines = text.splitlines()
    assert lines[0].split() == [
        "Destination", "Next", "Hop", "Destination", "interface", "Metric",
    ]
    # sorted by destination, then metric; columns aligned
    assert lines[1].startswith("172.16.1.0/24")
    assert "292" in lines[1] and "n6-2" in lines[1]
    assert "338" in lines[2] and "n6-1" in lines[2]
    assert lines[3].startswith("172.16.9.0/24") and "pdu-1" in lines[3]


def test_format_table_machine_layout():
    r = sample_router()
    table = [entry("172.16.9.0/24", "172.16.6.1", r.sessions[1].id, 68)]
    assert format_table(table, r.iface_name, machine=True) == (
        "172.16.9.0/24\t172.16.6.1\tpdu-1\t68"
    )
    assert format_table([], r.iface_name, machine=True) == ""

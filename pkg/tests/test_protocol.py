import math

import numpy as np
import pytest

from crnroute.core import UNBOUNDED, RadioConfig
from crnroute.geometry import Position
from crnroute.protocol import (
    NeighborState,
    ProtocolConfig,
    RouteFailure,
    RouteReply,
    RouteRequest,
    build_hello,
    handle_rreq,
    plan_group_transmission,
    select_next_hop,
    transmission_times,
)
from crnroute.sim import effective_link_rate
from helpers import build_views

RADIO = RadioConfig()
B = RADIO.bandwidth


def _make(origin, t, pos, nbrs, pus, flows):
    st = NeighborState(origin, Position(*pos))
    for n, c in nbrs:
        st.handle_hello(build_hello(n, t, Position(1.0, 1.0), NeighborState(n, None), (), ()), t,
                        link_coeff=c)
    return build_hello(origin, t, Position(*pos), st, pus, flows)


def test_hello_contents():
    pkt = _make(0, 1.0, (0, 0), [(1, 0.5j), (2, 1.0)], [(7, 0.3 + 0.1j)], [])
    assert len(pkt.neighbor_entries) == 2
    assert pkt.pu_entries == ((7, 0.3 + 0.1j),)
    assert pkt.witnessed_flows == ()
    assert [e[0] for e in pkt.neighbor_entries] == [1, 2]


def test_newer_hello_replaces_older_and_stale_is_ignored():
    st = NeighborState(9, Position(0, 0), hello_timeout=3.0)
    assert st.handle_hello(_make(1, 1.0, (5, 0), [], [], [3]), 1.0, link_coeff=1.0)
    assert st.handle_hello(_make(1, 2.0, (6, 0), [], [], [4]), 2.0, link_coeff=2.0)
    assert st.entries[1].position == (6, 0) and st.entries[1].flows == {4}
    assert not st.handle_hello(_make(1, 1.5, (7, 0), [], [], []), 2.5)
    assert st.entries[1].position == (6, 0)
    # own hello is ignored
    assert not st.handle_hello(_make(9, 3.0, (0, 0), [], [], []), 3.0)


def test_silent_neighbor_evicted():
    st = NeighborState(0, Position(0, 0), hello_timeout=3.0)
    st.handle_hello(_make(1, 0.0, (5, 0), [], [], []), 0.0, link_coeff=1.0)
    st.handle_hello(_make(2, 2.0, (5, 5), [], [], []), 2.0, link_coeff=1.0)
    assert st.evict(3.5) == [1]
    assert st.neighbor_ids() == [2]


def test_two_hop_view():
    pos = [(0, 0), (100, 0), (200, 0)]
    H = np.ones((3, 3), dtype=complex)
    views, _, _ = build_views(pos, H)
    assert views[0].state.neighbor_ids() == [1]
    assert views[0].state.two_hop_ids() == [2]


def test_protocol_config_rejects_nonpositive_timers():
    with pytest.raises(ValueError):
        ProtocolConfig(rrep_timeout=0.0)


def _line_views(h=None):
    pos = [(0, 0), (100, 0), (200, 0)]
    H = np.full((3, 3), 1.0 + 0j) if h is None else h
    return build_views(pos, H)[0]


def test_rreq_discarded_when_not_closer():
    views = _line_views()
    # requester 2 at distance 10 from the destination, node 1 at 110
    rreq = RouteRequest(2, 5, 0, Position(210, 0), 2, Position(200, 0))
    assert handle_rreq(rreq, views[1]) is None


def test_destination_replies_with_direct_candidate():
    views = _line_views()
    rreq = RouteRequest(0, 1, 0, Position(100, 0), 0, Position(0, 0))
    rep = handle_rreq(rreq, views[1])
    assert rep.candidate.group == (1,)
    assert rep.candidate.effective_capacity == pytest.approx(B)


def test_select_next_hop():
    def rep(node, metric):
        return RouteReply(0, 9, node, metric, None)

    ack, win = select_next_hop([rep(1, 0.7), rep(2, 0.9)], requester=0)
    assert ack.chosen == 2 and win.replier == 2
    assert select_next_hop([rep(4, 0.1)])[0].chosen == 4
    assert select_next_hop([rep(3, 0.5), rep(1, 0.5)])[0].chosen == 1
    with pytest.raises(RouteFailure):
        select_next_hop([])


def test_scripted_two_relay_choice():
    # 0 asks; 1 and 2 both reply; 2 has the far stronger onward channel
    pos = [(0, 0), (100, 40), (100, -40), (200, 40), (200, -40)]
    H = np.full((5, 5), 1.0 + 0j)
    H[0, 1] = H[1, 0] = H[0, 2] = H[2, 0] = 1.5
    H[1, 3] = H[3, 1] = 0.3
    H[2, 4] = H[4, 2] = 2.0
    views, _, _ = build_views(pos, H)
    rreq = RouteRequest(0, 5, 0, Position(300, 0), 0, Position(0, 0))
    replies = [r for r in (handle_rreq(rreq, views[v]) for v in (1, 2)) if r is not None]
    assert sorted(r.replier for r in replies) == [1, 2]
    by = {r.replier: r for r in replies}
    assert by[1].candidate.next_hop == 3 and by[2].candidate.next_hop == 4
    assert by[2].metric > by[1].metric
    ack, _ = select_next_hop(replies, requester=0)
    assert ack.chosen == 2
    # node 2's rate is capped by the handoff from node 0
    assert by[2].candidate.effective_capacity == pytest.approx(B * math.log2(1 + 2.25))


def test_all_members_overheard():
    plan = plan_group_transmission(0, (0, 1), {0: 1.0, 1: 1.0}, [], {}, holders={0, 1},
                                   dissem_capacity={1: 1.0}, radio=RADIO)
    assert plan.needs_packet == ()
    assert plan.dissemination_capacity == UNBOUNDED
    assert plan.effective_capacity == plan.coop_capacity
    t_d, t_c = transmission_times(plan, 4096, 0, effective_link_rate)
    assert t_d == 0.0 and t_c == pytest.approx(4096 / plan.coop_capacity)


def test_relay_pair_beats_point_to_point_bottleneck():
    # S->R |h|^2 = 8, S->D and R->D |h|^2 = 4 each
    c_sr = B * math.log2(9)
    plan = plan_group_transmission(0, (0, 1), {0: 2.0, 1: 2.0}, [], {}, holders={0},
                                   dissem_capacity={1: c_sr}, radio=RADIO)
    assert plan.coop_capacity == pytest.approx(B * math.log2(9))
    assert plan.effective_capacity == pytest.approx(B * math.log2(9))
    assert plan.effective_capacity > B * math.log2(5)
    t_d, t_c = transmission_times(plan, 1000, 1, effective_link_rate)
    assert t_d == pytest.approx(1000 / (c_sr / 2))


def test_group_too_small_after_pu_appears():
    h_pu = {(0, 5): 1.0, (1, 5): 0.5, (0, 6): 0.2j, (1, 6): 1.0}
    with pytest.raises(RouteFailure):
        plan_group_transmission(0, (0, 1), {0: 1.0, 1: 1.0}, [5, 6], h_pu, {0, 1}, {}, RADIO)
    plan = plan_group_transmission(0, (0, 1), {0: 1.0, 1: 1.0}, [5], h_pu, {0, 1}, {}, RADIO)
    assert plan.nulled_pus == (5,)
    assert plan.residual <= 1e-8


def test_unreachable_members_dropped():
    plan = plan_group_transmission(0, (0, 1, 2), {0: 1.0, 1: 1.0, 2: 1.0}, [], {}, {0}, {1: 1.0, 2: 2.0},
                                   RADIO, reachable={1})
    assert plan.group == (0, 1)
    # a coordinator outside its own group cannot lead it
    with pytest.raises(RouteFailure):
        plan_group_transmission(3, (0, 1), {0: 1.0, 1: 1.0}, [], {}, {0}, {}, RADIO)


def test_blocked_requester_non_holder_discards():
    views = _line_views()
    rreq = RouteRequest(0, 2, 0, Position(200, 0), 0, Position(0, 0), requester_can_send=False)
    assert handle_rreq(rreq, views[1]) is None
    rreq = RouteRequest(0, 2, 0, Position(200, 0), 0, Position(0, 0), requester_can_send=False,
                        prev_transmitters=((0, Position(0, 0)),))
    assert handle_rreq(rreq, views[1]) is not None

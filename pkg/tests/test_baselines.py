from crnroute.baselines import BaselineKind, NeighborInfo, flood_discover, greedy_next_hop
from crnroute.core import RadioConfig

RADIO = RadioConfig()
DEST = (300.0, 0.0)


def nb(node, x, coeff, blocked=False):
    return NeighborInfo(node, (x, 0.0), coeff, blocked)


def test_greedy_picks_best_channel():
    nbrs = [nb(1, 100, 0.5), nb(2, 110, 2.0), nb(3, 90, 1.0), nb(4, -50, 9.0)]
    assert greedy_next_hop((0.0, 0.0), 9, DEST, nbrs, RADIO) == 2


def test_greedy_all_blocked_fails():
    nbrs = [nb(1, 100, 1.0, True), nb(2, 110, 2.0, True)]
    assert greedy_next_hop((0.0, 0.0), 9, DEST, nbrs, RADIO) is None


def test_greedy_single_closer_neighbor():
    nbrs = [nb(1, 100, 0.01), nb(2, -100, 5.0)]
    assert greedy_next_hop((0.0, 0.0), 9, DEST, nbrs, RADIO) == 1


def test_greedy_blocked_destination_still_eligible():
    nbrs = [NeighborInfo(9, DEST, 0.1, True)]
    assert greedy_next_hop((200.0, 0.0), 9, DEST, nbrs, RADIO) == 9


def test_flood_line():
    adj = {0: [1], 1: [0, 2], 2: [1, 3], 3: [2]}
    res = flood_discover(0, 3, adj)
    assert res.path == [0, 1, 2, 3]
    assert res.rreq_count == 3 and res.rrep_count == 3
    assert res.control_packets == 6


def test_flood_disconnected():
    res = flood_discover(0, 3, {0: [1], 1: [0], 2: [3], 3: [2]})
    assert res.path is None and res.rrep_count == 0


def test_flood_avoids_blocked_relays():
    adj = {0: [1, 2], 1: [0, 3], 2: [0, 4], 4: [2, 3], 3: [1, 4]}
    assert flood_discover(0, 3, adj, blocked={1}).path == [0, 2, 4, 3]
    assert flood_discover(0, 3, adj, blocked={1, 2}).path is None


def test_kind_values():
    assert {k.value for k in BaselineKind} == {"launch_like", "caodv_like"}

"""Non-cooperative baselines that avoid active PUs.

``launch_like`` forwards greedily by location, one hop at a time, picking
the best channel among unblocked neighbours closer to the destination.
``caodv_like`` floods a route request over unblocked nodes and source-routes
along the breadth-first path. Both are simplified stand-ins for the local
and global routing philosophies, not protocol-faithful reimplementations.
"""

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .core import capacity_p2p
from .geometry import distance


class BaselineKind(Enum):
    LocationGreedy = "launch_like"
    FloodingDiscovery = "caodv_like"


@dataclass(frozen=True)
class NeighborInfo:
    node: int
    position: tuple
    coeff: complex
    blocked: bool


def greedy_next_hop(position, dest, dest_position, neighbors, radio):
    """Best-channel neighbour strictly closer to ``dest`` and not PU-blocked, or None.

    The destination itself is always eligible because it never has to
    transmit the packet onwards.
    """
    my_dist = distance(position, dest_position)
    best = None
    best_key = None
    for nb in neighbors:
        if distance(nb.position, dest_position) >= my_dist:
            continue
        if nb.blocked and nb.node != dest:
            continue
        key = (-capacity_p2p(nb.coeff, radio), nb.node)
        if best_key is None or key < best_key:
            best, best_key = nb.node, key
    return best


@dataclass
class FloodResult:
    path: Optional[list]
    rreq_count: int
    rrep_count: int

    @property
    def control_packets(self):
        return self.rreq_count + self.rrep_count


def flood_discover(source, dest, adjacency, blocked=frozenset()):
    """Breadth-first RREQ flood over unblocked relays.

    ``adjacency`` maps node -> iterable of neighbours. Every reached node
    other than the destination rebroadcasts once unless it is blocked; the
    RREP retraces the BFS parent pointers. Returns the path (source first)
    or None, together with the control-packet counts.
    """
    parent = {source: None}
    order = deque([source])
    rreq = 0
    while order:
        u = order.popleft()
        if u == dest:
            continue
        if u != source and u in blocked:
            continue
        rreq += 1
        for v in sorted(adjacency.get(u, ())):
            if v not in parent:
                parent[v] = u
                order.append(v)
    if dest not in parent:
        return FloodResult(None, rreq, 0)
    path = [dest]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return FloodResult(path, rreq, len(path) - 1)

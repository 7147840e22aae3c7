"""Per-node state and message handling for the cooperative null-steering router.

Nodes learn their 2-hop neighbourhood from periodic hellos. A node holding
a packet broadcasts a route request; every neighbour closer to the
destination runs the route-reply search (potential next hops, maximum
group size, metric maximisation) and answers with its best metric. The
requester acknowledges the best replier, which then coordinates the
cooperative transmission of its group towards the chosen next hop.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    UNBOUNDED,
    capacity_coop,
    capacity_p2p,
    compute_null_weights,
)
from .errors import DegenerateChannel, GroupTooSmall, NoFeasibleGroup
from .geometry import (
    Position,
    distance,
    flow_density,
    flows_per_node,
    hull_area,
    node_density,
)
from .metric import (
    LinkCandidate,
    LinkContext,
    best_candidate,
    count_flow_neighbors,
    link_metric,
    max_group_size,
    score_groups,
)


class RouteFailure(Exception):
    """No usable next hop (or group) for the packet; it is dropped."""


@dataclass(frozen=True)
class ProtocolConfig:
    hello_period: float = 1.0
    rrep_timeout: float = 0.02
    hello_timeout: float = 3.0

    def __post_init__(self):
        if min(self.hello_period, self.rrep_timeout, self.hello_timeout) <= 0:
            raise ValueError("protocol timers must be > 0")


@dataclass(frozen=True)
class HelloPacket:
    origin: int
    timestamp: float
    position: Position
    # (neighbor id, channel coefficient, neighbor position)
    neighbor_entries: tuple
    # (PU id, channel coefficient)
    pu_entries: tuple
    witnessed_flows: tuple


@dataclass
class NeighborEntry:
    position: Position
    last_hello: float
    coeff: complex
    neighbor_coeffs: dict
    neighbor_positions: dict
    pu_coeffs: dict
    flows: frozenset

    @property
    def neighbor_ids(self):
        return self.neighbor_coeffs.keys()


class NeighborState:
    """One node's view of its 1-hop neighbours and, through them, its 2-hop area."""

    def __init__(self, owner, position, hello_timeout=3.0):
        self.owner = owner
        self.position = position
        self.hello_timeout = hello_timeout
        self.entries = {}

    def __contains__(self, node):
        return node in self.entries

    def __len__(self):
        return len(self.entries)

    def handle_hello(self, packet, now, link_coeff=None):
        """Store a neighbour's hello. Returns False for stale packets."""
        if packet.origin == self.owner:
            return False
        old = self.entries.get(packet.origin)
        if old is not None and packet.timestamp < old.last_hello:
            return False
        coeffs = {}
        positions = {}
        for node, coeff, pos in packet.neighbor_entries:
            coeffs[node] = coeff
            positions[node] = pos
        if link_coeff is None:
            link_coeff = coeffs.get(self.owner, 0j)
        self.entries[packet.origin] = NeighborEntry(
            position=packet.position,
            last_hello=packet.timestamp,
            coeff=link_coeff,
            neighbor_coeffs=coeffs,
            neighbor_positions=positions,
            pu_coeffs=dict(packet.pu_entries),
            flows=frozenset(packet.witnessed_flows),
        )
        return True

    def evict(self, now):
        stale = [n for n, e in self.entries.items() if now - e.last_hello > self.hello_timeout]
        for n in stale:
            del self.entries[n]
        return stale

    def neighbor_ids(self):
        return sorted(self.entries)

    def two_hop_ids(self):
        ids = set()
        for entry in self.entries.values():
            ids.update(entry.neighbor_coeffs)
        ids.discard(self.owner)
        ids.difference_update(self.entries)
        return sorted(ids)

    def coeff(self, node):
        return self.entries[node].coeff


def build_hello(node, now, position, state, pu_entries, witnessed_flows):
    """Hello carrying neighbours (+channels), sensed PUs (+channels) and witnessed flows."""
    neighbors = tuple(
        (n, state.entries[n].coeff, state.entries[n].position) for n in state.neighbor_ids()
    )
    return HelloPacket(
        origin=node,
        timestamp=now,
        position=position,
        neighbor_entries=neighbors,
        pu_entries=tuple(sorted(pu_entries)),
        witnessed_flows=tuple(sorted(set(witnessed_flows))),
    )


@dataclass(frozen=True)
class RouteRequest:
    source: int
    destination: int
    flow: int
    dest_position: Position
    requester: int
    requester_position: Position
    # whether the requester may transmit on the data channel right now
    requester_can_send: bool = True
    # transmitters of the packet's last data transmission, for overhearing
    prev_transmitters: tuple = ()


@dataclass(frozen=True)
class RouteReply:
    source: int
    destination: int
    replier: int
    metric: float
    candidate: LinkCandidate
    holds_packet: bool = False


@dataclass(frozen=True)
class Ack:
    requester: int
    chosen: int


@dataclass(frozen=True)
class AckReply:
    replier: int
    requester: int


@dataclass
class NodeView:
    """Local knowledge a node uses to answer route requests."""

    node: int
    position: Position
    state: NeighborState
    pu_coeffs: dict                 # sensed PUs in range -> channel coefficient
    active_pus: frozenset           # PUs currently sensed ON
    flows: frozenset                # flows this node witnessed
    radio: object
    prop: object
    metric: object                  # MetricConfig
    su_range: float = 125.0

    def blocked(self):
        return any(p in self.active_pus for p in self.pu_coeffs)


@dataclass
class ReplyStats:
    """Per-run bookkeeping of the route-reply search."""

    next_hops: int = 0
    # mean feasible groups per next hop with at least one feasible group
    opportunities: Optional[float] = None
    candidates_scored: int = 0


def overheard(position, prev_transmitters, su_range):
    return any(distance(position, p) <= su_range for _, p in prev_transmitters)


def density_estimate(view):
    """Flow density, node density and flows per node around ``view.node``."""
    st = view.state
    one_hop = [st.entries[n].position for n in st.neighbor_ids()]
    flows = set(view.flows)
    for n in st.neighbor_ids():
        flows.update(st.entries[n].flows)
    area_f = hull_area([view.position] + one_hop, view.su_range)
    d_f = flow_density(len(flows), area_f)
    positions = [view.position] + one_hop
    for n in st.neighbor_ids():
        for m, pos in st.entries[n].neighbor_positions.items():
            if m != view.node and m not in st.entries:
                positions.append(pos)
    count = len(st.entries) + len(st.two_hop_ids())
    area_n = hull_area(positions, view.su_range)
    d_n = node_density(count, area_n)
    f_n = flows_per_node(d_f, d_n) if d_n > 0 else 0.0
    return d_f, d_n, f_n


def _known_flows(view):
    flows = {view.node: view.flows}
    for n, entry in view.state.entries.items():
        flows[n] = entry.flows
    return flows


def _neighbor_map(view):
    nbrs = {view.node: frozenset(view.state.entries)}
    for n, entry in view.state.entries.items():
        nbrs[n] = frozenset(entry.neighbor_coeffs)
    return nbrs


def build_context(view, next_hop, members, holders_mask, d_f, handoff=UNBOUNDED):
    """LinkContext for relay ``view.node`` towards ``next_hop`` with candidate ``members``.

    ``handoff`` is the requester->relay rate when the relay still has to
    receive the packet; it bounds every group like a dissemination link.
    """
    st = view.state
    nodes = (view.node,) + tuple(members)
    n = len(nodes)
    h_next = np.empty(n, dtype=complex)
    h_next[0] = st.coeff(next_hop)
    for i, m in enumerate(members, start=1):
        h_next[i] = st.entries[m].neighbor_coeffs[next_hop]
    pu_maps = [view.pu_coeffs] + [st.entries[m].pu_coeffs for m in members]
    pu_ids = sorted({p for mp in pu_maps for p in mp if p in view.active_pus})
    h_pu = np.zeros((len(pu_ids), n), dtype=complex)
    cover = np.zeros((len(pu_ids), n), dtype=bool)
    for r, p in enumerate(pu_ids):
        for i, mp in enumerate(pu_maps):
            if p in mp:
                h_pu[r, i] = mp[p]
                cover[r, i] = True
    relay_blocked = view.blocked()
    dissem = np.empty(n)
    dissem[0] = handoff
    for i, m in enumerate(members, start=1):
        if holders_mask[i - 1]:
            dissem[i] = UNBOUNDED
        elif relay_blocked:
            dissem[i] = 0.0
        else:
            dissem[i] = capacity_p2p(st.coeff(m), view.radio)
    nbr_map = _neighbor_map(view)
    return LinkContext(
        relay=view.node,
        next_hop=next_hop,
        nodes=nodes,
        h_next=h_next,
        pu_ids=tuple(pu_ids),
        h_pu=h_pu,
        pu_cover=cover,
        dissemination=dissem,
        neighbor_sets=tuple(nbr_map[x] for x in nodes),
        flows=_known_flows(view),
        radio=view.radio,
        flow_density=d_f,
        prop=view.prop,
        beta=view.metric.beta,
    )


def route_reply_search(view, rreq, stats=None):
    """Best LinkCandidate over all potential next hops, or None.

    Implements the three phases: closer next hops only, maximum group size
    from the elimination thresholds, and metric maximisation over all groups
    in the admissible size range.
    """
    st = view.state
    dest = rreq.dest_position
    my_dist = distance(view.position, dest)
    next_hops = [
        x for x in st.neighbor_ids()
        if x != rreq.requester and distance(st.entries[x].position, dest) < my_dist
    ]
    if stats is None:
        stats = ReplyStats()
    stats.next_hops = len(next_hops)
    if not next_hops:
        return None
    d_f, _, f_n = density_estimate(view)
    nbr_map = _neighbor_map(view)
    flows = _known_flows(view)
    n_min = max(1, count_flow_neighbors({view.node}, nbr_map, flows))
    pu_here = sum(1 for p in view.pu_coeffs if p in view.active_pus)
    min_size = pu_here + 1
    cap = view.metric.max_enumeration_neighbors
    heard_from = tuple(rreq.prev_transmitters)
    holds = view.node in {t for t, _ in heard_from} or overheard(
        view.position, heard_from, view.su_range)
    handoff = UNBOUNDED
    if not holds and rreq.requester_can_send:
        # the requester's handoff to this relay is a broadcast its neighbours overhear
        heard_from += ((rreq.requester, rreq.requester_position),)
        if rreq.requester in st:
            handoff = capacity_p2p(st.coeff(rreq.requester), view.radio)
    best = None
    opp = []
    for x in next_hops:
        members = [
            v for v in st.neighbor_ids()
            if v not in (rreq.requester, x) and x in st.entries[v].neighbor_coeffs
        ]
        members.sort(key=lambda v: (distance(view.position, st.entries[v].position), v))
        members = members[:cap]
        try:
            max_size = max_group_size(f_n, n_min, pu_here, view.metric.thresholds, len(members))
        except NoFeasibleGroup:
            continue
        holders = [
            v in {t for t, _ in heard_from}
            or overheard(st.entries[v].position, heard_from, view.su_range)
            for v in members
        ]
        ctx = build_context(view, x, members, holders, d_f, handoff)
        scores = score_groups(ctx, min_size, max_size)
        feasible = int(scores.feasible.sum())
        stats.candidates_scored += feasible
        if feasible:
            opp.append(feasible)
        cand = best_candidate(ctx, min_size, max_size, scores)
        if cand is not None and (best is None or (cand.sort_key(), cand.next_hop) < (best.sort_key(), best.next_hop)):
            best = cand
    stats.opportunities = (sum(opp) / len(opp)) if opp else None
    return best


def handle_rreq(rreq, view, stats=None):
    """Answer a route request with a RouteReply, or None to discard it."""
    dest = rreq.dest_position
    if distance(view.position, dest) >= distance(rreq.requester_position, dest):
        return None
    holds = view.node in {t for t, _ in rreq.prev_transmitters} or overheard(
        view.position, rreq.prev_transmitters, view.su_range)
    if not holds and not rreq.requester_can_send:
        return None
    if view.node == rreq.destination:
        if rreq.requester not in view.state:
            return None
        c_hat = capacity_p2p(view.state.coeff(rreq.requester), view.radio)
        nbr_map = _neighbor_map(view)
        n_n = count_flow_neighbors({rreq.requester}, nbr_map, _known_flows(view))
        metric = link_metric(c_hat, n_n, 0.0, 1, view.metric.beta)
        cand = LinkCandidate(
            relay=view.node, next_hop=view.node, group=(view.node,), coordinator=view.node,
            effective_capacity=c_hat, n_n=n_n, n_f=0.0, metric=metric, coop_capacity=c_hat,
        )
        return RouteReply(rreq.source, rreq.destination, view.node, metric, cand, holds)
    cand = route_reply_search(view, rreq, stats)
    if cand is None:
        return None
    return RouteReply(rreq.source, rreq.destination, view.node, cand.metric, cand, holds)


def select_next_hop(replies, requester=None):
    """ACK for the highest-metric replier; ties go to the smallest replier id."""
    replies = list(replies)
    if not replies:
        raise RouteFailure("no route replies")
    winner = min(replies, key=lambda r: (-r.metric, r.replier))
    return Ack(requester=requester, chosen=winner.replier), winner


@dataclass
class GroupPlan:
    group: tuple
    weights: object                 # BeamWeights
    nulled_pus: tuple
    coop_capacity: float
    # members that still need the packet from the coordinator
    needs_packet: tuple = ()
    dissemination_capacity: float = UNBOUNDED
    residual: float = 0.0

    @property
    def effective_capacity(self):
        return min(self.coop_capacity, self.dissemination_capacity)


def plan_group_transmission(coordinator, group, h_next, pu_ids, h_pu, holders, dissem_capacity,
                            radio, reachable=None):
    """Weights and rates for a coordinator disseminating to and transmitting with its group.

    ``h_next`` maps member -> coefficient to the next hop, ``h_pu`` maps
    (member, pu) -> coefficient for PUs currently constraining the group,
    ``dissem_capacity`` maps member -> coordinator->member rate. Members not
    in ``reachable`` are dropped. Raises RouteFailure when the remaining
    group cannot null every PU.
    """
    members = [m for m in sorted(group) if reachable is None or m in reachable or m == coordinator]
    if coordinator not in members:
        raise RouteFailure("coordinator unreachable")
    rows = [p for p in pu_ids if any((m, p) in h_pu for m in members)]
    H = np.array([[h_pu.get((m, p), 0j) for m in members] for p in rows], dtype=complex)
    H = H.reshape(len(rows), len(members))
    h = np.array([h_next[m] for m in members], dtype=complex)
    try:
        weights = compute_null_weights(H, h)
    except GroupTooSmall as exc:
        raise RouteFailure(f"group too small: {exc}") from None
    except DegenerateChannel as exc:
        raise RouteFailure(f"degenerate channel: {exc}") from None
    residual = float(np.max(np.abs(H @ weights.weights))) if rows else 0.0
    needs = tuple(m for m in members if m != coordinator and m not in holders)
    c_wor = min((dissem_capacity[m] for m in needs), default=UNBOUNDED)
    return GroupPlan(
        group=tuple(members),
        weights=weights,
        nulled_pus=tuple(rows),
        coop_capacity=capacity_coop(weights, h, radio),
        needs_packet=needs,
        dissemination_capacity=c_wor,
        residual=residual,
    )


def transmission_times(plan, bits, contenders, rate_fn):
    """(dissemination time, cooperative time) for one packet of ``bits``."""
    t_d = 0.0
    if plan.needs_packet:
        rate = rate_fn(plan.dissemination_capacity, contenders)
        t_d = math.inf if rate <= 0 else bits / rate
    rate = rate_fn(plan.coop_capacity, contenders)
    t_c = math.inf if rate <= 0 else bits / rate
    return t_d, t_c

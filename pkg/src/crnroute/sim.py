"""Deterministic discrete-event simulator for the three routing protocols.

Model summary:

* SUs and PUs sit at fixed positions. Connectivity and contention use disks
  (``su_range``); a PU (a primary receiver) is disturbed by any SU data
  transmitter within ``pu_range`` of it. Fading sets rates, not connectivity.
* Channel coefficients are redrawn every coherence time; cached routes are
  invalidated at each redraw.
* Each SU has one FIFO data queue. The head job is in service while the
  node runs a discovery or transmits; transmissions of different nodes
  proceed concurrently and share the medium through a fair-share rate cut
  among the backlogged nodes around the transmitters.
* A transmitter inside an active PU's range must wait for the PU to go OFF,
  unless it is part of a cooperative group whose weights null every active
  PU covering the group. A PU turning ON mid-transmission destroys any
  unprotected transmission it covers.
* Control packets ride an ideal common control channel.
"""

import heapq
import math
from collections import deque
from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Optional

import numpy as np

from .baselines import NeighborInfo, flood_discover, greedy_next_hop
from .config import ScenarioConfig
from .core import ChannelModel, RadioConfig, capacity_p2p, sample_channel
from .geometry import Position, PropagationConfig, distance
from .metric import MetricConfig, generate_threshold_table
from .protocol import (
    NeighborState,
    NodeView,
    ReplyStats,
    RouteFailure,
    RouteRequest,
    build_hello,
    handle_rreq,
    plan_group_transmission,
    select_next_hop,
    transmission_times,
)

# event kinds, in the order used to break exact time ties after the sequence number
HELLO_DUE = "HelloDue"
PACKET_DUE = "FlowPacketDue"
TX_COMPLETE = "TxComplete"
PU_ON = "PuOn"
PU_OFF = "PuOff"
RREP_TIMEOUT = "RrepTimeout"
CHANNEL_REFRESH = "ChannelRefresh"

NULL_TOLERANCE = 1e-8


@dataclass
class PuProcess:
    pu_id: int
    position: Position
    mean_on: float
    mean_off: float

    @property
    def activity(self):
        total = self.mean_on + self.mean_off
        return self.mean_on / total if total > 0 else 0.0


def sample_pu_schedule(pu, horizon, rng):
    """Alternating (time, is_on) transitions with exponential holding times.

    The initial state is drawn from the stationary ON probability. A PU with
    zero mean ON time never turns on; one with zero mean OFF time is ON for
    the whole horizon.
    """
    if pu.mean_on <= 0:
        return []
    if pu.mean_off <= 0:
        return [(0.0, True)]
    on = bool(rng.random() < pu.activity)
    events = [(0.0, True)] if on else []
    t = 0.0
    while True:
        t += rng.exponential(pu.mean_on if on else pu.mean_off)
        if t >= horizon:
            break
        on = not on
        events.append((t, on))
    return events


def on_intervals(schedule, horizon):
    """Convert a schedule into [start, end) ON intervals clipped to the horizon."""
    out = []
    start = None
    for t, is_on in schedule:
        if is_on and start is None:
            start = t
        elif not is_on and start is not None:
            out.append((start, t))
            start = None
    if start is not None:
        out.append((start, horizon))
    return out


def effective_link_rate(nominal, contenders):
    """Fair share of the medium among the transmitter and its contenders."""
    if contenders < 0:
        raise ValueError("contenders must be >= 0")
    return nominal / (1 + contenders)


@dataclass
class Flow:
    flow_id: int
    source: int
    destination: int
    packet_size: int
    rate: float
    start: float
    stop: float

    @property
    def interval(self):
        return self.packet_size * 8 / self.rate


@dataclass
class MetricsReport:
    protocol: str
    seed: int
    goodput: float
    offered_load: float
    mean_delay: float
    median_delay: float
    p90_delay: float
    control_packet_count: int
    hello_packet_count: int
    mean_group_size: float
    routing_opportunities_gain: float
    mean_queue_length: float
    generated: int
    delivered: int
    dropped: int
    in_flight: int
    route_failures: int
    preempted: int
    queue_drops: int
    pu_violations: int
    delay_samples: tuple = field(default=(), repr=False)

    @classmethod
    def csv_fields(cls):
        return [f.name for f in fields(cls) if f.name != "delay_samples"]


@dataclass
class Packet:
    pid: int
    flow: int
    src: int
    dst: int
    bits: int
    created: float
    holders: frozenset = frozenset()
    prev_tx: tuple = ()
    route: Optional[list] = None
    hops: list = field(default_factory=list)


@dataclass
class Job:
    packet: Packet
    kind: str = "forward"          # forward | coop
    candidate: object = None
    requester: Optional[int] = None


@dataclass
class Transmission:
    kind: str                      # p2p | dissem | coop
    sender: int
    receiver: int
    job: Job
    start: float
    end: float
    transmitters: tuple
    nulled: frozenset = frozenset()
    residual: float = 0.0
    plan: object = None
    alive: bool = True


@dataclass
class TxRecord:
    kind: str
    start: float
    end: float
    transmitters: tuple
    nulled: frozenset
    residual: float


@dataclass
class Route:
    epoch: int
    created: float
    reply: object = None           # undercover RouteReply
    next_hop: Optional[int] = None # greedy
    path: Optional[list] = None    # flooding


class SUNode:
    def __init__(self, node_id, position, hello_timeout):
        self.id = node_id
        self.pos = position
        self.neighbors = []        # physical neighbours, sorted
        self.pus = []              # PUs within pu_range, sorted
        self.state = NeighborState(node_id, position, hello_timeout)
        self.queue = deque()
        self.busy = False
        self.waiting = False
        self.routes = {}
        self.carried = {}          # flow -> last time this node carried it
        self.q_len = 0
        self.q_area = 0.0
        self.q_last = 0.0


@dataclass
class SimResult:
    report: MetricsReport
    flow_stats: dict
    tx_records: list
    pu_intervals: dict
    pu_coverage: dict
    trace: list
    positions: list
    pu_positions: list
    flows: list
    # hop sequence (source first) of every delivered packet
    paths: list = field(default_factory=list)


@lru_cache(maxsize=16)
def _threshold_table(snr, variance, max_size, samples):
    radio = RadioConfig(tx_power=snr, noise_variance=1.0, bandwidth=1.0)
    return generate_threshold_table(ChannelModel(variance=variance), radio, max_size=max_size,
                                    max_pus=3, samples=samples, rng=np.random.default_rng(0))


def _percentile(sorted_vals, q):
    if not sorted_vals:
        return math.nan
    return float(np.percentile(np.asarray(sorted_vals), q))


class Simulation:
    def __init__(self, cfg: ScenarioConfig, trace=False):
        cfg.validate()
        self.cfg = cfg
        self.trace_on = trace
        self.trace = []
        seq = np.random.SeedSequence(cfg.seed)
        (su_place, pu_place, pu_sched, chan, traffic) = (
            np.random.default_rng(s) for s in seq.spawn(5))
        self.rng_chan = chan
        self.radio = RadioConfig(cfg.tx_power, cfg.noise_variance, cfg.effective_bandwidth)
        self.model = ChannelModel(cfg.channel_variance, cfg.coherence_time)
        self.prop = PropagationConfig(cfg.fsp_constant, cfg.interference_limit)
        table = None
        if cfg.elimination:
            table = _threshold_table(self.radio.snr, cfg.channel_variance, cfg.max_group_size,
                                     cfg.table_samples)
        self.metric_cfg = MetricConfig(cfg.beta, table, cfg.max_enumeration_neighbors)
        self.horizon = cfg.horizon
        self.warmup = cfg.warmup_fraction * cfg.horizon

        side = cfg.area_side
        if cfg.su_positions is not None:
            su_pos = [Position(float(x), float(y)) for x, y in cfg.su_positions]
        else:
            xy = su_place.uniform(0.0, side, size=(cfg.num_sus, 2))
            su_pos = [Position(float(x), float(y)) for x, y in xy]
        if cfg.pu_positions is not None:
            pu_pos = [Position(float(x), float(y)) for x, y in cfg.pu_positions]
        else:
            xy = pu_place.uniform(0.0, side, size=(cfg.num_pus, 2))
            pu_pos = [Position(float(x), float(y)) for x, y in xy]
        self.su_pos = su_pos
        self.pu_pos = pu_pos
        n = cfg.num_sus
        self.nodes = [SUNode(i, su_pos[i], cfg.hello_timeout) for i in range(n)]
        for u in self.nodes:
            u.neighbors = [v for v in range(n)
                           if v != u.id and distance(su_pos[u.id], su_pos[v]) <= cfg.su_range]
            u.pus = [p for p in range(cfg.num_pus)
                     if distance(su_pos[u.id], pu_pos[p]) <= cfg.pu_range]
        self.adjacency = {u.id: u.neighbors for u in self.nodes}
        self.pu_cover = {p: frozenset(u.id for u in self.nodes if p in u.pus)
                         for p in range(cfg.num_pus)}

        # PU activity
        self.pu_on = [False] * cfg.num_pus
        self.pu_schedules = {}
        for p in range(cfg.num_pus):
            cycle = pu_sched.uniform(cfg.pu_cycle_min, cfg.pu_cycle_max)
            proc = PuProcess(p, pu_pos[p], cfg.pu_activity * cycle, (1 - cfg.pu_activity) * cycle)
            self.pu_schedules[p] = sample_pu_schedule(proc, cfg.horizon, pu_sched)

        # traffic
        self.flows = []
        if cfg.flows is not None:
            pairs = list(cfg.flows)
        else:
            pairs = []
            for _ in range(cfg.num_flows):
                src, dst = traffic.choice(n, size=2, replace=False)
                pairs.append((int(src), int(dst)))
        stop = cfg.traffic_stop_fraction * cfg.horizon
        for fid, (src, dst) in enumerate(pairs):
            start = cfg.hello_period * (1.0 + traffic.random())
            self.flows.append(Flow(fid, src, dst, cfg.packet_size, cfg.rate_per_source, start, stop))
        self.hello_phase = traffic.uniform(0.0, cfg.hello_period, size=n)

        self.epoch = 0
        self._draw_channels()

        self.events = []
        self.seq = 0
        self.now = 0.0
        self.waiting = set()
        self.ongoing = {}
        self.next_pid = 0
        self._active = frozenset()

        # accounting
        self.flow_stats = {f.flow_id: dict(generated=0, delivered=0, dropped=0) for f in self.flows}
        self.generated = 0
        self.delivered = 0
        self.dropped = 0
        self.route_failures = 0
        self.preempted = 0
        self.queue_drops = 0
        self.window_generated_bits = 0
        self.window_delivered_bits = 0
        self.delays = []
        self.control = 0
        self.hellos = 0
        self.group_sizes = []
        self.opportunities = []
        self.tx_records = []
        self.paths = []

    # ------------------------------------------------------------------ infra

    def _draw_channels(self):
        n, m = self.cfg.num_sus, self.cfg.num_pus
        raw = sample_channel(self.rng_chan, self.model, (n, n))
        upper = np.triu(raw, 1)
        self.h_su = upper + upper.T
        self.h_pu = sample_channel(self.rng_chan, self.model, (n, m))

    def _push(self, time, kind, payload=None):
        self.seq += 1
        heapq.heappush(self.events, (time, self.seq, kind, payload))

    def _log(self, kind, src, dst, flow=-1, group=()):
        if self.trace_on:
            self.trace.append((self.now, kind, src, dst, flow, tuple(group)))

    def _in_window(self):
        return self.now >= self.warmup

    def _count_control(self, k):
        if self._in_window():
            self.control += k

    def active_pus(self):
        return self._active

    def blocked(self, node_id):
        return any(self.pu_on[p] for p in self.nodes[node_id].pus)

    def _witnessed(self, node):
        limit = self.now - self.cfg.hello_timeout
        return frozenset(f for f, t in node.carried.items() if t >= limit)

    def _contenders(self, transmitters, receiver):
        """Backlogged nodes in range of any transmitter, excluding the link's own ends."""
        tx = set(transmitters)
        seen = set()
        for t in transmitters:
            for v in self.nodes[t].neighbors:
                if v not in tx and v != receiver:
                    seen.add(v)
        return sum(1 for v in seen if self.nodes[v].queue)

    def _mark_carried(self, node_ids, flow):
        for v in node_ids:
            self.nodes[v].carried[flow] = self.now

    def _q_touch(self, node):
        lo = max(node.q_last, self.warmup)
        if self.now > lo:
            node.q_area += node.q_len * (self.now - lo)
        node.q_last = self.now
        node.q_len = len(node.queue)

    def view(self, node_id):
        u = self.nodes[node_id]
        return NodeView(
            node=node_id,
            position=u.pos,
            state=u.state,
            pu_coeffs={p: complex(self.h_pu[node_id, p]) for p in u.pus},
            active_pus=self._active,
            flows=self._witnessed(u),
            radio=self.radio,
            prop=self.prop,
            metric=self.metric_cfg,
            su_range=self.cfg.su_range,
        )

    # ------------------------------------------------------------------ queueing

    def _enqueue(self, node_id, job):
        u = self.nodes[node_id]
        if len(u.queue) >= self.cfg.queue_capacity:
            self._drop(job.packet, "queue")
            return
        u.queue.append(job)
        self._q_touch(u)
        self._kick(node_id)

    def _finish_head(self, node_id):
        u = self.nodes[node_id]
        u.queue.popleft()
        u.busy = False
        self._q_touch(u)

    def _drop(self, pkt, reason):
        self.dropped += 1
        self.flow_stats[pkt.flow]["dropped"] += 1
        if reason == "route":
            self.route_failures += 1
        elif reason == "preempt":
            self.preempted += 1
        elif reason == "queue":
            self.queue_drops += 1
        self._log("DROP", pkt.hops[-1] if pkt.hops else pkt.src, pkt.dst, pkt.flow)

    def _deliver(self, pkt):
        self.delivered += 1
        self.flow_stats[pkt.flow]["delivered"] += 1
        self.paths.append(tuple(pkt.hops))
        if pkt.created >= self.warmup:
            self.window_delivered_bits += pkt.bits
            self.delays.append(self.now - pkt.created)
        self._log("DELIVER", pkt.hops[-1] if pkt.hops else pkt.src, pkt.dst, pkt.flow)

    def _wait(self, node_id):
        u = self.nodes[node_id]
        u.waiting = True
        self.waiting.add(node_id)

    def _kick(self, node_id):
        u = self.nodes[node_id]
        while not u.busy and not u.waiting and u.queue:
            job = u.queue[0]
            if job.kind == "coop":
                self._start_coop(node_id, job)
            elif self.cfg.protocol == "undercover":
                self._uc_forward(node_id, job)
            elif self.cfg.protocol == "launch_like":
                self._greedy_forward(node_id, job)
            else:
                self._flood_forward(node_id, job)

    # ------------------------------------------------------------------ transmissions

    def _start_p2p(self, sender, receiver, job):
        u = self.nodes[sender]
        pkt = job.packet
        nominal = capacity_p2p(self.h_su[sender, receiver], self.radio)
        rate = effective_link_rate(nominal, self._contenders((sender,), receiver))
        duration = math.inf if rate <= 0 else pkt.bits / rate
        u.busy = True
        tx = Transmission("p2p", sender, receiver, job, self.now, self.now + duration, (sender,))
        self.ongoing[sender] = tx
        self._mark_carried((sender, receiver), pkt.flow)
        self._log("DATA_TX", sender, receiver, pkt.flow, (sender,))
        if math.isfinite(duration):
            self._push(tx.end, TX_COMPLETE, tx)

    def _start_coop(self, coord, job):
        cand = job.candidate
        pkt = job.packet
        try:
            plan = self._plan(coord, cand, pkt)
        except RouteFailure:
            self._route_failure(coord, job)
            return
        if plan.needs_packet:
            if self.blocked(coord):
                self._wait(coord)
                return
            contenders = self._contenders((coord,), -1)
            t_d, _ = transmission_times(plan, pkt.bits, contenders, effective_link_rate)
            u = self.nodes[coord]
            u.busy = True
            tx = Transmission("dissem", coord, cand.next_hop, job, self.now, self.now + t_d,
                              (coord,), plan=plan)
            self.ongoing[coord] = tx
            self._mark_carried(plan.group, pkt.flow)
            self._log("DISSEMINATE", coord, -1, pkt.flow, plan.needs_packet)
            if math.isfinite(t_d):
                self._push(tx.end, TX_COMPLETE, tx)
            return
        self._start_coop_phase(coord, job, plan)

    def _plan(self, coord, cand, pkt):
        group = cand.group
        x = cand.next_hop
        active = [p for p in range(self.cfg.num_pus)
                  if self.pu_on[p] and any(m in self.pu_cover[p] for m in group)]
        h_next = {m: complex(self.h_su[m, x]) for m in group}
        h_pu = {(m, p): complex(self.h_pu[m, p]) for p in active for m in group
                if m in self.pu_cover[p]}
        dissem = {m: capacity_p2p(self.h_su[coord, m], self.radio) for m in group if m != coord}
        reachable = {m for m in group if m == coord or m in self.adjacency[coord]}
        reachable &= {m for m in group if x in self.adjacency[m]}
        reachable.add(coord)
        return plan_group_transmission(coord, group, h_next, active, h_pu, pkt.holders, dissem,
                                       self.radio, reachable)

    def _start_coop_phase(self, coord, job, plan):
        pkt = job.packet
        cand = job.candidate
        contenders = self._contenders(plan.group, cand.next_hop)
        _, t_c = transmission_times(plan, pkt.bits, contenders, effective_link_rate)
        u = self.nodes[coord]
        u.busy = True
        tx = Transmission("coop", coord, cand.next_hop, job, self.now, self.now + t_c, plan.group,
                          nulled=frozenset(plan.nulled_pus), residual=plan.residual, plan=plan)
        self.ongoing[coord] = tx
        if self._in_window():
            self.group_sizes.append(len(plan.group))
        self._mark_carried(plan.group + (cand.next_hop,), pkt.flow)
        self._log("DATA_TX", coord, cand.next_hop, pkt.flow, plan.group)
        if math.isfinite(t_c):
            self._push(tx.end, TX_COMPLETE, tx)

    def _record(self, tx, end):
        self.tx_records.append(TxRecord(tx.kind, tx.start, end, tx.transmitters, tx.nulled,
                                        tx.residual))

    def _on_tx_complete(self, tx):
        if not tx.alive:
            return
        del self.ongoing[tx.sender]
        self._record(tx, self.now)
        job = tx.job
        pkt = job.packet
        if tx.kind == "dissem":
            # members now hold the packet; re-plan against the current PU state
            pkt.holders = pkt.holders | frozenset(tx.plan.group)
            self.nodes[tx.sender].busy = False
            try:
                plan = self._plan(tx.sender, job.candidate, pkt)
            except RouteFailure:
                self._route_failure(tx.sender, job)
                self._kick(tx.sender)
                return
            self._start_coop_phase(tx.sender, job, plan)
            return
        hearers = set(tx.transmitters)
        for t in tx.transmitters:
            hearers.update(self.nodes[t].neighbors)
        pkt.holders = frozenset(hearers)
        pkt.prev_tx = tuple(tx.transmitters)
        pkt.hops.append(tx.receiver)
        sender = tx.sender
        self._finish_head(sender)
        self._log("DATA_RX", sender, tx.receiver, pkt.flow, tx.transmitters)
        if tx.kind == "p2p" and job.kind == "forward" and self.cfg.protocol == "undercover" \
                and tx.receiver != pkt.dst:
            # handoff to the chosen coordinator
            self._enqueue(tx.receiver, Job(pkt, "coop", job.candidate, sender))
        elif tx.receiver == pkt.dst:
            self._deliver(pkt)
        else:
            self._enqueue(tx.receiver, Job(pkt))
        self._kick(sender)

    def _route_failure(self, node_id, job):
        pkt = job.packet
        if job.requester is not None:
            self.nodes[job.requester].routes.pop(pkt.flow, None)
        self.nodes[node_id].routes.pop(pkt.flow, None)
        self._finish_head(node_id)
        self._drop(pkt, "route")

    # ------------------------------------------------------------------ undercover

    def _uc_forward(self, node_id, job):
        u = self.nodes[node_id]
        pkt = job.packet
        route = u.routes.get(pkt.flow)
        if route is not None and route.epoch == self.epoch and self.cfg.route_mode == "per_flow":
            self._uc_use_route(node_id, job, route.reply)
            return
        dest_pos = self.su_pos[pkt.dst]
        my_dist = distance(u.pos, dest_pos)
        if not any(distance(u.state.entries[v].position, dest_pos) < my_dist
                   for v in u.state.neighbor_ids()):
            # the neighbour table already shows nobody could answer
            self._finish_head(node_id)
            self._drop(pkt, "route")
            return
        rreq = RouteRequest(
            source=pkt.src, destination=pkt.dst, flow=pkt.flow, dest_position=self.su_pos[pkt.dst],
            requester=node_id, requester_position=u.pos,
            requester_can_send=not self.blocked(node_id),
            prev_transmitters=tuple((t, self.su_pos[t]) for t in pkt.prev_tx),
        )
        self._log("RREQ", node_id, -1, pkt.flow)
        replies = []
        for v in u.neighbors:
            stats = ReplyStats()
            rrep = handle_rreq(rreq, self.view(v), stats)
            if stats.opportunities is not None and self._in_window():
                self.opportunities.append(stats.opportunities)
            if rrep is not None:
                replies.append(rrep)
                self._log("RREP", v, node_id, pkt.flow, rrep.candidate.group)
        self._count_control(1 + len(replies))
        u.busy = True
        delay = self.cfg.rrep_timeout + (2 * self.cfg.control_delay if replies else 0.0)
        self._push(self.now + delay, RREP_TIMEOUT, (node_id, job, replies))

    def _uc_discovery_done(self, node_id, job, replies):
        u = self.nodes[node_id]
        u.busy = False
        pkt = job.packet
        if not replies and self.blocked(node_id):
            # nobody overheard the packet and the requester may not send: wait for the PU
            self._wait(node_id)
            return
        try:
            ack, winner = select_next_hop(replies, node_id)
        except RouteFailure:
            self._finish_head(node_id)
            self._drop(pkt, "route")
            self._kick(node_id)
            return
        self._count_control(2)
        self._log("ACK", node_id, ack.chosen, pkt.flow)
        self._log("AREP", ack.chosen, node_id, pkt.flow)
        if self.cfg.route_mode == "per_flow":
            u.routes[pkt.flow] = Route(self.epoch, self.now, reply=winner)
        self._uc_use_route(node_id, job, winner)
        self._kick(node_id)

    def _uc_use_route(self, node_id, job, reply):
        pkt = job.packet
        target = reply.replier
        if target == pkt.dst:
            if target in pkt.holders:
                self._finish_head(node_id)
                pkt.hops.append(target)
                self._deliver(pkt)
                return
            if self.blocked(node_id):
                self._wait(node_id)
                return
            job.candidate = reply.candidate
            self._start_p2p(node_id, target, job)
            return
        cand = reply.candidate
        if target in pkt.holders:
            self._finish_head(node_id)
            self._enqueue(target, Job(pkt, "coop", cand, node_id))
            return
        if self.blocked(node_id):
            self._wait(node_id)
            return
        job.candidate = cand
        self._start_p2p(node_id, target, job)

    # ------------------------------------------------------------------ launch-like

    def _greedy_forward(self, node_id, job):
        u = self.nodes[node_id]
        pkt = job.packet
        if self.blocked(node_id):
            self._wait(node_id)
            return
        x = job.candidate
        route = u.routes.get(pkt.flow)
        if x is None and route is not None and route.epoch == self.epoch:
            x = route.next_hop
        job.candidate = None
        if x is not None and (x == pkt.dst or not self.blocked(x)):
            self._start_p2p(node_id, x, job)
            return
        # next hop picked from the hello-fed neighbour table, then confirmed
        # with a unicast request/reply to that neighbour only
        dest_pos = self.su_pos[pkt.dst]
        my_dist = distance(u.pos, dest_pos)
        table = []
        for v in u.state.neighbor_ids():
            entry = u.state.entries[v]
            if distance(entry.position, dest_pos) < my_dist:
                table.append(NeighborInfo(v, entry.position, entry.coeff, self.blocked(v)))
        x = greedy_next_hop(u.pos, pkt.dst, dest_pos, table, self.radio)
        if x is None and table:
            # closer neighbours exist but all sit under an active PU: wait it out
            self._wait(node_id)
            return
        if x is None:
            self._finish_head(node_id)
            self._drop(pkt, "route")
            return
        self._log("RREQ", node_id, x, pkt.flow)
        self._log("RREP", x, node_id, pkt.flow)
        self._count_control(2)
        u.busy = True
        self._push(self.now + 2 * self.cfg.control_delay, RREP_TIMEOUT, (node_id, job, x))

    def _greedy_discovery_done(self, node_id, job, x):
        u = self.nodes[node_id]
        u.busy = False
        if self.cfg.route_mode == "per_flow":
            u.routes[job.packet.flow] = Route(self.epoch, self.now, next_hop=x)
        job.candidate = x
        self._kick(node_id)

    # ------------------------------------------------------------------ caodv-like

    def _blocked_set(self):
        return frozenset(u.id for u in self.nodes if self.blocked(u.id))

    def _flood_forward(self, node_id, job):
        u = self.nodes[node_id]
        pkt = job.packet
        if self.blocked(node_id):
            self._wait(node_id)
            return
        if pkt.route and node_id in pkt.route:
            i = pkt.route.index(node_id)
            if i + 1 < len(pkt.route):
                self._start_p2p(node_id, pkt.route[i + 1], job)
                return
        route = u.routes.get(pkt.flow)
        if route is not None and self.now - route.created < self.cfg.route_timeout:
            pkt.route = route.path
            self._start_p2p(node_id, route.path[1], job)
            return
        result = flood_discover(node_id, pkt.dst, self.adjacency, self._blocked_set())
        self._log("FLOOD", node_id, pkt.dst, pkt.flow, tuple(result.path or ()))
        self._count_control(result.control_packets)
        u.busy = True
        self._push(self.now + self.cfg.rrep_timeout, RREP_TIMEOUT, (node_id, job, result.path))

    def _flood_discovery_done(self, node_id, job, path):
        u = self.nodes[node_id]
        u.busy = False
        pkt = job.packet
        if path is None:
            self._finish_head(node_id)
            self._drop(pkt, "route")
            self._kick(node_id)
            return
        u.routes[pkt.flow] = Route(self.epoch, self.now, path=path)
        pkt.route = path
        self._kick(node_id)

    # ------------------------------------------------------------------ events

    def _on_hello(self, node_id):
        u = self.nodes[node_id]
        u.state.evict(self.now)
        packet = build_hello(node_id, self.now, u.pos, u.state,
                             [(p, complex(self.h_pu[node_id, p])) for p in u.pus],
                             self._witnessed(u))
        self.hellos += 1
        self._log("HELLO", node_id, -1)
        for v in u.neighbors:
            self.nodes[v].state.handle_hello(packet, self.now, complex(self.h_su[v, node_id]))
        self._push(self.now + self.cfg.hello_period, HELLO_DUE, node_id)

    def _on_packet_due(self, flow):
        pkt = Packet(self.next_pid, flow.flow_id, flow.source, flow.destination,
                     flow.packet_size * 8, self.now, hops=[flow.source])
        self.next_pid += 1
        self.generated += 1
        self.flow_stats[flow.flow_id]["generated"] += 1
        if self.now >= self.warmup:
            self.window_generated_bits += pkt.bits
        self._enqueue(flow.source, Job(pkt))
        nxt = self.now + flow.interval
        if nxt < flow.stop:
            self._push(nxt, PACKET_DUE, flow)

    def _on_pu(self, pu, on):
        self.pu_on[pu] = on
        self._active = frozenset(p for p, s in enumerate(self.pu_on) if s)
        self._log("PU_ON" if on else "PU_OFF", pu, -1)
        if on:
            cover = self.pu_cover[pu]
            for sender in sorted(self.ongoing):
                tx = self.ongoing[sender]
                if tx.kind == "coop":
                    hit = pu not in tx.nulled and any(m in cover for m in tx.transmitters)
                else:
                    hit = tx.sender in cover
                if hit:
                    self._preempt(tx)
        else:
            for node_id in sorted(self.waiting):
                self.nodes[node_id].waiting = False
            woken = sorted(self.waiting)
            self.waiting.clear()
            for node_id in woken:
                self._kick(node_id)

    def _preempt(self, tx):
        tx.alive = False
        del self.ongoing[tx.sender]
        self._record(tx, self.now)
        pkt = tx.job.packet
        if self.cfg.protocol == "caodv_like":
            src_routes = self.nodes[pkt.src].routes
            src_routes.pop(pkt.flow, None)
        self._finish_head(tx.sender)
        self._drop(pkt, "preempt")
        self._kick(tx.sender)

    def _on_refresh(self):
        self.epoch += 1
        self._draw_channels()
        # channel estimates are assumed perfect: neighbour tables track the new draw at once
        for u in self.nodes:
            for n, entry in u.state.entries.items():
                entry.coeff = complex(self.h_su[u.id, n])
                entry.neighbor_coeffs = {m: complex(self.h_su[n, m]) for m in entry.neighbor_coeffs}
                entry.pu_coeffs = {p: complex(self.h_pu[n, p]) for p in entry.pu_coeffs}
        self._push(self.now + self.cfg.coherence_time, CHANNEL_REFRESH)

    def _on_rrep_timeout(self, payload):
        node_id, job, data = payload
        if self.cfg.protocol == "undercover":
            self._uc_discovery_done(node_id, job, data)
        elif self.cfg.protocol == "launch_like":
            self._greedy_discovery_done(node_id, job, data)
        else:
            self._flood_discovery_done(node_id, job, data)

    # ------------------------------------------------------------------ main loop

    def run(self):
        cfg = self.cfg
        for i in range(cfg.num_sus):
            self._push(float(self.hello_phase[i]), HELLO_DUE, i)
        for flow in self.flows:
            if flow.start < flow.stop:
                self._push(flow.start, PACKET_DUE, flow)
        for p, sched in self.pu_schedules.items():
            for t, on in sched:
                self._push(t, PU_ON if on else PU_OFF, p)
        self._push(cfg.coherence_time, CHANNEL_REFRESH)

        while self.events and self.events[0][0] <= self.horizon:
            time, _, kind, payload = heapq.heappop(self.events)
            if time < self.now:
                raise RuntimeError("causality violated")
            self.now = time
            if kind == HELLO_DUE:
                self._on_hello(payload)
            elif kind == PACKET_DUE:
                self._on_packet_due(payload)
            elif kind == TX_COMPLETE:
                self._on_tx_complete(payload)
            elif kind == PU_ON:
                self._on_pu(payload, True)
            elif kind == PU_OFF:
                self._on_pu(payload, False)
            elif kind == RREP_TIMEOUT:
                self._on_rrep_timeout(payload)
            elif kind == CHANNEL_REFRESH:
                self._on_refresh()
        self.now = self.horizon
        for tx in list(self.ongoing.values()):
            self._record(tx, self.horizon)
        for u in self.nodes:
            self._q_touch(u)
        return self._result()

    def _result(self):
        cfg = self.cfg
        window = self.horizon - self.warmup
        delays = sorted(self.delays)
        in_flight = sum(len(u.queue) for u in self.nodes)
        if cfg.protocol == "undercover":
            group = float(np.mean(self.group_sizes)) if self.group_sizes else math.nan
            gain = float(np.mean(self.opportunities)) if self.opportunities else math.nan
        else:
            group = 1.0
            gain = 1.0
        intervals = {p: on_intervals(s, self.horizon) for p, s in self.pu_schedules.items()}
        violations = pu_safety_audit(self.tx_records, intervals, self.pu_cover)
        report = MetricsReport(
            protocol=cfg.protocol,
            seed=cfg.seed,
            goodput=self.window_delivered_bits / window,
            offered_load=self.window_generated_bits / window,
            mean_delay=float(np.mean(delays)) if delays else math.nan,
            median_delay=_percentile(delays, 50),
            p90_delay=_percentile(delays, 90),
            control_packet_count=self.control,
            hello_packet_count=self.hellos,
            mean_group_size=group,
            routing_opportunities_gain=gain,
            mean_queue_length=sum(u.q_area for u in self.nodes) / (cfg.num_sus * window),
            generated=self.generated,
            delivered=self.delivered,
            dropped=self.dropped,
            in_flight=in_flight,
            route_failures=self.route_failures,
            preempted=self.preempted,
            queue_drops=self.queue_drops,
            pu_violations=violations,
            delay_samples=tuple(delays),
        )
        flow_stats = {}
        for fid, st in self.flow_stats.items():
            flow_stats[fid] = dict(st, in_flight=0)
        for u in self.nodes:
            for job in u.queue:
                flow_stats[job.packet.flow]["in_flight"] += 1
        return SimResult(report, flow_stats, self.tx_records, intervals, self.pu_cover,
                         self.trace, self.su_pos, self.pu_pos, self.flows, self.paths)


def pu_safety_audit(records, intervals, coverage, tol=NULL_TOLERANCE):
    """Count data transmissions that overlapped an active covering PU without a verified null."""
    violations = 0
    for rec in records:
        if rec.end <= rec.start:
            continue
        for p, spans in intervals.items():
            cover = coverage[p]
            if not any(t in cover for t in rec.transmitters):
                continue
            overlap = any(max(rec.start, s) < min(rec.end, e) for s, e in spans)
            if not overlap:
                continue
            protected = rec.kind == "coop" and p in rec.nulled and rec.residual <= tol
            if not protected:
                violations += 1
    return violations


def simulate(cfg, trace=False):
    return Simulation(cfg, trace=trace).run()


def run(cfg):
    """Simulate one scenario and return its MetricsReport."""
    return simulate(cfg).report


def format_trace(trace):
    """One line per event: time, type, src, dst, flow, group members."""
    lines = []
    for time, kind, src, dst, flow, group in trace:
        members = ",".join(str(m) for m in group)
        lines.append(f"{time:.6f}\t{kind}\t{src}\t{dst}\t{flow}\t{members}")
    return "\n".join(lines) + ("\n" if lines else "")

"""Shared builders for protocol-level tests."""

import math

import numpy as np

from crnroute.config import free_space_constant
from crnroute.core import RadioConfig
from crnroute.geometry import Position, PropagationConfig, distance
from crnroute.metric import MetricConfig
from crnroute.protocol import NeighborState, NodeView, build_hello

RADIO = RadioConfig()
PROP = PropagationConfig(free_space_constant(2.4e9), 1.0)


def rand_complex(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def build_views(positions, H, pu_positions=(), H_pu=None, active=(), flows=None,
                su_range=125.0, pu_range=140.0, metric=None, rounds=2):
    """NodeViews after ``rounds`` of hello exchange over disk connectivity.

    ``H`` is the symmetric SU-SU channel matrix, ``H_pu`` the SU-PU matrix,
    ``flows`` maps node -> set of witnessed flow ids.
    """
    n = len(positions)
    pos = [Position(float(x), float(y)) for x, y in positions]
    flows = flows or {}
    metric = metric or MetricConfig()
    nbrs = {u: [v for v in range(n) if v != u and distance(pos[u], pos[v]) <= su_range]
            for u in range(n)}
    pus = {u: [p for p in range(len(pu_positions))
               if distance(pos[u], pu_positions[p]) <= pu_range] for u in range(n)}
    states = {u: NeighborState(u, pos[u]) for u in range(n)}
    for r in range(rounds):
        hellos = {u: build_hello(u, float(r), pos[u], states[u],
                                 [(p, complex(H_pu[u, p])) for p in pus[u]],
                                 flows.get(u, ())) for u in range(n)}
        for u in range(n):
            for v in nbrs[u]:
                states[v].handle_hello(hellos[u], float(r), link_coeff=complex(H[u, v]))
    views = {}
    for u in range(n):
        views[u] = NodeView(
            node=u, position=pos[u], state=states[u],
            pu_coeffs={p: complex(H_pu[u, p]) for p in pus[u]},
            active_pus=frozenset(active), flows=frozenset(flows.get(u, ())),
            radio=RADIO, prop=PROP, metric=metric, su_range=su_range,
        )
    return views, nbrs, pus


def symmetric_channels(rng, n):
    raw = rand_complex(rng, (n, n))
    upper = np.triu(raw, 1)
    return upper + upper.T


def _projected_power(H, h):
    """||Proj_Null(H) h||^2 via a full SVD (independent of the package's routines)."""
    if H.shape[0] == 0:
        return float(np.vdot(h, h).real)
    _, s, vh = np.linalg.svd(H)
    rank = int(np.sum(s > 1e-10))
    Z = vh[rank:].conj().T
    return float(np.linalg.norm(Z.conj().T @ h) ** 2)


def _hull_area_scipy(points, su_range):
    import scipy.spatial
    try:
        area = scipy.spatial.ConvexHull(np.array(points, dtype=float)).volume
    except (scipy.spatial.QhullError, ValueError):
        area = 0.0
    return area if area > 1e-9 else math.pi * su_range**2


def brute_force_best(positions, H, pu_positions, H_pu, active, flows, relay, requester,
                     dest_pos, su_range=125.0, pu_range=140.0, beta=0.5, radio=RADIO, prop=PROP):
    """Exhaustive scan over every next hop and every group; returns (metric, next_hop, group) or None.

    The requester can still transmit and nobody holds the packet yet, so the
    requester's neighbours count as holders and the relay's own rate is capped
    by the requester->relay link.
    """
    import itertools

    n = len(positions)
    d = lambda a, b: math.hypot(a[0] - b[0], a[1] - b[1])
    nbrs = {u: {v for v in range(n) if v != u and d(positions[u], positions[v]) <= su_range}
            for u in range(n)}
    pus = {u: {p for p in range(len(pu_positions)) if d(positions[u], pu_positions[p]) <= pu_range}
           for u in range(n)}
    cap = lambda g: radio.bandwidth * math.log2(1.0 + radio.snr * g)
    my_dist = d(positions[relay], dest_pos)
    next_hops = sorted(x for x in nbrs[relay]
                       if x != requester and d(positions[x], dest_pos) < my_dist)
    known = {relay} | nbrs[relay]
    flow_of = lambda v: flows.get(v, set()) if v in known else set()
    all_flows = set().union(*(flow_of(v) for v in known))
    area = _hull_area_scipy([positions[v] for v in sorted(known)], su_range)
    n_f_group = len(all_flows) / area * math.pi * (prop.fsp_constant * radio.tx_power / prop.interference_limit)
    relay_blocked = any(p in active for p in pus[relay])
    min_size = sum(1 for p in pus[relay] if p in active) + 1
    handoff = cap(abs(H[requester, relay]) ** 2)
    holder = lambda v: v == requester or d(positions[v], positions[requester]) <= su_range
    best = None
    for x in next_hops:
        members = sorted(v for v in nbrs[relay] if v not in (requester, x) and x in nbrs[v])
        for size in range(min_size, len(members) + 2):
            for combo in itertools.combinations(members, size - 1):
                group = (relay,) + combo
                rows = sorted(p for p in active if any(p in pus[m] for m in group))
                if len(group) <= len(rows):
                    continue
                HP = np.array([[H_pu[m, p] if p in pus[m] else 0j for m in group] for p in rows],
                              dtype=complex).reshape(len(rows), len(group))
                h = np.array([H[m, x] for m in group], dtype=complex)
                power = _projected_power(HP, h)
                if power < 1e-24:
                    continue
                c_wor = handoff
                for m in combo:
                    if not holder(m):
                        c_wor = min(c_wor, 0.0 if relay_blocked else cap(abs(H[relay, m]) ** 2))
                c_hat = min(cap(power), c_wor)
                if not c_hat > 0:
                    continue
                ext = set()
                for m in group:
                    ext |= {v for v in nbrs[m] if v not in group and flow_of(v)}
                n_n = len(ext)
                if len(group) == 1:
                    metric = c_hat / max(1.0, n_n)
                else:
                    metric = c_hat / max(1.0, n_n + beta * (n_f_group - n_n))
                key = ((-metric, len(group), tuple(sorted(group))), x)
                if best is None or key < best[0]:
                    best = (key, metric, x, tuple(sorted(group)))
    if best is None:
        return None
    return best[1], best[2], best[3]


def random_neighborhood(rng, max_neighbors=10, su_range=125.0):
    """Relay 0 at the origin, up to ``max_neighbors`` neighbours, a few 2-hop nodes and PUs."""
    k = int(rng.integers(2, max_neighbors + 1))
    pts = [(0.0, 0.0)]
    for _ in range(k):
        r = su_range * math.sqrt(rng.uniform(0.01, 1.0))
        a = rng.uniform(0, 2 * math.pi)
        pts.append((r * math.cos(a), r * math.sin(a)))
    for _ in range(int(rng.integers(0, 4))):
        r = rng.uniform(su_range * 1.05, 2 * su_range)
        a = rng.uniform(0, 2 * math.pi)
        pts.append((r * math.cos(a), r * math.sin(a)))
    n = len(pts)
    m = int(rng.integers(0, 4))
    pu_pts = [tuple(rng.uniform(-200, 200, 2)) for _ in range(m)]
    active = {p for p in range(m) if rng.random() < 0.7}
    flows = {v: set(int(f) for f in rng.choice(6, size=int(rng.integers(0, 3)), replace=False))
             for v in range(n)}
    a = rng.uniform(0, 2 * math.pi)
    dest = (400 * math.cos(a), 400 * math.sin(a))
    # requester: the relay's neighbour farthest from the destination
    nb = [v for v in range(1, k + 1)]
    requester = max(nb, key=lambda v: (math.hypot(pts[v][0] - dest[0], pts[v][1] - dest[1]), v))
    H = symmetric_channels(rng, n)
    H_pu = rand_complex(rng, (n, m))
    return dict(positions=pts, H=H, pu_positions=pu_pts, H_pu=H_pu, active=active,
                flows=flows, requester=requester, dest=dest)

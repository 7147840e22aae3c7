"""Composite link metric, group-size elimination and cooperative group search.

Two scoring paths share the same inputs (a :class:`LinkContext`):

* :func:`score_groups` scores every subset at once with stacked numpy
  linear algebra; it drives enumeration and opportunity counting.
* :func:`score_group` scores one subset through the scalar primitives
  (``compute_null_weights``, ``capacity_coop`` ...).

:func:`best_candidate` ranks with the batch path and re-scores the near-top
window with the scalar path, so the reported metric is exactly what the
scalar primitives give for the winning group.
"""

import functools
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DEGENERATE_NORM,
    UNBOUNDED,
    ChannelModel,
    RadioConfig,
    capacity_coop,
    capacity_curve,
    compute_null_weights,
    effective_capacity,
    null_power_batch,
)
from .errors import DegenerateChannel, GroupTooSmall, NoFeasibleGroup
from .geometry import estimate_affected_flows, interference_radius

# relative window re-scored exactly around the batch optimum
RESCORE_WINDOW = 1e-9


@dataclass
class ThresholdTable:
    """Acceptable percentage increase in N_n, indexed [pu_count][group_size]."""

    entries: dict
    max_size: int

    def lookup(self, pu_count, size):
        return self.entries.get(pu_count, {}).get(size)

    def has_row(self, pu_count):
        return pu_count in self.entries

    def to_text(self, min_pus=1):
        """Plain-text table: rows are PU counts, columns group sizes, one decimal."""
        sizes = list(range(2, self.max_size + 1))
        width = 7
        lines = ["Group Size".ljust(10) + "".join(str(j).rjust(width) for j in sizes)]
        for m in sorted(self.entries):
            if m < min_pus:
                continue
            cells = []
            for j in sizes:
                v = self.lookup(m, j)
                cells.append(("" if v is None else f"{v:.1f}").rjust(width))
            lines.append(f"{m} PU".ljust(10) + "".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        """Inverse of to_text (values keep their printed one-decimal precision)."""
        lines = [ln for ln in text.splitlines() if ln.strip()]
        sizes = [int(tok) for tok in lines[0][10:].split()]
        entries = {}
        for line in lines[1:]:
            m = int(line[:10].split()[0])
            row = {}
            for k, j in enumerate(sizes):
                cell = line[10 + 7 * k:10 + 7 * (k + 1)].strip()
                if cell:
                    row[j] = float(cell)
            entries[m] = row
        return cls(entries, max(sizes) if sizes else 1)


def generate_threshold_table(model=ChannelModel(), radio=RadioConfig(), max_size=10,
                             max_pus=3, samples=100_000, rng=None, min_pus=0):
    """Percentage capacity gain of each group size over the minimum size M+1."""
    if samples < 10_000:
        raise ValueError("threshold tables need at least 1e4 samples")
    if rng is None:
        rng = np.random.default_rng(0)
    entries = {}
    for m in range(min_pus, max_pus + 1):
        if max_size <= m:
            continue
        curve = capacity_curve(max_size, m, samples, rng, model, radio)
        base = curve[m + 1]
        row = {m + 1: 0.0}
        for j in range(m + 2, max_size + 1):
            row[j] = 100.0 * (curve[j] - base) / base
        entries[m] = row
    return ThresholdTable(entries, max_size)


@dataclass
class MetricConfig:
    beta: float = 0.5
    # None disables elimination: every size up to neighbor_count + 1 is searched
    thresholds: Optional[ThresholdTable] = None
    max_enumeration_neighbors: int = 12

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")


@dataclass
class LinkCandidate:
    relay: int
    next_hop: int
    group: tuple
    coordinator: int
    effective_capacity: float
    n_n: int
    n_f: float
    metric: float
    coop_capacity: float = 0.0
    dissemination_capacity: float = UNBOUNDED
    nulled_pus: tuple = ()
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self):
        return len(self.group)

    def sort_key(self):
        # best first; ties: smaller group, then smallest member-id set
        return (-self.metric, len(self.group), tuple(sorted(self.group)))


def count_flow_neighbors(group, neighbors, flows):
    """Number of flow-carrying direct neighbors of the group members.

    ``neighbors`` maps node -> iterable of neighbor ids; ``flows`` maps
    node -> set of witnessed flow ids. Members themselves are not counted and
    nodes carrying no flow are excluded.
    """
    members = set(group)
    seen = set()
    for m in members:
        for v in neighbors.get(m, ()):
            if v not in members and flows.get(v):
                seen.add(v)
    return len(seen)


def link_metric(c_hat, n_n, n_f, group_size, beta):
    if group_size <= 1:
        return c_hat / max(1.0, n_n)
    return c_hat / max(1.0, n_n + beta * (n_f - n_n))


def max_group_size(flows_per_node, n_min, pu_count, table, neighbor_count):
    """Largest admissible group size under the elimination thresholds.

    Sizes beyond the table's last column are never admitted. PU counts with
    no table row fall back to pu_count + 2.
    """
    if neighbor_count + 1 <= pu_count:
        raise NoFeasibleGroup(f"{neighbor_count} neighbors cannot outnumber {pu_count} PUs")
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    upper = neighbor_count + 1
    if table is None:
        return upper
    if not table.has_row(pu_count):
        return min(upper, pu_count + 2)
    best = pu_count + 1
    for j in range(pu_count + 1, upper + 1):
        threshold = table.lookup(pu_count, j)
        if threshold is None:
            continue
        factor = 100.0 * (j * flows_per_node - n_min) / n_min
        if factor <= threshold:
            best = j
    return best


@dataclass
class LinkContext:
    """Everything a relay knows when scoring groups towards one next hop.

    Index 0 of every per-node array is the relay; the remaining indices are
    the candidate members in ``nodes`` order.
    """

    relay: int
    next_hop: int
    nodes: tuple
    h_next: np.ndarray            # (n,) node -> next hop
    pu_ids: tuple
    h_pu: np.ndarray              # (P, n) node -> PU, zero when out of range
    pu_cover: np.ndarray          # (P, n) bool, node inside the PU's range
    dissemination: np.ndarray     # (n,) coordinator -> node rate, inf if held
    neighbor_sets: tuple          # per node, frozenset of direct-neighbor ids
    flows: dict                   # node id -> set of witnessed flows (known nodes)
    radio: RadioConfig
    flow_density: float
    prop: object                  # PropagationConfig
    beta: float = 0.5

    @property
    def n(self):
        return len(self.nodes)

    def group_n_f(self, power_sum=1.0):
        d_r = interference_radius(power_sum, self.radio.tx_power, self.prop)
        return estimate_affected_flows(self.flow_density, d_r)


def score_group(ctx, indices):
    """Score one group given as node indices into ``ctx.nodes`` (must include 0).

    Returns None when the group is infeasible.
    """
    idx = sorted(set(indices))
    if not idx or idx[0] != 0:
        raise ValueError("group must contain the relay (index 0)")
    cover = ctx.pu_cover[:, idx] if ctx.pu_cover.size else np.zeros((0, len(idx)), bool)
    rows = np.flatnonzero(cover.any(axis=1)) if cover.shape[0] else np.array([], int)
    H = ctx.h_pu[np.ix_(rows, idx)] if rows.size else np.zeros((0, len(idx)), complex)
    h = ctx.h_next[idx]
    try:
        weights = compute_null_weights(H, h)
    except (GroupTooSmall, DegenerateChannel):
        return None
    c_coop = capacity_coop(weights, h, ctx.radio)
    c_wor = min(float(ctx.dissemination[i]) for i in idx)
    c_hat = effective_capacity(c_coop, c_wor)
    if not c_hat > 0:
        return None
    group = tuple(ctx.nodes[i] for i in idx)
    neighbors = {ctx.nodes[i]: ctx.neighbor_sets[i] for i in idx}
    n_n = count_flow_neighbors(group, neighbors, ctx.flows)
    n_f = ctx.group_n_f(weights.power_sum) if len(idx) > 1 else 0.0
    metric = link_metric(c_hat, n_n, n_f, len(idx), ctx.beta)
    return LinkCandidate(
        relay=ctx.relay,
        next_hop=ctx.next_hop,
        group=tuple(sorted(group)),
        coordinator=ctx.relay,
        effective_capacity=c_hat,
        n_n=n_n,
        n_f=n_f,
        metric=metric,
        coop_capacity=c_coop,
        dissemination_capacity=c_wor,
        nulled_pus=tuple(ctx.pu_ids[r] for r in rows),
        weights=weights.weights,
    )


@functools.lru_cache(maxsize=256)
def _subset_masks(n, min_size, max_size):
    """Boolean (S, n) masks of all subsets containing index 0, by size then lexicographically."""
    rows = []
    for size in range(max(min_size, 1), min(max_size, n) + 1):
        for combo in itertools.combinations(range(1, n), size - 1):
            row = [False] * n
            row[0] = True
            for c in combo:
                row[c] = True
            rows.append(row)
    masks = np.array(rows, dtype=bool).reshape(-1, n)
    masks.setflags(write=False)
    return masks


@dataclass
class GroupScores:
    masks: np.ndarray
    feasible: np.ndarray
    metric: np.ndarray
    c_hat: np.ndarray
    n_n: np.ndarray
    sizes: np.ndarray


def score_groups(ctx, min_size, max_size):
    """Batch-score every subset containing the relay with size in [min_size, max_size]."""
    n = ctx.n
    masks = _subset_masks(n, min_size, max_size)
    s = masks.shape[0]
    sizes = masks.sum(axis=1)
    if s == 0:
        empty = np.zeros(0)
        return GroupScores(masks, empty.astype(bool), empty, empty, empty.astype(int), sizes)
    mf = masks.astype(float)
    p = len(ctx.pu_ids)
    if p:
        pu_count = ((mf @ ctx.pu_cover.T.astype(float)) > 0).sum(axis=1)
        H = ctx.h_pu[None, :, :] * masks[:, None, :]
    else:
        pu_count = np.zeros(s, dtype=int)
        H = np.zeros((s, 0, n), dtype=complex)
    feasible = sizes > pu_count
    power = null_power_batch(H, ctx.h_next[None, :] * masks)
    feasible &= power >= DEGENERATE_NORM**2
    c_coop = ctx.radio.bandwidth * np.log2(1.0 + ctx.radio.snr * power)
    c_wor = np.where(masks, ctx.dissemination[None, :], np.inf).min(axis=1)
    c_hat = np.minimum(c_coop, c_wor)
    feasible &= c_hat > 0

    universe = sorted(v for v, f in ctx.flows.items() if f)
    if universe:
        col = {v: j for j, v in enumerate(universe)}
        adj = np.zeros((n, len(universe)))
        member = np.zeros((n, len(universe)))
        for i, node in enumerate(ctx.nodes):
            for v in ctx.neighbor_sets[i]:
                j = col.get(v)
                if j is not None and v != node:
                    adj[i, j] = 1.0
            j = col.get(node)
            if j is not None:
                member[i, j] = 1.0
        covered = (mf @ adj > 0) & ~(mf @ member > 0)
        n_n = covered.sum(axis=1)
    else:
        n_n = np.zeros(s, dtype=int)
    n_f = ctx.group_n_f(1.0)
    denom = np.where(sizes > 1, n_n + ctx.beta * (n_f - n_n), n_n)
    metric = np.where(feasible, c_hat / np.maximum(1.0, denom), 0.0)
    return GroupScores(masks, feasible, metric, c_hat, n_n, sizes)


def enumerate_candidates(ctx, min_size, max_size):
    """All feasible groups for this relay/next hop, scored by the batch path."""
    scores = score_groups(ctx, min_size, max_size)
    out = []
    n_f = ctx.group_n_f(1.0)
    for k in np.flatnonzero(scores.feasible):
        idx = np.flatnonzero(scores.masks[k])
        group = tuple(sorted(ctx.nodes[i] for i in idx))
        size = len(idx)
        out.append(LinkCandidate(
            relay=ctx.relay,
            next_hop=ctx.next_hop,
            group=group,
            coordinator=ctx.relay,
            effective_capacity=float(scores.c_hat[k]),
            n_n=int(scores.n_n[k]),
            n_f=n_f if size > 1 else 0.0,
            metric=float(scores.metric[k]),
        ))
    return out


def best_candidate(ctx, min_size, max_size, scores=None):
    """Best group for this next hop, or None. Metric comes from the scalar path."""
    if scores is None:
        scores = score_groups(ctx, min_size, max_size)
    feas = np.flatnonzero(scores.feasible)
    if feas.size == 0:
        return None
    top = scores.metric[feas].max()
    window = feas[scores.metric[feas] >= top * (1.0 - RESCORE_WINDOW)]
    exact = []
    for k in window:
        cand = score_group(ctx, np.flatnonzero(scores.masks[k]))
        if cand is not None:
            exact.append(cand)
    if not exact:
        # numerical disagreement near degeneracy: fall back to exact scoring of all
        for k in feas:
            cand = score_group(ctx, np.flatnonzero(scores.masks[k]))
            if cand is not None:
                exact.append(cand)
    if not exact:
        return None
    return min(exact, key=LinkCandidate.sort_key)


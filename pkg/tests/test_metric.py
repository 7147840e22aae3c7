import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnroute.core import UNBOUNDED, RadioConfig
from crnroute.errors import NoFeasibleGroup
from crnroute.geometry import PropagationConfig
from crnroute.metric import (
    LinkContext,
    MetricConfig,
    ThresholdTable,
    best_candidate,
    count_flow_neighbors,
    enumerate_candidates,
    generate_threshold_table,
    link_metric,
    max_group_size,
    score_group,
)
from crnroute.protocol import RouteRequest, route_reply_search
from helpers import brute_force_best, build_views, rand_complex, random_neighborhood


def test_count_flow_neighbors_examples():
    neighbors = {0: [1, 2, 3, 4, 5, 9], 1: [0, 6, 7, 8, 2]}
    flows = {v: {1} for v in (1, 2, 3, 4, 6, 7, 8)}
    # node 5 and 9 carry nothing and are excluded
    assert count_flow_neighbors({0}, neighbors, flows) == 4
    # node 1 joins: it is no longer an external neighbour, but adds 6, 7, 8
    assert count_flow_neighbors({0, 1}, {0: [2, 3, 4, 5, 9, 1], 1: [0, 6, 7, 8, 2]}, flows) == 6
    flows[0] = {2}
    assert count_flow_neighbors({1}, neighbors, flows) == 5
    assert count_flow_neighbors({0}, {}, {}) == 0


def test_count_flow_neighbors_seventy_five_percent():
    neighbors = {0: [10, 11, 12, 13], 1: [10, 20, 21, 22]}
    flows = {v: {0} for v in (10, 11, 12, 13, 20, 21, 22)}
    assert count_flow_neighbors({0}, neighbors, flows) == 4
    assert count_flow_neighbors({0, 1}, neighbors, flows) == 7


def test_link_metric_examples():
    assert link_metric(1.0, 2, 4.0, 2, 0.5) == pytest.approx(1 / 3)
    assert link_metric(5.0, 0, 0.0, 1, 0.5) == 5.0
    assert link_metric(2.0, 4, 100.0, 3, 0.0) == 0.5


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e7), st.integers(0, 50), st.floats(0, 100), st.integers(1, 10),
       st.floats(0.01, 1.0))
def test_link_metric_monotone(c_hat, n_n, n_f, size, beta):
    base = link_metric(c_hat, n_n, n_f, size, beta)
    assert link_metric(c_hat, n_n + 1, n_f, size, beta) <= base + 1e-9
    assert link_metric(c_hat, n_n, n_f + 1.0, size, beta) <= base + 1e-9
    assert link_metric(2 * c_hat, n_n, n_f, size, beta) == pytest.approx(2 * base)


def _table():
    return ThresholdTable({0: {1: 0.0, 2: 50.0, 3: 80.0}, 2: {3: 0.0, 4: 60.0, 5: 100.0, 6: 140.0, 7: 174.1}}, 7)


def test_max_group_size_examples():
    table = _table()
    # 100 (7 F_n - N_min) / N_min <= 174.1 with N_min=1 needs F_n <= 0.3916
    assert max_group_size(0.39, 1, 2, table, 10) == 7
    assert max_group_size(0.395, 1, 2, table, 10) == 6
    assert max_group_size(0.0, 3, 2, table, 4) == 5
    assert max_group_size(0.0, 3, 0, None, 4) == 5
    with pytest.raises(NoFeasibleGroup):
        max_group_size(0.1, 1, 2, table, 1)
    # a PU count without a row falls back to M + 2
    assert max_group_size(0.0, 1, 5, table, 10) == 7


def _ctx(n_members, pu_rows=0, seed=0):
    rng = np.random.default_rng(seed)
    n = n_members + 1
    return LinkContext(
        relay=0, next_hop=99, nodes=tuple(range(n)),
        h_next=rand_complex(rng, n),
        pu_ids=tuple(range(pu_rows)),
        h_pu=rand_complex(rng, (pu_rows, n)),
        pu_cover=np.ones((pu_rows, n), dtype=bool),
        dissemination=np.full(n, UNBOUNDED),
        neighbor_sets=tuple(frozenset() for _ in range(n)),
        flows={}, radio=RadioConfig(), flow_density=0.0,
        prop=PropagationConfig(1e-4, 1.0), beta=0.5,
    )


def test_enumeration_counts():
    assert len(enumerate_candidates(_ctx(2), 1, 2)) == 3
    assert len(enumerate_candidates(_ctx(3, pu_rows=1), 2, 3)) == 6


def test_best_candidate_matches_scalar_scoring():
    for seed in range(30):
        ctx = _ctx(5, pu_rows=seed % 3, seed=seed)
        cands = enumerate_candidates(ctx, ctx.h_pu.shape[0] + 1, 6)
        best = best_candidate(ctx, ctx.h_pu.shape[0] + 1, 6)
        batch_best = max(c.metric for c in cands)
        assert best.metric == pytest.approx(batch_best, rel=1e-9)
        idx = [ctx.nodes.index(v) for v in best.group]
        assert score_group(ctx, idx).metric == best.metric


def test_tie_break_prefers_smaller_group():
    ctx = _ctx(2)
    # member 2 has no channel to the next hop: {0,2} ties with {0}
    ctx.h_next = np.array([1.0, 0.1, 0.0], dtype=complex)
    ctx.dissemination = np.array([UNBOUNDED, 0.0, UNBOUNDED])
    best = best_candidate(ctx, 1, 3)
    assert best.group == (0,)


def test_threshold_table_properties():
    table = generate_threshold_table(max_size=8, max_pus=3, samples=20_000,
                                     rng=np.random.default_rng(0))
    for m, row in table.entries.items():
        assert row[m + 1] == 0.0
        sizes = sorted(row)
        assert all(row[b] >= row[a] for a, b in zip(sizes, sizes[1:]))
    with pytest.raises(ValueError):
        generate_threshold_table(samples=100)


def test_threshold_table_text_round_trip():
    table = generate_threshold_table(max_size=6, max_pus=2, samples=10_000,
                                     rng=np.random.default_rng(1), min_pus=1)
    text = table.to_text()
    assert text.splitlines()[0].startswith("Group Size")
    back = ThresholdTable.from_text(text)
    for m, row in table.entries.items():
        for j, v in row.items():
            assert back.lookup(m, j) == pytest.approx(v, abs=0.051)


def test_metric_config_rejects_bad_beta():
    with pytest.raises(ValueError):
        MetricConfig(beta=1.5)


@pytest.mark.parametrize("seed", range(40))
def test_route_reply_search_matches_exhaustive_scan(seed):
    rng = np.random.default_rng(1000 + seed)
    nb = random_neighborhood(rng)
    views, _, _ = build_views(nb["positions"], nb["H"], nb["pu_positions"], nb["H_pu"],
                              nb["active"], nb["flows"], metric=MetricConfig(thresholds=None))
    v0 = views[0]
    req = nb["requester"]
    rreq = RouteRequest(0, 99, 0, nb["dest"], req, views[req].position, True, ())
    got = route_reply_search(v0, rreq)
    want = brute_force_best(nb["positions"], nb["H"], nb["pu_positions"], nb["H_pu"],
                            nb["active"], nb["flows"], 0, req, nb["dest"])
    if want is None:
        assert got is None
        return
    metric, next_hop, group = want
    assert got is not None
    assert got.metric == pytest.approx(metric, rel=1e-12)
    assert (got.next_hop, got.group) == (next_hop, group)

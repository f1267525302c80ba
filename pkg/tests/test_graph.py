import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from motiftgn.graph import (BIPARTITE, DIRECTED, GraphFormatError, SplitError, SplitPlan,
                            TemporalEdge, TemporalGraph, from_edges, ingest, load_graph,
                            sample_negative, sample_negatives, save_graph, split)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_plain_ingest_keeps_input_order_on_ties(tmp_path):
    g = ingest(write(tmp_path, "e.csv", "0,1,5\n1,2,7\n0,2,7\n"))
    assert g.num_nodes == 3 and g.num_edges == 3
    assert [(e.edge_id, e.src, e.dst, e.timestamp) for e in g] == [
        (0, 0, 1, 5.0), (1, 1, 2, 7.0), (2, 0, 2, 7.0)]


def test_ingest_sorts_stably_and_relabels_by_first_appearance(tmp_path):
    g = ingest(write(tmp_path, "e.csv", "a,b,9\nc,a,3\nb,c,3\n"))
    assert g.ts.tolist() == [3.0, 3.0, 9.0]
    assert g.labels == ["c", "a", "b"]
    assert list(zip(g.src.tolist(), g.dst.tolist())) == [(0, 1), (2, 0), (1, 2)]


def test_ingest_features_and_arity(tmp_path):
    g = ingest(write(tmp_path, "e.csv", "0,1,1,0.5,2\n1,0,2,1.5,3\n"))
    assert g.feature_dim == 2 and g.features.tolist() == [[0.5, 2.0], [1.5, 3.0]]
    with pytest.raises(GraphFormatError, match=":2: feature arity"):
        ingest(write(tmp_path, "bad.csv", "0,1,1,0.5\n1,0,2\n"))


@pytest.mark.parametrize("text,message", [
    ("", "no edges"),
    ("\n\n", "no edges"),
    ("0,1,5\n0,1\n", ":2: expected at least 3 columns"),
    ("0,1,abc\n", ":1: non-numeric timestamp"),
    ("0,1,nan\n", ":1: non-finite timestamp"),
    ("0,1,1,x\n", ":1: non-numeric feature"),
])
def test_ingest_errors_report_lines(tmp_path, text, message):
    with pytest.raises(GraphFormatError, match=message):
        ingest(write(tmp_path, "e.csv", text))


def test_jodie_bipartite_ingest(tmp_path):
    text = "user_id,item_id,timestamp,state_label,f0,f1\n" \
           "u1,i1,0,0,1,2\nu2,i1,5,1,3,4\nu1,i2,7,0,5,6\n"
    g = ingest(write(tmp_path, "w.csv", text), fmt="jodie", directedness=BIPARTITE)
    assert g.bipartite_boundary == 2 and g.num_nodes == 4
    assert g.src.tolist() == [0, 1, 0] and g.dst.tolist() == [2, 2, 3]
    assert g.feature_dim == 2
    assert g.destination_universe().tolist() == [2, 3]


def test_drop_self_loops(tmp_path):
    path = write(tmp_path, "e.csv", "0,0,1\n0,1,2\n")
    assert ingest(path).num_edges == 2
    assert ingest(path, drop_self_loops=True).num_edges == 1


def test_graph_validation():
    with pytest.raises(ValueError, match="sorted"):
        TemporalGraph([0, 1], [1, 0], [5.0, 1.0], 2)
    with pytest.raises(ValueError, match="out of range"):
        TemporalGraph([0], [3], [0.0], 2)
    with pytest.raises(ValueError, match="non-negative"):
        TemporalGraph([0], [1], [-1.0], 2)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), bipartite=st.booleans())
def test_adjacency_replays_edge_multiset(seed, bipartite):
    g = random_graph(seed, bipartite=bipartite)
    adj = g.adjacency
    seen = collections.Counter()
    for v in range(g.num_nodes):
        sl = adj.touches(v)
        eids = adj.eid[sl]
        assert np.all(np.diff(eids) >= 0) and np.all(np.diff(adj.ts[sl]) >= 0)
        for e, u, out in zip(eids, adj.nbr[sl], adj.outgoing[sl]):
            s, d = (v, u) if out else (u, v)
            seen[(int(e), int(s), int(d))] += 1
    expected = collections.Counter({(k, int(s), int(d)): 2 for k, (s, d)
                                    in enumerate(zip(g.src, g.dst))})
    assert seen == expected


def test_container_roundtrip(tmp_path):
    g = TemporalGraph([0, 1], [2, 2], [1.0, 2.5], 3, BIPARTITE, np.array([[1.0], [2.0]]), 2,
                      ["a", "b", "x"])
    save_graph(g, str(tmp_path / "g.bin"))
    h = load_graph(str(tmp_path / "g.bin"))
    for attr in ("src", "dst", "ts", "features"):
        np.testing.assert_array_equal(getattr(h, attr), getattr(g, attr))
    assert (h.num_nodes, h.directedness, h.bipartite_boundary, h.labels) == \
           (3, BIPARTITE, 2, ["a", "b", "x"])
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(GraphFormatError, match="magic"):
        load_graph(str(tmp_path / "bad.bin"))
    (tmp_path / "short.bin").write_bytes((tmp_path / "g.bin").read_bytes()[:50])
    with pytest.raises(GraphFormatError, match="truncated"):
        load_graph(str(tmp_path / "short.bin"))


def chain(n_edges, n_nodes=None):
    n_nodes = n_nodes or n_edges + 1
    return TemporalGraph(np.arange(n_edges) % n_nodes, (np.arange(n_edges) + 1) % n_nodes,
                         np.arange(n_edges, dtype=float), n_nodes)


def test_transductive_boundaries():
    plan = split(chain(100), 0.70, 0.15)
    assert (plan.train_end, plan.val_end, plan.masked_nodes) == (70, 85, frozenset())
    assert plan.train_indices(chain(100)).tolist() == list(range(70))


def test_boundaries_use_floor():
    plan = split(chain(7), 0.5, 0.25)
    assert (plan.train_end, plan.val_end) == (3, 5)


def test_mask_size_is_floor_of_fraction():
    g = chain(1898, 1899)
    plan = split(g, mode="inductive", mask_frac=0.1, seed=3)
    assert len(plan.masked_nodes) == 189


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_inductive_training_never_touches_masked_nodes(seed):
    g = random_graph(seed, max_edges=30, min_edges=20)
    try:
        plan = split(g, mode="inductive", mask_frac=0.3, seed=seed)
    except SplitError:
        return
    masked = plan.masked_nodes
    for k in plan.train_indices(g):
        assert g.src[k] not in masked and g.dst[k] not in masked
    for which in ("val", "test"):
        for k in plan.eval_indices(g, which):
            assert g.src[k] in masked or g.dst[k] in masked
    assert split(g, mode="inductive", mask_frac=0.3, seed=seed) == plan


def test_masking_a_hub_empties_training():
    # node 0 touches every edge; masking it leaves nothing to train on
    g = TemporalGraph(np.zeros(20, int), np.arange(1, 21), np.arange(20.0), 21)
    with pytest.raises(SplitError, match="empty"):
        for seed in range(200):
            plan = split(g, mode="inductive", mask_frac=0.05, seed=seed)
            assert 0 not in plan.masked_nodes


def test_inductive_empty_evaluation_set():
    # only node 5 gets masked (floor(0.1 * 10) = 1) and val/test never touch it
    g = TemporalGraph(np.arange(10) % 4, (np.arange(10) % 4) + 1, np.arange(10.0), 10)
    errors = set()
    for seed in range(30):
        try:
            plan = split(g, mode="inductive", mask_frac=0.1, seed=seed)
        except SplitError as exc:
            errors.add(str(exc))
            continue
        assert plan.masked_nodes & set(range(5))
    assert "empty evaluation set after inductive filtering" in errors


@pytest.mark.parametrize("kwargs", [dict(train_frac=0.9, val_frac=0.1),
                                    dict(train_frac=0.0), dict(mask_frac=1.0),
                                    dict(mode="sideways")])
def test_split_rejects_bad_arguments(kwargs):
    with pytest.raises(SplitError):
        split(chain(20), **kwargs)


def test_split_plan_dict_roundtrip():
    plan = SplitPlan(7, 9, frozenset({1, 4}), "inductive", 3)
    assert SplitPlan.from_dict(plan.to_dict()) == plan


def test_bipartite_negative_support():
    g = TemporalGraph([0, 1, 2], [5, 6, 7], [0.0, 1.0, 2.0], 8, BIPARTITE, bipartite_boundary=5)
    rng = np.random.default_rng(0)
    draws = {sample_negative(g, TemporalEdge(1, 1, 6, 1.0), rng) for _ in range(200)}
    assert draws == {5, 7}


def test_negative_frequencies_are_uniform():
    g = TemporalGraph([0, 1, 2, 3], [1, 2, 3, 0], [0.0, 1.0, 2.0, 3.0], 4)
    rng = np.random.default_rng(42)
    draws = sample_negatives(g, np.full(10_000, 2), rng)
    counts = np.bincount(draws, minlength=4)
    assert counts[2] == 0
    sigma = np.sqrt(10_000 * (1 / 3) * (2 / 3))
    for v in (0, 1, 3):
        assert abs(counts[v] - 10_000 / 3) <= 3 * sigma


def test_single_destination_universe_errors():
    g = TemporalGraph([0, 1], [2, 2], [0.0, 1.0], 3, BIPARTITE, bipartite_boundary=2)
    with pytest.raises(ValueError, match="cannot exclude"):
        sample_negative(g, 2, np.random.default_rng(0))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), bipartite=st.booleans())
def test_negatives_stay_in_universe(seed, bipartite):
    g = random_graph(seed, bipartite=bipartite)
    if len(g.destination_universe()) < 2:
        return
    neg = sample_negatives(g, g.dst, np.random.default_rng(seed))
    assert np.all(neg != g.dst)
    assert set(neg.tolist()) <= set(g.destination_universe().tolist())


def test_from_edges_sorts_stably():
    g = from_edges([(0, 1, 5), (1, 2, 1), (2, 0, 5)])
    assert g.src.tolist() == [1, 0, 2] and g.directedness == DIRECTED

import io
import math

import numpy as np
import pytest

from oracles import mlp_scalar, params_as_lists, sigmoid
from motiftgn import autodiff as ad
from motiftgn.attention import MLP
from motiftgn.graph import SplitPlan, TemporalGraph, split
from motiftgn.model import batch_loss, predict_link
from motiftgn.motifs import build_edge_features, load_catalog
from motiftgn.synthetic import periodic_triangles
from motiftgn.training import (LOG_HEADER, TrainConfig, chronological_batches, evaluate,
                               load_model, parse_config, train)

TINY = dict(d_mem=6, d_embed=4, d_time=2, d_motif_proj=3, heads=2, layers=2, n_neighbors=3,
            batch_size=10, learning_rate=1e-3, epochs_max=2, delta=8.0, log_timing=False)


@pytest.fixture(scope="module")
def toy():
    g = periodic_triangles(num_nodes=10, num_edges=90, num_triangles=3, seed=1)
    table = build_edge_features(g, load_catalog("directed_default", delta=8.0))
    return g, table, split(g)


def test_zero_head_gives_even_odds():
    head = MLP(4, 3, 1, np.random.default_rng(0))
    for p in head.parameters().values():
        p.data[:] = 0.0
    assert predict_link(np.ones(2), np.ones(2), head).data.tolist() == [[0.5]]


@pytest.mark.parametrize("seed", range(3))
def test_prediction_matches_scalar_head(seed):
    rng = np.random.default_rng(seed)
    head = MLP(6, 4, 1, rng)
    zi, zj = rng.normal(size=3), rng.normal(size=3)
    p = predict_link(zi, zj, head).data[0, 0]
    logit = mlp_scalar(zi.tolist() + zj.tolist(), params_as_lists(head), "")[0]
    assert abs(p - sigmoid(logit)) <= 1e-13 and 0.0 < p < 1.0


def test_prediction_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        predict_link(np.ones((2, 3)), np.ones((1, 3)), MLP(6, 2, 1, np.random.default_rng(0)))


def test_even_odds_loss():
    assert float(batch_loss(np.array([[0.5]]), np.array([[0.5]])).data) == \
        pytest.approx(2 * math.log(2), rel=1e-15)


def test_loss_clamps_certain_mistakes():
    value = float(batch_loss(np.array([[0.0]]), np.array([[1.0]])).data)
    # the upper clamp 1 - 1e-12 is not exact in binary, so mirror it
    expected = -math.log(1e-12) - math.log(1.0 - (1.0 - 1e-12))
    assert math.isfinite(value) and value == pytest.approx(expected, rel=1e-12)


def test_batches_are_chronological_with_short_tail():
    sizes = [len(b) for b in chronological_batches(np.arange(10), 4)]
    assert sizes == [4, 4, 2]


def test_first_batch_sees_fresh_memory_and_later_batches_only_the_past(toy):
    g, table, plan = toy
    seen = []

    def hook(memory, batch):
        logged = [e for _, e in memory.update_log]
        seen.append((int(batch[0]), max(logged, default=-1), np.isnan(memory.last_update).all()))

    train(g, table, TrainConfig(**{**TINY, "epochs_max": 1}), plan, on_batch=hook)
    assert seen[0][1:] == (-1, True)
    for first, newest, _ in seen:
        assert newest < first
    assert seen[1][1] == seen[1][0] - 1  # previous batch absorbed in full


def test_training_log_and_early_stopping(toy):
    g, table, plan = toy
    stream = io.StringIO()
    res = train(g, table, TrainConfig(**{**TINY, "epochs_max": 3}), plan, log_stream=stream)
    assert res.log_text().splitlines()[0] == LOG_HEADER
    assert len(res.log) == 3 and stream.getvalue().splitlines() == res.log
    assert all(line.endswith(",nan") for line in res.log)
    aps = [float(line.split(",")[3]) for line in res.log]
    assert res.best_epoch == int(np.argmax(aps)) + 1


def test_patience_stops_training(toy, monkeypatch):
    g, table, plan = toy
    import motiftgn.training as tr
    from motiftgn.training import EvalReport
    monkeypatch.setattr(tr, "evaluate", lambda *a, **k: EvalReport(0.5, 0.5, "val", "t"))
    res = train(g, table, TrainConfig(**{**TINY, "epochs_max": 10, "patience": 2}), plan)
    assert len(res.log) == 3 and res.best_epoch == 1


def test_training_is_deterministic(toy):
    g, table, plan = toy
    a = train(g, table, TrainConfig(**TINY), plan)
    b = train(g, table, TrainConfig(**TINY), plan)
    assert a.log_text() == b.log_text()
    for k, v in a.model.state_dict().items():
        assert v.tobytes() == b.model.state_dict()[k].tobytes()


def test_evaluation_never_scores_with_future_memory(toy):
    g, table, plan = toy
    res = train(g, table, TrainConfig(**{**TINY, "epochs_max": 1}), plan)
    for which in ("val", "test"):
        def hook(memory, scored):
            newest = max((e for _, e in memory.update_log), default=-1)
            assert newest < scored.min()
            assert np.nanmax(memory.last_update) <= g.ts[scored.min()]
        rep = evaluate(res.model, g, table, plan, which, res.config, on_batch=hook)
        assert 0.0 <= rep.auc <= 1.0 and rep.n_pairs > 0


def test_checkpoint_rebuilds_identical_model(toy, tmp_path):
    g, table, plan = toy
    res = train(g, table, TrainConfig(**{**TINY, "epochs_max": 1}), plan)
    tensors, meta = res.checkpoint()
    ad.save_checkpoint(str(tmp_path / "m.ckpt"), tensors, meta)
    model, cfg, memory = load_model(*ad.load_checkpoint(str(tmp_path / "m.ckpt")))
    assert cfg == res.config
    np.testing.assert_array_equal(memory.state, res.memory.state)
    a = evaluate(res.model, g, table, plan, "test", cfg)
    b = evaluate(model, g, table, plan, "test", cfg)
    assert (a.auc, a.ap) == (b.auc, b.ap)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_non_finite_loss_is_reported(toy):
    g, table, plan = toy
    bad = table.astype(float)
    bad[3, 0] = np.inf
    with pytest.raises(FloatingPointError, match="non-finite loss"):
        train(g, bad, TrainConfig(**{**TINY, "log1p_motifs": False}), plan)


def test_empty_splits():
    g = TemporalGraph([0, 1, 2], [1, 2, 0], [0.0, 1.0, 2.0], 3)
    with pytest.raises(ValueError, match="empty training"):
        train(g, np.zeros((3, 1)), TrainConfig(**TINY), SplitPlan(0, 1))
    res = train(g, np.zeros((3, 1)), TrainConfig(**{**TINY, "epochs_max": 1}), SplitPlan(3, 3))
    with pytest.raises(ValueError, match="empty val"):
        evaluate(res.model, g, np.zeros((3, 1)), SplitPlan(3, 3), "val", res.config)


def test_motif_table_shape_checked(toy):
    g, _, plan = toy
    with pytest.raises(ValueError, match="one row per edge"):
        train(g, np.zeros((5, 2)), TrainConfig(**TINY), plan)


def test_config_parsing():
    cfg, extras = parse_config("dataset = uci\nbatch_size = 7  # note\nno_motif = yes\n"
                               "graph = g.bin\n\n")
    assert cfg.batch_size == 7 and cfg.learning_rate == 3e-4 and cfg.delta == 86400.0
    assert cfg.no_motif is True and extras == {"dataset": "uci", "graph": "g.bin"}
    assert TrainConfig.from_dataset("wikipedia").catalog == "bipartite_default"
    with pytest.raises(ValueError, match=":1:"):
        parse_config("no_gru = maybe")
    with pytest.raises(ValueError, match=":2:"):
        parse_config("seed = 1\nnonsense")
    with pytest.raises(ValueError):
        TrainConfig(d_embed=5, heads=2)

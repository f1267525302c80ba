"""scikit-learn style front-end: a motif featurizer and a link predictor."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from ._validation import check_graph, check_motif_table, check_queries
from .graph import SplitPlan, split as make_split
from .memory import NodeMemory
from .model import predict_link
from .motifs import build_edge_features, column_names, load_catalog
from .sampler import NeighborIndex, build_subgraphs
from .training import TrainConfig, _Context, chronological_batches, evaluate, train


class MotifFeaturizer(TransformerMixin, BaseEstimator):
    """Per-edge positional temporal-motif counts.

    ``fit`` resolves the catalog and checks it against the graph's
    directedness; ``transform`` returns an ``(num_edges, width)`` int64 table.
    """

    def __init__(self, catalog: str = "directed_default", delta: float = 86400.0,
                 causal: bool = False, n_jobs: int = 1):
        self.catalog = catalog
        self.delta = delta
        self.causal = causal
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if not self.delta > 0:
            raise ValueError("delta must be positive, got %r" % self.delta)
        graph = check_graph(X)
        self.catalog_ = load_catalog(self.catalog, delta=float(self.delta))
        self.catalog_.check_graph(graph)
        self.n_features_out_ = self.catalog_.width
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "catalog_")
        return build_edge_features(check_graph(X), self.catalog_, causal=self.causal,
                                   n_jobs=self.n_jobs)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        check_is_fitted(self, "catalog_")
        return np.asarray(column_names(self.catalog_), dtype=object)


class TemporalLinkPredictor(BaseEstimator):
    """Memory + bicomponent attention model for future-link scoring.

    ``fit`` takes a :class:`~motiftgn.graph.TemporalGraph` (or an edge
    array), computes motif features unless given, and trains with early
    stopping on the validation period of ``split`` (70/15/15 chronological
    by default). Queries for :meth:`predict_proba` are ``(src, dst, t)`` rows;
    each is scored with memories rolled forward through every edge of the
    fitted graph strictly before ``t``.
    """

    def __init__(self, batch_size=100, learning_rate=3e-4, epochs_max=50, patience=5, seed=0,
                 no_gru=False, no_motif=False, no_bicomp=False, d_mem=172, d_embed=172,
                 d_time=86, d_motif_proj=16, heads=2, layers=2, n_neighbors=10, max_len=5,
                 delta=86400.0, catalog="directed_default", causal_motifs=False,
                 log1p_motifs=True, carry_memory=False, out_only=False, log_timing=True):
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs_max = epochs_max
        self.patience = patience
        self.seed = seed
        self.no_gru = no_gru
        self.no_motif = no_motif
        self.no_bicomp = no_bicomp
        self.d_mem = d_mem
        self.d_embed = d_embed
        self.d_time = d_time
        self.d_motif_proj = d_motif_proj
        self.heads = heads
        self.layers = layers
        self.n_neighbors = n_neighbors
        self.max_len = max_len
        self.delta = delta
        self.catalog = catalog
        self.causal_motifs = causal_motifs
        self.log1p_motifs = log1p_motifs
        self.carry_memory = carry_memory
        self.out_only = out_only
        self.log_timing = log_timing

    def config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    def fit(self, X, motif_features=None, split: SplitPlan | None = None, log_stream=None):
        cfg = self.config()
        graph = check_graph(X)
        if motif_features is None:
            motif_features = MotifFeaturizer(cfg.catalog, cfg.delta, cfg.causal_motifs) \
                .fit(graph).transform(graph)
        table = check_motif_table(motif_features, graph)
        plan = split if split is not None else make_split(graph)
        result = train(graph, table, cfg, plan, log_stream=log_stream)
        self.graph_, self.motif_table_, self.split_ = graph, table, plan
        self.model_, self.config_ = result.model, cfg
        self.training_log_ = result.log_text()
        self.best_epoch_ = result.best_epoch
        return self

    def evaluate(self, which: str = "test", seed: int | None = None):
        """:class:`~motiftgn.training.EvalReport` on the fitted graph's ``which`` period."""
        check_is_fitted(self, "model_")
        return evaluate(self.model_, self.graph_, self.motif_table_, self.split_, which,
                        self.config_, self.best_epoch_, seed)

    def score(self, X=None, y=None) -> float:
        """Test-period AUC of the fitted graph (``X`` must be that graph or ``None``)."""
        check_is_fitted(self, "model_")
        if X is not None and X is not self.graph_:
            raise ValueError("score evaluates the fitted graph's test period only")
        return self.evaluate("test").auc

    def predict_proba(self, X) -> np.ndarray:
        """``(m, 2)`` array of ``[1 - p, p]`` link probabilities for ``(src, dst, t)`` rows."""
        check_is_fitted(self, "model_")
        graph, cfg = self.graph_, self.config_
        src, dst, t = check_queries(X, graph.num_nodes)
        ctx = _Context(graph, self.motif_table_, cfg)
        index = NeighborIndex(graph, out_only=cfg.out_only)
        memory = NodeMemory(graph.num_nodes, cfg.d_mem)
        order = np.argsort(t, kind="stable")
        out = np.empty(len(t))
        applied = 0
        for chunk in chronological_batches(order, cfg.batch_size):
            # memories absorb everything strictly before the earliest query of the chunk
            upto = int(np.searchsorted(graph.ts, t[chunk].min(), side="left"))
            for b in chronological_batches(np.arange(applied, upto), cfg.batch_size):
                ctx.update_memory(self.model_, memory, b)
            applied = max(applied, upto)
            p = _score_pairs(ctx, self.model_, memory, index, src[chunk], dst[chunk], t[chunk])
            out[chunk] = p
        return np.column_stack([1.0 - out, out])

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= threshold).astype(np.int64)


def _score_pairs(ctx, model, memory, index, src, dst, t) -> np.ndarray:
    cfg = ctx.cfg
    n = len(src)
    sub = build_subgraphs(index, np.concatenate([src, dst]), np.tile(t, 2), cfg.layers,
                          cfg.n_neighbors, bicomponent=not cfg.no_bicomp)
    z = model.embedder(sub, memory.rows, ctx.motif, ctx.edge_table,
                       use_motif=not cfg.no_motif, log1p=cfg.log1p_motifs)
    p = predict_link(ad.gather_rows(z, np.arange(n)), ad.gather_rows(z, np.arange(n, 2 * n)),
                     model.head)
    return p.data[:, 0]

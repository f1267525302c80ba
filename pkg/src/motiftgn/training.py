"""Chronological batched training and link-prediction evaluation."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import SplitPlan, TemporalGraph, sample_negatives
from .memory import NodeMemory, apply_batch
from .metrics import average_precision, roc_auc
from .model import LinkModel, batch_loss, predict_link
from .sampler import NeighborIndex, build_subgraphs

logger = logging.getLogger(__name__)

LOG_HEADER = "epoch,train_loss,val_auc,val_ap,seconds"

# per-dataset overrides for batch size, learning rate and delta
DATASET_PRESETS = {
    "uci": {"batch_size": 100, "learning_rate": 3e-4, "delta": 86400.0,
            "catalog": "directed_default"},
    "email-eu": {"batch_size": 200, "learning_rate": 1e-4, "delta": 604800.0,
                 "catalog": "directed_default"},
    "wikipedia": {"batch_size": 200, "learning_rate": 1e-4, "delta": 86400.0,
                  "catalog": "bipartite_default"},
}


@dataclass
class TrainConfig:
    batch_size: int = 100
    learning_rate: float = 3e-4
    epochs_max: int = 50
    patience: int = 5
    seed: int = 0
    no_gru: bool = False
    no_motif: bool = False
    no_bicomp: bool = False
    d_mem: int = 172
    d_embed: int = 172
    d_time: int = 86
    d_motif_proj: int = 16
    heads: int = 2
    layers: int = 2
    n_neighbors: int = 10
    max_len: int = 5
    delta: float = 86400.0
    catalog: str = "directed_default"
    causal_motifs: bool = False
    log1p_motifs: bool = True
    carry_memory: bool = False
    out_only: bool = False
    log_timing: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.epochs_max < 1:
            raise ValueError("epochs_max must be >= 1")
        if self.d_embed % self.heads:
            raise ValueError("d_embed must be divisible by heads")

    @classmethod
    def from_dataset(cls, name: str, **overrides) -> "TrainConfig":
        return cls(**{**DATASET_PRESETS[name.lower()], **overrides})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _cast(kind, raw: str):
    if kind is bool or kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("not a boolean: %r" % raw)
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        return float(raw)
    return raw.strip()


def parse_config(text: str, source: str = "<config>") -> tuple:
    """Parse ``key = value`` lines into ``(TrainConfig, extras)``.

    Keys that are not TrainConfig fields (file paths and the like) are
    returned in ``extras``. ``dataset = uci`` applies the dataset preset
    before the remaining keys.
    """
    kinds = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    values, extras = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("%s:%d: expected 'key = value'" % (source, lineno))
        key, val = (s.strip() for s in line.split("=", 1))
        if key in kinds:
            try:
                values[key] = _cast(kinds[key], val)
            except ValueError as exc:
                raise ValueError("%s:%d: %s" % (source, lineno, exc)) from None
        else:
            extras[key] = val
    preset = DATASET_PRESETS.get(extras.get("dataset", "").lower(), {})
    return TrainConfig(**{**preset, **values}), extras


def load_config(path: str) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), path)


@dataclass
class EvalReport:
    auc: float
    ap: float
    split: str
    mode: str
    epoch: int = 0
    n_pairs: int = 0

    def csv_row(self) -> str:
        return "%s,%s,%d,%.6f,%.6f,%d" % (self.split, self.mode, self.epoch, self.auc, self.ap,
                                         self.n_pairs)

    @staticmethod
    def csv_header() -> str:
        return "split,mode,epoch,auc,ap,n_pairs"


@dataclass
class TrainResult:
    model: LinkModel
    memory: NodeMemory
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_ap: float = float("nan")
    config: TrainConfig = None

    def log_text(self) -> str:
        return "\n".join([LOG_HEADER] + self.log) + "\n"

    def checkpoint(self) -> tuple:
        tensors = {"model." + k: v for k, v in self.model.state_dict().items()}
        tensors["memory.state"] = self.memory.state
        tensors["memory.last_update"] = self.memory.last_update
        meta = {"config": self.config.to_dict(), "best_epoch": self.best_epoch,
                "best_val_ap": self.best_val_ap, "num_nodes": self.memory.num_nodes}
        return tensors, meta


def build_model(cfg: TrainConfig, motif_width: int, edge_dim: int) -> LinkModel:
    return LinkModel(cfg.d_mem, cfg.d_embed, cfg.d_time, motif_width, cfg.d_motif_proj,
                     edge_dim, cfg.heads, cfg.layers, seed=cfg.seed)


def chronological_batches(idx: np.ndarray, batch_size: int) -> list:
    return [idx[i:i + batch_size] for i in range(0, len(idx), batch_size)]


class _Context:
    """Everything a forward pass needs besides the parameters."""

    def __init__(self, graph: TemporalGraph, motif_table, cfg: TrainConfig):
        self.graph = graph
        self.cfg = cfg
        self.motif = np.asarray(motif_table, dtype=float)
        if self.motif.ndim != 2 or len(self.motif) != graph.num_edges:
            raise ValueError("motif table must have one row per edge (%d), got shape %s"
                             % (graph.num_edges, self.motif.shape))
        self.edge_table = graph.features if graph.feature_dim else None
        self.time_scale = graph.mean_gap()

    def update_memory(self, model: LinkModel, memory: NodeMemory, idx: np.ndarray) -> None:
        g = self.graph
        apply_batch(memory, (g.src[idx], g.dst[idx], g.ts[idx], idx), model.gru,
                    self.cfg.max_len, self.time_scale, frozen=self.cfg.no_gru)

    def probabilities(self, model: LinkModel, memory: NodeMemory, index: NeighborIndex,
                      idx: np.ndarray, neg: np.ndarray):
        g, cfg = self.graph, self.cfg
        n = len(idx)
        roots = np.concatenate([g.src[idx], g.dst[idx], neg])
        times = np.tile(g.ts[idx], 3)
        sub = build_subgraphs(index, roots, times, cfg.layers, cfg.n_neighbors,
                              bicomponent=not cfg.no_bicomp)
        z = model.embedder(sub, memory.rows, self.motif, self.edge_table,
                           use_motif=not cfg.no_motif, log1p=cfg.log1p_motifs)
        z_src = ad.gather_rows(z, np.arange(n))
        z_dst = ad.gather_rows(z, np.arange(n, 2 * n))
        z_neg = ad.gather_rows(z, np.arange(2 * n, 3 * n))
        return predict_link(z_src, z_dst, model.head), predict_link(z_src, z_neg, model.head)


def _replay(ctx: _Context, model, memory, idx: np.ndarray) -> None:
    for b in chronological_batches(idx, ctx.cfg.batch_size):
        ctx.update_memory(model, memory, b)


def evaluate(model: LinkModel, graph: TemporalGraph, motif_table, split: SplitPlan,
             which: str = "val", cfg: TrainConfig | None = None, epoch: int = 0,
             seed: int | None = None, on_batch=None) -> EvalReport:
    """Score one split after replaying memory through everything before it.

    Memories start from zero and are rolled forward, without gradients,
    through the training edges (and the validation period when scoring
    ``test``). The scored period is then processed batch by batch: each
    batch is scored with the current memory and only afterwards applied.
    ``on_batch(memory, scored_edge_ids)`` is called before scoring a batch.
    """
    cfg = cfg or TrainConfig()
    ctx = _Context(graph, motif_table, cfg)
    memory = NodeMemory(graph.num_nodes, cfg.d_mem)
    memory.log_updates = on_batch is not None
    rng = np.random.default_rng(cfg.seed + 1 if seed is None else seed)
    index = NeighborIndex(graph, out_only=cfg.out_only)

    _replay(ctx, model, memory, split.train_indices(graph))
    if which == "val":
        lo, hi = split.train_end, split.val_end
    elif which == "test":
        _replay(ctx, model, memory, np.arange(split.train_end, split.val_end))
        lo, hi = split.val_end, graph.num_edges
    else:
        raise ValueError("split must be 'val' or 'test', got %r" % which)
    scored = np.zeros(graph.num_edges, dtype=bool)
    scored[split.eval_indices(graph, which)] = True
    if not scored[lo:hi].any():
        raise ValueError("empty %s split" % which)

    pos, neg_scores = [], []
    for b in chronological_batches(np.arange(lo, hi), cfg.batch_size):
        sel = b[scored[b]]
        if len(sel):
            if on_batch is not None:
                on_batch(memory, sel)
            neg = sample_negatives(graph, graph.dst[sel], rng)
            p_pos, p_neg = ctx.probabilities(model, memory, index, sel, neg)
            pos.append(p_pos.data[:, 0])
            neg_scores.append(p_neg.data[:, 0])
        ctx.update_memory(model, memory, b)
    pos = np.concatenate(pos)
    neg_scores = np.concatenate(neg_scores)
    return EvalReport(roc_auc(pos, neg_scores), average_precision(pos, neg_scores), which,
                      split.mode, epoch, len(pos))


def train(graph: TemporalGraph, motif_table, cfg: TrainConfig, split: SplitPlan,
          on_batch=None, log_stream=None) -> TrainResult:
    """Batched chronological training with early stopping on validation AP.

    Per batch: memories absorb the previous batch, one negative destination
    is drawn per positive, all three endpoints are embedded at the
    interaction time, and the summed cross-entropy is minimised with Adam.
    Memories are reset every epoch unless ``cfg.carry_memory``.
    """
    train_idx = split.train_indices(graph)
    if len(train_idx) == 0:
        raise ValueError("empty training split")
    ctx = _Context(graph, motif_table, cfg)
    model = build_model(cfg, ctx.motif.shape[1], graph.feature_dim)
    params = model.parameters()
    opt = ad.AdamState(lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    in_train = np.zeros(graph.num_edges, dtype=bool)
    in_train[train_idx] = True
    index = NeighborIndex(graph, edge_mask=in_train, out_only=cfg.out_only)
    memory = NodeMemory(graph.num_nodes, cfg.d_mem)
    memory.log_updates = on_batch is not None
    has_val = len(split.eval_indices(graph, "val")) > 0

    result = TrainResult(model, memory, config=cfg)
    best_state, best_ap, stale = None, -math.inf, 0
    for epoch in range(1, cfg.epochs_max + 1):
        start = time.perf_counter()
        if epoch == 1 or not cfg.carry_memory:
            memory.reset()
        prev = np.zeros(0, dtype=np.int64)
        total = 0.0
        for b in chronological_batches(train_idx, cfg.batch_size):
            neg = sample_negatives(graph, graph.dst[b], rng)
            model.zero_grad()
            with ad.Tape():
                ctx.update_memory(model, memory, prev)
                if on_batch is not None:
                    on_batch(memory, b)
                p_pos, p_neg = ctx.probabilities(model, memory, index, b, neg)
                loss = batch_loss(p_pos, p_neg)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise FloatingPointError("non-finite loss at epoch %d, batch ending at edge %d"
                                             % (epoch, int(b[-1])))
                if loss.requires_grad:
                    ad.backward(loss)
            ad.adam_step(params, None, opt)
            memory.detach()
            total += value
            prev = b
        ctx.update_memory(model, memory, prev)
        memory.detach()

        if has_val:
            rep = evaluate(model, graph, motif_table, split, "val", cfg, epoch)
            auc, ap = rep.auc, rep.ap
        else:
            auc = ap = float("nan")
        seconds = time.perf_counter() - start
        line = "%d,%.6f,%.6f,%.6f,%s" % (epoch, total, auc, ap,
                                         "%.3f" % seconds if cfg.log_timing else "nan")
        result.log.append(line)
        if log_stream is not None:
            log_stream.write(line + "\n")
            log_stream.flush()
        logger.info("epoch %d loss %.4f val_auc %.4f val_ap %.4f", epoch, total, auc, ap)

        if not has_val or ap > best_ap:
            best_ap, stale = ap, 0
            best_state = model.state_dict()
            best_memory = memory.copy()
            result.best_epoch = epoch
            result.best_val_ap = ap
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    result.memory = best_memory
    return result


def load_model(tensors: dict, meta: dict) -> tuple:
    """Rebuild ``(model, config, memory)`` from a checkpoint's contents."""
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    cfg = TrainConfig(**{k: v for k, v in meta["config"].items() if k in known})
    state = {k[len("model."):]: v for k, v in tensors.items() if k.startswith("model.")}
    motif_width = state["embedder.layers.0.his.W_e"].shape[0]
    row_in = state["embedder.layers.0.his.W_K"].shape[0]
    edge_dim = row_in - cfg.d_mem - 2 * cfg.d_time - cfg.d_motif_proj
    model = build_model(cfg, motif_width, edge_dim)
    model.load_state_dict(state)
    memory = NodeMemory(int(meta["num_nodes"]), cfg.d_mem)
    if "memory.state" in tensors:
        memory.state = tensors["memory.state"].copy()
        memory.last_update = tensors["memory.last_update"].copy()
    return model, cfg, memory

"""Per-component multi-head attention over temporal neighbors."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .sampler import CUR, HIS, SubgraphBatch
from .time_encoding import TimeEncoder


class Dense(ad.Module):
    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True):
        self.W = ad.init_weight(rng, d_in, d_out, "W")
        self.b = ad.init_bias(d_out, "b") if bias else None

    def __call__(self, x) -> ad.Tensor:
        y = ad.matmul(x, self.W)
        return y if self.b is None else y + self.b


class MLP(ad.Module):
    """One hidden ReLU layer."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng):
        self.fc1 = Dense(d_in, d_hidden, rng)
        self.fc2 = Dense(d_hidden, d_out, rng)

    def __call__(self, x) -> ad.Tensor:
        return self.fc2(ad.relu(self.fc1(x)))


class AttentionBlock(ad.Module):
    """Multi-head attention of one query per segment over its neighbor rows.

    Holds the shared lifts ``W_Q, W_K, W_V``, the per-head projections
    (stored side by side as ``W_pQ, W_pK, W_pV``, head ``p`` owning columns
    ``p*d_head:(p+1)*d_head``), the output map ``W_O`` and the motif
    projection ``W_e`` used when building this component's rows.
    """

    def __init__(self, q_in: int, row_in: int, width: int, heads: int, d_out: int,
                 motif_in: int, motif_proj: int, rng):
        if width % heads:
            raise ValueError("attention width %d not divisible by %d heads" % (width, heads))
        self.heads = heads
        self.d_head = width // heads
        self.row_in = row_in
        self.W_e = ad.init_weight(rng, motif_in, motif_proj, "W_e")
        self.W_Q = ad.init_weight(rng, q_in, width, "W_Q")
        self.W_K = ad.init_weight(rng, row_in, width, "W_K")
        self.W_V = ad.init_weight(rng, row_in, width, "W_V")
        self.W_pQ = ad.init_weight(rng, width, width, "W_pQ")
        self.W_pK = ad.init_weight(rng, width, width, "W_pK")
        self.W_pV = ad.init_weight(rng, width, width, "W_pV")
        self.W_O = ad.init_weight(rng, width, d_out, "W_O")

    def __call__(self, query, rows, seg, n_queries: int, return_weights: bool = False):
        """Attend ``n_queries`` query rows over ``rows`` grouped by ``seg``.

        Queries without rows come out as zero vectors.
        """
        q = ad.matmul(query, self.W_Q)
        rows = ad.as_tensor(rows)
        if rows.shape[1] != self.row_in:
            raise ad.ShapeError("neighbor rows have width %d, expected %d"
                                % (rows.shape[1], self.row_in))
        K = ad.matmul(rows, self.W_K)
        V = ad.matmul(rows, self.W_V)
        Qh, Kh, Vh = q @ self.W_pQ, K @ self.W_pK, V @ self.W_pV
        inv = 1.0 / np.sqrt(self.d_head)
        heads, weights = [], []
        for p in range(self.heads):
            lo, hi = p * self.d_head, (p + 1) * self.d_head
            qs, ks, vs = (ad.slice_cols(x, lo, hi) for x in (Qh, Kh, Vh))
            score = ad.scale(ad.sum_cols(ad.mul(ad.gather_rows(qs, seg), ks)), inv)
            alpha = ad.segment_softmax(score, seg, n_queries)
            heads.append(ad.segment_sum(ad.mul(alpha, vs), seg, n_queries))
            weights.append(alpha.data[:, 0])
        out = ad.matmul(ad.concat(heads), self.W_O)
        return (out, weights) if return_weights else out


def neighbor_row(h_neighbor, phi_dt, motif_feat, W_e, edge_feat=None) -> ad.Tensor:
    """Neighbor rows ``h || phi(t - tau) || log1p-scaled motifs @ W_e [|| x(e)]``.

    ``motif_feat`` is expected already transformed (log1p or raw); pass zeros
    to switch motif information off.
    """
    parts = [h_neighbor, phi_dt, ad.matmul(motif_feat, W_e)]
    if edge_feat is not None and np.shape(edge_feat)[-1] > 0:
        parts.append(edge_feat)
    return ad.concat(parts)


def attend(query_src, rows, block: AttentionBlock, phi_zero) -> ad.Tensor:
    """Single-query convenience: ``query_src`` is one vector, ``rows`` a matrix."""
    query = ad.concat([np.atleast_2d(query_src) if not isinstance(query_src, ad.Tensor) else query_src,
                       phi_zero])
    rows = ad.as_tensor(np.atleast_2d(rows) if not isinstance(rows, ad.Tensor) else rows)
    if rows.shape[0] == 0:
        raise ValueError("attend needs at least one neighbor row")
    return block(query, rows, np.zeros(rows.shape[0], dtype=np.int64), 1)


class AggregationLayer(ad.Module):
    """One hop: historical and current attention blocks plus the combiner MLP."""

    def __init__(self, d_in: int, d_out: int, d_time2: int, motif_in: int, motif_proj: int,
                 edge_dim: int, heads: int, rng):
        q_in = d_in + d_time2
        row_in = d_in + d_time2 + motif_proj + edge_dim
        self.d_in, self.d_out = d_in, d_out
        self.his = AttentionBlock(q_in, row_in, d_out, heads, d_out, motif_in, motif_proj, rng)
        self.cur = AttentionBlock(q_in, row_in, d_out, heads, d_out, motif_in, motif_proj, rng)
        self.combine = MLP(d_in + 2 * d_out, d_out, d_out, rng)

    def __call__(self, h_self, query, child_h, phi_dt, motif, edge_feat, parent, comp,
                 n_parents: int) -> ad.Tensor:
        outs = {}
        for name, block, which in (("his", self.his, HIS), ("cur", self.cur, CUR)):
            sel = np.flatnonzero(comp == which)
            rows = neighbor_row(ad.gather_rows(child_h, sel), ad.gather_rows(phi_dt, sel),
                                motif[sel], block.W_e,
                                edge_feat[sel] if edge_feat is not None else None)
            outs[name] = block(query, rows, parent[sel], n_parents)
        return self.combine(ad.concat([h_self, outs["cur"], outs["his"]]))


def aggregate_layer(target_state, his_rows, cur_rows, layer: AggregationLayer, phi_zero) -> ad.Tensor:
    """Combine one target's state with its historical and current neighbor rows.

    Rows are already-built neighbor matrices (possibly with zero rows).
    """
    h = ad.as_tensor(np.atleast_2d(target_state) if not isinstance(target_state, ad.Tensor)
                     else target_state)
    query = ad.concat([h, phi_zero])
    outs = []
    for block, rows in ((layer.cur, cur_rows), (layer.his, his_rows)):
        rows = ad.as_tensor(np.zeros((0, block.row_in)) if rows is None else rows)
        outs.append(block(query, rows, np.zeros(rows.shape[0], dtype=np.int64), 1))
    return layer.combine(ad.concat([h, outs[0], outs[1]]))


class Embedder(ad.Module):
    """Stacked aggregation layers evaluated bottom-up over a SubgraphBatch."""

    def __init__(self, d_mem: int, d_embed: int, d_time: int, motif_in: int, motif_proj: int,
                 edge_dim: int, heads: int, layers: int, rng):
        self.time_encoder = TimeEncoder(d_time)
        self.d_mem, self.d_embed = d_mem, d_embed
        self.motif_in = motif_in
        self.edge_dim = edge_dim
        self.layers = [AggregationLayer(d_mem if l == 0 else d_embed, d_embed,
                                        2 * d_time, motif_in, motif_proj, edge_dim, heads, rng)
                       for l in range(layers)]

    def __call__(self, batch: SubgraphBatch, memory_rows, motif_table, edge_table=None,
                 use_motif: bool = True, log1p: bool = True) -> ad.Tensor:
        """Embeddings of the batch roots.

        ``memory_rows(nodes)`` returns the (tape-aware) memory rows used as
        depth-0 representations; ``motif_table`` holds raw per-edge counts.
        """
        L = len(self.layers)
        if batch.hops != L:
            raise ValueError("subgraph has %d hops but the model stacks %d layers" % (batch.hops, L))
        H = [memory_rows(batch.level_nodes(d)) for d in range(L + 1)]
        phi0 = self.time_encoder.encode(np.zeros(1))
        child = {}
        for d in range(1, L + 1):
            lv = batch.levels[d]
            dt = np.maximum(batch.times[lv["root"]] - lv["tau"], 0.0)
            if use_motif and len(lv["eid"]):
                raw = np.asarray(motif_table[lv["eid"]], dtype=float)
                motif = np.log1p(raw) if log1p else raw
            else:
                motif = np.zeros((len(lv["eid"]), self.motif_in))
            edge = edge_table[lv["eid"]] if edge_table is not None and self.edge_dim else None
            child[d] = (self.time_encoder.encode(dt) if len(dt) else
                        ad.Tensor(np.zeros((0, self.time_encoder.out_dim))), motif, edge, lv)
        for l, layer in enumerate(self.layers, start=1):
            new_H = []
            for d in range(0, L - l + 1):
                phi_dt, motif, edge, lv = child[d + 1]
                n_parents = batch.level_size(d)
                query = ad.concat([H[d], ad.gather_rows(phi0, np.zeros(n_parents, dtype=np.int64))])
                new_H.append(layer(H[d], query, H[d + 1], phi_dt, motif, edge,
                                   lv["parent"], lv["comp"], n_parents))
            H = new_H
        return H[0]

"""Full link-prediction network: memory GRU, neighbor aggregation, scoring head."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .attention import MLP, Embedder
from .memory import GRUCell

PROB_EPS = 1e-12


class LinkModel(ad.Module):
    def __init__(self, d_mem: int, d_embed: int, d_time: int, motif_width: int, motif_proj: int,
                 edge_dim: int, heads: int, layers: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.gru = GRUCell(2 * d_mem + 1, d_mem, rng)
        self.embedder = Embedder(d_mem, d_embed, d_time, motif_width, motif_proj, edge_dim,
                                 heads, layers, rng)
        self.head = MLP(2 * d_embed, d_embed, 1, rng)


def predict_link(z_i, z_j, head: MLP) -> ad.Tensor:
    """Interaction probability ``sigmoid(f(z_i || z_j))``, one per row."""
    z_i = ad.as_tensor(np.atleast_2d(z_i) if not isinstance(z_i, ad.Tensor) else z_i)
    z_j = ad.as_tensor(np.atleast_2d(z_j) if not isinstance(z_j, ad.Tensor) else z_j)
    if z_i.shape != z_j.shape:
        raise ad.ShapeError("embedding shapes differ: %s vs %s" % (z_i.shape, z_j.shape))
    return ad.sigmoid(head(ad.concat([z_i, z_j])))


def batch_loss(p_pos, p_neg) -> ad.Tensor:
    """Summed cross-entropy over positive/negative pairs, probabilities clamped."""
    p_pos = ad.clip(p_pos, PROB_EPS, 1.0 - PROB_EPS)
    p_neg = ad.clip(p_neg, PROB_EPS, 1.0 - PROB_EPS)
    return ad.scale(ad.reduce_sum(ad.log(p_pos)) + ad.reduce_sum(ad.log(1.0 - p_neg)), -1.0)

"""Central finite-difference checks of every differentiable layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import MLP, AttentionBlock
from .memory import GRUCell
from .model import predict_link
from .time_encoding import TimeEncoder

STEP = 1e-5
TOLERANCE = 1e-4
# gradients smaller than this are compared absolutely; float64 central
# differences at h = 1e-5 carry ~1e-10 of rounding noise
GRAD_FLOOR = 1e-5

LAYERS = ("gru_cell", "time_encoder", "attention_block", "combiner", "prediction_head")


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRAD_FLOOR) -> float:
    a, n = np.asarray(analytic, float), np.asarray(numeric, float)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(loss_fn, tensor: ad.Tensor, h: float = STEP) -> np.ndarray:
    """Central differences of the scalar ``loss_fn()`` w.r.t. every entry of ``tensor``."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for k in range(flat.size):
        keep = flat[k]
        flat[k] = keep + h
        up = float(loss_fn().data)
        flat[k] = keep - h
        down = float(loss_fn().data)
        flat[k] = keep
        out[k] = (up - down) / (2.0 * h)
    return grad


def check_gradients(loss_fn, params: dict, h: float = STEP) -> dict:
    """Max relative error per named tensor between taped and numeric gradients."""
    for p in params.values():
        p.grad = None
    with ad.Tape():
        ad.backward(loss_fn())
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for k, p in params.items()}
    return {k: relative_error(analytic[k], numeric_gradient(loss_fn, p, h))
            for k, p in params.items()}


def _leaf(rng, *shape, scale=1.0) -> ad.Tensor:
    return ad.Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def _projected(out: ad.Tensor, rng) -> callable:
    # random linear read-out so every output entry reaches the loss
    weights = rng.normal(size=out.shape)
    return lambda t: ad.reduce_sum(ad.mul(t, weights))


def _gru_case(rng):
    cell = GRUCell(5, 4, rng)
    msg, prev = _leaf(rng, 3, 5), _leaf(rng, 3, 4)
    read = _projected(cell(msg, prev), rng)
    params = {**cell.parameters(), "message": msg, "prev": prev}
    return (lambda: read(cell(msg, prev))), params


def _time_case(rng):
    enc = TimeEncoder(4, omegas=rng.uniform(0.05, 1.5, size=4))
    dt = rng.uniform(0.0, 5.0, size=6)
    read = _projected(enc.encode(dt), rng)
    return (lambda: read(enc.encode(dt))), enc.parameters()


def _attention_case(rng):
    block = AttentionBlock(q_in=5, row_in=7, width=4, heads=2, d_out=3, motif_in=3,
                           motif_proj=2, rng=rng)
    query, rows = _leaf(rng, 3, 5), _leaf(rng, 6, 7)
    # query 1 has no rows, so its empty-segment output must stay gradient-free
    seg = np.array([0, 0, 2, 2, 2, 0])
    read = _projected(block(query, rows, seg, 3), rng)
    params = {k: v for k, v in block.parameters().items() if k != "W_e"}
    params.update(query=query, rows=rows)
    return (lambda: read(block(query, rows, seg, 3))), params


def _combiner_case(rng):
    mlp = MLP(9, 4, 3, rng)
    h, cur, his = _leaf(rng, 4, 3), _leaf(rng, 4, 3), _leaf(rng, 4, 3)

    def forward():
        return mlp(ad.concat([h, cur, his]))

    read = _projected(forward(), rng)
    return (lambda: read(forward())), {**mlp.parameters(), "h": h, "cur": cur, "his": his}


def _head_case(rng):
    head = MLP(8, 4, 1, rng)
    z_i, z_j = _leaf(rng, 5, 4), _leaf(rng, 5, 4)

    def forward():
        p = predict_link(z_i, z_j, head)
        return ad.reduce_sum(ad.log(p))

    return forward, {**head.parameters(), "z_i": z_i, "z_j": z_j}


_CASES = {
    "gru_cell": _gru_case,
    "time_encoder": _time_case,
    "attention_block": _attention_case,
    "combiner": _combiner_case,
    "prediction_head": _head_case,
}


@dataclass
class LayerReport:
    layer: str
    max_rel_error: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= TOLERANCE


def check_layer(layer: str, seed: int, h: float = STEP) -> float:
    fn, params = _CASES[layer](np.random.default_rng(seed))
    return max(check_gradients(fn, params, h).values())


def run_suite(seeds=range(20), layers=LAYERS, h: float = STEP) -> list:
    """Worst relative error of each layer over ``seeds``."""
    seeds = list(seeds)
    return [LayerReport(name, max(check_layer(name, s, h) for s in seeds), len(seeds))
            for name in layers]

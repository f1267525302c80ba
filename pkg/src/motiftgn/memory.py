"""Per-node memory vectors updated by a GRU cell from interaction messages."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


class GRUCell(ad.Module):
    """Gated update of a node memory from a message vector.

    Row-vector convention: ``z = sigmoid(m @ W_z + s @ U_z + b_z)`` and so on,
    with ``W_*`` of shape ``(d_msg, d_mem)`` and ``U_*`` of shape ``(d_mem, d_mem)``.
    """

    def __init__(self, d_msg: int, d_mem: int, rng: np.random.Generator):
        self.d_msg, self.d_mem = d_msg, d_mem
        self.W_z = ad.init_weight(rng, d_msg, d_mem, "W_z")
        self.U_z = ad.init_weight(rng, d_mem, d_mem, "U_z")
        self.b_z = ad.init_bias(d_mem, "b_z")
        self.W_r = ad.init_weight(rng, d_msg, d_mem, "W_r")
        self.U_r = ad.init_weight(rng, d_mem, d_mem, "U_r")
        self.b_r = ad.init_bias(d_mem, "b_r")
        self.W_c = ad.init_weight(rng, d_msg, d_mem, "W_c")
        self.U_c = ad.init_weight(rng, d_mem, d_mem, "U_c")
        self.b_c = ad.init_bias(d_mem, "b_c")

    def __call__(self, message, prev) -> ad.Tensor:
        message, prev = ad.as_tensor(message), ad.as_tensor(prev)
        if message.shape[-1] != self.d_msg or prev.shape[-1] != self.d_mem:
            raise ad.ShapeError("GRU expects message width %d and memory width %d, got %s and %s"
                                % (self.d_msg, self.d_mem, message.shape, prev.shape))
        z = ad.sigmoid(message @ self.W_z + prev @ self.U_z + self.b_z)
        r = ad.sigmoid(message @ self.W_r + prev @ self.U_r + self.b_r)
        c = ad.tanh(message @ self.W_c + ad.mul(r, prev) @ self.U_c + self.b_c)
        return ad.mul(1.0 - z, prev) + ad.mul(z, c)


def gru_update(message, prev, params: GRUCell) -> ad.Tensor:
    message = np.atleast_2d(message) if not isinstance(message, ad.Tensor) else message
    prev = np.atleast_2d(prev) if not isinstance(prev, ad.Tensor) else prev
    return params(message, prev)


def build_message(mem_i, mem_j, delta_t: float) -> np.ndarray:
    """Concatenate both endpoint memories and the elapsed time of ``i``."""
    mem_i, mem_j = np.asarray(mem_i, float), np.asarray(mem_j, float)
    if mem_i.shape != mem_j.shape or mem_i.ndim != 1:
        raise ValueError("memory vectors must be 1-D of equal length, got %s and %s"
                         % (mem_i.shape, mem_j.shape))
    return np.concatenate([mem_i, mem_j, [float(delta_t)]])


class NodeMemory:
    """Memory table plus, during a taped step, differentiable rows for touched nodes."""

    def __init__(self, num_nodes: int, d_mem: int):
        self.num_nodes = num_nodes
        self.d_mem = d_mem
        self.log_updates = False
        self.reset()

    def reset(self) -> None:
        self.state = np.zeros((self.num_nodes, self.d_mem))
        self.last_update = np.full(self.num_nodes, np.nan)
        self.update_log: list = []
        self._overlay_nodes = np.zeros(0, dtype=np.int64)
        self._overlay = None

    def copy(self) -> "NodeMemory":
        out = NodeMemory(self.num_nodes, self.d_mem)
        out.state = self.state.copy()
        out.last_update = self.last_update.copy()
        out.log_updates = self.log_updates
        out.update_log = list(self.update_log)
        return out

    def detach(self) -> None:
        """Drop the differentiable overlay; the numeric state is kept."""
        self._overlay_nodes = np.zeros(0, dtype=np.int64)
        self._overlay = None

    def rows(self, nodes) -> ad.Tensor:
        """Memory rows for ``nodes``, tape-connected where an overlay exists."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if self._overlay is None:
            return ad.Tensor(self.state[nodes])
        pos = np.full(self.num_nodes, -1, dtype=np.int64)
        pos[self._overlay_nodes] = np.arange(len(self._overlay_nodes))
        p = pos[nodes]
        # stack [overlay; constant table] and gather once
        table = ad.concat([self._overlay, ad.Tensor(self.state)], axis=0)
        idx = np.where(p >= 0, p, len(self._overlay_nodes) + nodes)
        return ad.gather_rows(table, idx)


def _schedule(src, dst, max_len):
    """Dependency waves and the kept-message mask for one batch.

    Returns ``wave`` (per edge) and ``keep`` of shape ``(E, 2)`` telling
    whether the src-role / dst-role message of each edge is applied.
    """
    n = len(src)
    wave = np.zeros(n, dtype=np.int64)
    last_wave: dict = {}
    per_node: dict = {}
    for k in range(n):
        s, d = int(src[k]), int(dst[k])
        w = 1 + max(last_wave.get(s, -1), last_wave.get(d, -1))
        wave[k] = w
        last_wave[s] = last_wave[d] = w
        per_node.setdefault(s, []).append((k, 0))
        if d != s:  # a self-loop updates its node once
            per_node.setdefault(d, []).append((k, 1))
    keep = np.zeros((n, 2), dtype=bool)
    for msgs in per_node.values():
        for k, role in msgs[-max_len:]:
            keep[k, role] = True
    return wave, keep


def apply_batch(memory: NodeMemory, batch, params: GRUCell, max_len: int = 5,
                time_scale: float = 1.0, frozen: bool = False) -> NodeMemory:
    """Apply the batch's interaction messages to ``memory`` in time order.

    ``batch`` is a sequence of :class:`~motiftgn.graph.TemporalEdge` or a
    tuple of arrays ``(src, dst, ts, edge_ids)``. Each node keeps only its
    ``max_len`` latest messages. A message reads both endpoints' memories
    as they stand just before the interaction. Elapsed times are divided by
    ``time_scale``. With ``frozen`` the call is the identity.
    """
    if isinstance(batch, tuple) and len(batch) == 4:
        src, dst, ts, eids = (np.asarray(a) for a in batch)
    else:
        batch = list(batch)
        src = np.array([e.src for e in batch], dtype=np.int64)
        dst = np.array([e.dst for e in batch], dtype=np.int64)
        ts = np.array([e.timestamp for e in batch], dtype=float)
        eids = np.array([e.edge_id for e in batch], dtype=np.int64)
    if len(src) == 0 or frozen:
        return memory
    if np.any(np.diff(ts) < 0):
        raise ValueError("batch must be sorted chronologically")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")

    wave, keep = _schedule(src, dst, max_len)

    # elapsed time since each endpoint's previous interaction (kept or not)
    delta = np.zeros((len(src), 2))
    prev_t = memory.last_update.copy()
    for k in range(len(src)):
        for role, v in ((0, src[k]), (1, dst[k])):
            pt = prev_t[v]
            delta[k, role] = 0.0 if np.isnan(pt) else (ts[k] - pt) / time_scale
        prev_t[src[k]] = prev_t[dst[k]] = ts[k]

    touched = np.union1d(np.union1d(src, dst), memory._overlay_nodes).astype(np.int64)
    loc = np.full(memory.num_nodes, -1, dtype=np.int64)
    loc[touched] = np.arange(len(touched))
    table = memory.rows(touched)

    for w in range(int(wave.max()) + 1):
        ks = np.flatnonzero(wave == w)
        own, other, dts, edge_ids = [], [], [], []
        for k in ks:
            for role in (0, 1):
                if keep[k, role]:
                    i, j = (src[k], dst[k]) if role == 0 else (dst[k], src[k])
                    own.append(i)
                    other.append(j)
                    dts.append(delta[k, role])
                    edge_ids.append(int(eids[k]))
        if not own:
            continue
        li, lj = loc[np.array(own)], loc[np.array(other)]
        s_i = ad.gather_rows(table, li)
        s_j = ad.gather_rows(table, lj)
        message = ad.concat([s_i, s_j, np.array(dts)[:, None]])
        table = ad.set_rows(table, li, params(message, s_i))
        if memory.log_updates:
            memory.update_log.extend(zip((int(v) for v in own), edge_ids))

    if not np.all(np.isfinite(table.data)):
        raise FloatingPointError("non-finite memory state after batch ending at edge %d"
                                 % int(eids[-1]))
    memory.state[touched] = table.data
    memory.last_update = prev_t
    memory._overlay_nodes = touched
    memory._overlay = table if table.requires_grad else None
    return memory

"""Multi-hop temporal subgraphs with historical/current neighbor partitions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graph import Adjacency, TemporalGraph

HIS, CUR = 0, 1


class NeighborRef(NamedTuple):
    node: int
    tau: float
    edge_id: int


class NeighborIndex:
    """Read-only neighbor lookups over a (possibly edge-filtered) touch index.

    Touches are addressed through an integer key ``owner * (U + 1) + rank(ts)``
    (``U`` distinct timestamps), which makes every window query a single
    vectorised ``searchsorted`` with exact tie handling.
    """

    def __init__(self, graph: TemporalGraph, edge_mask: np.ndarray | None = None,
                 out_only: bool = False):
        self.graph = graph
        adj: Adjacency = graph.adjacency_for(edge_mask)
        self.out_only = out_only
        if out_only:
            keep = adj.outgoing
            owner = np.repeat(np.arange(graph.num_nodes), np.diff(adj.indptr))
            counts = np.bincount(owner[keep], minlength=graph.num_nodes)
            indptr = np.zeros(graph.num_nodes + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            adj = Adjacency(indptr, adj.nbr[keep], adj.ts[keep], adj.eid[keep], adj.outgoing[keep])
        self.adj = adj
        self.uniq = np.unique(graph.ts)
        self.stride = len(self.uniq) + 1
        owner = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), np.diff(adj.indptr))
        self.keys = owner * self.stride + np.searchsorted(self.uniq, adj.ts)

    def _bound(self, nodes, t, side_of_t: str) -> np.ndarray:
        # first touch of each node with ts >= t ('left') or ts > t ('right')
        rank = np.searchsorted(self.uniq, t, side=side_of_t)
        return np.searchsorted(self.keys, nodes * self.stride + rank, side="left")

    def windows(self, nodes, t_low, horizon):
        """Index ranges ``(start, his_end, cur_start, cur_end)`` per query."""
        nodes = np.asarray(nodes, dtype=np.int64)
        start = self.adj.indptr[nodes]
        his_end = self._bound(nodes, t_low, "left")
        cur_start = self._bound(nodes, t_low, "right")
        cur_end = np.maximum(self._bound(nodes, horizon, "left"), cur_start)
        return start, his_end, cur_start, cur_end

    def _refs(self, lo: int, hi: int, n: int | None = None) -> list:
        # most recent first; ``n`` keeps only the n latest
        if n is not None:
            lo = max(lo, hi - n)
        adj = self.adj
        return [NeighborRef(int(adj.nbr[k]), float(adj.ts[k]), int(adj.eid[k]))
                for k in range(hi - 1, lo - 1, -1)]

    def before(self, node: int, t: float, n: int | None = None) -> list:
        start, his_end, _, _ = self.windows([node], [t], [t])
        return self._refs(int(start[0]), int(his_end[0]), n)

    def partition(self, node: int, t_low: float, horizon: float, n: int | None = None):
        """``(his, cur)``: touches strictly before ``t_low`` and strictly inside ``(t_low, horizon)``."""
        if t_low > horizon:
            raise ValueError("t_low %g exceeds horizon %g" % (t_low, horizon))
        start, his_end, cur_start, cur_end = (int(x[0]) for x in
                                              self.windows([node], [t_low], [horizon]))
        return self._refs(start, his_end, n), self._refs(cur_start, cur_end, n)


def _latest(lo: np.ndarray, hi: np.ndarray, n: int | np.ndarray):
    """Indices of the (up to) ``n`` last positions of each ``[lo, hi)``, descending.

    Returns ``(index, owner)`` where ``owner`` is the range number.
    """
    take = np.minimum(hi - lo, n).clip(min=0)
    owner = np.repeat(np.arange(len(lo)), take)
    first = np.cumsum(take) - take
    within = np.arange(take.sum()) - np.repeat(first, take)
    return np.repeat(hi, take) - 1 - within, owner


def partition_neighbors(graph, anchor, horizon: float, out_only: bool = False):
    """Historical and current touches of ``anchor = (node, t_low)``."""
    index = graph if isinstance(graph, NeighborIndex) else NeighborIndex(graph, out_only=out_only)
    node, t_low = anchor
    return index.partition(int(node), float(t_low), float(horizon))


def sample_recent(candidates, n: int) -> list:
    """The ``n`` most recent candidates, most recent first (stable on ties)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ranked = sorted(enumerate(candidates), key=lambda kv: (-kv[1].tau, kv[0]))
    return [c for _, c in ranked[:n]]


@dataclass
class SubgraphBatch:
    """Flat, row-stacked subgraphs for many roots.

    ``levels[d]`` (d >= 1) holds parallel arrays for depth-d entries:
    ``node``, ``tau``, ``eid``, ``parent`` (row in depth d-1), ``comp``
    (0 historical, 1 current) and ``root`` (row in depth 0).
    """

    roots: np.ndarray
    times: np.ndarray
    levels: list = field(default_factory=list)

    @property
    def hops(self) -> int:
        return len(self.levels) - 1

    def level_nodes(self, d: int) -> np.ndarray:
        return self.roots if d == 0 else self.levels[d]["node"]

    def level_size(self, d: int) -> int:
        return len(self.level_nodes(d))


def build_subgraphs(index: NeighborIndex, roots, times, hops: int = 2, n: int = 10,
                    bicomponent: bool = True) -> SubgraphBatch:
    """Expand every ``(root, t)`` hop by hop into a :class:`SubgraphBatch`.

    Hop 1 takes the root's ``n`` latest touches before ``t`` as historical
    neighbors (no current component). Deeper hops expand each entry
    ``(v, tau)`` into touches before ``tau`` and touches in ``(tau, t)``,
    each side capped at ``n``. Without ``bicomponent`` both sides are merged
    into a single historical list capped at ``n``.
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    roots = np.asarray(roots, dtype=np.int64)
    times = np.asarray(times, dtype=float)
    batch = SubgraphBatch(roots, times, [None])

    start, his_end, _, _ = index.windows(roots, times, times)
    k, parent = _latest(start, his_end, n)
    batch.levels.append(_level(index, k, parent, np.full(len(k), HIS), np.arange(len(roots))))

    for _ in range(2, hops + 1):
        prev = batch.levels[-1]
        horizon = times[prev["root"]]
        start, his_end, cur_start, cur_end = index.windows(prev["node"], prev["tau"], horizon)
        if bicomponent:
            kc, pc = _latest(cur_start, cur_end, n)
            kh, ph = _latest(start, his_end, n)
            comp = np.r_[np.full(len(kh), HIS), np.full(len(kc), CUR)]
            k, parent = np.r_[kh, kc], np.r_[ph, pc]
        else:
            # n latest of the union: current touches first, then historical
            kc, pc = _latest(cur_start, cur_end, n)
            room = n - np.minimum(cur_end - cur_start, n)
            kh, ph = _latest(start, his_end, room)
            k, parent = np.r_[kc, kh], np.r_[pc, ph]
            comp = np.full(len(k), HIS)
        order = np.lexsort((-index.adj.ts[k], comp, parent)) if len(k) else np.zeros(0, int)
        batch.levels.append(_level(index, k[order], parent[order], comp[order], prev["root"]))
    return batch


def _level(index: NeighborIndex, k, parent, comp, parent_root) -> dict:
    parent = np.asarray(parent, dtype=np.int64)
    return {
        "node": index.adj.nbr[k],
        "tau": index.adj.ts[k],
        "eid": index.adj.eid[k],
        "parent": parent,
        "comp": np.asarray(comp, dtype=np.int64),
        "root": np.asarray(parent_root, dtype=np.int64)[parent],
    }


@dataclass
class TemporalSubgraph:
    """Nested view of one root's subgraph.

    ``layers[l]`` lists, for every entry of the previous frontier (the root
    itself for ``l = 0``), a ``(his, cur)`` pair of :class:`NeighborRef` lists.
    """

    root: int
    t: float
    layers: list
    flat: SubgraphBatch = field(repr=False, default=None)

    @property
    def hops(self) -> int:
        return len(self.layers)

    def refs(self, hop: int) -> list:
        """All references at ``hop`` (1-based) in frontier order, his before cur."""
        out = []
        for his, cur in self.layers[hop - 1]:
            out.extend(his)
            out.extend(cur)
        return out


def build_subgraph(graph, root: int, t: float, hops: int = 2, n: int = 10,
                   bicomponent: bool = True, out_only: bool = False) -> TemporalSubgraph:
    index = graph if isinstance(graph, NeighborIndex) else NeighborIndex(graph, out_only=out_only)
    flat = build_subgraphs(index, [root], [t], hops, n, bicomponent)
    layers = []
    for d in range(1, hops + 1):
        lv = flat.levels[d]
        pairs = []
        for parent in range(flat.level_size(d - 1)):
            sel = np.flatnonzero(lv["parent"] == parent)
            his = [NeighborRef(int(lv["node"][k]), float(lv["tau"][k]), int(lv["eid"][k]))
                   for k in sel if lv["comp"][k] == HIS]
            cur = [NeighborRef(int(lv["node"][k]), float(lv["tau"][k]), int(lv["eid"][k]))
                   for k in sel if lv["comp"][k] == CUR]
            pairs.append((his, cur))
        layers.append(pairs)
    return TemporalSubgraph(int(root), float(t), layers, flat)

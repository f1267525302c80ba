"""Seeded synthetic streams for learning checks."""

from __future__ import annotations

import numpy as np

from .graph import DIRECTED, TemporalGraph


def periodic_triangles(num_nodes: int = 20, num_edges: int = 2000, num_triangles: int = 10,
                       noise: float = 0.1, gap: float = 3.0, seed: int = 0) -> TemporalGraph:
    """Directed stream replaying a fixed schedule of triangles.

    ``num_triangles`` node triples are drawn once; the schedule visits them
    in a fixed cyclic order, each visit emitting ``a->b, b->c, c->a`` one
    time unit apart, visits separated by ``gap``. After each scheduled edge,
    with probability ``noise``, an extra uniformly random edge is inserted
    half a time unit later, so scheduled triangles always stay intact.
    """
    rng = np.random.default_rng(seed)
    tris = [rng.choice(num_nodes, size=3, replace=False) for _ in range(num_triangles)]
    src, dst, ts = [], [], []
    t = 0.0
    k = 0
    while len(src) < num_edges:
        a, b, c = tris[k % num_triangles]
        for u, v in ((a, b), (b, c), (c, a)):
            if len(src) == num_edges:
                break
            src.append(int(u))
            dst.append(int(v))
            ts.append(t)
            if rng.random() < noise and len(src) < num_edges:
                x, y = rng.choice(num_nodes, size=2, replace=False)
                src.append(int(x))
                dst.append(int(y))
                ts.append(t + 0.5)
            t += 1.0
        t += gap
        k += 1
    return TemporalGraph(np.array(src), np.array(dst), np.array(ts), num_nodes, DIRECTED)


def recency_features(graph: TemporalGraph, src, dst, t) -> np.ndarray:
    """Hand-made recency features of candidate pairs for a logistic baseline.

    Columns: log1p time since the pair last interacted (either direction),
    log1p past pair count, log1p time since ``dst`` was last active, and
    indicators for "never interacted" / "dst never active".
    """
    out = np.zeros((len(src), 5))
    for k, (u, v, tt) in enumerate(zip(src, dst, t)):
        before = graph.ts < tt
        pair = before & (((graph.src == u) & (graph.dst == v)) | ((graph.src == v) & (graph.dst == u)))
        active = before & ((graph.src == v) | (graph.dst == v))
        if pair.any():
            out[k, 0] = np.log1p(tt - graph.ts[pair].max())
            out[k, 1] = np.log1p(pair.sum())
        else:
            out[k, 3] = 1.0
        if active.any():
            out[k, 2] = np.log1p(tt - graph.ts[active].max())
        else:
            out[k, 4] = 1.0
    return out

"""Delta-temporal motif instance enumeration and positional edge features."""

from __future__ import annotations

import os
import struct
from bisect import bisect_right
from dataclasses import dataclass
from importlib import resources
from typing import Iterator, Sequence

import numpy as np

from .graph import BIPARTITE, TemporalGraph

MAX_MOTIF_EDGES = 5
DEFAULT_CATALOGS = ("directed_default", "bipartite_default")

FEATURE_MAGIC = b"TMFT"
FEATURE_VERSION = 1


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class MotifSpec:
    motif_id: int
    edges: tuple  # ((src_label, dst_label), ...) in temporal order
    directed: bool = True

    @property
    def length(self) -> int:
        return len(self.edges)

    @property
    def num_nodes(self) -> int:
        return 1 + max(max(e) for e in self.edges)

    def validate(self) -> None:
        if not self.edges:
            raise CatalogError("motif %d has no edges" % self.motif_id)
        if len(self.edges) > MAX_MOTIF_EDGES:
            raise CatalogError("motif %d has %d edges; at most %d supported"
                               % (self.motif_id, len(self.edges), MAX_MOTIF_EDGES))
        labels = {v for e in self.edges for v in e}
        if min(labels) < 0 or labels != set(range(len(labels))):
            raise CatalogError("motif %d: label gap in %s" % (self.motif_id, sorted(labels)))
        if any(a == b for a, b in self.edges):
            raise CatalogError("motif %d: self-loop edge" % self.motif_id)
        # connectivity of the underlying undirected multigraph
        parent = list(range(len(labels)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.edges:
            parent[find(a)] = find(b)
        if len({find(v) for v in labels}) != 1:
            raise CatalogError("motif %d is disconnected" % self.motif_id)


@dataclass
class MotifCatalog:
    motifs: list
    delta: float = 86400.0
    network_class: str = "directed-homogeneous"

    def __post_init__(self):
        if self.delta <= 0:
            raise CatalogError("delta must be positive")
        if not self.motifs:
            raise CatalogError("empty motif catalog")
        for m in self.motifs:
            m.validate()
        directed = {m.directed for m in self.motifs}
        if len(directed) != 1:
            raise CatalogError("directedness mismatch: catalog mixes directed and undirected motifs")
        expected = "directed-homogeneous" if self.directed else "bipartite"
        if self.network_class != expected:
            raise CatalogError("directedness mismatch: %s motifs in a %s catalog"
                               % ("directed" if self.directed else "undirected", self.network_class))

    @property
    def directed(self) -> bool:
        return self.motifs[0].directed

    @property
    def width(self) -> int:
        return sum(m.length for m in self.motifs)

    def offsets(self) -> list:
        out, acc = [], 0
        for m in self.motifs:
            out.append(acc)
            acc += m.length
        return out

    def check_graph(self, graph: TemporalGraph) -> None:
        graph_directed = graph.directedness != BIPARTITE
        if graph_directed != self.directed:
            raise CatalogError("directedness mismatch: %s catalog for a %s graph"
                               % (self.network_class, graph.directedness))

    def __len__(self):
        return len(self.motifs)

    def __iter__(self):
        return iter(self.motifs)


def parse_catalog(text: str, delta: float = 86400.0, source: str = "<catalog>") -> MotifCatalog:
    """Parse the ``motif <id> directed|undirected`` / ``edge a b`` block format."""
    motifs = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "motif":
            if len(parts) != 3 or parts[2] not in ("directed", "undirected"):
                raise CatalogError("%s:%d: expected 'motif <id> directed|undirected'" % (source, lineno))
            if current is not None:
                motifs.append(current)
            current = (int(parts[1]), parts[2] == "directed", [])
        elif parts[0] == "edge":
            if current is None:
                raise CatalogError("%s:%d: edge outside a motif block" % (source, lineno))
            if len(parts) != 3:
                raise CatalogError("%s:%d: expected 'edge <src> <dst>'" % (source, lineno))
            current[2].append((int(parts[1]), int(parts[2])))
        else:
            raise CatalogError("%s:%d: unknown directive %r" % (source, lineno, parts[0]))
    if current is not None:
        motifs.append(current)
    specs = [MotifSpec(mid, tuple(edges), directed) for mid, directed, edges in motifs]
    if not specs:
        raise CatalogError("%s: no motifs" % source)
    network_class = "directed-homogeneous" if specs[0].directed else "bipartite"
    return MotifCatalog(specs, delta, network_class)


def load_catalog(path: str, delta: float = 86400.0) -> MotifCatalog:
    """Load a catalog file, or one of the shipped defaults by name."""
    if path in DEFAULT_CATALOGS:
        text = resources.files("motiftgn").joinpath("catalogs", path + ".motifs").read_text()
        return parse_catalog(text, delta, path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_catalog(fh.read(), delta, path)


# -- enumeration --------------------------------------------------------------

class _Index:
    """Plain-list view of the touch index; bisect on lists beats numpy per call."""

    def __init__(self, graph: TemporalGraph):
        adj = graph.adjacency
        self.indptr = adj.indptr.tolist()
        self.nbr = adj.nbr.tolist()
        self.eid = adj.eid.tolist()
        self.out = adj.outgoing.tolist()
        self.src = graph.src.tolist()
        self.dst = graph.dst.tolist()
        self.ts = graph.ts.tolist()


def _iter_from_anchor(ix: _Index, motif: MotifSpec, delta: float, anchor: int) -> Iterator[tuple]:
    edges = motif.edges
    length = len(edges)
    directed = motif.directed
    mapping = [-1] * motif.num_nodes
    seq = [anchor]
    t_end = ix.ts[anchor] + delta
    ts = ix.ts

    def bind_free(e, a, b):
        # both labels unbound: yield each admissible orientation
        s, d = ix.src[e], ix.dst[e]
        if s == d:
            return
        used = mapping
        for x, y in ((s, d), (d, s)) if not directed else ((s, d),):
            if x in used or y in used:
                continue
            mapping[a], mapping[b] = x, y
            yield
            mapping[a], mapping[b] = -1, -1

    def extend(p):
        if p == length:
            yield tuple(seq)
            return
        a, b = edges[p]
        prev = seq[-1]
        xa, xb = mapping[a], mapping[b]
        if xa >= 0 or xb >= 0:
            if xa >= 0:
                owner, other_label, want_out = xa, b, True
            else:
                owner, other_label, want_out = xb, a, False
            want = mapping[other_label]
            lo, hi = ix.indptr[owner], ix.indptr[owner + 1]
            k = bisect_right(ix.eid, prev, lo, hi)
            while k < hi:
                e = ix.eid[k]
                if ts[e] > t_end:
                    break
                y = ix.nbr[k]
                if y != owner and (not directed or ix.out[k] == want_out):
                    if want >= 0:
                        if y == want:
                            seq.append(e)
                            yield from extend(p + 1)
                            seq.pop()
                    elif y not in mapping:
                        mapping[other_label] = y
                        seq.append(e)
                        yield from extend(p + 1)
                        seq.pop()
                        mapping[other_label] = -1
                k += 1
        else:
            e = prev + 1
            n = len(ts)
            while e < n and ts[e] <= t_end:
                for _ in bind_free(e, a, b):
                    seq.append(e)
                    yield from extend(p + 1)
                    seq.pop()
                e += 1

    a, b = edges[0]
    for _ in bind_free(anchor, a, b):
        yield from extend(1)


def _instances_from_anchor(ix: _Index, motif: MotifSpec, delta: float, anchor: int) -> list:
    found = _iter_from_anchor(ix, motif, delta, anchor)
    if motif.directed:
        # a directed edge sequence fixes the node mapping, so no duplicates arise
        return list(found)
    return sorted(set(found))


def enumerate_instances(graph: TemporalGraph, motif: MotifSpec, delta: float,
                        _index: _Index | None = None) -> list:
    """All instances of ``motif`` as ordered edge-id tuples, sorted.

    An instance is a subsequence of the time-sorted stream whose edges map
    onto the motif's edges, position by position, under an injective node
    mapping, and whose first and last edges lie at most ``delta`` apart.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    ix = _index or _Index(graph)
    out = []
    for anchor in range(graph.num_edges):
        out.extend(_instances_from_anchor(ix, motif, delta, anchor))
    return out


def _count_range(graph, catalog, causal, lo, hi, ix=None):
    ix = ix or _Index(graph)
    table = np.zeros((graph.num_edges, catalog.width), dtype=np.int64)
    ts = graph.ts
    for off, motif in zip(catalog.offsets(), catalog.motifs):
        cols = off + np.arange(motif.length)
        for anchor in range(lo, hi):
            inst = _instances_from_anchor(ix, motif, catalog.delta, anchor)
            if not inst:
                continue
            arr = np.asarray(inst, dtype=np.int64)
            if causal:
                last_t = ts[arr[:, -1]]
                keep = ts[arr] >= last_t[:, None]
                for p in range(motif.length):
                    np.add.at(table[:, cols[p]], arr[keep[:, p], p], 1)
            else:
                for p in range(motif.length):
                    np.add.at(table[:, cols[p]], arr[:, p], 1)
    return table


def _count_chunk(args):
    return _count_range(*args)


def build_edge_features(graph: TemporalGraph, catalog: MotifCatalog, causal: bool = False,
                        n_jobs: int = 1) -> np.ndarray:
    """Positional instance counts per edge, concatenated over the catalog.

    Column ``offset(M) + p`` of row ``e`` counts the instances of motif ``M``
    whose ``p``-th edge is ``e``. With ``causal`` an instance contributes to
    an edge only if the instance's last edge is no later than that edge.
    """
    catalog.check_graph(graph)
    if n_jobs <= 1 or graph.num_edges < 2 * n_jobs:
        return _count_range(graph, catalog, causal, 0, graph.num_edges)
    from concurrent.futures import ProcessPoolExecutor

    bounds = np.linspace(0, graph.num_edges, n_jobs + 1).astype(int)
    jobs = [(graph, catalog, causal, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        parts = list(pool.map(_count_chunk, jobs))
    return np.sum(parts, axis=0, dtype=np.int64)


# -- feature table containers -------------------------------------------------
# magic "TMFT" | u32 version | u64 rows | u64 cols | i64[rows*cols] row-major

_FHEADER = struct.Struct("<4sIQQ")


def save_features(table: np.ndarray, path: str) -> None:
    table = np.asarray(table)
    if table.ndim != 2:
        raise ValueError("feature table must be 2-D")
    if table.size and (table.min() < 0 or not np.all(np.equal(np.mod(table, 1), 0))):
        raise ValueError("feature table must hold non-negative integer counts")
    with open(path, "wb") as fh:
        fh.write(_FHEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, table.shape[0], table.shape[1]))
        fh.write(table.astype("<i8").tobytes())


def load_features(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _FHEADER.size:
        raise ValueError("%s: truncated feature table" % path)
    magic, version, rows, cols = _FHEADER.unpack_from(data, 0)
    if magic != FEATURE_MAGIC or version != FEATURE_VERSION:
        raise ValueError("%s: not a feature table (magic %r, version %d)" % (path, magic, version))
    if len(data) != _FHEADER.size + 8 * rows * cols:
        raise ValueError("%s: size does not match %dx%d header" % (path, rows, cols))
    return np.frombuffer(data, dtype="<i8", offset=_FHEADER.size).reshape(rows, cols).copy()


def save_features_csv(table: np.ndarray, path: str, catalog: MotifCatalog | None = None) -> None:
    header = None
    if catalog is not None:
        header = ",".join("M%d_p%d" % (m.motif_id, p + 1) for m in catalog for p in range(m.length))
    np.savetxt(path, np.asarray(table, dtype=np.int64), fmt="%d", delimiter=",",
               header=header or "", comments="")


def column_names(catalog: MotifCatalog) -> Sequence[str]:
    return ["M%d_p%d" % (m.motif_id, p + 1) for m in catalog for p in range(m.length)]

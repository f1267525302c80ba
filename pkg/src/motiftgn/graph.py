"""Temporal interaction streams: ingestion, adjacency index, splits, negatives."""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

DIRECTED = "directed"
BIPARTITE = "bipartite"

GRAPH_MAGIC = b"TGRF"
GRAPH_VERSION = 1


class GraphFormatError(ValueError):
    """Raised for malformed input files or containers."""


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class TemporalEdge:
    edge_id: int
    src: int
    dst: int
    timestamp: float
    features: tuple = ()


@dataclass
class Adjacency:
    """CSR index of incident touches, each node's slice sorted by edge id.

    Edge ids are assigned in timestamp order, so sorting by edge id is sorting
    by time with ties resolved by input order.
    """

    indptr: np.ndarray
    nbr: np.ndarray
    ts: np.ndarray
    eid: np.ndarray
    outgoing: np.ndarray  # True when the owning node is the edge's src

    def touches(self, node: int) -> slice:
        return slice(int(self.indptr[node]), int(self.indptr[node + 1]))

    def degree(self, node: int) -> int:
        return int(self.indptr[node + 1] - self.indptr[node])


def build_adjacency(src: np.ndarray, dst: np.ndarray, ts: np.ndarray,
                    num_nodes: int, edge_ids: np.ndarray | None = None) -> Adjacency:
    if edge_ids is None:
        edge_ids = np.arange(len(src), dtype=np.int64)
    owner = np.concatenate([src, dst])
    nbr = np.concatenate([dst, src])
    eid = np.concatenate([edge_ids, edge_ids])
    tt = np.concatenate([ts, ts])
    out = np.concatenate([np.ones(len(src), bool), np.zeros(len(dst), bool)])
    # owner major, then edge id; the out-touch of a self-loop precedes its in-touch
    order = np.lexsort((~out, eid, owner))
    counts = np.bincount(owner, minlength=num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return Adjacency(indptr=indptr, nbr=nbr[order].astype(np.int64), ts=tt[order],
                     eid=eid[order].astype(np.int64), outgoing=out[order])


@dataclass
class TemporalGraph:
    """Immutable time-sorted interaction stream with a per-node touch index."""

    src: np.ndarray
    dst: np.ndarray
    ts: np.ndarray
    num_nodes: int
    directedness: str = DIRECTED
    features: np.ndarray | None = None
    bipartite_boundary: int | None = None
    labels: list = field(default_factory=list)
    adjacency: Adjacency = field(init=False, repr=False)

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.ts = np.asarray(self.ts, dtype=np.float64)
        if not (len(self.src) == len(self.dst) == len(self.ts)):
            raise ValueError("src, dst and ts must have equal length")
        if len(self.ts) == 0:
            raise GraphFormatError("no edges")
        if np.any(np.diff(self.ts) < 0):
            raise ValueError("edges must be sorted by timestamp")
        if self.ts[0] < 0:
            raise ValueError("timestamps must be non-negative")
        if self.src.min() < 0 or self.dst.min() < 0:
            raise ValueError("node ids must be non-negative")
        if max(self.src.max(), self.dst.max()) >= self.num_nodes:
            raise ValueError("node id out of range for num_nodes=%d" % self.num_nodes)
        if self.directedness not in (DIRECTED, BIPARTITE):
            raise ValueError("unknown directedness %r" % self.directedness)
        if self.features is None:
            self.features = np.zeros((len(self.src), 0))
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) != len(self.src):
            raise ValueError("features must be a (num_edges, dim) array")
        if not self.labels:
            self.labels = list(range(self.num_nodes))
        self.adjacency = build_adjacency(self.src, self.dst, self.ts, self.num_nodes)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def directed(self) -> bool:
        return self.directedness == DIRECTED

    def edge(self, i: int) -> TemporalEdge:
        return TemporalEdge(i, int(self.src[i]), int(self.dst[i]), float(self.ts[i]),
                            tuple(self.features[i]))

    @property
    def edges(self) -> list[TemporalEdge]:
        return [self.edge(i) for i in range(self.num_edges)]

    def __len__(self):
        return self.num_edges

    def __iter__(self) -> Iterator[TemporalEdge]:
        return (self.edge(i) for i in range(self.num_edges))

    def destination_universe(self) -> np.ndarray:
        if self.directedness == BIPARTITE and self.bipartite_boundary is not None:
            return np.arange(self.bipartite_boundary, self.num_nodes)
        return np.arange(self.num_nodes)

    def mean_gap(self) -> float:
        """Mean inter-event gap of the stream; 1.0 for degenerate streams."""
        if self.num_edges < 2:
            return 1.0
        gap = (self.ts[-1] - self.ts[0]) / (self.num_edges - 1)
        return float(gap) if gap > 0 else 1.0

    def adjacency_for(self, edge_mask: np.ndarray | None = None) -> Adjacency:
        """Touch index restricted to the edges selected by ``edge_mask``."""
        if edge_mask is None:
            return self.adjacency
        ids = np.flatnonzero(edge_mask)
        return build_adjacency(self.src[ids], self.dst[ids], self.ts[ids],
                               self.num_nodes, edge_ids=ids)


def from_edges(rows: Sequence, directedness: str = DIRECTED, num_nodes: int | None = None,
               features=None) -> TemporalGraph:
    """Build a graph from already-dense ``(src, dst, t)`` rows (stable sort by t)."""
    arr = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    if len(arr) == 0:
        raise GraphFormatError("no edges")
    order = np.argsort(arr[:, 2], kind="stable")
    arr = arr[order]
    src = arr[:, 0].astype(np.int64)
    dst = arr[:, 1].astype(np.int64)
    if num_nodes is None:
        num_nodes = int(max(src.max(), dst.max())) + 1
    if features is not None:
        features = np.asarray(features, dtype=np.float64)[order]
    return TemporalGraph(src, dst, arr[:, 2], num_nodes, directedness, features)


def _parse_rows(text: str, fmt: str, path: str):
    reader = csv.reader(io.StringIO(text))
    rows = []
    arity = None
    first = True
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if fmt == "jodie" and first:
            first = False
            continue
        first = False
        row = [c.strip() for c in row]
        min_cols = 4 if fmt == "jodie" else 3
        if len(row) < min_cols:
            raise GraphFormatError("%s:%d: expected at least %d columns, got %d"
                                   % (path, lineno, min_cols, len(row)))
        try:
            t = float(row[2])
        except ValueError:
            raise GraphFormatError("%s:%d: non-numeric timestamp %r" % (path, lineno, row[2]))
        if not math.isfinite(t):
            raise GraphFormatError("%s:%d: non-finite timestamp %r" % (path, lineno, row[2]))
        feat_cols = row[4:] if fmt == "jodie" else row[3:]
        try:
            feats = [float(c) for c in feat_cols]
        except ValueError:
            raise GraphFormatError("%s:%d: non-numeric feature value" % (path, lineno))
        if arity is None:
            arity = len(feats)
        elif len(feats) != arity:
            raise GraphFormatError("%s:%d: feature arity %d differs from %d"
                                   % (path, lineno, len(feats), arity))
        rows.append((row[0], row[1], t, feats))
    return rows, arity or 0


def ingest(path: str, fmt: str = "plain", directedness: str = DIRECTED,
           drop_self_loops: bool = False) -> TemporalGraph:
    """Load an interaction file into a :class:`TemporalGraph`.

    ``plain`` rows are ``src,dst,timestamp[,feature...]`` without header;
    ``jodie`` files have a header and ``user,item,timestamp,state_label,features...``.
    Node labels are relabeled densely in order of first appearance in the
    time-sorted stream; for bipartite graphs destinations get a disjoint id
    range starting at ``bipartite_boundary``.
    """
    if fmt not in ("plain", "jodie"):
        raise ValueError("unknown format %r" % fmt)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    rows, arity = _parse_rows(text, fmt, path)
    if drop_self_loops:
        rows = [r for r in rows if r[0] != r[1]]
    if not rows:
        raise GraphFormatError("%s: no edges" % path)
    rows.sort(key=lambda r: r[2])  # stable

    if directedness == BIPARTITE:
        users: dict = {}
        items: dict = {}
        for s, d, _, _ in rows:
            users.setdefault(s, len(users))
            items.setdefault(d, len(items))
        boundary = len(users)
        src = [users[r[0]] for r in rows]
        dst = [boundary + items[r[1]] for r in rows]
        labels = list(users) + list(items)
    else:
        ids: dict = {}
        for s, d, _, _ in rows:
            ids.setdefault(s, len(ids))
            ids.setdefault(d, len(ids))
        boundary = None
        src = [ids[r[0]] for r in rows]
        dst = [ids[r[1]] for r in rows]
        labels = list(ids)
    feats = np.array([r[3] for r in rows], dtype=np.float64).reshape(len(rows), arity)
    return TemporalGraph(np.array(src), np.array(dst), np.array([r[2] for r in rows]),
                         len(labels), directedness, feats, boundary, labels)


# -- binary container ---------------------------------------------------------
# magic "TGRF" | u32 version | u8 bipartite flag | i64 boundary (-1 if none)
# | u64 num_nodes | u64 num_edges | u64 feature_dim
# | i64[E] src | i64[E] dst | f64[E] ts | f64[E*F] features (row-major)
# | u64 label_count, then per label: u32 byte length + utf-8 bytes
# All integers little-endian.

_HEADER = struct.Struct("<4sIBqQQQ")


def save_graph(graph: TemporalGraph, path: str) -> None:
    boundary = -1 if graph.bipartite_boundary is None else graph.bipartite_boundary
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRAPH_MAGIC, GRAPH_VERSION, graph.directedness == BIPARTITE,
                              boundary, graph.num_nodes, graph.num_edges, graph.feature_dim))
        fh.write(graph.src.astype("<i8").tobytes())
        fh.write(graph.dst.astype("<i8").tobytes())
        fh.write(graph.ts.astype("<f8").tobytes())
        fh.write(graph.features.astype("<f8").tobytes())
        fh.write(struct.pack("<Q", len(graph.labels)))
        for label in graph.labels:
            raw = str(label).encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_graph(path: str) -> TemporalGraph:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise GraphFormatError("%s: truncated graph container" % path)
    magic, version, bip, boundary, n, e, f = _HEADER.unpack_from(data, 0)
    if magic != GRAPH_MAGIC:
        raise GraphFormatError("%s: bad magic %r" % (path, magic))
    if version != GRAPH_VERSION:
        raise GraphFormatError("%s: unsupported container version %d" % (path, version))
    off = _HEADER.size

    def take(dtype, count):
        nonlocal off
        nbytes = np.dtype(dtype).itemsize * count
        if off + nbytes > len(data):
            raise GraphFormatError("%s: truncated graph container" % path)
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off).copy()
        off += nbytes
        return arr

    src = take("<i8", e)
    dst = take("<i8", e)
    ts = take("<f8", e)
    feats = take("<f8", e * f).reshape(e, f)
    (count,) = struct.unpack_from("<Q", data, off)
    off += 8
    labels = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        labels.append(data[off:off + ln].decode("utf-8"))
        off += ln
    return TemporalGraph(src, dst, ts, int(n), BIPARTITE if bip else DIRECTED, feats,
                         None if boundary < 0 else int(boundary), labels)


# -- splitting ----------------------------------------------------------------

@dataclass
class SplitPlan:
    train_end: int
    val_end: int
    masked_nodes: frozenset = frozenset()
    mode: str = "transductive"
    seed: int = 0

    def _touches_masked(self, graph: TemporalGraph, idx: np.ndarray) -> np.ndarray:
        if not self.masked_nodes:
            return np.zeros(len(idx), bool)
        masked = np.zeros(graph.num_nodes, bool)
        masked[list(self.masked_nodes)] = True
        return masked[graph.src[idx]] | masked[graph.dst[idx]]

    def train_indices(self, graph: TemporalGraph) -> np.ndarray:
        idx = np.arange(self.train_end)
        if self.mode == "inductive":
            idx = idx[~self._touches_masked(graph, idx)]
        return idx

    def eval_indices(self, graph: TemporalGraph, which: str) -> np.ndarray:
        """Edge ids scored on ``which`` ('val' or 'test')."""
        if which == "val":
            idx = np.arange(self.train_end, self.val_end)
        elif which == "test":
            idx = np.arange(self.val_end, graph.num_edges)
        else:
            raise ValueError("split must be 'val' or 'test', got %r" % which)
        if self.mode == "inductive":
            idx = idx[self._touches_masked(graph, idx)]
        return idx

    def to_dict(self) -> dict:
        return {"train_end": self.train_end, "val_end": self.val_end, "mode": self.mode,
                "seed": self.seed, "masked_nodes": sorted(int(v) for v in self.masked_nodes)}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(int(d["train_end"]), int(d["val_end"]), frozenset(d.get("masked_nodes", ())),
                   d.get("mode", "transductive"), int(d.get("seed", 0)))


def split(graph: TemporalGraph, train_frac: float = 0.70, val_frac: float = 0.15,
          mode: str = "transductive", mask_frac: float = 0.10, seed: int = 0) -> SplitPlan:
    """Chronological train/val/test boundaries, optionally with masked nodes."""
    if mode not in ("transductive", "inductive"):
        raise SplitError("mode must be 'transductive' or 'inductive', got %r" % mode)
    if not (0 < train_frac < 1) or not (0 <= val_frac < 1) or train_frac + val_frac >= 1:
        raise SplitError("need 0 < train_frac, 0 <= val_frac and train_frac + val_frac < 1")
    if not (0 <= mask_frac < 1):
        raise SplitError("mask_frac must lie in [0, 1)")
    n = graph.num_edges
    train_end = int(math.floor(train_frac * n))
    val_end = int(math.floor((train_frac + val_frac) * n))
    if train_end <= 0:
        raise SplitError("empty training split")
    if mode == "transductive":
        return SplitPlan(train_end, val_end, frozenset(), mode, seed)

    rng = np.random.default_rng(seed)
    k = int(math.floor(mask_frac * graph.num_nodes))
    masked = frozenset(int(v) for v in rng.choice(graph.num_nodes, size=k, replace=False))
    plan = SplitPlan(train_end, val_end, masked, mode, seed)
    if len(plan.eval_indices(graph, "val")) + len(plan.eval_indices(graph, "test")) == 0:
        raise SplitError("empty evaluation set after inductive filtering")
    if len(plan.train_indices(graph)) == 0:
        raise SplitError("empty training set after inductive filtering")
    return plan


# -- negative sampling --------------------------------------------------------

def sample_negative(graph: TemporalGraph, positive, rng: np.random.Generator) -> int:
    """Uniform destination different from ``positive``'s destination."""
    dst = positive.dst if isinstance(positive, TemporalEdge) else int(positive)
    return int(sample_negatives(graph, np.array([dst]), rng)[0])


def sample_negatives(graph: TemporalGraph, dsts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`sample_negative` for an array of true destinations."""
    universe = graph.destination_universe()
    if len(universe) < 2:
        raise ValueError("destination universe of size %d cannot exclude the true dst"
                         % len(universe))
    lo = int(universe[0])
    dsts = np.asarray(dsts, dtype=np.int64)
    draw = rng.integers(0, len(universe) - 1, size=len(dsts)) + lo
    # universe is contiguous: skip over the true destination
    inside = (dsts >= lo) & (dsts < lo + len(universe))
    return np.where(inside & (draw >= dsts), draw + 1, draw)

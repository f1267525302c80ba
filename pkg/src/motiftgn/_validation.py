"""Input checks shared by the estimator front-end and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

from .graph import DIRECTED, TemporalGraph


def check_graph(X, directedness: str = DIRECTED) -> TemporalGraph:
    """Accept a TemporalGraph or an ``(E, >=3)`` array of ``src, dst, t[, features...]`` rows."""
    if isinstance(X, TemporalGraph):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 3:
        raise ValueError("expected a TemporalGraph or an (E, >=3) array of src, dst, t rows, "
                         "got shape %s" % (arr.shape,))
    if not np.all(np.isfinite(arr)):
        raise ValueError("edge array contains non-finite values")
    ids = arr[:, :2]
    if np.any(ids < 0) or np.any(ids != np.floor(ids)):
        raise ValueError("node ids must be non-negative integers")
    src, dst = ids[:, 0].astype(np.int64), ids[:, 1].astype(np.int64)
    features = arr[:, 3:] if arr.shape[1] > 3 else None
    return TemporalGraph(src, dst, arr[:, 2], int(max(src.max(), dst.max())) + 1,
                         directedness, features=features)


def check_motif_table(table, graph: TemporalGraph) -> np.ndarray:
    table = np.asarray(table)
    if table.ndim != 2 or table.shape[0] != graph.num_edges:
        raise ValueError("motif features must have shape (%d, width), got %s"
                         % (graph.num_edges, table.shape))
    if np.any(table < 0):
        raise ValueError("motif counts must be non-negative")
    return table


def check_queries(X, num_nodes: int) -> tuple:
    """Split an ``(m, 3)`` query array into ``src, dst, t``."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("queries must be an (m, 3) array of src, dst, t, got shape %s"
                         % (arr.shape,))
    src, dst = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64)
    if np.any(arr[:, :2] != np.floor(arr[:, :2])):
        raise ValueError("query node ids must be integers")
    if len(arr) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
        raise ValueError("query node ids must lie in [0, %d)" % num_nodes)
    return src, dst, arr[:, 2]


def check_fraction(value, name: str, low_open: bool = False) -> float:
    if not isinstance(value, numbers.Real) or not (0.0 <= value <= 1.0) or (low_open and value == 0):
        raise ValueError("%s must be a fraction in %s0, 1], got %r"
                         % (name, "(" if low_open else "[", value))
    return float(value)

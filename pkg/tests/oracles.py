"""Slow, obviously-correct reference implementations used as test oracles.

None of these share code with the package beyond plain data access.
"""

from __future__ import annotations

import math

import numpy as np


# -- motifs -------------------------------------------------------------------

def brute_instances(src, dst, ts, motif_edges, directed, delta):
    """All ordered edge-id tuples matching ``motif_edges`` within ``delta``.

    Exhaustive over increasing index tuples, extending a partial node map
    edge by edge and abandoning a prefix once the map becomes inconsistent.
    """
    E = len(src)
    L = len(motif_edges)
    found = set()

    def consistent(fwd, back, a, x):
        if a in fwd:
            return fwd[a] == x
        return x not in back

    def extend(chosen, fwd, back):
        p = len(chosen)
        if p == L:
            found.add(tuple(chosen))
            return
        start = chosen[-1] + 1 if chosen else 0
        for k in range(start, E):
            if chosen and ts[k] - ts[chosen[0]] > delta:
                break
            a, b = motif_edges[p]
            orientations = [(src[k], dst[k])]
            if not directed:
                orientations.append((dst[k], src[k]))
            for u, v in orientations:
                if u == v:
                    continue
                if not consistent(fwd, back, a, u):
                    continue
                f2, b2 = dict(fwd), dict(back)
                f2[a], b2[u] = u, a
                if not consistent(f2, b2, b, v):
                    continue
                f2[b], b2[v] = v, b
                extend(chosen + [k], f2, b2)

    extend([], {}, {})
    return found


def brute_features(src, dst, ts, catalog_edges, directed, delta):
    """Positional counts per edge built from :func:`brute_instances`."""
    cols = []
    for edges in catalog_edges:
        block = np.zeros((len(src), len(edges)), dtype=np.int64)
        for inst in brute_instances(src, dst, ts, edges, directed, delta):
            for p, e in enumerate(inst):
                block[e, p] += 1
        cols.append(block)
    return np.hstack(cols)


# -- metrics ------------------------------------------------------------------

def brute_auc(pos, neg):
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def brute_ap(pos, neg):
    """Recall increment times precision at every distinct threshold, high to low."""
    scores = list(pos) + list(neg)
    labels = [1] * len(pos) + [0] * len(neg)
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        sel = [l for s, l in zip(scores, labels) if s >= thr]
        tp = sum(sel)
        recall = tp / len(pos)
        ap += (recall - prev_recall) * (tp / len(sel))
        prev_recall = recall
    return ap


# -- neighbor sampling --------------------------------------------------------

def touches(src, dst, ts, node, out_only=False):
    """(neighbor, time, edge id) for every edge touching ``node``, by edge id."""
    out = []
    for k in range(len(src)):
        if src[k] == node:
            out.append((int(dst[k]), float(ts[k]), k))
        elif dst[k] == node and not out_only:
            out.append((int(src[k]), float(ts[k]), k))
    return out


def latest(items, n):
    """Most recent ``n`` by time, later edge id first on ties."""
    return sorted(items, key=lambda r: (-r[1], -r[2]))[:n]


def bfs_subgraph(src, dst, ts, root, t, hops, n, bicomponent=True):
    """Nested ``[(his, cur), ...]`` per hop by direct scans of the edge list."""
    frontier = [(root, None)]
    layers = []
    for hop in range(1, hops + 1):
        pairs, nxt = [], []
        for node, t_low in frontier:
            all_t = touches(src, dst, ts, node)
            if hop == 1:
                his = latest([r for r in all_t if r[1] < t], n)
                cur = []
            elif bicomponent:
                his = latest([r for r in all_t if r[1] < t_low], n)
                cur = latest([r for r in all_t if t_low < r[1] < t], n)
            else:
                his = latest([r for r in all_t if r[1] < t and r[1] != t_low], n)
                cur = []
            pairs.append((his, cur))
            nxt.extend((r[0], r[1]) for r in his + cur)
        layers.append(pairs)
        frontier = nxt
    return layers


# -- layers -------------------------------------------------------------------

def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def gru_scalar(m, s, P):
    """Gated update evaluated one output unit at a time with explicit sums."""
    d = len(s)

    def affine(W, U, b, i, x_s):
        return (sum(m[k] * W[k][i] for k in range(len(m)))
                + sum(x_s[k] * U[k][i] for k in range(d)) + b[0][i])

    z = [sigmoid(affine(P["W_z"], P["U_z"], P["b_z"], i, s)) for i in range(d)]
    r = [sigmoid(affine(P["W_r"], P["U_r"], P["b_r"], i, s)) for i in range(d)]
    rs = [r[i] * s[i] for i in range(d)]
    c = [math.tanh(affine(P["W_c"], P["U_c"], P["b_c"], i, rs)) for i in range(d)]
    return [(1 - z[i]) * s[i] + z[i] * c[i] for i in range(d)]


def matvec(x, W):
    return [sum(x[k] * W[k][j] for k in range(len(x))) for j in range(len(W[0]))]


def attention_scalar(query, rows, P, heads):
    """Shared lifts, per-head projections, scaled dot-product softmax, output map."""
    q = matvec(matvec(query, P["W_Q"]), P["W_pQ"])
    K = [matvec(matvec(r, P["W_K"]), P["W_pK"]) for r in rows]
    V = [matvec(matvec(r, P["W_V"]), P["W_pV"]) for r in rows]
    width = len(q)
    dh = width // heads
    concat = []
    for p in range(heads):
        lo, hi = p * dh, (p + 1) * dh
        scores = [sum(q[i] * k[i] for i in range(lo, hi)) / math.sqrt(dh) for k in K]
        mx = max(scores)
        w = [math.exp(s - mx) for s in scores]
        tot = sum(w)
        w = [x / tot for x in w]
        concat.extend(sum(w[r] * V[r][i] for r in range(len(rows))) for i in range(lo, hi))
    return matvec(concat, P["W_O"])


def mlp_scalar(x, P, prefix):
    h = [max(0.0, v + P[prefix + "fc1.b"][0][j])
         for j, v in enumerate(matvec(x, P[prefix + "fc1.W"]))]
    return [v + P[prefix + "fc2.b"][0][j] for j, v in enumerate(matvec(h, P[prefix + "fc2.W"]))]


def params_as_lists(module, prefix=""):
    return {k[len(prefix):]: v.data.tolist() for k, v in module.named_parameters()
            if k.startswith(prefix)}

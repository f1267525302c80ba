"""Ranking metrics for link prediction: ROC AUC and average precision."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check(pos, neg):
    pos = np.asarray(pos, dtype=float).ravel()
    neg = np.asarray(neg, dtype=float).ravel()
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need at least one positive and one negative score")
    return pos, neg


def roc_auc(pos_scores, neg_scores) -> float:
    """Probability that a positive outscores a negative, ties counted half.

    Computed from mid-ranks (Mann-Whitney U), O(n log n).
    """
    pos, neg = _check(pos_scores, neg_scores)
    ranks = rankdata(np.concatenate([pos, neg]))
    n_pos, n_neg = len(pos), len(neg)
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(pos_scores, neg_scores) -> float:
    """Sum over distinct score thresholds of recall increment times precision."""
    pos, neg = _check(pos_scores, neg_scores)
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    # last index of each block of tied scores
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = np.cumsum(labels)[ends]
    seen = ends + 1
    precision = tp / seen
    recall = tp / len(pos)
    increments = np.diff(np.r_[0.0, recall])
    return float(np.sum(increments * precision))


def link_scores(pos_scores, neg_scores) -> tuple:
    return roc_auc(pos_scores, neg_scores), average_precision(pos_scores, neg_scores)

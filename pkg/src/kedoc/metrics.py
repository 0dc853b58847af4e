"""Ranking and classification metrics plus the cluster-separation score."""

import math

import numpy as np


class MetricUndefined(ValueError):
    pass


def auc(scores, labels):
    """Mann-Whitney AUC; tied scores contribute half a concordant pair."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise MetricUndefined("AUC needs both a positive and a negative")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    n_pos, n_neg = len(pos), len(neg)
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _ranked_labels(scores, labels):
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return np.asarray(labels)[order]


def ndcg_at_k(scores, labels, k):
    if k < 1:
        raise MetricUndefined(f"k must be >= 1, got {k}")
    ranked = _ranked_labels(scores, labels)
    n_pos = int(ranked.sum())
    if n_pos == 0:
        raise MetricUndefined("NDCG needs at least one positive")
    dcg = sum(1.0 / math.log2(rank + 1)
              for rank, lab in enumerate(ranked[:k], 1) if lab == 1)
    ideal = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(n_pos, k) + 1))
    return dcg / ideal


def hit_at_k(scores, labels, k):
    """1 iff any positive ranks in the top k."""
    ranked = _ranked_labels(scores, labels)
    return int(ranked[:k].sum() > 0)


def accuracy(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    return float((preds == labels).mean())


def macro_f1(preds, labels, n_classes):
    """Unweighted mean of per-class F1; vacuous classes contribute 0."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if ((labels < 0) | (labels >= n_classes)).any():
        raise MetricUndefined("label out of range")
    total = 0.0
    for c in range(n_classes):
        tp = int(((preds == c) & (labels == c)).sum())
        fp = int(((preds == c) & (labels != c)).sum())
        fn = int(((preds != c) & (labels == c)).sum())
        if 2 * tp + fp + fn == 0:
            f1 = 0.0
        else:
            f1 = 2 * tp / (2 * tp + fp + fn)
        total += f1
    return total / n_classes


CH_SENTINEL_MAX = np.finfo(np.float64).max


def calinski_harabasz(embeddings, labels):
    """Between- over within-cluster dispersion, scaled by (n-K)/(K-1).

    Zero within-cluster dispersion (each cluster collapsed to a point)
    returns a sentinel maximum instead of dividing by zero.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    k = len(clusters)
    n = len(x)
    if k < 2:
        raise MetricUndefined("need at least 2 clusters")
    mean = x.mean(axis=0)
    between = 0.0
    within = 0.0
    for c in clusters:
        xc = x[labels == c]
        mc = xc.mean(axis=0)
        between += len(xc) * float(((mc - mean) ** 2).sum())
        within += float(((xc - mc) ** 2).sum())
    if within == 0.0:
        return CH_SENTINEL_MAX
    return (between / within) * (n - k) / (k - 1)


def grouped_metric(groups, fn, **kwargs):
    """Mean of a per-group metric, skipping undefined groups.

    groups: iterable of (scores, labels). Returns (mean, n_used, n_skipped).
    """
    values = []
    skipped = 0
    for scores, labels in groups:
        try:
            values.append(fn(scores, labels, **kwargs))
        except MetricUndefined:
            skipped += 1
    if not values:
        raise MetricUndefined("every group was undefined")
    return float(np.mean(values)), len(values), skipped


def write_report(path, rows):
    """rows: iterable of (metric, task, split, value)."""
    with open(path, "w", encoding="utf-8") as fh:
        for metric, task, split, value in rows:
            fh.write(f"{metric}\t{task}\t{split}\t{value:.6f}\n")


def write_summary(path, rows):
    import json

    payload = [
        {"metric": m, "task": t, "split": s, "value": v}
        for m, t, s, v in rows
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Clustering and classification evaluation."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


class UndefinedSilhouette(Exception):
    """Raised when the partition has fewer than two clusters."""


@dataclass
class ClusteringScore:
    acc: float
    nmi: float
    ari: float

    def as_json(self):
        return {
            "acc": round(self.acc * 100, 2),
            "nmi": round(self.nmi * 100, 2),
            "ari": round(self.ari * 100, 2),
        }


@dataclass
class ClassificationScore:
    accuracy: float
    f1_micro: float
    f1_macro: float
    exact_match: float

    def as_json(self):
        return {
            "accuracy": round(self.accuracy * 100, 2),
            "f1_micro": round(self.f1_micro * 100, 2),
            "f1_macro": round(self.f1_macro * 100, 2),
            "exact_match": round(self.exact_match * 100, 2),
        }


def _contingency(pred, gold):
    pred_ids = {c: i for i, c in enumerate(dict.fromkeys(pred))}
    gold_ids = {c: i for i, c in enumerate(dict.fromkeys(gold))}
    table = np.zeros((len(pred_ids), len(gold_ids)), dtype=np.int64)
    for p, g in zip(pred, gold):
        table[pred_ids[p], gold_ids[g]] += 1
    return table


def clustering_accuracy(pred, gold) -> float:
    """Best matched fraction over injective cluster-to-class mappings."""
    if len(pred) != len(gold):
        raise ValueError("pred and gold must cover the same items")
    if not pred:
        raise ValueError("clustering accuracy of empty input is undefined")
    table = _contingency(pred, gold)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum()) / len(pred)


def _entropy(counts, n):
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / n
            h -= p * math.log(p)
    return h


def nmi(pred, gold) -> float:
    """Mutual information normalized by the geometric mean of the entropies."""
    if len(pred) != len(gold):
        raise ValueError("pred and gold must cover the same items")
    n = len(pred)
    if n == 0:
        return 0.0
    table = _contingency(pred, gold)
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    info = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij > 0:
                info += (nij / n) * math.log(n * nij / (row[i] * col[j]))
    denom = math.sqrt(_entropy(row, n) * _entropy(col, n))
    if denom == 0:
        return 0.0
    return info / denom


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(pred, gold) -> float:
    """Adjusted Rand index from pair counts on the contingency table."""
    if len(pred) != len(gold):
        raise ValueError("pred and gold must cover the same items")
    n = len(pred)
    table = _contingency(pred, gold)
    sum_ij = sum(_comb2(int(x)) for x in table.flat)
    sum_row = sum(_comb2(int(x)) for x in table.sum(axis=1))
    sum_col = sum(_comb2(int(x)) for x in table.sum(axis=0))
    total = _comb2(n)
    expected = sum_row * sum_col / total if total > 0 else 0.0
    max_index = (sum_row + sum_col) / 2.0
    denom = max_index - expected
    if denom == 0:
        return 1.0 if _same_partition(pred, gold) else 0.0
    return (sum_ij - expected) / denom


def _same_partition(pred, gold) -> bool:
    groups_p: dict[object, set[int]] = {}
    groups_g: dict[object, set[int]] = {}
    for i, (p, g) in enumerate(zip(pred, gold)):
        groups_p.setdefault(p, set()).add(i)
        groups_g.setdefault(g, set()).add(i)
    return set(map(frozenset, groups_p.values())) == set(map(frozenset, groups_g.values()))


def silhouette(labels, dissimilarity: np.ndarray) -> float:
    """Mean (b - a) / max(a, b); singleton-cluster items contribute 0.

    Raises UndefinedSilhouette for a single-cluster partition so callers can
    fall back rather than consume a bogus value.
    """
    labels = list(labels)
    n = len(labels)
    d = np.asarray(dissimilarity, dtype=np.float64)
    if d.shape != (n, n):
        raise ValueError(f"dissimilarity must be {n}x{n}")
    clusters: dict[object, list[int]] = {}
    for i, lab in enumerate(labels):
        clusters.setdefault(lab, []).append(i)
    if len(clusters) < 2:
        raise UndefinedSilhouette("silhouette needs at least two clusters")
    total = 0.0
    for i, lab in enumerate(labels):
        own = clusters[lab]
        if len(own) == 1:
            continue
        a = sum(d[i, j] for j in own if j != i) / (len(own) - 1)
        b = min(
            sum(d[i, j] for j in members) / len(members)
            for other, members in clusters.items()
            if other != lab
        )
        denom = max(a, b)
        if denom > 0:
            total += (b - a) / denom
    return total / n


def classification_scores(decided, gold, mode) -> ClassificationScore:
    """Accuracy / exact match plus micro and macro F1 over label sets.

    decided and gold map ids to label sets; multiclass sets are singletons.
    """
    if set(decided) != set(gold):
        raise ValueError("decided and gold must cover the same ids")
    if not decided:
        raise ValueError("no examples to score")
    ids = sorted(decided)
    for i in ids:
        if not gold[i]:
            raise ValueError(f"empty gold label set for id {i!r}")

    exact = sum(1 for i in ids if set(decided[i]) == set(gold[i])) / len(ids)

    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    labels = set()
    for i in ids:
        dset, gset = set(decided[i]), set(gold[i])
        labels |= dset | gset
        for lab in dset & gset:
            tp[lab] += 1
        for lab in dset - gset:
            fp[lab] += 1
        for lab in gset - dset:
            fn[lab] += 1

    def f1(t, p, f):
        return 2 * t / (2 * t + p + f) if (2 * t + p + f) > 0 else 0.0

    micro = f1(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    macro = (
        sum(f1(tp[lab], fp[lab], fn[lab]) for lab in labels) / len(labels)
        if labels
        else 0.0
    )
    return ClassificationScore(
        accuracy=exact, f1_micro=micro, f1_macro=macro, exact_match=exact
    )

"""Classification metrics over all (sample, label) cells and top-k ranking metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

NAN = float("nan")


@dataclass
class ClassMetricsReport:
    auc_pr: float
    auc_roc: float
    precision: float
    recall: float
    specificity: float
    balanced_accuracy: float
    f_measure: float

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _curve_points(scores: np.ndarray, labels: np.ndarray):
    """Cumulative (tp, fp) after each group of tied scores, highest score first."""
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    return tp[ends].astype(float), fp[ends].astype(float)


def roc_auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve; tied scores form one step."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    P = labels.sum()
    N = labels.size - P
    if P == 0 or N == 0:
        return NAN
    tp, fp = _curve_points(scores, labels)
    x = np.r_[0.0, fp / N]
    y = np.r_[0.0, tp / P]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def pr_auc(scores, labels) -> float:
    """Trapezoidal area under precision-recall, starting from (recall 0, precision 1)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    P = labels.sum()
    if P == 0:
        return NAN
    tp, fp = _curve_points(scores, labels)
    x = np.r_[0.0, tp / P]
    y = np.r_[1.0, tp / (tp + fp)]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def classification_metrics(probs, targets, threshold: float = 0.5) -> ClassMetricsReport:
    """Micro-aggregated metrics: every (sample, label) cell counts once.

    A cell is predicted positive when its probability is strictly above
    ``threshold``. Precision is 0 when nothing is predicted positive; metrics
    needing positive (or negative) cells are NaN without them.
    """
    p = np.asarray(probs, dtype=float).ravel()
    y = np.asarray(targets).astype(np.int64).ravel()
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {np.shape(probs)} vs {np.shape(targets)}")
    pred = p > threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else NAN
    specificity = tn / (tn + fp) if tn + fp else NAN
    bacc = (recall + specificity) / 2.0
    if math.isnan(recall):
        f = NAN
    else:
        f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetricsReport(pr_auc(p, y), roc_auc(p, y), precision, recall, specificity, bacc, f)


# --------------------------------------------------------------------------
# ranking metrics


RANK_METRICS = ("ndcg", "precision", "recall", "f1")


@dataclass
class RankMetricsReport:
    k: int
    mean: dict
    std: dict
    runs: int
    excluded_pairs: int = 0

    def __getitem__(self, name):
        return self.mean[name]


def rank_scores_at_k(ranked: Sequence[str], relevant: Iterable[str], k: int = 10) -> dict:
    """NDCG (binary gains, log2 discount), precision, recall and F1 of one ranking."""
    rel = set(relevant)
    if not rel:
        raise ValueError("relevant set is empty")
    top = list(ranked)[:k]
    hits = [i for i, x in enumerate(top) if x in rel]
    dcg = sum(1.0 / math.log2(i + 2) for i in hits)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(k, len(rel))))
    p = len(hits) / k
    r = len(hits) / len(rel)
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return {"ndcg": dcg / idcg, "precision": p, "recall": r, "f1": f1}


def _single_run(rankings, truths, k):
    totals = {m: 0.0 for m in RANK_METRICS}
    used = excluded = 0
    for ranked, rel in zip(rankings, truths):
        if not rel:
            excluded += 1
            continue
        for m, v in rank_scores_at_k(ranked, rel, k).items():
            totals[m] += v
        used += 1
    if used == 0:
        return {m: NAN for m in RANK_METRICS}, excluded
    return {m: totals[m] / used for m in RANK_METRICS}, excluded


def ranking_metrics_at_k(runs, k: int = 10) -> RankMetricsReport:
    """Average per-pair scores within each run, then mean and std over runs.

    ``runs`` is a sequence of ``(rankings, truths)`` where ``rankings[i]`` is an
    ordered id list and ``truths[i]`` the relevant ids of pair ``i``. Pairs with
    no relevant id are left out and counted.
    """
    per_run, excluded = [], 0
    for rankings, truths in runs:
        scores, exc = _single_run(rankings, truths, k)
        per_run.append(scores)
        excluded += exc
    if not per_run:
        raise ValueError("no runs given")
    mean = {m: float(np.mean([r[m] for r in per_run])) for m in RANK_METRICS}
    std = {m: float(np.std([r[m] for r in per_run])) for m in RANK_METRICS}
    return RankMetricsReport(k, mean, std, len(per_run), excluded)


def random_ranking(pool: Sequence[str], seed=0, k: int | None = None) -> list[str]:
    """RAND baseline: a uniform random permutation of the pool."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    out = [pool[i] for i in order]
    return out[:k] if k is not None else out

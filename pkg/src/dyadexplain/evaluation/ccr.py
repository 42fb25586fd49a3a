"""Centroid Coincidence Ratio: do chosen explanations land where the user's own review lands?

Clusters are fitted on predicted-context vectors of one partition. Points of
a second partition are then classified: the user's real review (authorship),
the heuristic explanation (personalised) and a uniformly drawn review of the
same item (random). CCR(A, X) is the percentage of comparisons in which the
authorship point and the X point share a centroid.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..explain import (
    PredictedContext,
    Ranking,
    TfIdfModel,
    cumulative_vector,
    predicted_context,
    select_explanation,
)
from .clustering import ClusterModel, assign_many, kmeanspp_fit

KINDS = ("Authorship", "Random", "Personalised")


@dataclass(frozen=True)
class EvalPoint:
    kind: str
    vector: np.ndarray
    user: str
    item: str
    review_id: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown point kind {self.kind!r}")


@dataclass
class CcrReport:
    k: int
    ccr_ap: float
    ccr_ar: float
    n_comparisons: int
    empty: bool = False
    comparisons: list = field(default_factory=list, repr=False)

    @property
    def delta(self) -> float:
        return self.ccr_ap - self.ccr_ar


def random_adversary(reviews: Sequence[str], seed=0) -> str:
    """Uniform draw of one review id; ``seed`` may be an int or a Generator."""
    if not reviews:
        raise ValueError("cannot draw from an empty review set")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return reviews[int(rng.integers(len(reviews)))]


def ccr(model: ClusterModel, a_points, b_points) -> float:
    """Percentage of aligned pairs (a_i, b_i) assigned to the same centroid."""
    a = np.asarray(a_points, dtype=float)
    b = np.asarray(b_points, dtype=float)
    if a.shape != b.shape:
        raise ValueError("point sets must be aligned")
    if len(a) == 0:
        return float("nan")
    return 100.0 * float(np.mean(assign_many(model, a) == assign_many(model, b)))


def l2_normalise(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, n, out=np.zeros_like(X), where=n > 0)


def interaction_pairs(reviews) -> "OrderedDict[tuple[str, str], list[str]]":
    """Group Interaction-like records into (user, item) -> authorship review ids."""
    pairs: OrderedDict = OrderedDict()
    for r in reviews:
        pairs.setdefault((r.user, r.item), []).append(r.review_id)
    return pairs


Ranker = Callable[[str, str, Sequence[str]], Ranking]


def context_points(pairs, candidates: Callable[[str, str], list[str]], ranker: Ranker,
                   tfidf: TfIdfModel, docs: Mapping[str, Sequence[str]], top_n: int,
                   normalise: bool = True) -> tuple[np.ndarray, list]:
    """Cumulative predicted-context vectors, one per (user, item) with candidates."""
    rows, keys = [], []
    for user, item in pairs:
        cand = candidates(user, item)
        if not cand:
            continue
        pc = predicted_context(ranker(user, item, cand), top_n)
        rows.append(cumulative_vector(tfidf, pc, docs))
        keys.append((user, item))
    X = np.array(rows) if rows else np.zeros((0, len(tfidf)))
    return (l2_normalise(X) if normalise and len(X) else X), keys


def fit_clusters(points: np.ndarray, ks: Sequence[int], seed: int = 0, max_iter: int = 300) -> dict[int, ClusterModel]:
    return {k: kmeanspp_fit(points, k, seed, max_iter) for k in ks}


def ccr_evaluation(val_pairs: Mapping[tuple[str, str], list[str]],
                   candidates: Callable[[str, str], list[str]],
                   ranker: Ranker,
                   clusters: Mapping[int, ClusterModel],
                   tfidf: TfIdfModel,
                   docs: Mapping[str, Sequence[str]],
                   top_n: int,
                   seed: int = 0,
                   keywords_k: int = 3,
                   normalise: bool = True):
    """Run the authorship / personalised / random comparison for every clustering.

    Returns ``(reports, explanations)``: one CcrReport per k, and the
    personalised Explanation chosen for each evaluated (user, item).
    Every authorship review of a pair yields its own comparison.
    """
    rng = np.random.default_rng(seed)
    a_vecs, p_vecs, r_vecs, records, explanations = [], [], [], [], []
    for (user, item), authored in val_pairs.items():
        cand = candidates(user, item)
        if not authored or not cand:
            continue
        pc: PredictedContext = predicted_context(ranker(user, item, cand), top_n)
        expl = select_explanation(pc, docs, tfidf, keywords_k)
        rand = random_adversary(cand, rng)
        explanations.append(expl)
        pv = tfidf.transform(docs[expl.review_id])
        rv = tfidf.transform(docs[rand])
        for a in authored:
            a_vecs.append(tfidf.transform(docs[a]))
            p_vecs.append(pv)
            r_vecs.append(rv)
            records.append((user, item, a, expl.review_id, rand))
    reports = []
    if not records:
        for k in clusters:
            reports.append(CcrReport(k, float("nan"), float("nan"), 0, empty=True))
        return reports, explanations
    A, P, R = (np.array(v) for v in (a_vecs, p_vecs, r_vecs))
    if normalise:
        A, P, R = l2_normalise(A), l2_normalise(P), l2_normalise(R)
    for k, model in clusters.items():
        la, lp, lr = assign_many(model, A), assign_many(model, P), assign_many(model, R)
        comps = [rec + (int(x), int(y), int(z)) for rec, x, y, z in zip(records, la, lp, lr)]
        reports.append(CcrReport(
            k,
            100.0 * float(np.mean(la == lp)),
            100.0 * float(np.mean(la == lr)),
            len(records),
            comparisons=comps,
        ))
    return reports, explanations

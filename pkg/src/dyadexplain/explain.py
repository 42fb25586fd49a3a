"""Review rankings per (user, item) and heuristic explanation selection.

A ranking orders an item's positive reviews by the model's probability for
one active user. Its top-N prefix (the predicted context) is encoded with
TF-IDF; the highest-weight terms become keywords, and the review that best
covers them, discounted by rank, is chosen as the explanation.
"""

from __future__ import annotations

import logging
import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, EmptyContextError

log = logging.getLogger(__name__)

RESOURCE_DIR = Path(__file__).with_name("resources")
_NON_ALNUM = re.compile(r"[^0-9a-zA-Z]+")


# --------------------------------------------------------------------------
# rankings


@dataclass(frozen=True)
class Ranking:
    user: str
    item: str
    entries: tuple[tuple[str, float], ...]

    def __len__(self):
        return len(self.entries)

    @property
    def review_ids(self) -> list[str]:
        return [rid for rid, _ in self.entries]

    @property
    def best(self) -> str:
        return self.entries[0][0]


def ranking_from_scores(user: str, item: str, scores: Mapping[str, float]) -> Ranking:
    """Sort by probability descending, review id ascending on ties."""
    if not scores:
        raise EmptyContextError(f"item {item!r} has no positive reviews to rank")
    entries = sorted(((rid, float(p)) for rid, p in scores.items()), key=lambda e: (-e[1], e[0]))
    return Ranking(user, item, tuple(entries))


def rank_reviews(params, provider, users, user: str, item: str, reviews: Sequence, cache=None) -> Ranking:
    """Rank ``reviews`` (Interaction-like: ``review_id``, ``model_text()``) for ``user``."""
    from .head import EmbeddingCache, predict_embedded

    if not reviews:
        raise EmptyContextError(f"item {item!r} has no positive reviews to rank")
    j = users.column(user)
    cache = cache or EmbeddingCache(provider)
    mats = [cache.get(r.review_id, r.model_text()) for r in reviews]
    probs = predict_embedded(params, mats)[:, j]
    return ranking_from_scores(user, item, {r.review_id: p for r, p in zip(reviews, probs)})


@dataclass(frozen=True)
class PredictedContext:
    ranking: Ranking
    n: int

    @property
    def entries(self):
        return self.ranking.entries[: self.n]

    @property
    def review_ids(self) -> list[str]:
        return [rid for rid, _ in self.entries]

    def __len__(self):
        return min(self.n, len(self.ranking))


def predicted_context(r: Ranking, n: int) -> PredictedContext:
    if n < 1:
        raise ValueError("N must be >= 1")
    return PredictedContext(r, n)


# --------------------------------------------------------------------------
# evaluation-time text filtering


@dataclass(frozen=True)
class FilterResources:
    stopwords: frozenset
    nouns: frozenset
    lemmas: Mapping[str, str] = field(default_factory=dict)


def _read_list(path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"resource file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def load_resources(stopwords=None, nouns=None, lemmas=None) -> FilterResources:
    """Load the one-entry-per-line resource files; ``None`` picks the bundled fixtures."""
    stop = _read_list(stopwords or RESOURCE_DIR / "stopwords_en.txt")
    noun = _read_list(nouns or RESOURCE_DIR / "nouns_fixture.txt")
    table = {}
    for n, line in enumerate(_read_list(lemmas or RESOURCE_DIR / "lemmas_fixture.tsv"), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigurationError(f"{lemmas}: line {n} is not 'surface<TAB>lemma'")
        table[parts[0].lower()] = parts[1].lower()
    return FilterResources(frozenset(w.lower() for w in stop), frozenset(w.lower() for w in noun), table)


def eval_filter(text: str, res: FilterResources) -> list[str]:
    """Alphanumeric tokens, lowercased, stopwords dropped, lemmatised, nouns kept."""
    out = []
    for tok in _NON_ALNUM.sub(" ", text).lower().split():
        if tok in res.stopwords:
            continue
        lemma = res.lemmas.get(tok, tok)
        if lemma in res.nouns:
            out.append(lemma)
    return out


# --------------------------------------------------------------------------
# TF-IDF


class TfIdfModel:
    """Raw-count TF, ``ln(N/df)`` IDF; the ``ban_top`` most frequent terms weigh 0."""

    def __init__(self, vocabulary: Sequence[str], df: np.ndarray, n_docs: int, banned: Iterable[str] = ()):
        self.terms = list(vocabulary)
        self.vocabulary = {t: i for i, t in enumerate(self.terms)}
        self.df = np.asarray(df, dtype=np.int64)
        self.n_docs = int(n_docs)
        self.banned = frozenset(banned)
        self.idf = np.log(self.n_docs / self.df)
        self.weights = self.idf.copy()
        for t in self.banned:
            self.weights[self.vocabulary[t]] = 0.0

    def __len__(self):
        return len(self.terms)

    def counts(self, tokens: Sequence[str]) -> np.ndarray:
        v = np.zeros(len(self.terms))
        for t in tokens:
            j = self.vocabulary.get(t)
            if j is not None:
                v[j] += 1.0
        return v

    def transform(self, tokens: Sequence[str]) -> np.ndarray:
        return self.counts(tokens) * self.weights

    def transform_many(self, docs: Sequence[Sequence[str]]) -> np.ndarray:
        return np.stack([self.transform(d) for d in docs]) if docs else np.zeros((0, len(self)))


def fit_tfidf(corpus: Sequence[Sequence[str]], ban_top: int = 20) -> TfIdfModel:
    if not corpus:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    df: Counter = Counter()
    total: Counter = Counter()
    for doc in corpus:
        total.update(doc)
        df.update(set(doc))
    terms = sorted(df)
    banned = [t for t, _ in sorted(total.items(), key=lambda kv: (-kv[1], kv[0]))[:ban_top]]
    return TfIdfModel(terms, np.array([df[t] for t in terms]), len(corpus), banned)


def cumulative_vector(model: TfIdfModel, pc: PredictedContext, docs: Mapping[str, Sequence[str]]) -> np.ndarray:
    """Sum of the TF-IDF vectors of the context's (filtered) reviews."""
    if len(pc) == 0:
        raise EmptyContextError("predicted context is empty")
    v = np.zeros(len(model))
    for rid in pc.review_ids:
        v += model.transform(docs[rid])
    return v


def extract_keywords(v: np.ndarray, model: TfIdfModel, k: int = 3) -> list[str]:
    """The ``k`` highest-weight terms, ties by term text; fewer if the vector is sparse."""
    if k < 1:
        raise ValueError("k must be >= 1")
    nz = np.flatnonzero(v > 0)
    if nz.size < k:
        warnings.warn(f"only {nz.size} nonzero terms for {k} keywords", stacklevel=2)
    ranked = sorted(nz, key=lambda j: (-v[j], model.terms[j]))
    return [model.terms[j] for j in ranked[:k]]


def score_review(tokens: Sequence[str], keywords: Sequence[str], rank_pos: int, log_base: float = 2.0) -> float:
    """Keyword occurrences in the filtered review divided by ``log(rank_pos + 1)``."""
    if rank_pos < 1:
        raise ValueError("rank positions start at 1")
    counts = Counter(tokens)
    hits = sum(counts[k] for k in keywords)
    return hits / math.log(rank_pos + 1, log_base)


@dataclass(frozen=True)
class Explanation:
    user: str
    item: str
    review_id: str
    rank_position: int
    score: float
    keywords: tuple[str, ...]
    fallback: bool = False


def select_explanation(pc: PredictedContext, docs: Mapping[str, Sequence[str]], model: TfIdfModel,
                       k: int = 3, log_base: float = 2.0) -> Explanation:
    """Pick the context review with the best rank-discounted keyword score.

    Ties go to the better rank (then review id, which rank order already
    respects). When every score is zero the rank-1 review is returned and
    flagged as a fallback.
    """
    v = cumulative_vector(model, pc, docs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        kw = extract_keywords(v, model, k)
    best = None
    for pos, rid in enumerate(pc.review_ids, start=1):
        s = score_review(docs[rid], kw, pos, log_base)
        if best is None or s > best[0]:
            best = (s, pos, rid)
    score, pos, rid = best
    r = pc.ranking
    return Explanation(r.user, r.item, rid, pos, score, tuple(kw), fallback=score == 0)


def write_explanations(explanations: Iterable[Explanation], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user_id\titem_id\treview_id\trank_position\tscore\tkeywords\n")
        for e in explanations:
            fh.write(f"{e.user}\t{e.item}\t{e.review_id}\t{e.rank_position}\t{e.score:.6f}\t{','.join(e.keywords)}\n")


def read_explanations(path) -> list[Explanation]:
    out = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            u, i, rid, pos, score, kw = line.rstrip("\n").split("\t")
            out.append(Explanation(u, i, rid, int(pos), float(score), tuple(kw.split(",")) if kw else ()))
    return out


# --------------------------------------------------------------------------
# global-level explanation ranking


def global_rankings(probs: np.ndarray, pool_ids: Sequence[str], users, pairs: Sequence[tuple[str, str]],
                    k: int = 10) -> list[list[str]]:
    """Top-``k`` ids from a shared explanation pool for each (user, item) pair.

    ``probs`` holds the model output for every pool entry, shape ``(len(pool), |users|)``.
    Pairs whose user has no output column get an empty list.
    """
    out = []
    col = users.column_index
    ids = np.asarray(pool_ids)
    for user, _item in pairs:
        j = col.get(user)
        if j is None:
            out.append([])
            continue
        # stable sort on -p keeps pool order for ties; pool is sorted by id upstream
        order = np.argsort(-probs[:, j], kind="stable")[:k]
        out.append([str(x) for x in ids[order]])
    return out

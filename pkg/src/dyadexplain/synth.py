"""Synthetic review corpora with planted taste groups.

Users belong to taste groups; each group owns a disjoint vocabulary of
pseudo-word nouns. A user reviews items mostly from its own group's
catalogue, revisiting a favourite up to ``max_visits`` times, writing in its group's vocabulary (biased toward a
personal favourite subset), plus item signature words, the odd mention of
the item name and shared filler. Output is a TripAdvisor-layout TSV with a
matching noun lexicon and lemma table.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dyadic import DyadicDataset, Interaction, write_reviews
from .errors import ConfigurationError

FILLER_NOUNS = (
    "food", "place", "service", "staff", "restaurant", "table", "menu", "dinner",
    "lunch", "meal", "price", "night", "friend", "atmosphere", "view", "drink",
)
ADJECTIVES = (
    "great", "lovely", "amazing", "good", "excellent", "nice", "fantastic", "friendly",
    "tasty", "wonderful", "fresh", "perfect", "delicious", "superb",
)
NEGATIVE_ADJ = ("slow", "cold", "bland", "rude", "noisy", "overpriced", "dirty", "average")
_CONS = "bcdfghjklmnprstvz"
_VOW = "aeiou"


@dataclass(frozen=True)
class SynthSpec:
    n_users: int = 100
    n_items: int = 40
    n_groups: int = 4
    vocab_per_group: int = 30
    ratio: float = 20.0
    seed: int = 0
    cross_group: float = 0.1
    favourites: int = 6
    taste_words: int = 4
    signature_words: int = 1
    name_mention: float = 0.3
    max_visits: int = 3
    negative_share: float = 0.1
    plural_rate: float = 0.15
    city: str = "Synthville"

    def check(self):
        if self.n_users < 1 or self.n_items < 1 or self.n_groups < 1 or self.vocab_per_group < 1:
            raise ConfigurationError("users, items, groups and vocabulary size must be >= 1")
        if self.n_groups > self.n_items:
            raise ConfigurationError("need at least one item per taste group")
        if self.max_visits < 1:
            raise ConfigurationError("max_visits must be >= 1")
        cap = self.n_items * self.max_visits
        if not 1.0 <= self.ratio <= cap:
            raise ConfigurationError(
                f"review/user ratio {self.ratio} infeasible: each user writes between 1 and {cap} reviews"
                f" ({self.n_items} items, at most {self.max_visits} per item)"
            )
        if not 0 <= self.cross_group <= 1 or not 0 <= self.name_mention <= 1:
            raise ConfigurationError("probabilities must lie in [0, 1]")
        if self.taste_words < 1 or self.signature_words < 0:
            raise ConfigurationError("need at least one taste word per review")


@dataclass
class SynthResult:
    dataset: DyadicDataset
    reviews_path: Path | None = None
    nouns_path: Path | None = None
    lemmas_path: Path | None = None
    groups: dict | None = None


def _pseudo_words(rng, n, taken):
    words = []
    while len(words) < n:
        syl = rng.integers(2, 4)
        w = "".join(_CONS[rng.integers(len(_CONS))] + _VOW[rng.integers(len(_VOW))] for _ in range(syl))
        if rng.random() < 0.5:
            w += _CONS[rng.integers(len(_CONS))]
        if w in taken or w.endswith("s"):
            continue
        taken.add(w)
        words.append(w)
    return words


def _review_counts(rng, spec: SynthSpec) -> np.ndarray:
    """Long-tailed per-user counts in [1, n_items * max_visits] summing to round(ratio * n_users)."""
    U, cap = spec.n_users, spec.n_items * spec.max_visits
    target = int(round(spec.ratio * U))
    p = 1.0 / spec.ratio
    counts = np.minimum(rng.geometric(p, size=U), cap)
    while counts.sum() > target:
        idx = np.flatnonzero(counts > 1)
        counts[idx[rng.integers(idx.size)]] -= 1
    while counts.sum() < target:
        idx = np.flatnonzero(counts < cap)
        counts[idx[rng.integers(idx.size)]] += 1
    return counts


def make_dataset(spec: SynthSpec) -> tuple[DyadicDataset, dict]:
    spec.check()
    rng = np.random.default_rng(spec.seed)
    G = spec.n_groups
    taken = set(FILLER_NOUNS) | set(ADJECTIVES) | set(NEGATIVE_ADJ)
    vocab = [_pseudo_words(rng, spec.vocab_per_group, taken) for _ in range(G)]
    names = _pseudo_words(rng, spec.n_items, taken)
    item_group = np.arange(spec.n_items) % G
    item_sig = [list(rng.choice(vocab[item_group[i]], size=min(3, spec.vocab_per_group), replace=False))
                for i in range(spec.n_items)]
    popularity = 1.0 / np.sqrt(1.0 + rng.permutation(spec.n_items))
    user_group = rng.permutation(np.arange(spec.n_users) % G)
    favs = [list(rng.choice(vocab[user_group[u]], size=min(spec.favourites, spec.vocab_per_group), replace=False))
            for u in range(spec.n_users)]
    counts = _review_counts(rng, spec)

    def noun(w):
        return w + "s" if rng.random() < spec.plural_rate else w

    def positive_text(u, i):
        g = user_group[u]
        taste = [str(rng.choice(favs[u])) if rng.random() < 0.7 else str(rng.choice(vocab[g]))
                 for _ in range(spec.taste_words)]
        sig = [str(x) for x in rng.choice(item_sig[i], size=spec.signature_words)]
        nouns = [noun(w) for w in taste + sig]
        nouns = [nouns[k] for k in rng.permutation(len(nouns))]
        fill = [noun(str(x)) for x in rng.choice(FILLER_NOUNS, size=3)]
        adj = [str(x) for x in rng.choice(ADJECTIVES, size=4)]
        half = (len(nouns) + 1) // 2
        parts = [
            f"The {fill[0]} was {adj[0]} and the {' and '.join(nouns[:half])} {adj[1]}.",
            f"We loved the {fill[1]}, really {adj[2]}!",
            f"Try the {', '.join(nouns[half:]) or fill[2]}; {fill[2]} {adj[3]}.",
        ]
        if rng.random() < spec.name_mention:
            parts.append(f"{names[i].capitalize()} is a must.")
        order = rng.permutation(len(parts))
        title = f"{adj[1].capitalize()} {taste[0]}" if taste else adj[1].capitalize()
        return " ".join(parts[k] for k in order), title

    def negative_text():
        fill = rng.choice(FILLER_NOUNS, size=3)
        adj = rng.choice(NEGATIVE_ADJ, size=2)
        return f"The {fill[0]} was {adj[0]} and the {fill[1]} {adj[1]}. Not coming back for the {fill[2]}.", "Disappointing"

    rows = []
    pair_seen = set()
    base_date = _dt.date(2019, 1, 1)
    for u in range(spec.n_users):
        w = np.where(item_group == user_group[u], 1.0 - spec.cross_group, spec.cross_group) * popularity
        if G == 1:
            w = popularity.copy()
        # tiny floor keeps cross-group items reachable once home items are used up
        w = np.where(w > 0, w, 1e-12)
        visits = np.zeros(spec.n_items, dtype=np.int64)
        for _ in range(counts[u]):
            avail = np.where(visits < spec.max_visits, w, 0.0)
            i = int(rng.choice(spec.n_items, p=avail / avail.sum()))
            visits[i] += 1
            text, title = positive_text(u, i)
            rows.append((u, i, int(rng.integers(4, 6)), text, title))
            pair_seen.add((u, i))
    n_neg = int(round(spec.negative_share * len(rows)))
    attempts = 0
    while n_neg > 0 and attempts < 100 * (n_neg + 1):
        attempts += 1
        u, i = int(rng.integers(spec.n_users)), int(rng.integers(spec.n_items))
        if (u, i) in pair_seen:
            continue
        pair_seen.add((u, i))
        text, title = negative_text()
        rows.append((u, i, int(rng.integers(1, 4)), text, title))
        n_neg -= 1
    order = rng.permutation(len(rows))
    interactions = []
    for n, k in enumerate(order, start=1):
        u, i, score, text, title = rows[k]
        interactions.append(Interaction(
            user=f"UID_{u:05d}", item=f"Casa_{names[i].capitalize()}", score=score,
            review_id=f"review_{n:07d}", text=text, title=title, city=spec.city,
            date=base_date + _dt.timedelta(days=int(rng.integers(0, 1500))),
        ))
    meta = {
        "vocab": vocab,
        "item_names": names,
        "item_group": item_group.tolist(),
        "user_group": user_group.tolist(),
    }
    return DyadicDataset(interactions, spec.city), meta


def generate_synthetic(spec: SynthSpec, out_dir=None) -> SynthResult:
    """Build the corpus; with ``out_dir`` also write reviews.tsv, nouns.txt, lemmas.tsv, synth.json."""
    d, meta = make_dataset(spec)
    res = SynthResult(d, groups=meta)
    if out_dir is None:
        return res
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res.reviews_path = out / "reviews.tsv"
    write_reviews(d, res.reviews_path)
    # item names stay out of the lexicon, like proper nouns
    nouns = sorted(set(FILLER_NOUNS) | {w for g in meta["vocab"] for w in g})
    res.nouns_path = out / "nouns.txt"
    res.nouns_path.write_text("\n".join(nouns) + "\n", encoding="utf-8")
    res.lemmas_path = out / "lemmas.tsv"
    res.lemmas_path.write_text("".join(f"{w}s\t{w}\n" for w in nouns), encoding="utf-8")
    with open(out / "synth.json", "w", encoding="utf-8") as fh:
        json.dump({"spec": asdict(spec), **meta}, fh, indent=1, sort_keys=True)
    return res


def achieved_ratio(d: DyadicDataset) -> float:
    pos = [it for it in d if it.positive]
    users = {it.user for it in pos}
    return len(pos) / len(users) if users else math.nan

"""Dyadic (user, item, review) data model, file ingestion and contexts.

A dataset is a directed bipartite graph: users point at items through
scored reviews. Scores 4-5 are positive interactions, 1-3 negative.
"""

from __future__ import annotations

import datetime as _dt
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError, EmptyContextError, MalformedFileError, NotFoundError

log = logging.getLogger(__name__)

POSITIVE_SCORES = frozenset({4, 5})

TRIPADVISOR_COLUMNS = (
    "parse_count",
    "user_id",
    "author",
    "restaurant_name",
    "rating_review",
    "sample",
    "review_id",
    "title_review",
    "review_preview",
    "review_full",
    "url_review",
    "date",
    "city",
    "url_restaurant",
)
# columns the reader cannot do without; the rest of the header is optional
TRIPADVISOR_REQUIRED = ("user_id", "restaurant_name", "rating_review", "review_id", "review_full")
EXTRA_COLUMNS = ("user_id", "item_id", "explanation_id", "explanation_text", "score")
FORMATS = ("tripadvisor-tsv", "extra-triplets")

_NULLS = {"", "nan", "null", "none", "na"}


def is_positive(score: int) -> bool:
    return score in POSITIVE_SCORES


@dataclass(frozen=True)
class Interaction:
    """One scored edge ``user -> item`` carrying a review."""

    user: str
    item: str
    score: int
    review_id: str
    text: str
    title: str = ""
    city: str = ""
    date: _dt.date | None = None
    # EXTRA triplets share explanation ids across rows; review_id stays row-unique.
    explanation_id: str | None = None

    def __post_init__(self):
        if not self.user or not self.item or not self.review_id:
            raise ValueError("identifiers must be non-empty")
        if self.score not in (1, 2, 3, 4, 5):
            raise ValueError(f"score must be in 1..5, got {self.score!r}")

    @property
    def positive(self) -> bool:
        return is_positive(self.score)

    def model_text(self, include_title: bool = True) -> str:
        """Text fed to the encoder: title and body joined by one space."""
        if include_title and self.title:
            return f"{self.title} {self.text}"
        return self.text


class DyadicDataset:
    """Immutable, city-demarcated collection of interactions with indexes.

    Parameters
    ----------
    interactions : iterable of Interaction
    city : str
    discarded : int
        Rows dropped at ingestion because text or score was empty/null.
    """

    def __init__(self, interactions: Iterable[Interaction], city: str = "", discarded: int = 0):
        self._interactions = tuple(interactions)
        self.city = city
        self.discarded = discarded
        by_user: dict[str, list[int]] = defaultdict(list)
        by_item: dict[str, list[int]] = defaultdict(list)
        by_review: dict[str, int] = {}
        for pos, it in enumerate(self._interactions):
            if it.review_id in by_review:
                raise ValueError(f"duplicate review_id {it.review_id!r}")
            by_review[it.review_id] = pos
            by_user[it.user].append(pos)
            by_item[it.item].append(pos)
        self._by_user = {u: tuple(v) for u, v in by_user.items()}
        self._by_item = {i: tuple(v) for i, v in by_item.items()}
        self._by_review = by_review

    @property
    def interactions(self) -> tuple[Interaction, ...]:
        return self._interactions

    def __len__(self):
        return len(self._interactions)

    def __iter__(self):
        return iter(self._interactions)

    def __eq__(self, other):
        if not isinstance(other, DyadicDataset):
            return NotImplemented
        return self.city == other.city and self._interactions == other._interactions

    def __repr__(self):
        return (
            f"DyadicDataset(city={self.city!r}, interactions={len(self)}, "
            f"users={len(self.users)}, items={len(self.items)})"
        )

    @property
    def users(self) -> list[str]:
        return sorted(self._by_user)

    @property
    def items(self) -> list[str]:
        return sorted(self._by_item)

    def has_user(self, user: str) -> bool:
        return user in self._by_user

    def by_user(self, user: str) -> list[Interaction]:
        return [self._interactions[p] for p in self._by_user.get(user, ())]

    def by_item(self, item: str) -> list[Interaction]:
        return [self._interactions[p] for p in self._by_item.get(item, ())]

    def review(self, review_id: str) -> Interaction:
        try:
            return self._interactions[self._by_review[review_id]]
        except KeyError:
            raise NotFoundError(f"unknown review_id {review_id!r}") from None

    def subset(self, review_ids: Iterable[str]) -> "DyadicDataset":
        keep = set(review_ids)
        return DyadicDataset([it for it in self if it.review_id in keep], self.city)


# --------------------------------------------------------------------------
# ingestion


def _is_null(value: str | None) -> bool:
    return value is None or value.strip().lower() in _NULLS


def _parse_score(raw: str, path, row: int) -> int:
    try:
        score = int(float(raw))
    except ValueError:
        raise MalformedFileError(path, row, f"score {raw!r} is not an integer") from None
    if float(raw) != score or not 1 <= score <= 5:
        raise MalformedFileError(path, row, f"score {raw!r} outside 1..5")
    return score


def _parse_date(raw: str) -> _dt.date | None:
    if _is_null(raw):
        return None
    raw = raw.strip()
    for fmt in ("%Y-%m-%d", "%B %d, %Y", "%d %B %Y", "%d/%m/%Y"):
        try:
            return _dt.datetime.strptime(raw, fmt).date()
        except ValueError:
            continue
    return None


def _split_lines(fh):
    for line in fh:
        line = line.rstrip("\r\n")
        yield line.split("\t") if line else []


def _read_rows(path: Path, required: Sequence[str]):
    fh = open(path, encoding="utf-8", newline="")
    reader = _split_lines(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise MalformedFileError(path, None, "empty file") from None
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise MalformedFileError(path, None, f"missing columns {missing}")
    return fh, reader, header


def ingest_by_city(path, format: str = "tripadvisor-tsv", city: str | None = None) -> dict[str, DyadicDataset]:
    """Read a review file and split it into one dataset per city.

    Rows with empty/null review text or score are discarded and counted per
    city; structurally broken rows reject the whole file.
    """
    if format not in FORMATS:
        raise ConfigurationError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"dataset file not found: {path}")
    required = TRIPADVISOR_REQUIRED if format == "tripadvisor-tsv" else EXTRA_COLUMNS
    fh, reader, header = _read_rows(path, required)
    col = {name: i for i, name in enumerate(header)}
    per_city: dict[str, list[Interaction]] = defaultdict(list)
    discarded: Counter = Counter()
    seen: set[str] = set()
    with fh:
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedFileError(path, row_no, f"expected {len(header)} fields, got {len(row)}")
            get = lambda name: row[col[name]] if name in col else ""  # noqa: E731
            if format == "tripadvisor-tsv":
                row_city = get("city").strip() or (city or "")
                text, raw_score = get("review_full"), get("rating_review")
            else:
                row_city = city or "extra"
                text, raw_score = get("explanation_text"), get("score")
            if _is_null(text) or _is_null(raw_score):
                discarded[row_city] += 1
                continue
            score = _parse_score(raw_score, path, row_no)
            if format == "tripadvisor-tsv":
                user, item, rid = get("user_id"), get("restaurant_name"), get("review_id")
                title = "" if _is_null(get("title_review")) else get("title_review")
                date = _parse_date(get("date"))
                expl = None
            else:
                user, item, expl = get("user_id"), get("item_id"), get("explanation_id")
                rid, title, date = f"{expl}@{row_no - 1}", "", None
            if not user or not item or not rid:
                raise MalformedFileError(path, row_no, "empty identifier")
            if rid in seen:
                raise MalformedFileError(path, row_no, f"duplicate review_id {rid!r}")
            seen.add(rid)
            per_city[row_city].append(
                Interaction(user, item, score, rid, text, title, row_city, date, expl)
            )
    cities = set(per_city) | set(discarded)
    if city is not None:
        cities &= {city}
        if not cities:
            cities = {city}
    out = {c: DyadicDataset(per_city.get(c, ()), c, discarded.get(c, 0)) for c in sorted(cities)}
    return out


def ingest_reviews(path, format: str = "tripadvisor-tsv", city: str | None = None) -> DyadicDataset:
    """Read one city's dataset from ``path``.

    When the file holds several cities, ``city`` must name one of them.
    """
    datasets = ingest_by_city(path, format, city)
    if len(datasets) == 1:
        return next(iter(datasets.values()))
    if not datasets:
        return DyadicDataset((), city or "")
    raise ConfigurationError(
        f"{path} contains several cities {sorted(datasets)}; choose one with city="
    )


def write_reviews(d: DyadicDataset, path, format: str = "tripadvisor-tsv") -> None:
    """Serialise a dataset in one of the ingestible formats."""
    if format not in FORMATS:
        raise ConfigurationError(f"unknown dataset format {format!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _TsvWriter(fh)
        if format == "tripadvisor-tsv":
            w.writerow(TRIPADVISOR_COLUMNS)
            for n, it in enumerate(d, start=1):
                w.writerow([
                    n, it.user, it.user, it.item, it.score,
                    "Positive" if it.positive else "Negative",
                    it.review_id, _clean(it.title), _clean(it.text[:120]), _clean(it.text), "",
                    it.date.isoformat() if it.date else "", it.city or d.city, "",
                ])
        else:
            w.writerow(EXTRA_COLUMNS)
            for it in d:
                w.writerow([it.user, it.item, it.explanation_id or it.review_id, _clean(it.text), it.score])


class _TsvWriter:
    def __init__(self, fh):
        self.fh = fh

    def writerow(self, fields):
        self.fh.write("\t".join(str(f) for f in fields) + "\n")


def _clean(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ").replace("\r", " ")


# --------------------------------------------------------------------------
# positivity and contexts


def filter_positive(d: DyadicDataset) -> DyadicDataset:
    return DyadicDataset([it for it in d if it.positive], d.city, d.discarded)


@dataclass(frozen=True)
class ContextSet:
    """Set of ``(user, item, score)`` edges owned by one user."""

    owner: str
    edges: frozenset = field(default_factory=frozenset)
    kind: str = "raw"

    def __post_init__(self):
        if self.kind not in ("raw", "positive", "expanded"):
            raise ValueError(f"bad context kind {self.kind!r}")

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(sorted(self.edges))

    def __contains__(self, edge):
        return edge in self.edges

    @property
    def items(self) -> set[str]:
        return {item for _, item, _ in self.edges}


def _edges(interactions: Iterable[Interaction]) -> frozenset:
    # duplicates on (user, item, score) collapse here by construction
    return frozenset((it.user, it.item, it.score) for it in interactions)


def user_context(d: DyadicDataset, u: str, positive_only: bool = False) -> ContextSet:
    if not d.has_user(u):
        raise NotFoundError(f"unknown user {u!r}")
    edges = d.by_user(u)
    if positive_only:
        edges = [it for it in edges if it.positive]
    return ContextSet(u, _edges(edges), "positive" if positive_only else "raw")


def restaurant_context(d: DyadicDataset, u: str, item: str) -> ContextSet:
    """Positive edges toward ``item`` from users other than ``u``.

    Only defined when ``u`` itself positively interacted with ``item``.
    """
    if not any(it.positive and it.item == item for it in d.by_user(u)):
        raise EmptyContextError(f"user {u!r} has no positive interaction with {item!r}")
    others = [it for it in d.by_item(item) if it.positive and it.user != u]
    return ContextSet(u, _edges(others), "positive")


def expanded_context(d: DyadicDataset, u: str) -> ContextSet:
    own = user_context(d, u, positive_only=True)
    edges = set(own.edges)
    for item in own.items:
        edges |= restaurant_context(d, u, item).edges
    return ContextSet(u, frozenset(edges), "expanded")


def positive_counts(d: DyadicDataset) -> Counter:
    """Raw positive-interaction count per user."""
    return Counter(it.user for it in d if it.positive)


# --------------------------------------------------------------------------
# statistics


@dataclass
class StatsReport:
    total_reviews: int
    positive_reviews: int
    negative_reviews: int
    positive_users: int
    distinct_items: int
    review_user_ratio: float  # nan when there are no positive users
    liked_histogram: dict[int, int]
    discarded: int = 0

    @property
    def ratio_defined(self) -> bool:
        return not math.isnan(self.review_user_ratio)


def dataset_stats(d: DyadicDataset) -> StatsReport:
    pos = [it for it in d if it.positive]
    users = {it.user for it in pos}
    liked: dict[str, set] = defaultdict(set)
    for it in pos:
        liked[it.user].add(it.item)
    hist = Counter(len(v) for v in liked.values())
    ratio = len(pos) / len(users) if users else float("nan")
    return StatsReport(
        total_reviews=len(d),
        positive_reviews=len(pos),
        negative_reviews=len(d) - len(pos),
        positive_users=len(users),
        distinct_items=len({it.item for it in pos}),
        review_user_ratio=ratio,
        liked_histogram=dict(sorted(hist.items())),
        discarded=d.discarded,
    )

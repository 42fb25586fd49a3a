"""Multi-label targets over the most active users, partitioning, ML-ROS."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .dyadic import DyadicDataset, positive_counts
from .errors import MalformedFileError, NotFoundError


@dataclass(frozen=True)
class ActiveUserSet:
    """Ordered label columns: position ``j`` is user ``users[j]``."""

    users: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if len(set(self.users)) != len(self.users):
            raise ValueError("duplicate users in active set")

    def __len__(self):
        return len(self.users)

    def __iter__(self):
        return iter(self.users)

    def __getitem__(self, j):
        return self.users[j]

    def __contains__(self, user):
        return user in self.column_index

    @property
    def column_index(self) -> dict[str, int]:
        return {u: j for j, u in enumerate(self.users)}

    def column(self, user: str) -> int:
        try:
            return self.column_index[user]
        except KeyError:
            raise NotFoundError(f"user {user!r} is not an active user") from None


@dataclass
class LabeledSample:
    review_id: str
    text: str
    target: np.ndarray  # uint8, length |active users|

    def __eq__(self, other):
        return (
            isinstance(other, LabeledSample)
            and self.review_id == other.review_id
            and self.text == other.text
            and np.array_equal(self.target, other.target)
        )


@dataclass
class TargetMatrix:
    samples: list[LabeledSample]
    users: ActiveUserSet
    discarded: int = 0

    def __len__(self):
        return len(self.samples)

    @property
    def Y(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, len(self.users)), dtype=np.uint8)
        return np.stack([s.target for s in self.samples])

    @property
    def review_ids(self) -> list[str]:
        return [s.review_id for s in self.samples]


@dataclass
class Partitions:
    train: list[LabeledSample]
    validation: list[LabeledSample]
    test: list[LabeledSample]
    seed: int
    users: ActiveUserSet | None = field(default=None, repr=False)


def select_active_users(d: DyadicDataset, n: int) -> ActiveUserSet:
    """Top-``n`` users by raw positive-interaction count.

    Ties are broken by ascending user id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    counts = positive_counts(d)
    users = d.users
    if n > len(users):
        warnings.warn(f"requested {n} active users but dataset has {len(users)}; using all", stacklevel=2)
    ranked = sorted(users, key=lambda u: (-counts.get(u, 0), u))
    return ActiveUserSet(tuple(ranked[:n]))


def build_targets(d: DyadicDataset, users: ActiveUserSet, discard_zero: bool = True,
                  include_title: bool = True) -> TargetMatrix:
    """One binary row per review over the active-user columns.

    Column ``j`` is set when user ``j`` wrote the review or positively
    interacted with the review's item (expanded context). All-zero rows are
    dropped and counted unless ``discard_zero`` is false.
    """
    liked_by: dict[str, list[int]] = {}
    for j, u in enumerate(users):
        for it in d.by_user(u):
            if it.positive:
                liked_by.setdefault(it.item, []).append(j)
    col = users.column_index
    n_cols = len(users)
    samples, discarded = [], 0
    for it in d:
        target = np.zeros(n_cols, dtype=np.uint8)
        if it.user in col:
            target[col[it.user]] = 1
        cols = liked_by.get(it.item)
        if cols:
            target[cols] = 1
        if discard_zero and not target.any():
            discarded += 1
            continue
        samples.append(LabeledSample(it.review_id, it.model_text(include_title), target))
    return TargetMatrix(samples, users, discarded)


def write_targets(m: TargetMatrix, path) -> tuple[Path, Path]:
    """Persist as ``review_id<TAB>space-separated 1-columns``; users go to ``<path>.users``."""
    path = Path(path)
    users_path = path.with_name(path.name + ".users")
    with open(path, "w", encoding="utf-8") as fh:
        for s in m.samples:
            fh.write(s.review_id + "\t" + " ".join(str(j) for j in np.flatnonzero(s.target)) + "\n")
    with open(users_path, "w", encoding="utf-8") as fh:
        fh.write(f"# discarded={m.discarded}\n")
        for u in m.users:
            fh.write(u + "\n")
    return path, users_path


def read_targets(path, d: DyadicDataset, include_title: bool = True) -> TargetMatrix:
    path = Path(path)
    users_path = path.with_name(path.name + ".users")
    discarded, users = 0, []
    with open(users_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# discarded="):
                discarded = int(line.split("=", 1)[1])
            elif line:
                users.append(line)
    au = ActiveUserSet(tuple(users))
    samples = []
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            rid, _, cols = line.rstrip("\n").partition("\t")
            target = np.zeros(len(au), dtype=np.uint8)
            try:
                idx = [int(c) for c in cols.split()]
                target[idx] = 1
            except (ValueError, IndexError):
                raise MalformedFileError(path, row, "bad column index") from None
            samples.append(LabeledSample(rid, d.review(rid).model_text(include_title), target))
    return TargetMatrix(samples, au, discarded)


def split(m: TargetMatrix | Sequence[LabeledSample], ratios=(0.70, 0.15, 0.15), seed: int = 0) -> Partitions:
    """Seeded shuffle, then contiguous train/validation/test slices.

    Train and validation sizes are floored; test takes the remainder.
    """
    samples = m.samples if isinstance(m, TargetMatrix) else list(m)
    users = m.users if isinstance(m, TargetMatrix) else None
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three values summing to 1, got {ratios}")
    n = len(samples)
    if n < 3:
        raise ValueError(f"need at least 3 samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(n * ratios[0] + 1e-9)
    n_val = math.floor(n * ratios[1] + 1e-9)
    shuffled = [samples[i] for i in order]
    return Partitions(
        shuffled[:n_train],
        shuffled[n_train:n_train + n_val],
        shuffled[n_train + n_val:],
        seed,
        users,
    )


# --------------------------------------------------------------------------
# ML-ROS


def imbalance_levels(Y: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-label imbalance ratio (max count / count) and their mean.

    Labels never set are excluded (NaN level) since nothing can be cloned for them.
    """
    counts = Y.sum(axis=0).astype(float)
    present = counts > 0
    levels = np.full(Y.shape[1], np.nan)
    if not present.any():
        return levels, float("nan")
    levels[present] = counts[present].max() / counts[present]
    return levels, float(np.nanmean(levels))


def minority_labels(Y: np.ndarray) -> np.ndarray:
    """Boolean mask of labels whose imbalance level exceeds the mean."""
    levels, mean_ir = imbalance_levels(Y)
    if math.isnan(mean_ir):
        return np.zeros(Y.shape[1], dtype=bool)
    return np.nan_to_num(levels, nan=0.0) > mean_ir


def mlros_oversample(train: Sequence[LabeledSample], pct: float = 20, seed: int = 0,
                     min_mean_ir: float = 1.5) -> list[LabeledSample]:
    """Multi-label random oversampling of the training partition.

    Grows the collection to ``ceil((1 + pct/100) * n)`` by appending clones of
    samples that carry at least one minority label (imbalance level above the
    mean). Returns the input unchanged when the mean imbalance ratio is at
    most ``min_mean_ir`` or no minority sample exists.

    The minority set is refreshed every tenth of the clone budget: a label
    leaves it once its level falls to the initial mean ratio.
    """
    if pct < 0:
        raise ValueError("pct must be >= 0")
    out = list(train)
    n = len(out)
    if n == 0 or pct == 0:
        return out
    target_size = math.ceil(Fraction(n) * (100 + Fraction(pct).limit_denominator(10**6)) / 100)
    budget = target_size - n
    Y = np.stack([s.target for s in out]).astype(np.int64)
    _, mean_ir = imbalance_levels(Y)
    minority = minority_labels(Y)
    bag = np.flatnonzero(Y[:, minority].any(axis=1))
    if bag.size == 0 or not mean_ir > min_mean_ir:
        return out
    rng = np.random.default_rng(seed)
    counts = Y.sum(axis=0)
    present = counts > 0
    refresh = max(1, math.ceil(budget / 10))
    for done in range(budget):
        if done and done % refresh == 0:
            levels = np.zeros(len(counts))
            levels[present] = counts[present].max() / counts[present]
            still = minority & (levels > mean_ir)
            if still.any():
                minority = still
                bag = np.flatnonzero(Y[:, minority].any(axis=1))
        pick = int(bag[rng.integers(bag.size)])
        out.append(out[pick])
        counts = counts + Y[pick]
    return out

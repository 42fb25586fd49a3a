"""Review preprocessing and contextual-embedding providers.

The pretrained encoder is external. A provider maps a token sequence to the
hidden states of the encoder's last four layers; ``contextual_embed``
concatenates them into one ``T x 4d`` matrix per review.
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import CorruptFileError, NotFoundError, ProviderError

N_LAYERS = 4
EMB_MAGIC = "PTEREMB1"


@dataclass(frozen=True)
class PreprocessConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    max_tokens: int = 512
    truncation: str = "keep-head"

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.truncation != "keep-head":
            raise ValueError(f"unsupported truncation policy {self.truncation!r}")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def preprocess(text: str, cfg: PreprocessConfig = PreprocessConfig()) -> list[str]:
    """Lowercase, drop punctuation/symbols, whitespace-tokenise, keep the head.

    Stopwords and lemmas are left alone here; they would disturb the
    encoder's bidirectional context.
    """
    if cfg.lowercase:
        text = text.lower()
    if cfg.strip_punctuation:
        text = "".join(" " if _is_punct(ch) else ch for ch in text)
    return text.split()[: cfg.max_tokens]


@runtime_checkable
class EmbeddingProvider(Protocol):
    layer_width: int

    def hidden_states(self, tokens: Sequence[str], review_id: str | None = None) -> np.ndarray:
        """Last-four-layer hidden states, shape ``(4, T, layer_width)``."""
        ...


def contextual_embed(p: EmbeddingProvider, tokens: Sequence[str], review_id: str | None = None,
                     max_tokens: int = 512) -> np.ndarray:
    """Per-token concatenation of the provider's four layer states: ``T x 4d``."""
    tokens = list(tokens)[:max_tokens]
    if not tokens and review_id is None:
        raise ValueError("cannot embed an empty token list")
    try:
        states = np.asarray(p.hidden_states(tokens, review_id))
    except (NotFoundError, ProviderError):
        raise
    except Exception as exc:  # provider internals are opaque
        raise ProviderError(f"provider failed: {exc}", tokens) from exc
    if states.ndim != 3 or states.shape[0] != N_LAYERS or states.shape[2] != p.layer_width:
        raise ProviderError(f"provider returned states of shape {states.shape}", tokens)
    states = states[:, :max_tokens]
    # (4, T, d) -> (T, 4d) with layer blocks side by side
    return np.concatenate(list(states), axis=1)


class HashedSurrogateProvider:
    """Deterministic stand-in for a frozen encoder.

    Each (token, layer) pair gets a pseudo-random vector in [-1, 1) drawn from
    a SHAKE-256 stream keyed by the seed; the column index selects the word of
    the stream. Vectors ignore position, so the same token always embeds
    identically.
    """

    def __init__(self, seed: int = 0, layer_width: int = 16):
        if layer_width < 1:
            raise ValueError("layer width must be >= 1")
        self.seed = int(seed)
        self.layer_width = int(layer_width)
        self._cache: dict[str, np.ndarray] = {}

    def token_states(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            out = np.empty((N_LAYERS, self.layer_width))
            for layer in range(N_LAYERS):
                key = f"{self.seed}\x1f{layer + 1}\x1f{token}".encode()
                raw = hashlib.shake_256(key).digest(8 * self.layer_width)
                words = np.frombuffer(raw, dtype="<u8")
                out[layer] = words / 2.0**64 * 2.0 - 1.0
            self._cache[token] = vec = out
        return vec

    def hidden_states(self, tokens, review_id=None):
        if not tokens:
            raise ProviderError("empty token sequence", tokens)
        return np.stack([self.token_states(t) for t in tokens], axis=1)


def hashed_surrogate_provider(seed: int = 0, d: int = 16) -> HashedSurrogateProvider:
    return HashedSurrogateProvider(seed, d)


class PrecomputedProvider:
    """Serves matrices written by an externally run encoder, keyed by review id."""

    def __init__(self, matrices: Mapping[str, np.ndarray], layer_width: int):
        self.layer_width = int(layer_width)
        self._matrices = dict(matrices)

    def __contains__(self, review_id):
        return review_id in self._matrices

    def __len__(self):
        return len(self._matrices)

    def matrix(self, review_id: str) -> np.ndarray:
        try:
            return self._matrices[review_id]
        except KeyError:
            raise NotFoundError(f"no precomputed embedding for review {review_id!r}") from None

    def hidden_states(self, tokens, review_id=None):
        if review_id is None:
            raise ProviderError("precomputed provider needs a review_id", tokens)
        m = self.matrix(review_id).astype(np.float64)
        d = self.layer_width
        return np.stack([m[:, k * d:(k + 1) * d] for k in range(N_LAYERS)])


def write_precomputed(path, matrices: Mapping[str, np.ndarray], layer_width: int) -> None:
    """Write the PTEREMB1 format: ASCII header, then ``<id> <T>`` lines each followed
    by ``T x 4d`` little-endian float32 values, reviews sorted by id."""
    width = N_LAYERS * layer_width
    with open(path, "wb") as fh:
        fh.write(f"{EMB_MAGIC} {len(matrices)} {layer_width}\n".encode("ascii"))
        for rid in sorted(matrices):
            m = np.asarray(matrices[rid])
            if m.ndim != 2 or m.shape[1] != width:
                raise ValueError(f"review {rid!r}: expected T x {width}, got {m.shape}")
            if any(ch.isspace() for ch in rid):
                raise ValueError(f"review id {rid!r} contains whitespace")
            fh.write(f"{rid} {m.shape[0]}\n".encode("utf-8"))
            fh.write(m.astype("<f4").tobytes(order="C"))


def _readline(fh, path) -> str:
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise CorruptFileError(f"{path}: truncated record header")
    try:
        return line[:-1].decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptFileError(f"{path}: undecodable record header") from None


def load_precomputed_provider(path) -> PrecomputedProvider:
    path = Path(path)
    with open(path, "rb") as fh:
        parts = _readline(fh, path).split()
        if len(parts) != 3 or parts[0] != EMB_MAGIC:
            raise CorruptFileError(f"{path}: bad header {' '.join(parts)!r}")
        try:
            n, d = int(parts[1]), int(parts[2])
        except ValueError:
            raise CorruptFileError(f"{path}: bad header counts") from None
        if n < 0 or d < 1:
            raise CorruptFileError(f"{path}: bad header counts")
        width = N_LAYERS * d
        matrices = {}
        for _ in range(n):
            rec = _readline(fh, path).split(" ")
            if len(rec) != 2:
                raise CorruptFileError(f"{path}: bad record header {rec!r}")
            rid, t = rec[0], rec[1]
            try:
                t = int(t)
            except ValueError:
                raise CorruptFileError(f"{path}: bad token count for {rid!r}") from None
            nbytes = t * width * 4
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise CorruptFileError(f"{path}: truncated data for review {rid!r}")
            if rid in matrices:
                raise CorruptFileError(f"{path}: duplicate review {rid!r}")
            matrices[rid] = np.frombuffer(raw, dtype="<f4").reshape(t, width).copy()
        if fh.read(1):
            raise CorruptFileError(f"{path}: trailing bytes after {n} records")
    return PrecomputedProvider(matrices, d)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))

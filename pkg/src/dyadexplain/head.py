"""Trainable multi-label head over contextual embeddings.

Pipeline per review: bidirectional LSTM over the token embeddings ->
mean and max pooling over time, concatenated -> dropout -> dense ReLU layer
(L2-regularised) -> output layer with one sigmoid per active user.

Everything is plain numpy with hand-written backpropagation so training is
bit-reproducible for fixed seeds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptFileError, DyadExplainError, NumericFaultError, TrainingDivergedError
from .text import EmbeddingProvider, PreprocessConfig, contextual_embed, preprocess

log = logging.getLogger(__name__)

EPS = 1e-7
HEAD_MAGIC = "PTERHEAD1"


class EmptyReviewError(DyadExplainError, ValueError):
    pass


@dataclass(frozen=True)
class HeadConfig:
    hidden_size: int = 256
    dense_size: int = 512
    dropout_rate: float = 0.1
    l2_weight: float = 0.001
    positive_weight: float = 2.0
    learning_rate: float = 3e-5
    batch_size: int = 16
    early_stop_delta: float = 0.01
    patience: int = 3
    threshold: float = 0.5
    output_size: int = 100
    seed: int = 0
    max_epochs: int = 100
    early_stopping: bool = True
    max_tokens: int = 512

    def __post_init__(self):
        for name in ("hidden_size", "dense_size", "batch_size", "output_size", "max_epochs", "max_tokens"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")
        if self.learning_rate <= 0 or self.l2_weight < 0 or self.positive_weight <= 0:
            raise ValueError("learning_rate > 0, l2_weight >= 0, positive_weight > 0 required")
        if self.patience < 0 or self.early_stop_delta < 0:
            raise ValueError("patience and early_stop_delta must be non-negative")

    @classmethod
    def reference(cls, **kw) -> "HeadConfig":
        """Reference hyper-parameters (the defaults)."""
        return cls(**kw)

    @classmethod
    def extra(cls, **kw) -> "HeadConfig":
        """Explanation-ranking benchmark variant: plain BCE, 500 users, 4 fixed epochs."""
        base = dict(learning_rate=2e-5, output_size=500, positive_weight=1.0,
                    max_epochs=4, early_stopping=False)
        base.update(kw)
        return cls(**base)

    @classmethod
    def desk(cls, **kw) -> "HeadConfig":
        """Small head for surrogate embeddings at desk scale."""
        base = dict(hidden_size=8, dense_size=32, learning_rate=3e-3,
                    early_stop_delta=1e-3, max_epochs=40)
        base.update(kw)
        return cls(**base)


PARAM_ORDER = ("Wf", "bf", "Wb", "bb", "W1", "b1", "W2", "b2")


@dataclass
class HeadParams:
    """Weights. LSTM matrices act on ``[x; h]`` with gate rows ordered i, f, g, o."""

    Wf: np.ndarray
    bf: np.ndarray
    Wb: np.ndarray
    bb: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.Wf.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.Wf.shape[1] - self.hidden_size

    @property
    def dense_size(self) -> int:
        return self.W1.shape[0]

    @property
    def output_size(self) -> int:
        return self.W2.shape[0]

    def tensors(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_ORDER]

    def copy(self) -> "HeadParams":
        return HeadParams(*(t.copy() for t in self.tensors()))

    def check(self):
        H, D = self.hidden_size, self.input_size
        want = {
            "Wf": (4 * H, D + H), "bf": (4 * H,), "Wb": (4 * H, D + H), "bb": (4 * H,),
            "W1": (self.dense_size, 4 * H), "b1": (self.dense_size,),
            "W2": (self.output_size, self.dense_size), "b2": (self.output_size,),
        }
        for name, shape in want.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def init(cls, input_size: int, cfg: HeadConfig, rng: np.random.Generator | None = None) -> "HeadParams":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        H, D = cfg.hidden_size, input_size

        def glorot(rows, cols):
            lim = math.sqrt(6.0 / (rows + cols))
            return rng.uniform(-lim, lim, size=(rows, cols))

        return cls(
            Wf=glorot(4 * H, D + H), bf=np.zeros(4 * H),
            Wb=glorot(4 * H, D + H), bb=np.zeros(4 * H),
            W1=glorot(cfg.dense_size, 4 * H), b1=np.zeros(cfg.dense_size),
            W2=glorot(cfg.output_size, cfg.dense_size), b2=np.zeros(cfg.output_size),
        )


def save_head(params: HeadParams, path) -> None:
    """``PTERHEAD1 <D> <H> <dense> <out>`` header, then float32 LE tensors in PARAM_ORDER."""
    with open(path, "wb") as fh:
        fh.write(f"{HEAD_MAGIC} {params.input_size} {params.hidden_size} "
                 f"{params.dense_size} {params.output_size}\n".encode("ascii"))
        for t in params.tensors():
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_head(path) -> HeadParams:
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    head = raw[:nl].decode("ascii", errors="replace").split() if nl >= 0 else []
    if len(head) != 5 or head[0] != HEAD_MAGIC:
        raise CorruptFileError(f"{path}: bad head header")
    D, H, dense, out = (int(x) for x in head[1:])
    shapes = [(4 * H, D + H), (4 * H,), (4 * H, D + H), (4 * H,), (dense, 4 * H), (dense,), (out, dense), (out,)]
    body = raw[nl + 1:]
    need = sum(int(np.prod(s)) for s in shapes) * 4
    if len(body) != need:
        raise CorruptFileError(f"{path}: expected {need} bytes of weights, found {len(body)}")
    tensors, off = [], 0
    for s in shapes:
        n = int(np.prod(s)) * 4
        tensors.append(np.frombuffer(body[off:off + n], dtype="<f4").astype(np.float64).reshape(s))
        off += n
    return HeadParams(*tensors)


# --------------------------------------------------------------------------
# forward / backward building blocks


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _lstm_forward(W, b, X):
    """Unidirectional LSTM, zero initial state. X: (B, T, D) -> H_out (B, T, H)."""
    B, T, _ = X.shape
    H = W.shape[0] // 4
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = np.empty((B, T, H))
    cache = []
    for t in range(T):
        xh = np.concatenate([X[:, t], h], axis=1)
        z = xh @ W.T + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        out[:, t] = h
        cache.append((xh, i, f, g, o, c_prev, tc))
    return out, cache


def _lstm_backward(W, dOut, cache):
    B, T, H = dOut.shape
    D = W.shape[1] - H
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dX = np.empty((B, T, D))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        xh, i, f, g, o, c_prev, tc = cache[t]
        dh = dOut[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dc_next = dc * f
        dW += dz.T @ xh
        db += dz.sum(axis=0)
        dxh = dz @ W
        dX[:, t] = dxh[:, :D]
        dh_next = dxh[:, D:]
    return dW, db, dX


def _reverse_index(lengths, T):
    """Per-row gather index that reverses the valid prefix and leaves padding in place."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def _gather(A, idx):
    return np.take_along_axis(A, idx[:, :, None], axis=1)


def bilstm_forward(params: HeadParams, E: np.ndarray) -> np.ndarray:
    """Per-step ``[forward state; backward state]`` for one sequence: ``T x 2H``."""
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] < 1:
        raise ValueError("embedding matrix must be T x D with T >= 1")
    if E.shape[1] != params.input_size:
        raise ValueError(f"embedding width {E.shape[1]} does not match head input {params.input_size}")
    S, _ = _bilstm_batch(params, E[None], np.array([E.shape[0]]))
    return S[0]


def _bilstm_batch(params, X, lengths):
    T = X.shape[1]
    hf, cache_f = _lstm_forward(params.Wf, params.bf, X)
    ridx = _reverse_index(lengths, T)
    hb_rev, cache_b = _lstm_forward(params.Wb, params.bb, _gather(X, ridx))
    hb = _gather(hb_rev, ridx)
    return np.concatenate([hf, hb], axis=2), (cache_f, cache_b, ridx)


def pool_concat(S: np.ndarray) -> np.ndarray:
    """Column means followed by column maxima."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 1:
        raise ValueError("sequence must be T x F with T >= 1")
    return np.concatenate([S.mean(axis=0), S.max(axis=0)])


def _pool_batch(S, lengths):
    B, T, F = S.shape
    valid = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
    L = np.asarray(lengths, dtype=np.float64)[:, None]
    mean = np.where(valid[:, :, None], S, 0.0).sum(axis=1) / L
    masked = np.where(valid[:, :, None], S, -np.inf)
    arg = masked.argmax(axis=1)  # (B, F), first maximum on ties
    mx = np.take_along_axis(S, arg[:, None, :], axis=1)[:, 0]
    return np.concatenate([mean, mx], axis=1), (valid, L, arg)


def _pool_backward(dP, cache, shape):
    valid, L, arg = cache
    B, T, F = shape
    dmean, dmax = dP[:, :F], dP[:, F:]
    dS = np.where(valid[:, :, None], (dmean / L)[:, None, :], 0.0)
    rows = np.arange(B)[:, None]
    cols = np.arange(F)[None, :]
    dS[rows, arg, cols] += dmax
    return dS


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped units, 1/(1-rate) for survivors."""
    if rate <= 0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _check(x, layer):
    if not np.all(np.isfinite(x)):
        raise NumericFaultError(layer)
    return x


def _forward(params, X, lengths, dropout_rate=0.0, rng=None):
    S, lstm_cache = _bilstm_batch(params, X, lengths)
    _check(S, "bilstm")
    P, pool_cache = _pool_batch(S, lengths)
    if rng is not None and dropout_rate > 0:
        mask = dropout_mask(P.shape, dropout_rate, rng)
    else:
        mask = None
    Pd = P * mask if mask is not None else P
    A1 = Pd @ params.W1.T + params.b1
    R = np.maximum(A1, 0.0)
    _check(R, "dense")
    Z = R @ params.W2.T + params.b2
    _check(Z, "output")
    prob = sigmoid(Z)
    cache = dict(X=X, S=S, lstm=lstm_cache, P=P, pool=pool_cache, mask=mask, Pd=Pd, A1=A1, R=R, Z=Z)
    return prob, cache


def forward_trace(params: HeadParams, E, training: bool = False, seed: int = 0,
                  dropout_rate: float = 0.1) -> dict:
    """All intermediate activations of one forward pass (for inspection and tests)."""
    E = np.asarray(E, dtype=np.float64)
    if E.shape[1] != params.input_size:
        raise ValueError(f"embedding width {E.shape[1]} does not match head input {params.input_size}")
    rng = np.random.default_rng(seed) if training else None
    prob, cache = _forward(params, E[None], np.array([E.shape[0]]), dropout_rate, rng)
    trace = {k: cache[k][0] for k in ("S", "P", "Pd", "A1", "R", "Z")}
    trace["mask"] = cache["mask"][0] if cache["mask"] is not None else None
    trace["prob"] = prob[0]
    return trace


def head_forward(params: HeadParams, E, training: bool = False, seed: int = 0,
                 dropout_rate: float = 0.1) -> np.ndarray:
    """Probabilities for one embedded review. Dropout is active only when training."""
    return forward_trace(params, E, training, seed, dropout_rate)["prob"]


def weighted_bce(p, y, w: float = 2.0) -> float:
    """Mean over labels of ``-[w*y*ln p + (1-y)*ln(1-p)]`` with p clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1 - EPS)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    return float(np.mean(-(w * y * np.log(p) + (1 - y) * np.log(1 - p))))


def _loss_and_grads(params, X, lengths, Y, cfg: HeadConfig, rng=None, with_dropout=True):
    """Batch loss (mean weighted BCE + L2 on the dense weights) and its gradient."""
    rate = cfg.dropout_rate if with_dropout else 0.0
    prob, cache = _forward(params, X, lengths, rate, rng)
    B, L = Y.shape
    w = cfg.positive_weight
    pc = np.clip(prob, EPS, 1 - EPS)
    data_loss = float(np.mean(-(w * Y * np.log(pc) + (1 - Y) * np.log(1 - pc))))
    loss = data_loss + cfg.l2_weight * float(np.sum(params.W1 ** 2))

    inside = (prob > EPS) & (prob < 1 - EPS)
    dZ = (w * Y * (prob - 1.0) + (1.0 - Y) * prob) * inside / (B * L)
    g = {}
    g["W2"] = dZ.T @ cache["R"]
    g["b2"] = dZ.sum(axis=0)
    dR = dZ @ params.W2
    dA1 = dR * (cache["A1"] > 0)
    g["W1"] = dA1.T @ cache["Pd"] + 2.0 * cfg.l2_weight * params.W1
    g["b1"] = dA1.sum(axis=0)
    dPd = dA1 @ params.W1
    dP = dPd * cache["mask"] if cache["mask"] is not None else dPd
    S = cache["S"]
    dS = _pool_backward(dP, cache["pool"], S.shape)
    H = params.hidden_size
    cache_f, cache_b, ridx = cache["lstm"]
    g["Wf"], g["bf"], _ = _lstm_backward(params.Wf, dS[:, :, :H], cache_f)
    g["Wb"], g["bb"], _ = _lstm_backward(params.Wb, _gather(dS[:, :, H:], ridx), cache_b)
    return loss, data_loss, g, prob


def loss_and_gradients(params: HeadParams, E, y, cfg: HeadConfig):
    """Single-sample objective without dropout; gradients keyed by tensor name."""
    E = np.asarray(E, dtype=np.float64)
    Y = np.asarray(y, dtype=np.float64)[None]
    loss, _, g, _ = _loss_and_grads(params, E[None], np.array([E.shape[0]]), Y, cfg, with_dropout=False)
    return loss, g


# --------------------------------------------------------------------------
# training


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0  # 1-based

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.val_loss else float("nan")


class EmbeddingCache:
    """Embeds each review once; duplicates from oversampling share the entry."""

    def __init__(self, provider: EmbeddingProvider, max_tokens: int = 512,
                 pre: PreprocessConfig | None = None):
        self.provider = provider
        self.max_tokens = max_tokens
        self.pre = pre or PreprocessConfig(max_tokens=max_tokens)
        self._store: dict[str, np.ndarray] = {}

    def get(self, review_id: str | None, text: str) -> np.ndarray:
        key = review_id if review_id is not None else "\x00" + text
        m = self._store.get(key)
        if m is None:
            tokens = preprocess(text, self.pre)
            if not tokens and not _keyed(self.provider):
                raise EmptyReviewError(f"review {review_id!r} is empty after preprocessing")
            m = contextual_embed(self.provider, tokens, review_id if _keyed(self.provider) else None,
                                 self.max_tokens)
            if m.shape[0] == 0:
                raise EmptyReviewError(f"review {review_id!r} has no tokens")
            self._store[key] = m
        return m


def _keyed(provider) -> bool:
    return hasattr(provider, "matrix")


def _pad(mats: Sequence[np.ndarray]):
    lengths = np.array([m.shape[0] for m in mats])
    X = np.zeros((len(mats), lengths.max(), mats[0].shape[1]))
    for b, m in enumerate(mats):
        X[b, : m.shape[0]] = m
    return X, lengths


def _batches(n, size):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _mean_loss(params, mats, Y, cfg, chunk=64):
    total = 0.0
    for sl in _batches(len(mats), chunk):
        X, lengths = _pad(mats[sl])
        prob, _ = _forward(params, X, lengths)
        pc = np.clip(prob, EPS, 1 - EPS)
        w = cfg.positive_weight
        total += float(np.sum(np.mean(-(w * Y[sl] * np.log(pc) + (1 - Y[sl]) * np.log(1 - pc)), axis=1)))
    return total / len(mats)


class Adam:
    def __init__(self, params: HeadParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {n: np.zeros_like(getattr(params, n)) for n in PARAM_ORDER}
        self.v = {n: np.zeros_like(getattr(params, n)) for n in PARAM_ORDER}
        self.t = 0

    def step(self, params: HeadParams, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1 - b1 ** self.t
        corr2 = 1 - b2 ** self.t
        for n in PARAM_ORDER:
            g = grads[n]
            self.m[n] = b1 * self.m[n] + (1 - b1) * g
            self.v[n] = b2 * self.v[n] + (1 - b2) * g * g
            mhat = self.m[n] / corr1
            vhat = self.v[n] / corr2
            setattr(params, n, getattr(params, n) - self.lr * mhat / (np.sqrt(vhat) + self.eps))


def train(parts, provider: EmbeddingProvider, cfg: HeadConfig, cache: EmbeddingCache | None = None,
          init: HeadParams | None = None):
    """Fit the head with Adam on weighted BCE; early-stop on validation loss.

    ``parts`` is a Partitions-like object exposing ``train`` and ``validation``
    lists of labelled samples (already oversampled if desired). Returns the
    parameters of the epoch with the lowest validation loss and the history.
    """
    if not parts.train:
        raise ValueError("training partition is empty")
    cache = cache or EmbeddingCache(provider, cfg.max_tokens)
    tr_mats = [cache.get(s.review_id, s.text) for s in parts.train]
    Ytr = np.stack([s.target for s in parts.train]).astype(np.float64)
    if Ytr.shape[1] != cfg.output_size:
        raise ValueError(f"targets have {Ytr.shape[1]} labels but output_size is {cfg.output_size}")
    val = list(parts.validation)
    va_mats = [cache.get(s.review_id, s.text) for s in val]
    Yva = np.stack([s.target for s in val]).astype(np.float64) if val else None

    rng = np.random.default_rng(cfg.seed)
    params = init.copy() if init is not None else HeadParams.init(tr_mats[0].shape[1], cfg, rng)
    opt = Adam(params, cfg.learning_rate)
    hist = TrainHistory()
    best_params, best_loss = params.copy(), math.inf
    ref_loss, wait = None, 0
    n = len(tr_mats)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for sl in _batches(n, cfg.batch_size):
            idx = order[sl]
            X, lengths = _pad([tr_mats[i] for i in idx])
            loss, _, grads, _ = _loss_and_grads(params, X, lengths, Ytr[idx], cfg, rng)
            if not math.isfinite(loss):
                hist.stopped_epoch = epoch
                raise TrainingDivergedError(hist)
            opt.step(params, grads)
            total += loss * len(idx)
        hist.train_loss.append(total / n)
        monitored = _mean_loss(params, va_mats, Yva, cfg) if val else hist.train_loss[-1]
        if not math.isfinite(monitored):
            hist.stopped_epoch = epoch
            raise TrainingDivergedError(hist, "validation loss became non-finite")
        hist.val_loss.append(monitored)
        log.debug("epoch %d train %.5f val %.5f", epoch, hist.train_loss[-1], monitored)
        if monitored < best_loss:
            best_loss, best_params, hist.best_epoch = monitored, params.copy(), epoch
        hist.stopped_epoch = epoch
        if not cfg.early_stopping:
            continue
        if ref_loss is None or ref_loss - monitored >= cfg.early_stop_delta:
            ref_loss, wait = monitored, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    if not cfg.early_stopping:
        # fixed-epoch schedule keeps the final weights
        return params, replace(hist, best_epoch=hist.stopped_epoch)
    return best_params, hist


def predict_embedded(params: HeadParams, mats: Sequence[np.ndarray], chunk: int = 64) -> np.ndarray:
    """Inference-mode probabilities for already-embedded reviews, ``(n, |users|)``."""
    out = []
    for sl in _batches(len(mats), chunk):
        X, lengths = _pad(mats[sl])
        prob, _ = _forward(params, X, lengths)
        out.append(prob)
    return np.concatenate(out) if out else np.zeros((0, params.output_size))


def predict(params: HeadParams, provider: EmbeddingProvider, text: str, review_id: str | None = None,
            max_tokens: int = 512) -> np.ndarray:
    tokens = preprocess(text, PreprocessConfig(max_tokens=max_tokens))
    if not tokens:
        raise EmptyReviewError("review is empty after preprocessing")
    E = contextual_embed(provider, tokens, review_id if _keyed(provider) else None, max_tokens)
    return head_forward(params, E, training=False)


def classify(p, threshold: float = 0.5) -> set[int]:
    """Indices whose probability is strictly above ``threshold``."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    return {int(i) for i in np.flatnonzero(np.asarray(p) > threshold)}


__all__ = [
    "HeadConfig", "HeadParams", "TrainHistory", "EmbeddingCache", "EmptyReviewError",
    "bilstm_forward", "pool_concat", "head_forward", "forward_trace", "weighted_bce",
    "loss_and_gradients", "train", "predict", "predict_embedded", "classify",
    "save_head", "load_head", "dropout_mask", "sigmoid",
]

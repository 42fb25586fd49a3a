"""Pipeline configuration as flat ``key=value`` files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigurationError
from .head import HeadConfig

PROVIDERS = ("surrogate", "precomputed")


@dataclass
class PipelineConfig:
    dataset: str = ""
    format: str = "tripadvisor-tsv"
    city: str | None = None
    include_title: bool = True

    # head (defaults are the reference hyper-parameters)
    hidden_size: int = 256
    dense_size: int = 512
    dropout_rate: float = 0.1
    l2_weight: float = 0.001
    positive_weight: float = 2.0
    learning_rate: float = 3e-5
    batch_size: int = 16
    val_loss_delta: float = 0.01
    patience_epochs: int = 3
    threshold: float = 0.5
    max_epochs: int = 100
    early_stopping: bool = True
    input_length: int = 512
    review_policy: str = "keep-head"

    active_users: int = 100
    positive_only: bool = True
    discard_zero: bool = True
    mlros_pct: float = 20.0
    mlros_min_mean_ir: float = 1.5
    split: tuple = (0.70, 0.15, 0.15)

    top_n: int = 50
    keywords_k: int = 3
    ban_top: int = 20
    cluster_k: tuple = (3, 5, 7, 9)
    cluster_max_iter: int = 300
    tag_top: int = 3
    log_base: float = 2.0
    normalise_vectors: bool = True

    seed: int = 0
    stopwords: str | None = None
    lexicon: str | None = None
    lemmas: str | None = None

    provider: str = "surrogate"
    provider_seed: int = 0
    provider_width: int = 768
    embeddings: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.provider not in PROVIDERS:
            raise ConfigurationError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.provider == "precomputed" and not self.embeddings:
            raise ConfigurationError("provider=precomputed needs an embeddings path")
        if self.review_policy != "keep-head":
            raise ConfigurationError("only review_policy=keep-head is supported")
        if self.active_users < 1 or self.top_n < 1 or self.keywords_k < 1:
            raise ConfigurationError("active_users, top_n and keywords_k must be >= 1")
        if not self.cluster_k or any(k < 1 for k in self.cluster_k):
            raise ConfigurationError("cluster_k must list positive integers")
        if self.mlros_pct < 0:
            raise ConfigurationError("mlros_pct must be >= 0")
        try:
            self.head_config()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    # seeds for the independent random streams of one run
    def stage_seed(self, stage: str) -> int:
        offsets = {"split": 0, "mlros": 1, "head": 2, "ccr": 3, "cluster": 4}
        return self.seed * 10 + offsets[stage]

    def head_config(self) -> HeadConfig:
        return HeadConfig(
            hidden_size=self.hidden_size, dense_size=self.dense_size, dropout_rate=self.dropout_rate,
            l2_weight=self.l2_weight, positive_weight=self.positive_weight,
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            early_stop_delta=self.val_loss_delta, patience=self.patience_epochs,
            threshold=self.threshold, output_size=self.active_users, seed=self.stage_seed("head"),
            max_epochs=self.max_epochs, early_stopping=self.early_stopping, max_tokens=self.input_length,
        )

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def desk(cls, **kw) -> "PipelineConfig":
        """Small head, 16-wide surrogate encoder and a short context for synthetic corpora."""
        base = dict(hidden_size=8, dense_size=32, learning_rate=3e-3, val_loss_delta=1e-3,
                    max_epochs=40, provider_width=16, input_length=64, top_n=5, cluster_k=(5,))
        base.update(kw)
        return cls(**base)

    # ------------------------------------------------------------------ I/O

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name}={_format(v)}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


_FIELDS = {f.name: f for f in fields(PipelineConfig)}
_INT_TUPLES = {"cluster_k"}
_FLOAT_TUPLES = {"split"}
_ALIASES = {"batch": "batch_size", "keep_head": "input_length", "ml_ros": "mlros_pct",
            "dropout": "dropout_rate", "l2": "l2_weight", "patience": "patience_epochs",
            "delta": "val_loss_delta", "n": "top_n", "k": "cluster_k"}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def coerce(key: str, raw: str):
    """Convert the textual value of ``key`` to its field type."""
    key = _ALIASES.get(key, key)
    if key not in _FIELDS:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    raw = raw.strip()
    try:
        if key in _INT_TUPLES:
            return key, tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
        if key in _FLOAT_TUPLES:
            return key, tuple(float(x) for x in raw.replace(" ", "").split(",") if x)
        default = _FIELDS[key].default
        if isinstance(default, bool):
            return key, _parse_bool(raw)
        if isinstance(default, int):
            return key, int(raw)
        if isinstance(default, float):
            return key, float(raw)
        if default is None and raw.lower() in ("", "none", "null"):
            return key, None
        return key, raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {exc}") from None


def parse_config(text: str, base: PipelineConfig | None = None, source: str = "<config>") -> PipelineConfig:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}: line {n} is not key=value")
        key, raw = line.split("=", 1)
        k, v = coerce(key.strip(), raw)
        values[k] = v
    start = base if base is not None else PipelineConfig()
    return start.replace(**values)


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"), base, str(p))

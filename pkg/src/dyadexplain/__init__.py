"""Personalised review-based explanations from dyadic user/item data.

A frozen encoder embeds review text; a small Bi-LSTM head learns which
active users would find each review relevant. Rankings over an item's
reviews feed a keyword heuristic that picks one review as the explanation.
"""

__version__ = "0.1.0"

from .dyadic import (  # noqa: E402
    ContextSet,
    DyadicDataset,
    Interaction,
    dataset_stats,
    expanded_context,
    filter_positive,
    ingest_reviews,
    restaurant_context,
    user_context,
)
from .errors import ConfigurationError, DyadExplainError, StageError  # noqa: E402
from .explain import fit_tfidf, select_explanation  # noqa: E402
from .head import HeadConfig, HeadParams, head_forward, train  # noqa: E402
from .labeling import build_targets, mlros_oversample, select_active_users, split  # noqa: E402
from .text import contextual_embed, hashed_surrogate_provider, preprocess  # noqa: E402

__all__ = [
    "ContextSet", "DyadicDataset", "Interaction", "dataset_stats", "expanded_context", "filter_positive",
    "ingest_reviews", "restaurant_context", "user_context", "ConfigurationError", "DyadExplainError",
    "StageError", "fit_tfidf", "select_explanation", "HeadConfig", "HeadParams", "head_forward", "train",
    "build_targets", "mlros_oversample", "select_active_users", "split", "contextual_embed",
    "hashed_surrogate_provider", "preprocess",
]

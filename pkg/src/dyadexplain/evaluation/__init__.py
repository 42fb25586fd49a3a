"""Classification and ranking metrics, clustering and the CCR evaluation."""

from .ccr import CcrReport, EvalPoint, ccr, ccr_evaluation, context_points, fit_clusters, random_adversary
from .clustering import ClusterModel, assign_centroid, assign_many, centroid_tags, kmeanspp_fit, pca_2d
from .metrics import (
    ClassMetricsReport,
    RankMetricsReport,
    classification_metrics,
    pr_auc,
    random_ranking,
    rank_scores_at_k,
    ranking_metrics_at_k,
    roc_auc,
)

__all__ = [
    "CcrReport", "EvalPoint", "ccr", "ccr_evaluation", "context_points", "fit_clusters", "random_adversary",
    "ClusterModel", "assign_centroid", "assign_many", "centroid_tags", "kmeanspp_fit", "pca_2d",
    "ClassMetricsReport", "RankMetricsReport", "classification_metrics", "pr_auc", "random_ranking",
    "rank_scores_at_k", "ranking_metrics_at_k", "roc_auc",
]

"""Learned per-query budgets (clusters to probe, candidates to re-rank) and cluster pruning."""

from .features import (
    CLUSTER_FEATURES,
    ClusterStats,
    build_cluster_stats,
    cluster_features,
    principal_components,
    query_feature_length,
    query_features,
)
from .gbdt import GBDT, GBDTParams, logloss, roc_auc
from .models import (
    AdaptiveModels,
    AdaptiveParams,
    ProbModel,
    check_theta,
    interpolate_nprob,
    interpolate_reorder,
    predict_keep,
    train_prob_model,
)
from .training import TrainConfig, make_labels, make_reorder_labels, prune_samples, train_adaptive

__all__ = [
    "AdaptiveModels", "AdaptiveParams", "CLUSTER_FEATURES", "ClusterStats", "GBDT", "GBDTParams",
    "ProbModel", "TrainConfig", "build_cluster_stats", "check_theta", "cluster_features",
    "interpolate_nprob", "interpolate_reorder", "logloss", "make_labels", "make_reorder_labels",
    "predict_keep", "principal_components", "prune_samples", "query_feature_length", "query_features",
    "roc_auc", "train_adaptive", "train_prob_model",
]

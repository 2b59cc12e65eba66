"""Label generation and fitting of the three adaptive models against a built index."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import GroundTruth
from .features import DEFAULT_T, build_cluster_stats, cluster_features, query_features
from .gbdt import GBDTParams
from .models import MIN_TRAIN, AdaptiveModels, AdaptiveParams, train_prob_model


@dataclass
class TrainConfig:
    k: int = 10
    nprob_min: int | None = None  # default ~2% of clusters
    nprob_max: int | None = None  # default ~15% of clusters
    reorder_min: int | None = None  # default max(k, 50)
    reorder_max: int | None = None  # default 4 * reorder_min
    p0: float = 0.1
    p1: float = 0.2
    p0_reorder: float = 0.1
    p1_reorder: float = 0.2
    theta: float = 0.2
    t: int = DEFAULT_T
    gbdt: GBDTParams = field(default_factory=GBDTParams)
    prune_positive_weight: float = 2.0  # clusters holding a neighbour are rare; missing one costs recall
    seed: int = 0
    nprob_model: bool = True
    reorder_model: bool = True
    prune_model: bool = True

    def resolve(self, n_clusters: int) -> AdaptiveParams:
        lo = self.nprob_min or max(1, round(0.02 * n_clusters))
        hi = self.nprob_max or max(lo, round(0.15 * n_clusters))
        rlo = self.reorder_min or max(self.k, 50)
        rhi = self.reorder_max or 4 * rlo
        return AdaptiveParams(min(lo, n_clusters), min(hi, n_clusters), self.p0, self.p1,
                              rlo, rhi, self.p0_reorder, self.p1_reorder, self.theta)


def _gt_ids(gt, k: int, nq: int) -> np.ndarray:
    if gt is None:
        raise ValueError("ground truth is required for label generation")
    ids = gt.ids if isinstance(gt, GroundTruth) else np.asarray(gt)
    if ids.shape[0] < nq:
        raise ValueError(f"ground truth covers {ids.shape[0]} queries, need {nq}")
    if ids.shape[1] < k:
        raise ValueError(f"ground truth has {ids.shape[1]} neighbours per query, need {k}")
    return ids[:nq, :k]


def make_labels(index, queries, gt, nprob_min: int, k: int) -> np.ndarray:
    """1 (hard) unless all ``k`` true neighbours sit in the ``nprob_min`` nearest clusters."""
    from ..engine import rank_clusters

    queries = np.atleast_2d(queries)
    ids = _gt_ids(gt, k, queries.shape[0])
    assign = index.clustering.assignment
    labels = np.zeros(queries.shape[0], dtype=np.uint8)
    for i, q in enumerate(queries):
        _, order = rank_clusters(index, index.prepare_query(q))
        labels[i] = not np.isin(assign[ids[i]], order[:nprob_min]).all()
    return labels


def make_reorder_labels(index, queries, gt, nprob: int, reorder_min: int, reorder_max: int, k: int) -> np.ndarray:
    """1 (hard) when the small re-rank budget loses neighbours that the large one finds."""
    from ..engine import SearchRequest, search

    queries = np.atleast_2d(queries)
    ids = _gt_ids(gt, k, queries.shape[0])
    labels = np.zeros(queries.shape[0], dtype=np.uint8)
    for i, q in enumerate(queries):
        lo = search(q, index, SearchRequest(k=k, nprob=nprob, reorder=reorder_min)).ids
        hi = search(q, index, SearchRequest(k=k, nprob=nprob, reorder=reorder_max)).ids
        labels[i] = np.isin(ids[i], hi).sum() > np.isin(ids[i], lo).sum()
    return labels


def prune_samples(index, queries, gt, n_clusters: int, k: int):
    """Features and membership labels for the ``n_clusters`` nearest clusters of every query."""
    from ..engine import rank_clusters

    queries = np.atleast_2d(queries)
    ids = _gt_ids(gt, k, queries.shape[0])
    assign = index.clustering.assignment
    feats, labels = [], []
    for i, q in enumerate(queries):
        qs = index.prepare_query(q)
        _, order = rank_clusters(index, qs)
        probe = order[:n_clusters]
        feats.append(cluster_features(qs, probe, index.stats, int(order[0])))
        labels.append(np.isin(probe, assign[ids[i]]).astype(np.uint8))
    return np.concatenate(feats), np.concatenate(labels)


def nprob_features(index, queries, t: int) -> np.ndarray:
    from ..engine import rank_clusters

    rows = []
    for q in np.atleast_2d(queries):
        scores, order = rank_clusters(index, index.prepare_query(q))
        rows.append(query_features(scores, order, index.stats, index.metric, t))
    return np.array(rows)


def train_adaptive(index, queries, gt, config: TrainConfig | None = None) -> AdaptiveModels:
    """Fit the nprob, reorder and prune models on training queries with known neighbours."""
    cfg = config or TrainConfig()
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if queries.shape[0] < MIN_TRAIN:
        raise ValueError(f"need at least {MIN_TRAIN} training queries, got {queries.shape[0]}")
    if index.stats is None:
        index.stats = build_cluster_stats(index.data, index.clustering)
    params = cfg.resolve(index.n_clusters)
    models = AdaptiveModels(params, cfg.t)
    feats = nprob_features(index, queries, cfg.t)
    if cfg.nprob_model:
        y = make_labels(index, queries, gt, params.nprob_min, cfg.k)
        models.nprob = train_prob_model(feats, y, cfg.gbdt, cfg.seed, "query")
    if cfg.reorder_model:
        y = make_reorder_labels(index, queries, gt, params.nprob_max, params.reorder_min, params.reorder_max, cfg.k)
        models.reorder = train_prob_model(feats, y, cfg.gbdt, cfg.seed + 1, "query")
    if cfg.prune_model:
        x, y = prune_samples(index, queries, gt, params.nprob_max, cfg.k)
        models.prune = train_prob_model(x, y, cfg.gbdt, cfg.seed + 2, "cluster",
                                        positive_weight=cfg.prune_positive_weight)
    return models

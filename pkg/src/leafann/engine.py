"""Index construction and the search pipeline.

Build order: optional dimension filtration, IVF k-means, per-subspace
codebooks, encoding, 32-point blocks per cluster, optional leaf graphs,
optional cluster statistics and adaptive models.

Search order: filter the query, rank clusters, optionally predict the probe
count and re-rank budget, optionally prune clusters, scan each probed cluster
(blocks or leaf graph), then re-rank the candidate pool with exact distances
in the original space.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from types import ModuleType
from typing import Callable

import numpy as np

from . import kernels
from .adaptive.features import ClusterStats, build_cluster_stats, cluster_features, query_features
from .adaptive.models import AdaptiveModels, check_theta, interpolate_nprob, interpolate_reorder, predict_keep
from .dataset import Metric, VectorSet, exact_distances, normalize_all, normalize_vector, topk_from_scores
from .filtration import DimFilter, apply_filter, compute_dim_stats, select_dims
from .kmeans import Clustering, KMeansConfig, centroid_scores, train_kmeans
from .leafgraph import HybridPolicy, LeafGraph, Strategy, build_leaf_graph, choose_strategy, should_escalate
from .lut import QuantizedLut, compute_float_luts, quantize_luts
from .pq import BLOCK, Codebooks, ResidualMode, centroid_table, compute_residuals, encode, pack_codes, train_codebooks

FORMAT_VERSION = 1


@dataclass
class IndexParams:
    n_clusters: int | None = None  # default round(sqrt(n))
    dsub: int = 2
    residual_mode: str = "raw_mean"
    filtration: bool = False
    filter_threshold: float = 0.95
    graph: bool = False
    graph_degree: int = 16
    cluster_stats: bool = False
    kmeans_iters: int = 25
    pq_iters: int = 25
    epsilon: float = 1e-4
    pq_train_size: int = 65536
    seed: int = 0

    def __post_init__(self):
        self.residual_mode = ResidualMode(self.residual_mode).value
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if not 1 <= self.graph_degree <= 32:
            raise ValueError("graph_degree must be in [1, 32]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Index:
    metric: Metric
    params: IndexParams
    data: np.ndarray  # X: vectors in the search space (filtered, unit-norm for angular)
    data_init: np.ndarray | None  # X_init: original vectors when they differ from X
    dim_filter: DimFilter | None
    clustering: Clustering
    codebooks: Codebooks
    member_ids: np.ndarray  # int64 (n,), cluster-major, ascending id within a cluster
    cluster_offsets: np.ndarray  # int64 (L + 1,)
    codes: np.ndarray  # uint8 (n, m), aligned with member_ids
    block_codes: np.ndarray  # uint8 (nb, m // 2 * 32)
    block_ids: np.ndarray  # int64 (nb, 32), -1 on padding
    block_valid: np.ndarray  # int32 (nb,)
    block_offsets: np.ndarray  # int64 (L + 1,)
    adjacency: np.ndarray | None = None  # int32 (n, R) local ids, aligned with member_ids
    entries: np.ndarray | None = None  # int32 (L,)
    stats: ClusterStats | None = None
    models: AdaptiveModels | None = None
    version: int = FORMAT_VERSION

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def d_init(self) -> int:
        return self.rerank_vectors.shape[1]

    @property
    def n_clusters(self) -> int:
        return self.clustering.k

    @property
    def m(self) -> int:
        return self.codebooks.m

    @property
    def rerank_vectors(self) -> np.ndarray:
        return self.data if self.data_init is None else self.data_init

    def cluster_members(self, j: int) -> np.ndarray:
        return self.member_ids[self.cluster_offsets[j] : self.cluster_offsets[j + 1]]

    def cluster_codes(self, j: int) -> np.ndarray:
        return self.codes[self.cluster_offsets[j] : self.cluster_offsets[j + 1]]

    def block_range(self, j: int) -> slice:
        return slice(int(self.block_offsets[j]), int(self.block_offsets[j + 1]))

    def leaf_graph(self, j: int) -> LeafGraph | None:
        if self.adjacency is None:
            return None
        adj = self.adjacency[self.cluster_offsets[j] : self.cluster_offsets[j + 1]]
        return LeafGraph(adj, int(self.entries[j]))

    def prepare_query(self, q) -> np.ndarray:
        """Map an original-space query into the search space."""
        q = np.asarray(q, dtype=np.float32).ravel()
        if q.shape[0] != self.d_init:
            raise ValueError(f"query has {q.shape[0]} dims, index expects {self.d_init}")
        if self.dim_filter is not None:
            q = apply_filter(q, self.dim_filter)
        if self.metric is Metric.ANGULAR:
            q = normalize_vector(q)
        return q

    def search(self, q, request: "SearchRequest | None" = None, **kw) -> "SearchResult":
        return search(q, self, request, **kw)


def default_clusters(n: int) -> int:
    return max(1, int(round(math.sqrt(n))))


def _as_set(data, metric) -> VectorSet:
    if isinstance(data, VectorSet):
        return data if metric is None else VectorSet(data.data, Metric.parse(metric))
    return VectorSet(np.asarray(data, dtype=np.float32), Metric.parse(metric or Metric.L2))


def build_index(data, params: IndexParams | None = None, metric: Metric | str | None = None, *,
                train_queries=None, train_gt=None, train_config=None) -> Index:
    """Build an index; pass training queries and ground truth to also fit the adaptive models."""
    params = params or IndexParams()
    vs = _as_set(data, metric)
    n = vs.n
    L = params.n_clusters or default_clusters(n)
    if L > n:
        raise ValueError(f"n_clusters={L} exceeds dataset size {n}")
    x_init = np.ascontiguousarray(vs.data, dtype=np.float32)
    x = x_init
    flt = None
    if params.filtration:
        flt = select_dims(compute_dim_stats(x), params.filter_threshold)
        x = apply_filter(x, flt)
    if vs.metric is Metric.ANGULAR:
        x = normalize_all(VectorSet(x, vs.metric)).data
    km = KMeansConfig(params.kmeans_iters, params.epsilon, params.seed)
    clustering = train_kmeans(x, L, km, keep_normalized=vs.metric is Metric.ANGULAR)

    residuals = compute_residuals(x, clustering, params.residual_mode)
    sample = residuals
    if n > params.pq_train_size:
        rng = np.random.default_rng(params.seed)
        sample = residuals[np.sort(rng.choice(n, params.pq_train_size, replace=False))]
    pq_cfg = KMeansConfig(params.pq_iters, params.epsilon, params.seed + 1)
    codebooks = train_codebooks(sample, dsub=params.dsub, config=pq_cfg)
    all_codes = encode(residuals, codebooks)
    del residuals, sample

    member_ids = np.argsort(clustering.assignment, kind="stable").astype(np.int64)
    sizes = np.bincount(clustering.assignment, minlength=L)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    codes = np.ascontiguousarray(all_codes[member_ids])
    nblocks = (sizes + BLOCK - 1) // BLOCK
    boffs = np.concatenate([[0], np.cumsum(nblocks)]).astype(np.int64)
    nb = int(boffs[-1])
    bcodes = np.zeros((nb, codebooks.m // 2 * BLOCK), dtype=np.uint8)
    bids = np.full((nb, BLOCK), -1, dtype=np.int64)
    bvalid = np.zeros(nb, dtype=np.int32)
    for j in range(L):
        s, e = offsets[j], offsets[j + 1]
        if s == e:
            continue
        b0, b1 = boffs[j], boffs[j + 1]
        bcodes[b0:b1] = pack_codes(codes[s:e])
        flat = np.full((b1 - b0) * BLOCK, -1, dtype=np.int64)
        flat[: e - s] = member_ids[s:e]
        bids[b0:b1] = flat.reshape(-1, BLOCK)
        bvalid[b0:b1] = np.minimum(BLOCK, (e - s) - np.arange(b1 - b0) * BLOCK)

    index = Index(
        metric=vs.metric, params=params, data=np.ascontiguousarray(x),
        data_init=None if x is x_init else x_init, dim_filter=flt,
        clustering=clustering, codebooks=codebooks, member_ids=member_ids,
        cluster_offsets=offsets, codes=codes, block_codes=bcodes, block_ids=bids,
        block_valid=bvalid, block_offsets=boffs,
    )
    if params.graph:
        build_graphs(index)
    if params.cluster_stats or train_queries is not None:
        index.stats = build_cluster_stats(index.data, clustering)
    if train_queries is not None:
        if train_gt is None:
            raise ValueError("training the adaptive models needs ground truth for the training queries")
        from .adaptive.training import train_adaptive

        index.models = train_adaptive(index, train_queries, train_gt, train_config)
    return index


def build_graphs(index: Index, degree: int | None = None) -> Index:
    """Exact k-NN graph inside every cluster, entry point nearest the centroid."""
    R = degree or index.params.graph_degree
    adj = np.full((index.n, R), -1, dtype=np.int32)
    entries = np.zeros(index.n_clusters, dtype=np.int32)
    for j in range(index.n_clusters):
        s, e = index.cluster_offsets[j], index.cluster_offsets[j + 1]
        if s == e:
            continue
        g = build_leaf_graph(index.data[index.member_ids[s:e]], R, index.clustering.centroids[j])
        adj[s:e] = g.adjacency
        entries[j] = g.entry
    index.adjacency, index.entries = adj, entries
    index.params.graph, index.params.graph_degree = True, R
    return index


# ---- search -------------------------------------------------------------------

@dataclass
class SearchRequest:
    k: int = 10
    nprob: int = 8  # nprob_init
    reorder: int = 100  # reorder_init
    adaptive: bool = False
    graph: bool = False
    theta: float = 0.0  # prune threshold, 0 disables pruning
    policy: HybridPolicy = field(default_factory=HybridPolicy)
    lanes_per_pass: int | None = None  # None: capability probe
    backend: str | ModuleType | None = None
    # experimental: (cluster, search-space query) -> bool mask over the cluster's members
    point_filter: Callable[[int, np.ndarray], np.ndarray] | None = None

    def validate(self, index: Index):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k > index.n:
            raise ValueError(f"k={self.k} exceeds dataset size {index.n}")
        if self.k > self.reorder:
            raise ValueError(f"k={self.k} exceeds reorder={self.reorder}")
        if self.nprob < 1:
            raise ValueError("nprob must be >= 1")
        check_theta(self.theta)
        if self.adaptive and (index.models is None or index.models.nprob is None):
            raise ValueError("adaptive search requested but the index has no trained models")
        if self.theta > 0 and (index.models is None or index.models.prune is None):
            raise ValueError("cluster pruning requested but the index has no prune model")
        if self.graph and index.adjacency is None:
            raise ValueError("graph search requested but the index has no leaf graphs")


@dataclass
class SearchResult:
    ids: np.ndarray  # int64 (<= k,)
    distances: np.ndarray  # float32, exact, non-decreasing
    nprob: int = 0
    reorder: int = 0
    clusters_probed: int = 0
    clusters_pruned: int = 0
    points_scanned: int = 0
    escalations: int = 0
    graph_evaluations: int = 0
    p_nprob: float | None = None
    p_reorder: float | None = None


def _backend(spec) -> ModuleType:
    if spec is None:
        return kernels.backend
    if isinstance(spec, str):
        return kernels.get_backend(spec)
    return spec


def rank_clusters(index: Index, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centroid scores and the full cluster order (ascending score, ties to smaller id)."""
    scores = centroid_scores(qs, index.clustering, index.metric)
    order = np.lexsort((np.arange(scores.size), scores))
    return scores, order


def cluster_luts(index: Index, qs: np.ndarray, clusters: np.ndarray) -> list[QuantizedLut]:
    """Quantized tables for each probed cluster, from one batched computation."""
    mode = ResidualMode(index.params.residual_mode)
    cents = centroid_table(index.clustering, mode)
    p = len(clusters)
    if p == 0:
        return []
    if index.metric is Metric.IP:
        table = compute_float_luts(qs[None], index.codebooks, Metric.IP)
        if cents is None:
            offsets = np.zeros(p)
        else:
            offsets = -(cents[clusters].astype(np.float64) @ qs.astype(np.float64))
        u, scales, biases, clamps = quantize_luts(table)
        return [QuantizedLut(u[0], float(scales[0]), biases[0], int(clamps[0]), float(o)) for o in offsets]
    if cents is None:
        table = compute_float_luts(qs[None], index.codebooks, Metric.L2)
        u, scales, biases, clamps = quantize_luts(table)
        shared = QuantizedLut(u[0], float(scales[0]), biases[0], int(clamps[0]), 0.0)
        return [shared] * p
    tables = compute_float_luts(qs[None, :] - cents[clusters], index.codebooks, Metric.L2)
    u, scales, biases, clamps = quantize_luts(tables)
    return [QuantizedLut(u[i], float(scales[i]), biases[i], int(clamps[i]), 0.0) for i in range(p)]


def _scan_blocks(pool, index: Index, cluster: int, qlut: QuantizedLut, be, lanes: int, keep=None) -> int:
    sl = index.block_range(cluster)
    if sl.start == sl.stop:
        return 0
    kb = None
    if keep is not None:
        nb = sl.stop - sl.start
        flat = np.zeros(nb * BLOCK, dtype=np.uint8)
        flat[: keep.size] = keep
        kb = flat.reshape(nb, BLOCK)
    return be.scan_cluster(pool, qlut.table, index.block_codes[sl], index.block_ids[sl],
                           index.block_valid[sl], qlut.scale, qlut.base, lanes, kb)


def search_in_cluster(pool, index: Index, qs, cluster: int, qlut: QuantizedLut, k: int, *, rank: int = 0,
                      policy: HybridPolicy | None = None, use_graph: bool = False, be=None,
                      lanes: int = 2, keep=None, result: SearchResult | None = None):
    """Scan one cluster into ``pool`` by leaf-graph search or a full block scan."""
    be = be or kernels.backend
    policy = policy or HybridPolicy()
    diag = result if result is not None else SearchResult(np.zeros(0, np.int64), np.zeros(0, np.float32))
    nc = int(index.cluster_offsets[cluster + 1] - index.cluster_offsets[cluster])
    if nc == 0:
        return pool
    if use_graph and index.adjacency is not None and keep is None and choose_strategy(rank, policy) is Strategy.GRAPH:
        efs = policy.efs_for(k)
        g = index.leaf_graph(cluster)
        local, acc, evals = be.graph_search(qlut.table, index.cluster_codes(cluster), g.adjacency, g.entry, efs, lanes)
        diag.graph_evaluations += int(evals)
        diag.points_scanned += int(evals)
        dist = qlut.dequantize(acc)
        if should_escalate(dist, pool, policy, efs):
            diag.escalations += 1
            diag.points_scanned += _scan_blocks(pool, index, cluster, qlut, be, lanes)
        else:
            pool.push(dist, index.cluster_members(cluster)[local])
        return pool
    diag.points_scanned += _scan_blocks(pool, index, cluster, qlut, be, lanes, keep)
    return pool


def rerank_exact(pool, q_init, vectors: np.ndarray, k: int, metric: Metric) -> tuple[np.ndarray, np.ndarray]:
    """Exact re-ranking of the pool's candidates; duplicates collapse, ties go to the smaller id."""
    ids = pool.items()[0] if hasattr(pool, "items") else np.asarray(pool, dtype=np.int64)
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    if ids.size == 0:
        return ids, np.zeros(0, dtype=np.float32)
    d = exact_distances(q_init, vectors if ids.size == vectors.shape[0] else vectors[ids], metric)
    return topk_from_scores(d, min(k, ids.size), ids)


def search(q, index: Index, request: SearchRequest | None = None, **overrides) -> SearchResult:
    req = request or SearchRequest()
    if overrides:
        req = dataclasses.replace(req, **overrides)
    req.validate(index)
    be = _backend(req.backend)
    lanes = req.lanes_per_pass or be.preferred_lanes()
    q_init = np.asarray(q, dtype=np.float32).ravel()
    qs = index.prepare_query(q_init)
    L = index.n_clusters
    scores, order = rank_clusters(index, qs)
    nprob = min(req.nprob, L)
    reorder = req.reorder
    res = SearchResult(np.zeros(0, np.int64), np.zeros(0, np.float32))
    models = index.models
    if req.adaptive:
        feats = query_features(scores, order, index.stats, index.metric, models.t)
        res.p_nprob = float(models.nprob.predict(feats)[0])
        nprob = min(interpolate_nprob(res.p_nprob, models.params), L)
        if models.reorder is not None:
            res.p_reorder = float(models.reorder.predict(feats)[0])
            reorder = max(req.k, interpolate_reorder(res.p_reorder, models.params))
    probe = order[:nprob]
    if req.theta > 0:
        cf = cluster_features(qs, probe, index.stats, int(order[0]))
        keep = predict_keep(cf, models.prune, req.theta)
        res.clusters_pruned = int((~keep).sum())
        probe = probe[keep]
    res.nprob, res.reorder, res.clusters_probed = nprob, reorder, int(probe.size)
    pool = be.CandidatePool(min(reorder, index.n))
    luts = cluster_luts(index, qs, probe)
    for rank, (c, qlut) in enumerate(zip(probe.tolist(), luts)):
        keep_pts = None
        if req.point_filter is not None:
            keep_pts = np.asarray(req.point_filter(c, qs), dtype=bool)
        search_in_cluster(pool, index, qs, c, qlut, req.k, rank=rank, policy=req.policy, use_graph=req.graph,
                          be=be, lanes=lanes, keep=keep_pts, result=res)
    res.ids, res.distances = rerank_exact(pool, q_init, index.rerank_vectors, req.k, index.metric)
    return res


def search_batch(queries, index: Index, request: SearchRequest | None = None, **overrides) -> list[SearchResult]:
    return [search(q, index, request, **overrides) for q in np.atleast_2d(queries)]


def result_ids(results: list[SearchResult], k: int) -> np.ndarray:
    """Stack result ids into ``(nq, k)``, padding short results with -1."""
    out = np.full((len(results), k), -1, dtype=np.int64)
    for i, r in enumerate(results):
        out[i, : r.ids.size] = r.ids[:k]
    return out


def save_index(index: Index, path) -> None:
    from .storage import save_index as _save

    _save(index, path)


def load_index(path) -> Index:
    from .storage import load_index as _load

    return _load(path)

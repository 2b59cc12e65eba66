import math

import numpy as np
import pytest

from leafann.dataset import Metric, VectorSet, brute_force_topk, recall_at_k
from leafann.engine import (
    IndexParams,
    SearchRequest,
    build_graphs,
    build_index,
    cluster_luts,
    rank_clusters,
    rerank_exact,
    result_ids,
    search,
    search_batch,
    search_in_cluster,
)
from leafann.kernels import available_backends, get_backend
from leafann.leafgraph import HybridPolicy
from leafann.synthetic import gaussian


def test_tiny_index_shape():
    x = gaussian(64, 6, seed=1)
    idx = build_index(x, IndexParams(n_clusters=2), "l2")
    assert idx.n_clusters == 2
    assert all(idx.block_range(j).stop > idx.block_range(j).start for j in range(2))
    assert idx.dim_filter is None and idx.data_init is None and idx.adjacency is None


def test_build_errors():
    with pytest.raises(ValueError):
        build_index(gaussian(10, 4), IndexParams(n_clusters=11))
    with pytest.raises(ValueError):
        build_index(gaussian(100, 4), IndexParams(n_clusters=5), train_queries=gaussian(60, 4))


def test_default_cluster_count():
    assert build_index(gaussian(400, 4), None, "l2").n_clusters == 20


def test_every_id_in_exactly_one_block(small_index):
    idx = small_index
    ids = idx.block_ids[idx.block_ids >= 0]
    assert np.sort(ids).tolist() == list(range(idx.n))
    assert int(idx.block_valid.sum()) == idx.n
    for j in range(idx.n_clusters):
        sl = idx.block_range(j)
        got = idx.block_ids[sl][idx.block_ids[sl] >= 0]
        np.testing.assert_array_equal(np.sort(got), np.flatnonzero(idx.clustering.assignment == j))


def test_build_is_deterministic(small_data):
    x, _ = small_data
    a = build_index(x, IndexParams(n_clusters=10, seed=3), "l2")
    b = build_index(x, IndexParams(n_clusters=10, seed=3), "l2")
    np.testing.assert_array_equal(a.block_codes, b.block_codes)
    np.testing.assert_array_equal(a.clustering.centroids, b.clustering.centroids)


def test_query_equal_to_point(small_index, small_data):
    x, _ = small_data
    r = search(x[123], small_index, SearchRequest(k=1, nprob=small_index.n_clusters, reorder=10))
    assert r.ids.tolist() == [123] and r.distances[0] == 0


@pytest.mark.parametrize("metric", list(Metric))
def test_exhaustive_configuration_is_exact(metric):
    x = gaussian(2500, 12, seed=8, n_centers=6)
    q = gaussian(25, 12, seed=9, n_centers=6)
    idx = build_index(x, IndexParams(n_clusters=20), metric)
    gt = brute_force_topk(VectorSet(x, metric), q, 10)
    got = result_ids(search_batch(q, idx, SearchRequest(k=10, nprob=20, reorder=2500)), 10)
    np.testing.assert_array_equal(got, gt.ids)


def test_request_validation(small_index):
    q = np.zeros(small_index.d)
    for bad in (dict(k=0), dict(k=20, reorder=10), dict(nprob=0), dict(theta=1.0),
                dict(k=small_index.n + 1, reorder=small_index.n + 1), dict(adaptive=True), dict(theta=0.2)):
        with pytest.raises(ValueError):
            search(q, small_index, SearchRequest(**bad))
    with pytest.raises(ValueError):
        search(np.zeros(small_index.d + 1), small_index)


def test_results_sorted_and_unique(small_index, small_data):
    _, q = small_data
    for r in search_batch(q, small_index, SearchRequest(k=10, nprob=4, reorder=40)):
        assert np.all(np.diff(r.distances) >= 0)
        assert len(set(r.ids.tolist())) == r.ids.size


def test_recall_monotone_in_nprob(small_index, small_data):
    x, q = small_data
    gt = brute_force_topk(VectorSet(x), q, 10)
    recalls = [recall_at_k(result_ids(search_batch(q, small_index, SearchRequest(k=10, nprob=p, reorder=50)), 10), gt)
               for p in (1, 2, 4, 8, 24)]
    assert all(a <= b for a, b in zip(recalls, recalls[1:]))
    assert recalls[-1] > recalls[0]


def test_graph_off_equals_infinite_brute_force_clusters(small_index, small_data):
    _, q = small_data
    for qi in q:
        a = search(qi, small_index, SearchRequest(k=10, nprob=6, reorder=50))
        b = search(qi, small_index, SearchRequest(k=10, nprob=6, reorder=50, graph=True, policy=HybridPolicy(math.inf)))
        np.testing.assert_array_equal(a.ids, b.ids)
        np.testing.assert_array_equal(a.distances, b.distances)
        assert a.points_scanned == b.points_scanned and b.graph_evaluations == 0


def test_per_cluster_pool_equal_for_infinite_b(be, small_index, small_data):
    _, q = small_data
    qs = small_index.prepare_query(q[0])
    _, order = rank_clusters(small_index, qs)
    luts = cluster_luts(small_index, qs, order[:3])
    for rank, (c, lut) in enumerate(zip(order[:3].tolist(), luts)):
        a = search_in_cluster(be.CandidatePool(40), small_index, qs, c, lut, 10, rank=rank, be=be)
        b = search_in_cluster(be.CandidatePool(40), small_index, qs, c, lut, 10, rank=rank, be=be,
                              policy=HybridPolicy(math.inf), use_graph=True)
        for u, v in zip(a.items(), b.items()):
            np.testing.assert_array_equal(u, v)


def test_single_block_cluster_pool_is_block_merge(be):
    x = gaussian(20, 4, seed=2)
    idx = build_index(x, IndexParams(n_clusters=1), "l2")
    qs = idx.prepare_query(x[0] + 0.1)
    (lut,) = cluster_luts(idx, qs, np.array([0]))
    pool = search_in_cluster(be.CandidatePool(100), idx, qs, 0, lut, 5, be=be)
    ids, dist = pool.items()
    acc = lut.table[np.arange(idx.m)[None, :], idx.codes.astype(np.intp)].astype(np.int64).sum(1)
    want = lut.dequantize(acc)
    assert sorted(ids.tolist()) == list(range(20))
    np.testing.assert_allclose(dist, np.sort(want[np.argsort(idx.member_ids)])[: ids.size], rtol=1e-12)


def test_fully_filtered_cluster_leaves_pool_unchanged(be, small_index, small_data):
    _, q = small_data
    qs = small_index.prepare_query(q[0])
    (lut,) = cluster_luts(small_index, qs, np.array([0]))
    pool = be.CandidatePool(10)
    pool.push([0.5], [7])
    nc = small_index.cluster_members(0).size
    search_in_cluster(pool, small_index, qs, 0, lut, 5, be=be, keep=np.zeros(nc, bool))
    assert pool.items()[0].tolist() == [7]


def test_graph_engine_points_scanned_conservation(small_index, small_data):
    _, q = small_data
    pol = HybridPolicy(1, efs=20, escalation_fraction=0.25)
    for qi in q[:10]:
        r = search(qi, small_index, SearchRequest(k=10, nprob=6, reorder=50, graph=True, policy=pol))
        qs = small_index.prepare_query(qi)
        _, order = rank_clusters(small_index, qs)
        sizes = [small_index.cluster_members(c).size for c in order[:6]]
        # brute-force clusters plus graph evaluations plus full rescans of escalated clusters
        assert r.points_scanned >= sizes[0] + r.graph_evaluations
        assert r.points_scanned <= sum(sizes) + r.graph_evaluations


def test_escalation_recovers_brute_force_recall():
    # one dense leaf holds the neighbours: graph search alone finds them, escalation must too
    x = gaussian(6000, 16, seed=21, n_centers=4)
    q = x[:40] + 0.05
    idx = build_index(x, IndexParams(n_clusters=16, graph=True, seed=0), "l2")
    gt = brute_force_topk(VectorSet(x), q, 10)
    bf = result_ids(search_batch(q, idx, SearchRequest(k=10, nprob=6, reorder=60)), 10)
    hy = search_batch(q, idx, SearchRequest(k=10, nprob=6, reorder=60, graph=True, policy=HybridPolicy(0, efs=20)))
    assert sum(r.escalations for r in hy) > 0
    assert abs(recall_at_k(result_ids(hy, 10), gt) - recall_at_k(bf, gt)) <= 0.005


def test_backends_give_identical_results(small_index, small_data):
    if len(available_backends()) < 2:
        pytest.skip("compiled core not built")
    _, q = small_data
    for graph in (False, True):
        req = SearchRequest(k=10, nprob=5, reorder=30, graph=graph, policy=HybridPolicy(1))
        a = search_batch(q, small_index, req, backend="compiled")
        b = search_batch(q, small_index, req, backend="fallback")
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u.ids, v.ids)
            assert u.points_scanned == v.points_scanned


@pytest.mark.parametrize("lanes", [2, 4])
def test_lane_width_does_not_change_results(small_index, small_data, lanes):
    _, q = small_data
    a = search_batch(q, small_index, SearchRequest(k=10, nprob=5, reorder=30, lanes_per_pass=lanes))
    b = search_batch(q, small_index, SearchRequest(k=10, nprob=5, reorder=30, lanes_per_pass=2))
    np.testing.assert_array_equal(result_ids(a, 10), result_ids(b, 10))


def test_rerank_examples(rng):
    x = rng.standard_normal((50, 5)).astype(np.float32)
    q = rng.standard_normal(5).astype(np.float32)
    ids, d = rerank_exact([4, 9, 4, 1, 9], q, x, 10, Metric.L2)
    assert sorted(ids.tolist()) == [1, 4, 9] and np.all(np.diff(d) >= 0)
    np.testing.assert_allclose(d, ((x[ids].astype(np.float64) - q) ** 2).sum(1), rtol=1e-5)
    ids, _ = rerank_exact(np.arange(50), q, x, 7, Metric.L2)
    np.testing.assert_array_equal(ids, brute_force_topk(VectorSet(x), q[None], 7).ids[0])
    assert rerank_exact([], q, x, 3, Metric.L2)[0].size == 0


def test_inner_product_and_angular_recall():
    for metric in ("ip", "angular"):
        x = gaussian(4000, 16, seed=5, n_centers=10)
        q = gaussian(30, 16, seed=6, n_centers=10)
        idx = build_index(x, IndexParams(n_clusters=40), metric)
        gt = brute_force_topk(VectorSet(x, metric), q, 10)
        rec = recall_at_k(result_ids(search_batch(q, idx, SearchRequest(k=10, nprob=12, reorder=100)), 10), gt)
        assert rec >= 0.9, (metric, rec)


def test_build_graphs_after_the_fact(small_data):
    x, q = small_data
    idx = build_index(x, IndexParams(n_clusters=12), "l2")
    build_graphs(idx, 8)
    assert idx.adjacency.shape == (idx.n, 8) and idx.params.graph_degree == 8
    r = search(q[0], idx, SearchRequest(k=5, nprob=4, reorder=20, graph=True, policy=HybridPolicy(1)))
    assert r.ids.size == 5

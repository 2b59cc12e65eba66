import numpy as np
import pytest

from leafann.kmeans import (
    Clustering,
    KMeansConfig,
    assign_point,
    assign_points,
    objective,
    top_n_clusters,
    train_kmeans,
)


def test_k_equals_n_zero_objective(rng):
    x = rng.standard_normal((20, 3))
    c = train_kmeans(x, 20)
    assert objective(x, c) == pytest.approx(0.0, abs=1e-9)
    assert sorted(c.assignment.tolist()) == list(range(20))


def test_k_one_is_mean(rng):
    x = rng.standard_normal((500, 5))
    c = train_kmeans(x, 1)
    np.testing.assert_allclose(c.centroids[0], x.mean(axis=0), rtol=1e-5, atol=1e-6)


def test_two_blobs(rng):
    a = rng.standard_normal((400, 6)) + np.r_[10, np.zeros(5)]
    b = rng.standard_normal((400, 6)) - np.r_[10, np.zeros(5)]
    x = np.vstack([a, b])
    c = train_kmeans(x, 2, KMeansConfig(seed=3))
    got = sorted(c.centroids.tolist(), key=lambda r: r[0])
    np.testing.assert_allclose(got[0], b.mean(0), atol=0.5)
    np.testing.assert_allclose(got[1], a.mean(0), atol=0.5)


@pytest.mark.parametrize("d", [2, 12])
def test_objective_non_increasing_and_deterministic(rng, d):
    x = rng.standard_normal((3000, d))
    cfg = KMeansConfig(max_iters=40, epsilon=0.0, seed=7)
    c1 = train_kmeans(x, 37, cfg)
    h = np.array(c1.objective_history)
    assert np.all(np.diff(h) <= 1e-9 * h[:-1])
    c2 = train_kmeans(x, 37, cfg)
    np.testing.assert_array_equal(c1.centroids, c2.centroids)
    np.testing.assert_array_equal(c1.assignment, c2.assignment)


def test_invariants(rng):
    x = rng.standard_normal((2000, 8))
    c = train_kmeans(x, 50)
    assert c.sizes.sum() == 2000 and (c.sizes > 0).all()
    assert c.assignment.max() < 50
    np.testing.assert_array_equal(np.bincount(c.assignment, minlength=50), c.sizes)
    for j in range(50):
        np.testing.assert_allclose(c.centroids[j], x[c.assignment == j].mean(0), rtol=1e-4, atol=1e-5)


def test_duplicate_points_repair_keeps_k():
    x = np.repeat(np.eye(3), 10, axis=0)  # only 3 distinct points
    c = train_kmeans(x, 5)
    assert c.k == 5 and (c.sizes > 0).all()


@pytest.mark.parametrize("k", [0, 11])
def test_bad_k(k):
    with pytest.raises(ValueError):
        train_kmeans(np.zeros((10, 2)), k)


def _fixed(cents):
    cents = np.asarray(cents, np.float32)
    return Clustering(cents, np.zeros(0, np.int64), np.zeros(len(cents), np.int64))


def test_assign_point_examples():
    c = _fixed([[0, 0], [1, 0], [5, 5], [2, 2], [-1, 0]])
    assert assign_point([2, 2], c) == 3
    # (0.5, 0)... equidistant to centroids 0 and 1 -> 0; shift so 1 and 4 tie
    c2 = _fixed([[9, 9], [1, 0], [9, -9], [-9, 9], [-1, 0]])
    assert assign_point([0, 0], c2) == 1


@pytest.mark.parametrize("d", [2, 4, 9])
def test_assign_matches_linear_scan(rng, d):
    c = _fixed(rng.standard_normal((40, d)))
    x = rng.standard_normal((300, d))
    oracle = [int(np.argmin([((xi - cj) ** 2).sum() for cj in c.centroids.astype(np.float64)])) for xi in x]
    np.testing.assert_array_equal(assign_points(x, c), oracle)


def test_top_n_examples(rng):
    cents = rng.standard_normal((30, 6)).astype(np.float32)
    c = _fixed(cents)
    assert top_n_clusters(cents[7], c, 1).tolist() == [7]
    full = top_n_clusters(rng.standard_normal(6), c, 30)
    assert sorted(full.tolist()) == list(range(30))
    q = rng.standard_normal(6)
    oracle = sorted(range(30), key=lambda j: (float(((q.astype(np.float32) - cents[j]) ** 2).sum()), j))
    assert top_n_clusters(q, c, 16).tolist() == oracle[:16]
    with pytest.raises(ValueError):
        top_n_clusters(q, c, 31)


def test_top_n_prefix_property(rng):
    c = _fixed(rng.standard_normal((25, 4)))
    q = rng.standard_normal(4)
    for a in range(1, 25):
        assert top_n_clusters(q, c, a).tolist() == top_n_clusters(q, c, 25)[:a].tolist()


def test_angular_uses_normalized_centroids(rng):
    x = rng.standard_normal((400, 5))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    c = train_kmeans(x, 8, keep_normalized=True)
    np.testing.assert_allclose(np.linalg.norm(c.normalized_centroids, axis=1), 1.0, rtol=1e-5)
    assert np.linalg.norm(c.centroids, axis=1).max() < 1.0  # raw means shrink inside the sphere
    q = x[0]
    cos = c.normalized_centroids @ q
    assert top_n_clusters(q, c, 1, "angular")[0] == int(np.argmax(cos))

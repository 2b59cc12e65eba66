"""Lloyd k-means with k-means++ seeding, used for IVF leaves and PQ codebooks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Metric, exact_distances, topk_from_scores

_CHUNK = 8192
_DIRECT_DIMS = 4  # below this, explicit differences beat the expanded product


@dataclass
class KMeansConfig:
    max_iters: int = 25
    epsilon: float = 1e-4
    seed: int = 0


@dataclass
class Clustering:
    centroids: np.ndarray  # raw means, float32 (K, d)
    assignment: np.ndarray  # int64 (n,)
    sizes: np.ndarray  # int64 (K,)
    normalized_centroids: np.ndarray | None = None
    objective_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)


def _sq_norms(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x, x)


def _nearest(x: np.ndarray, xsq: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if x.shape[1] <= _DIRECT_DIMS:
        from .kernels import backend

        return backend.nearest_centroids(x, c)
    csq = _sq_norms(c)
    n = x.shape[0]
    assign = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for s in range(0, n, _CHUNK):
        e = min(n, s + _CHUNK)
        d = xsq[s:e, None] - 2.0 * (x[s:e] @ c.T) + csq[None, :]
        a = np.argmin(d, axis=1)
        assign[s:e] = a
        best[s:e] = d[np.arange(e - s), a]
    np.maximum(best, 0.0, out=best)
    return assign, best


def _objective(x: np.ndarray, c: np.ndarray, assign: np.ndarray) -> float:
    total = 0.0
    for s in range(0, x.shape[0], _CHUNK):
        diff = x[s : s + _CHUNK] - c[assign[s : s + _CHUNK]]
        total += float(np.einsum("ij,ij->", diff, diff))
    return total


def _kmeanspp(x: np.ndarray, xsq: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = np.maximum(xsq - 2.0 * (x @ x[chosen[0]]) + xsq[chosen[0]], 0.0)
    d2[chosen[0]] = 0.0
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
            if d2[idx] == 0:  # rounding at the cumsum edge
                idx = int(np.flatnonzero(d2 > 0)[-1])
        else:
            # every remaining point duplicates a chosen one
            taken = np.zeros(n, dtype=bool)
            taken[chosen[:i]] = True
            free = np.flatnonzero(~taken)
            idx = int(free[rng.integers(free.size)])
        chosen[i] = idx
        nd = np.maximum(xsq - 2.0 * (x @ x[idx]) + xsq[idx], 0.0)
        nd[idx] = 0.0
        np.minimum(d2, nd, out=d2)
    return x[chosen].copy()


def _means(x: np.ndarray, assign: np.ndarray, k: int, old: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sizes = np.bincount(assign, minlength=k)
    cent = old.copy()
    nonempty = sizes > 0
    if x.shape[1] <= _DIRECT_DIMS:
        for j in range(x.shape[1]):
            cent[nonempty, j] = np.bincount(assign, x[:, j], minlength=k)[nonempty] / sizes[nonempty]
        return cent, sizes
    # fixed-order summation keeps the result independent of chunking
    order = np.argsort(assign, kind="stable")
    sa = assign[order]
    nonempty = np.flatnonzero(sizes)
    starts = np.searchsorted(sa, nonempty)
    sums = np.add.reduceat(x[order], starts, axis=0)
    cent[nonempty] = sums / sizes[nonempty, None]
    return cent, sizes


def _repair_empty(x, c, assign, best):
    """Re-seed empty clusters with the farthest point of the largest cluster."""
    k = c.shape[0]
    sizes = np.bincount(assign, minlength=k)
    for j in np.flatnonzero(sizes == 0):
        big = int(np.argmax(sizes))
        members = np.flatnonzero(assign == big)
        far = int(members[np.argmax(best[members])])
        assign[far] = j
        best[far] = 0.0
        c[j] = x[far]
        sizes[big] -= 1
        sizes[j] = 1
    return assign


def train_kmeans(points, k: int, config: KMeansConfig | None = None, *, keep_normalized: bool = False) -> Clustering:
    """Minimize the within-cluster sum of squared distances.

    Stops when the relative objective improvement drops below
    ``config.epsilon`` or after ``config.max_iters`` Lloyd steps. The
    objective after every step is kept in ``objective_history``.
    """
    config = config or KMeansConfig()
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("points must be 2-D")
    n = x.shape[0]
    if k <= 0:
        raise ValueError(f"K must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"K={k} exceeds number of points {n}")
    rng = np.random.default_rng(config.seed)
    xsq = _sq_norms(x)
    c = _kmeanspp(x, xsq, k, rng)

    history: list[float] = []
    assign = None
    sizes = None
    for _ in range(max(1, config.max_iters)):
        assign, best = _nearest(x, xsq, c)
        assign = _repair_empty(x, c, assign, best)
        c, sizes = _means(x, assign, k, c)
        obj = _objective(x, c, assign)
        history.append(obj)
        if len(history) >= 2:
            prev = history[-2]
            if prev <= 0 or (prev - obj) / prev < config.epsilon:
                break
        elif obj == 0:
            break

    cent = c.astype(np.float32)
    normed = None
    if keep_normalized:
        norms = np.linalg.norm(c, axis=1, keepdims=True)
        normed = np.divide(c, norms, out=np.zeros_like(c), where=norms > 0).astype(np.float32)
    return Clustering(cent, assign, sizes.astype(np.int64), normed, history)


def objective(points, clustering: Clustering) -> float:
    x = np.asarray(points, dtype=np.float64)
    return _objective(x, clustering.centroids.astype(np.float64), clustering.assignment)


def assign_point(x, clustering: Clustering) -> int:
    """Nearest centroid under squared L2, ties to the smaller id."""
    x = np.asarray(x, dtype=np.float32).ravel()
    if x.shape[0] != clustering.d:
        raise ValueError("dimension mismatch")
    d = exact_distances(x, clustering.centroids, Metric.L2)
    return int(np.argmin(d))


def assign_points(points, clustering: Clustering) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    c = clustering.centroids.astype(np.float64)
    return _nearest(x, _sq_norms(x), c)[0]


def centroid_scores(q, clustering: Clustering, metric: Metric | str = Metric.L2) -> np.ndarray:
    metric = Metric.parse(metric)
    cents = clustering.centroids
    if metric is Metric.ANGULAR and clustering.normalized_centroids is not None:
        cents = clustering.normalized_centroids
    return exact_distances(q, cents, metric)


def top_n_clusters(q, clustering: Clustering, n: int, metric: Metric | str = Metric.L2) -> np.ndarray:
    """The ``n`` closest clusters to ``q`` in ascending score order, ties to the smaller id."""
    if n > clustering.k:
        raise ValueError(f"n={n} exceeds number of clusters {clustering.k}")
    scores = centroid_scores(q, clustering, metric)
    return topk_from_scores(scores, n)[0]

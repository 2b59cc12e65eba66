"""Per-cluster geometry statistics and the query/cluster feature vectors built from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import Metric

HIST_BINS = 8
OUTLIER_PERCENTILE = 95.0
PC_TOL = 1e-4
PC_ITERS = 100
DEFAULT_T = 16

CLUSTER_FEATURES = (
    ["dist", "rel_dist", "size", "radius", "dist_over_radius", "pc1", "pc2", "outliers"]
    + [f"hist{i}" for i in range(HIST_BINS)]
    + ["outlier_dir"]
)


@dataclass
class ClusterStats:
    centroids: np.ndarray  # float64 (L, d)
    sizes: np.ndarray  # int64 (L,)
    radius: np.ndarray  # float64 (L,)
    pcs: np.ndarray  # float64 (L, 2, d), zero where undefined
    pc_defined: np.ndarray  # bool (L,)
    outlier_count: np.ndarray  # int64 (L,)
    outlier_ids: np.ndarray  # int64, grouped by cluster
    outlier_offsets: np.ndarray  # int64 (L + 1,)
    outlier_dir: np.ndarray  # float64 (L, d), mean of (o - c) over outliers
    hist: np.ndarray  # int64 (L, 8), bins over [0, radius]

    @property
    def n_clusters(self) -> int:
        return self.sizes.shape[0]

    def outliers(self, j: int) -> np.ndarray:
        return self.outlier_ids[self.outlier_offsets[j] : self.outlier_offsets[j + 1]]


def _power_iteration(xc: np.ndarray, v: np.ndarray, against=None):
    """Leading eigenvector of ``xc.T @ xc`` (orthogonal to ``against`` if given)."""
    def proj(u):
        if against is not None:
            u = u - against * (against @ u)
        return u

    v = proj(v)
    nv = np.linalg.norm(v)
    if nv == 0:
        return None
    v = v / nv
    for _ in range(PC_ITERS):
        w = proj(xc.T @ (xc @ v))
        nw = np.linalg.norm(w)
        if nw <= 1e-300:
            return None
        w /= nw
        if w @ v < 0:
            w = -w
        done = np.linalg.norm(w - v) < PC_TOL
        v = w
        if done:
            break
    return v


def principal_components(points, n_components: int = 2):
    """Top principal directions by power iteration with deflation; ``None`` entries when undefined."""
    x = np.asarray(points, dtype=np.float64)
    out = []
    if x.shape[0] < 2:
        return [None] * n_components
    xc = x - x.mean(axis=0)
    prev = None
    for _ in range(n_components):
        norms = np.einsum("ij,ij->i", xc, xc)
        if prev is not None:
            rem = xc - np.outer(xc @ prev, prev)
            norms = np.einsum("ij,ij->i", rem, rem)
            start = rem[int(np.argmax(norms))]
        else:
            start = xc[int(np.argmax(norms))]
        if norms.max() <= 1e-24:
            out.append(None)
            continue
        v = _power_iteration(xc, start.copy(), prev)
        out.append(v)
        if v is None:
            break
        prev = v
    out += [None] * (n_components - len(out))
    return out


def build_cluster_stats(points, clustering) -> ClusterStats:
    """Radius, top-2 principal directions, 95th-percentile outliers and distance histogram per cluster."""
    x = np.asarray(getattr(points, "data", points))
    cents = clustering.centroids.astype(np.float64)
    L, d = cents.shape
    order = np.argsort(clustering.assignment, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(np.bincount(clustering.assignment, minlength=L))])
    sizes = np.diff(bounds).astype(np.int64)
    radius = np.zeros(L)
    pcs = np.zeros((L, 2, d))
    pc_ok = np.zeros(L, dtype=bool)
    ocount = np.zeros(L, dtype=np.int64)
    odir = np.zeros((L, d))
    hist = np.zeros((L, HIST_BINS), dtype=np.int64)
    oids = []
    for j in range(L):
        ids = order[bounds[j] : bounds[j + 1]]
        if ids.size == 0:
            oids.append(np.zeros(0, np.int64))
            continue
        diff = x[ids].astype(np.float64) - cents[j]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        radius[j] = dist.max()
        if radius[j] > 0:
            hist[j] = np.histogram(dist, bins=HIST_BINS, range=(0.0, radius[j]))[0]
        else:
            hist[j, 0] = ids.size
        cut = np.percentile(dist, OUTLIER_PERCENTILE)
        sel = dist > cut
        ocount[j] = int(sel.sum())
        oids.append(np.sort(ids[sel]).astype(np.int64))
        if sel.any():
            odir[j] = diff[sel].mean(axis=0)
        comps = principal_components(x[ids], 2)
        pc_ok[j] = comps[0] is not None
        for i, v in enumerate(comps):
            if v is not None:
                pcs[j, i] = v
    offs = np.concatenate([[0], np.cumsum([o.size for o in oids])]).astype(np.int64)
    return ClusterStats(cents, sizes, radius, pcs, pc_ok, ocount,
                        np.concatenate(oids) if oids else np.zeros(0, np.int64), offs, odir, hist)


def _plain_distance(scores: np.ndarray, metric: Metric) -> np.ndarray:
    if metric == Metric.L2:
        return np.sqrt(np.maximum(scores, 0.0))
    return scores


def query_features(scores, order, stats: ClusterStats, metric: Metric, t: int = DEFAULT_T) -> np.ndarray:
    """Distances to the ``t`` nearest centroids, their relation to the nearest, and those clusters' sizes and radii.

    For L2 and angular the relation is a ratio; inner-product scores can be
    negative, so there it is the difference from the nearest score.
    """
    t = min(t, order.size)
    top = order[:t]
    dist = _plain_distance(np.asarray(scores, dtype=np.float64)[top], Metric(metric))
    if Metric(metric) == Metric.IP:
        rel = dist - dist[0]
    else:
        rel = dist / max(dist[0], 1e-12)
    return np.concatenate([dist, rel, stats.sizes[top].astype(np.float64), stats.radius[top]])


def query_feature_length(n_clusters: int, t: int = DEFAULT_T) -> int:
    return 4 * min(t, n_clusters)


def cluster_features(q, clusters, stats: ClusterStats, nearest: int) -> np.ndarray:
    """One row of pruning features per cluster id in ``clusters``; ``nearest`` is the top-ranked cluster."""
    q = np.asarray(q, dtype=np.float64)
    cl = np.asarray(clusters, dtype=np.int64)
    qc = q[None, :] - stats.centroids[cl]
    dist = np.sqrt(np.einsum("ij,ij->i", qc, qc))
    dn = np.linalg.norm(q - stats.centroids[nearest])
    rad = stats.radius[cl]
    proj = np.abs(np.einsum("pkd,pd->pk", stats.pcs[cl], qc))
    return np.column_stack([
        dist,
        dist / max(dn, 1e-12),
        stats.sizes[cl].astype(np.float64),
        rad,
        dist / np.maximum(rad, 1e-12),
        proj,
        stats.outlier_count[cl].astype(np.float64),
        stats.hist[cl].astype(np.float64),
        np.einsum("pd,pd->p", stats.outlier_dir[cl], qc),
    ])

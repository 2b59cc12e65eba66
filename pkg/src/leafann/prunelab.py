"""Experimental within-cluster pruning filters and their measurement harness.

None of these is used by the default search path. They exist to measure how
many points each idea could skip and what that costs in recall:

sign
    per-cluster orthonormal hyperplanes through the centroid; a point is
    skipped when its sign pattern is far (Hamming) from the query's.
strips
    points bucketed by projection on one global direction; buckets are
    visited nearest first and the scan stops once a bucket's distance bound
    exceeds the current k-th best.
hull
    inner product only: score the vertices of an approximate convex hull
    (cluster-local PCA) first, and skip interior points if the best vertex
    cannot enter the pool.
annulus
    triangle-inequality ring ``|d(q,c) - d(c,x)| <= ub`` around the query's
    distance to the centroid.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .adaptive.features import principal_components
from .dataset import GroundTruth, Metric, exact_distances, recall_at_k
from .kernels import _fallback

STRATEGIES = ("none", "sign", "strips", "hull", "annulus")


def _cluster_points(index, j):
    ids = index.cluster_members(j)
    return ids, index.data[ids].astype(np.float64)


# ---- sign vectors -----------------------------------------------------------------

@dataclass
class SignIndex:
    normals: list  # per cluster (d, h) float64 with orthonormal columns
    signs: list  # per cluster (nc,) uint64 bit patterns, member order
    h: int


def _orthonormal(d: int, h: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, h)))
    return q * np.sign(np.diag(r))[None, :]


def _pack_bits(proj: np.ndarray) -> np.ndarray:
    bits = (proj >= 0).astype(np.uint64)
    weights = np.left_shift(np.uint64(1), np.arange(proj.shape[1], dtype=np.uint64))
    return (bits * weights).sum(axis=1, dtype=np.uint64)


def build_sign_index(index, h: int = 32, seed: int = 0) -> SignIndex:
    h = min(h, index.d, 64)
    normals, signs = [], []
    for j in range(index.n_clusters):
        rng = np.random.default_rng([seed, j])
        nrm = _orthonormal(index.d, h, rng)
        _, pts = _cluster_points(index, j)
        c = index.clustering.centroids[j].astype(np.float64)
        normals.append(nrm)
        signs.append(_pack_bits((pts - c) @ nrm))
    return SignIndex(normals, signs, h)


def query_signs(q, index, sign_index: SignIndex, cluster: int) -> np.uint64:
    c = index.clustering.centroids[cluster].astype(np.float64)
    return _pack_bits(((np.asarray(q, np.float64) - c) @ sign_index.normals[cluster])[None])[0]


def hamming(a, b) -> np.ndarray:
    return np.bitwise_count(np.bitwise_xor(np.asarray(a, np.uint64), np.asarray(b, np.uint64))).astype(np.int64)


def sign_filter(q, cluster: int, sign_index: SignIndex, threshold: int, index) -> np.ndarray:
    """Keep mask over the cluster's members: Hamming(sign(q), sign(x)) <= threshold."""
    qs = query_signs(q, index, sign_index, cluster)
    return hamming(sign_index.signs[cluster], qs) <= threshold


# ---- strips -----------------------------------------------------------------------

@dataclass
class StripsIndex:
    direction: np.ndarray  # unit (d,)
    order: list  # per cluster: local ids sorted by projection
    proj: list  # per cluster: sorted projections
    bounds: list  # per cluster: (n_strips + 1,) boundaries
    starts: list  # per cluster: (n_strips + 1,) offsets into order


def build_strips_index(index, n_strips: int = 16, direction=None) -> StripsIndex:
    if direction is None:
        rng = np.random.default_rng(0)
        sample = index.data[np.sort(rng.choice(index.n, min(index.n, 20000), replace=False))]
        direction = principal_components(sample, 1)[0]
        if direction is None:
            direction = np.eye(index.d)[0]
    a = np.asarray(direction, np.float64)
    a = a / np.linalg.norm(a)
    order, proj, bounds, starts = [], [], [], []
    for j in range(index.n_clusters):
        _, pts = _cluster_points(index, j)
        p = pts @ a
        o = np.argsort(p, kind="stable")
        ps = p[o]
        if ps.size:
            b = np.linspace(ps[0], ps[-1], n_strips + 1)
        else:
            b = np.zeros(n_strips + 1)
        st = np.searchsorted(ps, b[1:-1], side="right")
        order.append(o)
        proj.append(ps)
        bounds.append(b)
        starts.append(np.concatenate([[0], st, [ps.size]]).astype(np.int64))
    return StripsIndex(a, order, proj, bounds, starts)


def strip_lower_bounds(qproj: float, bounds: np.ndarray) -> np.ndarray:
    """Squared distance from the query's projection to each strip interval (0 inside)."""
    lo, hi = bounds[:-1], bounds[1:]
    gap = np.maximum(np.maximum(lo - qproj, qproj - hi), 0.0)
    return gap * gap


def strips_scan(q, cluster: int, strips: StripsIndex, pool, index):
    """Visit strips nearest first, pushing exact squared L2 distances into ``pool``.

    Returns ``(visited strip ids, local candidate ids)``.
    """
    q = np.asarray(q, np.float64)
    ids = index.cluster_members(cluster)
    lb = strip_lower_bounds(float(q @ strips.direction), strips.bounds[cluster])
    visit_order = np.lexsort((np.arange(lb.size), lb))
    st = strips.starts[cluster]
    visited, cands = [], []
    for s in visit_order.tolist():
        if lb[s] > pool.worst():
            break
        visited.append(s)
        loc = strips.order[cluster][st[s] : st[s + 1]]
        if loc.size:
            cands.append(loc)
            pool.push(exact_distances(q, index.data[ids[loc]], Metric.L2), ids[loc])
    cand = np.concatenate(cands) if cands else np.zeros(0, np.int64)
    return np.array(visited, dtype=np.int64), cand


# ---- convex hull ------------------------------------------------------------------

@dataclass
class HullIndex:
    r: int
    vertex: list  # per cluster bool (nc,)


def hull_vertices(points, r: int = 3) -> np.ndarray:
    """Vertex flags of the convex hull of ``points`` after projecting onto their top ``r`` principal directions."""
    from scipy.spatial import ConvexHull, QhullError

    x = np.asarray(points, np.float64)
    n = x.shape[0]
    if n <= r + 1:
        return np.ones(n, dtype=bool)
    xc = x - x.mean(axis=0)
    if x.shape[1] > r:
        _, _, vt = np.linalg.svd(xc, full_matrices=False)
        xc = xc @ vt[:r].T
    try:
        hull = ConvexHull(xc)
    except QhullError:  # degenerate (flat) projection
        return np.ones(n, dtype=bool)
    flags = np.zeros(n, dtype=bool)
    flags[hull.vertices] = True
    return flags


def build_hull_index(index, r: int = 3) -> HullIndex:
    return HullIndex(r, [hull_vertices(_cluster_points(index, j)[1], r) for j in range(index.n_clusters)])


def hull_filter(q, cluster: int, hull: HullIndex, index, pool=None):
    """Vertices ranked by inner-product score, plus the keep mask over the cluster's members.

    Interior points are dropped only when the best vertex score cannot enter ``pool``.
    """
    if index.metric is not Metric.IP:
        raise ValueError("hull filtering is defined for the inner-product metric only")
    ids = index.cluster_members(cluster)
    vflag = hull.vertex[cluster]
    vloc = np.flatnonzero(vflag)
    sc = exact_distances(q, index.data[ids[vloc]], Metric.IP)
    rank = np.lexsort((vloc, sc))
    ranked = vloc[rank]
    keep = np.ones(ids.size, dtype=bool)
    if pool is not None and pool.full and (sc.size == 0 or sc[rank[0]] >= pool.worst()):
        keep = vflag.copy()
    return ranked, keep


# ---- annulus ----------------------------------------------------------------------

@dataclass
class AnnulusData:
    dist: list  # per cluster float64 (nc,) true distances to the centroid, member order


def build_annulus(index) -> AnnulusData:
    out = []
    for j in range(index.n_clusters):
        _, pts = _cluster_points(index, j)
        c = index.clustering.centroids[j].astype(np.float64)
        out.append(np.sqrt(np.einsum("ij,ij->i", pts - c, pts - c)))
    return AnnulusData(out)


def annulus_filter(d_qc: float, ub: float, dist_cx) -> np.ndarray:
    """Keep iff ``d_qc - ub <= d(c, x) <= d_qc + ub`` (true, non-squared distances)."""
    if ub < 0:
        raise ValueError("ub must be non-negative")
    d = np.asarray(dist_cx, np.float64)
    return (d >= d_qc - ub) & (d <= d_qc + ub)


# ---- measurement ------------------------------------------------------------------

@dataclass
class PruneReport:
    strategy: str
    parameter: float
    queries: int
    recall: float
    pruned_fraction: float
    evaluations: int
    evaluations_avoided: int


def _lab_pool(capacity):
    return _fallback.CandidatePool(capacity)


def measure_prune_stats(strategy: str, index, queries, gt: GroundTruth, *, k: int = 10, nprob: int = 16,
                        reorder: int = 100, parameter: float | None = None, lab=None) -> PruneReport:
    """Run ``queries`` with one filter and report recall and how many in-cluster points were skipped.

    ``sign`` and ``annulus`` run through the regular engine (quantized scan
    plus exact re-rank) with a per-cluster keep mask. ``strips`` and ``hull``
    drive an exact in-cluster scan because they need running distances.
    ``parameter`` is the Hamming threshold (sign) or the annulus radius; for
    annulus ``None`` uses each query's true k-th neighbour distance.
    """
    from .engine import SearchRequest, rank_clusters, search

    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    queries = np.atleast_2d(queries)
    nq = queries.shape[0]
    found = np.full((nq, k), -1, dtype=np.int64)
    total = kept = 0
    for i, q in enumerate(queries):
        qs = index.prepare_query(q)
        stats = {"total": 0, "kept": 0}

        def counted(mask):
            stats["total"] += mask.size
            stats["kept"] += int(mask.sum())
            return mask

        if strategy in ("none", "sign", "annulus"):
            filt = None
            if strategy == "sign":
                thr = lab.h if parameter is None else int(parameter)
                filt = lambda c, qq: counted(sign_filter(qq, c, lab, thr, index))  # noqa: E731
            elif strategy == "annulus":
                if index.metric is not Metric.L2:
                    raise ValueError("annulus filtering needs the L2 metric")
                ub = float(np.sqrt(max(gt.distances[i, k - 1], 0.0))) if parameter is None else float(parameter)

                def filt(c, qq, ub=ub):
                    d_qc = float(np.linalg.norm(qq.astype(np.float64) - index.clustering.centroids[c]))
                    return counted(annulus_filter(d_qc, ub, lab.dist[c]))
            else:
                filt = lambda c, qq: counted(np.ones(index.cluster_members(c).size, dtype=bool))  # noqa: E731
            r = search(q, index, SearchRequest(k=k, nprob=nprob, reorder=reorder, point_filter=filt))
            found[i, : r.ids.size] = r.ids
        else:
            _, order = rank_clusters(index, qs)
            pool = _lab_pool(k)
            for c in order[:nprob].tolist():
                n_c = index.cluster_members(c).size
                if strategy == "strips":
                    _, cand = strips_scan(qs, c, lab, pool, index)
                    stats["total"] += n_c
                    stats["kept"] += cand.size
                else:
                    _, keep = hull_filter(qs, c, lab, index, pool)
                    ids = index.cluster_members(c)[keep]
                    stats["total"] += n_c
                    stats["kept"] += ids.size
                    pool.push(exact_distances(qs, index.data[ids], Metric.IP), ids)
            ids = pool.items()[0]
            found[i, : ids.size] = ids[:k]
        total += stats["total"]
        kept += stats["kept"]
    rec = recall_at_k(found, gt, k)
    param = float("nan") if parameter is None else float(parameter)
    return PruneReport(strategy, param, nq, rec, (total - kept) / total if total else 0.0, kept, total - kept)


def write_reports(path, reports: list[PruneReport]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=[f.name for f in fields(PruneReport)])
        w.writeheader()
        for r in reports:
            w.writerow(asdict(r))
    return path


def sign_sweep(index, queries, gt, thresholds, *, h: int = 32, k: int = 10, nprob: int = 16,
               reorder: int = 100, seed: int = 0) -> list[PruneReport]:
    lab = build_sign_index(index, h, seed)
    return [measure_prune_stats("sign", index, queries, gt, k=k, nprob=nprob, reorder=reorder,
                                parameter=t, lab=lab) for t in thresholds]

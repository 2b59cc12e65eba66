"""End-to-end acceptance checks on desk-scale datasets.

Each test prints one ``[C<n>] PASS|FAIL`` line with the measured values and
then asserts. The SIFT-style base set (100K x 128), its 1,000 evaluation
queries and 1,000 training queries are generated once per session.
Run with ``pytest tests/test_acceptance.py -v``; the whole file takes tens of
minutes on one core.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from leafann import kernels
from leafann.adaptive import AdaptiveParams, TrainConfig, interpolate_nprob, train_adaptive
from leafann.dataset import GroundTruth, Metric, VectorSet, brute_force_topk, recall_at_k
from leafann.engine import (
    IndexParams,
    SearchRequest,
    build_graphs,
    build_index,
    load_index,
    result_ids,
    save_index,
    search_batch,
)
from leafann.filtration import compute_dim_stats, select_dims
from leafann.kmeans import KMeansConfig, train_kmeans
from leafann.leafgraph import HybridPolicy
from leafann.pq import compute_residuals, reconstruction_error, train_codebooks
from leafann.prunelab import annulus_filter, sign_sweep, write_reports
from leafann.synthetic import SiftLike, fashion_like, gaussian, unit_sphere

K = 10
REORDER = 100


@pytest.fixture
def report(capsys):
    def emit(tag: str, ok: bool, detail: str, t0: float):
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail} ({time.time() - t0:.0f}s)")
        assert ok, detail
    return emit


class Sift:
    """Shared SIFT-style index plus a memo of fixed-nprob recall on the evaluation queries."""

    def __init__(self):
        gen = SiftLike(seed=0)
        self.x = gen.sample(100_000, 1)
        self.q = gen.sample(1000, 2)
        self.t = gen.sample(1000, 3)
        vs = VectorSet(self.x, Metric.L2)
        self.gt = brute_force_topk(vs, self.q, K)
        self.gt_t = brute_force_topk(vs, self.t, K)
        self.index = build_index(self.x, IndexParams(seed=0), "l2")
        self._fixed: dict[tuple, float] = {}

    def fixed_recall(self, nprob: int, train: bool = False) -> float:
        key = (nprob, train)
        if key not in self._fixed:
            q, gt = (self.t, self.gt_t) if train else (self.q, self.gt)
            res = search_batch(q, self.index, SearchRequest(k=K, nprob=nprob, reorder=REORDER))
            self._fixed[key] = recall_at_k(result_ids(res, K), gt)
        return self._fixed[key]

    def smallest_nprob(self, target: float, lo: int = 1, hi: int | None = None, train: bool = False) -> int:
        """Smallest nprob whose fixed recall reaches ``target`` (recall is monotone in nprob)."""
        hi = hi or self.index.n_clusters
        if self.fixed_recall(hi, train) < target:
            return hi + 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.fixed_recall(mid, train) >= target:
                hi = mid
            else:
                lo = mid + 1
        return lo


@pytest.fixture(scope="session")
def sift():
    return Sift()


# ---- 1: exhaustive configuration equals brute force --------------------------------------

def _exhaustive_mismatches(x, q, metric) -> int:
    idx = build_index(x, IndexParams(seed=0), metric)
    res = search_batch(q, idx, SearchRequest(k=K, nprob=idx.n_clusters, reorder=idx.n))
    gt = brute_force_topk(VectorSet(x, metric), q, K)
    return int((result_ids(res, K) != gt.ids).any(axis=1).sum())


def test_c1_exhaustive_configuration_is_exact(sift, report):
    t0 = time.time()
    g = gaussian(51_000, 64, seed=21, n_centers=64)
    s = unit_sphere(51_000, 64, seed=22, n_centers=64)
    bad = {
        "gaussian-l2": _exhaustive_mismatches(g[:50_000], g[50_000:], "l2"),
        "sphere-angular": _exhaustive_mismatches(s[:50_000], s[50_000:], "angular"),
    }
    idx = sift.index
    res = search_batch(sift.q, idx, SearchRequest(k=K, nprob=idx.n_clusters, reorder=idx.n))
    bad["sift-l2"] = int((result_ids(res, K) != sift.gt.ids).any(axis=1).sum())
    report("C1", sum(bad.values()) == 0, f"mismatching queries out of 1000 each: {bad}", t0)


# ---- 2: vector kernels equal the scalar oracle -------------------------------------------

def test_c2_kernel_differential(report):
    t0 = time.time()
    rng = np.random.default_rng(77)
    ms, valids = (2, 4, 8, 16, 48, 64, 480), (1, 31, 32)
    group = 8  # blocks drawn per random table, keeps the call count low
    per = -(-100_000 // (len(ms) * len(valids) * group))
    pairs = mismatches = 0
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        for m in ms:
            for v in valids:
                for _ in range(per):
                    lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
                    packed = rng.integers(0, 256, (group, m * 16)).astype(np.uint8)
                    ref = be.block_distances_scalar(lut, packed, v)
                    for lanes in (2, 4):
                        mismatches += int((be.block_distances_vector(lut, packed, v, lanes) != ref).sum())
                pairs += per * group
    detail = f"{pairs} (lut, block) pairs over backends {kernels.available_backends()}, {mismatches} mismatches"
    report("C2", mismatches == 0 and pairs >= 100_000, detail, t0)


# ---- 3: static tuning reaches recall 0.99 ------------------------------------------------

def test_c3_recall_target(sift, report):
    t0 = time.time()
    nprob = sift.smallest_nprob(0.99, hi=64, train=True)  # tuned on the training queries
    r = sift.fixed_recall(nprob)
    report("C3", r >= 0.99, f"nprob={nprob} reorder={REORDER} (tuned on held-out training queries) recall@10={r:.4f}", t0)


# ---- 4: learned nprob spends fewer clusters at matched recall ----------------------------

def test_c4_adaptive_efficiency(sift, report):
    t0 = time.time()
    idx = sift.index
    cfg = TrainConfig(k=K, nprob_min=4, nprob_max=64, reorder_model=False, prune_model=False, seed=0)
    idx.models = train_adaptive(idx, sift.t, sift.gt_t, cfg)
    res = search_batch(sift.q, idx, SearchRequest(k=K, nprob=1, reorder=REORDER, adaptive=True))
    ra = recall_at_k(result_ids(res, K), sift.gt)
    mean_nprob = float(np.mean([r.nprob for r in res]))
    fixed = sift.smallest_nprob(ra, hi=64)
    rf = sift.fixed_recall(fixed) if fixed <= 64 else float("nan")
    ok = ra >= 0.985 and mean_nprob <= 0.9 * fixed and rf - ra <= 0.005
    detail = (f"adaptive recall={ra:.4f} mean nprob={mean_nprob:.2f}; fixed nprob reaching it={fixed} "
              f"(recall {rf:.4f}); ratio={mean_nprob / fixed:.3f}")
    report("C4", ok, detail, t0)


# ---- 5: dimension filtration on image-like data ------------------------------------------

def test_c5_component_filtration(report):
    t0 = time.time()
    x, q = fashion_like(60_000, 1000, seed=0)
    flt = select_dims(compute_dim_stats(x))
    pruned = flt.d_original - flt.d_kept
    gt = brute_force_topk(VectorSet(x, Metric.L2), q, K)
    rec = {}
    for filt in (False, True):
        idx = build_index(x, IndexParams(filtration=filt, seed=0), "l2")
        rec[filt] = recall_at_k(result_ids(search_batch(q, idx, SearchRequest(k=K, nprob=8, reorder=REORDER)), K), gt)
    delta = abs(rec[True] - rec[False])
    detail = f"pruned {pruned} of {flt.d_original} dims; recall unfiltered={rec[False]:.4f} filtered={rec[True]:.4f} delta={delta:.4f}"
    report("C5", pruned > 120 and delta <= 0.005, detail, t0)


# ---- 6: raw-mean residuals quantize better on the sphere ---------------------------------

def test_c6_raw_mean_residuals(report):
    t0 = time.time()
    x = unit_sphere(50_000, 64, seed=0)
    cl = train_kmeans(x, 256, KMeansConfig(seed=0), keep_normalized=True)
    err = {}
    for mode in ("raw_mean", "normalized"):
        r = compute_residuals(x, cl, mode)
        err[mode] = reconstruction_error(r, train_codebooks(r, config=KMeansConfig(seed=1)))
    margin = err["normalized"] - err["raw_mean"]
    detail = f"raw_mean={err['raw_mean']:.2f} normalized={err['normalized']:.2f} margin={margin:.2f}"
    report("C6", margin > 0, detail, t0)


# ---- 7: annulus filter never drops a point inside the bound ------------------------------

def test_c7_annulus_safety(report):
    t0 = time.time()
    rng = np.random.default_rng(7)
    violations = pruned = 0
    for _ in range(10_000):
        d = int(rng.integers(1, 33))
        pts = rng.standard_normal((int(rng.integers(1, 64)), d)) * rng.uniform(0.05, 10)
        c = pts.mean(0) + rng.standard_normal(d) * rng.uniform(0, 2)
        q = c + rng.standard_normal(d) * rng.uniform(0, 20)
        dqx = np.linalg.norm(pts - q, axis=1)
        ub = float(rng.uniform(0, dqx.max() * 1.5))
        keep = annulus_filter(float(np.linalg.norm(q - c)), ub, np.linalg.norm(pts - c, axis=1))
        violations += int(np.sum(~keep & (dqx <= ub)))
        pruned += int((~keep).sum())
    report("C7", violations == 0, f"10000 instances, {pruned} points pruned, {violations} violations", t0)


# ---- 8: sign-based pruning operating point -----------------------------------------------

def test_c8_direction_operating_point(sift, report, tmp_path_factory):
    t0 = time.time()
    reps = sign_sweep(sift.index, sift.q, sift.gt, [38, 37, 36, 35, 34, 33, 32], h=64, k=K, nprob=32, reorder=REORDER)
    path = write_reports(tmp_path_factory.mktemp("c8") / "sign_sweep.csv", reps)
    good = [r for r in reps if r.recall >= 0.99 and r.pruned_fraction >= 0.2]
    best = max(good, key=lambda r: r.pruned_fraction) if good else max(reps, key=lambda r: r.recall)
    detail = (f"h=64 nprob=32 threshold={best.parameter:g} pruned={best.pruned_fraction:.3f} "
              f"recall={best.recall:.4f}; sweep csv {path}")
    report("C8", bool(good), detail, t0)


# ---- 9: hybrid graph search saves distance evaluations -----------------------------------

def test_c9_hybrid_graph_parity(sift, report):
    t0 = time.time()
    idx = sift.index
    build_graphs(idx, 32)
    policy = HybridPolicy(brute_force_clusters=1, efs=10, escalation_fraction=0.2)
    cache = {}

    def run(nprob, graph):
        if (nprob, graph) not in cache:
            res = search_batch(sift.q, idx, SearchRequest(k=K, nprob=nprob, reorder=REORDER, graph=graph, policy=policy))
            cache[nprob, graph] = (recall_at_k(result_ids(res, K), sift.gt), float(np.mean([r.points_scanned for r in res])))
        return cache[nprob, graph]

    ok, parts = True, []
    for target in (0.90, 0.95):
        nb = 1
        while run(nb, False)[0] < target:
            nb += 1
        rb, eb = run(nb, False)
        nh = 1
        while run(nh, True)[0] < rb - 0.005 and nh < 4 * nb:
            nh += 1
        rh, eh = run(nh, True)
        hit = rh >= rb - 0.005 and eh <= 0.9 * eb
        ok &= hit
        parts.append(f"target {target}: brute nprob={nb} recall={rb:.4f} evals={eb:.0f}, "
                     f"hybrid nprob={nh} recall={rh:.4f} evals={eh:.0f} ratio={eh / eb:.3f}")
    report("C9", ok, "; ".join(parts), t0)


# ---- 10: nprob interpolation grid --------------------------------------------------------

def test_c10_interpolation_grid(report):
    t0 = time.time()
    worked = [
        interpolate_nprob(0.05, AdaptiveParams(nprob_min=10, nprob_max=110, p0=0.2, p1=0.1)) == 10,
        interpolate_nprob(1.0, AdaptiveParams(nprob_min=3, nprob_max=40, p0=0.0, p1=0.0)) == 40,
        interpolate_nprob(0.6, AdaptiveParams(nprob_min=10, nprob_max=110, p0=0.2, p1=0.1)) == 38,
    ]
    rng = np.random.default_rng(10)
    grid = [i / 10 for i in range(11)]
    monotone = 0
    for _ in range(20):
        lo = int(rng.integers(1, 64))
        p = AdaptiveParams(nprob_min=lo, nprob_max=lo + int(rng.integers(0, 512)), p0=float(rng.random()),
                           p1=float(rng.random()))
        vals = [interpolate_nprob(v, p) for v in grid]
        monotone += all(a <= b for a, b in zip(vals, vals[1:])) and lo <= min(vals) and max(vals) <= p.nprob_max
    report("C10", all(worked) and monotone == 20, f"worked values {worked}, monotone draws {monotone}/20", t0)


# ---- 11: persistence round-trip ----------------------------------------------------------

def test_c11_persistence(sift, report, tmp_path):
    t0 = time.time()
    idx = sift.index
    path = tmp_path / "sift.lfa"
    save_index(idx, path)
    back = load_index(path)
    reqs = [SearchRequest(k=K, nprob=16, reorder=REORDER)]
    if idx.models is not None:
        reqs.append(SearchRequest(k=K, nprob=1, reorder=REORDER, adaptive=True))
    if idx.adjacency is not None:
        reqs.append(SearchRequest(k=K, nprob=8, reorder=REORDER, graph=True, policy=HybridPolicy(1, 10, 0.2)))
    mismatches = 0
    for req in reqs:
        a, b = search_batch(sift.q, idx, req), search_batch(sift.q, back, req)
        mismatches += sum(not (np.array_equal(x.ids, y.ids) and np.array_equal(x.distances, y.distances))
                          for x, y in zip(a, b))
    report("C11", mismatches == 0, f"{len(reqs)} request types x 1000 queries, {mismatches} mismatches", t0)

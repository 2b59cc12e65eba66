"""Command line driver: ``leafann {gt,build,search,train,bench,dims,lab}``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .dataset import GroundTruth, Metric, VectorSet, brute_force_topk, load_groundtruth, read_vecs, save_groundtruth, write_vecs
from .leafgraph import HybridPolicy


def _vectors(path, metric="l2") -> VectorSet:
    p = Path(path)
    arr = np.load(p) if p.suffix == ".npy" else read_vecs(p)
    return VectorSet(np.ascontiguousarray(arr, dtype=np.float32), Metric.parse(metric))


def _onoff(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


def _gt(path, k) -> GroundTruth:
    gt = load_groundtruth(path)
    if gt.k < k:
        raise SystemExit(f"ground truth has {gt.k} neighbours per query, need k={k}")
    return GroundTruth(gt.ids[:, :k], gt.distances[:, :k])


def _common(p: argparse.ArgumentParser, *names):
    spec = {
        "base": dict(help="base vectors (.fvecs/.bvecs/.ivecs/.npy)"),
        "queries": dict(help="query vectors"),
        "gt": dict(help="ground-truth prefix (<prefix>.ivecs ids, <prefix>.fvecs distances)"),
        "index": dict(help="index file"),
        "metric": dict(default="l2", choices=["l2", "angular", "ip"]),
        "k": dict(type=int, default=10),
        "nprob": dict(type=int, default=16),
        "reorder": dict(type=int, default=100),
        "adaptive": dict(type=_onoff, default=False, metavar="{on,off}"),
        "graph": dict(type=_onoff, default=False, metavar="{on,off}"),
        "theta": dict(type=float, default=0.0),
        "filter-threshold": dict(type=float, default=None),
        "workers": dict(type=int, default=1),
        "seed": dict(type=int, default=0),
        "out": dict(default=None),
    }
    for n in names:
        p.add_argument(f"--{n}", **spec[n])


def _request(a):
    from .engine import SearchRequest

    return SearchRequest(k=a.k, nprob=a.nprob, reorder=a.reorder, adaptive=a.adaptive, graph=a.graph, theta=a.theta,
                         policy=HybridPolicy(brute_force_clusters=a.brute_force_clusters, efs=a.efs,
                                             escalation_fraction=a.escalation_fraction))


def _policy_flags(p):
    p.add_argument("--brute-force-clusters", type=float, default=3, help="clusters scanned in full before graph search")
    p.add_argument("--efs", type=int, default=None)
    p.add_argument("--escalation-fraction", type=float, default=0.25)


def cmd_gt(a):
    base = _vectors(a.base, a.metric)
    q = _vectors(a.queries, a.metric).data
    if q.shape[1] != base.d:
        raise SystemExit(f"dimension mismatch: queries {q.shape[1]} vs base {base.d}")
    gt = brute_force_topk(base, q, a.k)
    ids, dists = save_groundtruth(a.out, gt)
    print(f"wrote {ids} and {dists}")


def cmd_build(a):
    from .engine import IndexParams, build_index, save_index

    if a.filter_threshold is not None and a.filter is False:
        raise SystemExit("--filter-threshold given together with --filter off")
    filt = a.filter if a.filter is not None else a.filter_threshold is not None
    params = IndexParams(n_clusters=a.clusters, filtration=filt,
                         filter_threshold=a.filter_threshold if a.filter_threshold is not None else 0.95,
                         graph=a.graph, graph_degree=a.degree, residual_mode=a.residual, seed=a.seed,
                         cluster_stats=a.stats)
    idx = build_index(_vectors(a.base, a.metric), params)
    save_index(idx, a.index)
    print(f"built {a.index}: n={idx.n} d={idx.d} (original {idx.d_init}) clusters={idx.n_clusters} m={idx.m}")


def cmd_search(a):
    from .engine import load_index, result_ids, search_batch
    from .dataset import recall_at_k

    idx = load_index(a.index)
    q = _vectors(a.queries, idx.metric.value).data
    res = search_batch(q, idx, _request(a))
    ids = result_ids(res, a.k)
    if a.out:
        write_vecs(a.out, ids.astype(np.int32), "ivecs")
    else:
        for r in res[:10]:
            print(" ".join(f"{i}:{d:.6g}" for i, d in zip(r.ids.tolist(), r.distances.tolist())))
    if a.gt:
        print(f"recall@{a.k} = {recall_at_k(ids, _gt(a.gt, a.k), a.k):.4f}")


def cmd_train(a):
    from .adaptive.training import TrainConfig, train_adaptive
    from .engine import load_index, save_index

    idx = load_index(a.index)
    q = _vectors(a.queries, idx.metric.value).data
    gt = load_groundtruth(a.gt)
    cfg = TrainConfig(k=a.k, nprob_min=a.nprob_min, nprob_max=a.nprob_max, reorder_min=a.reorder_min,
                      reorder_max=a.reorder_max, theta=a.theta or 0.2, seed=a.seed)
    idx.models = train_adaptive(idx, q, gt, cfg)
    out = a.out or a.index
    save_index(idx, out)
    p = idx.models.params
    print(f"trained models into {out}: nprob [{p.nprob_min}, {p.nprob_max}] reorder [{p.reorder_min}, {p.reorder_max}]")


def cmd_bench(a):
    from .bench import run_bench, write_csv
    from .engine import load_index

    idx = load_index(a.index)
    q = _vectors(a.queries, idx.metric.value).data
    gt = _gt(a.gt, a.k) if a.gt else None
    rep, _ = run_bench(idx, q, gt, _request(a), a.workers, a.seed)
    print(rep.table())
    if a.out:
        write_csv(a.out, [rep])


def cmd_dims(a):
    from .filtration import compute_dim_stats, select_dims

    base = _vectors(a.base, a.metric)
    fr = compute_dim_stats(base.data)
    flt = select_dims(fr, a.filter_threshold if a.filter_threshold is not None else 0.95)
    fh = open(a.out, "w", newline="") if a.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(["dim", "fraction", "kept"])
    for j, (f, k) in enumerate(zip(fr.tolist(), flt.mask.tolist())):
        w.writerow([j, f"{f:.6f}", int(k)])
    if a.out:
        fh.close()
    print(f"kept {flt.d_kept} of {flt.d_original} dimensions ({flt.d_original - flt.d_kept} pruned)", file=sys.stderr)


def _sweep(spec: str) -> list[float]:
    parts = [float(x) for x in spec.split(":")]
    if len(parts) == 1:
        return parts
    lo, hi = parts[0], parts[1]
    step = parts[2] if len(parts) > 2 else 1.0
    return list(np.arange(lo, hi + step / 2, step))


def cmd_lab(a):
    from . import prunelab
    from .engine import load_index

    idx = load_index(a.index)
    q = _vectors(a.queries, idx.metric.value).data
    gt = _gt(a.gt, a.k)
    s = a.strategy
    if s == "sign":
        lab = prunelab.build_sign_index(idx, a.h, a.seed)
    elif s == "strips":
        lab = prunelab.build_strips_index(idx, a.strips)
    elif s == "hull":
        lab = prunelab.build_hull_index(idx, a.r)
    elif s == "annulus":
        lab = prunelab.build_annulus(idx)
    else:
        lab = None
    params = _sweep(a.sweep) if a.sweep else [None]
    reps = [prunelab.measure_prune_stats(s, idx, q, gt, k=a.k, nprob=a.nprob, reorder=a.reorder, parameter=p, lab=lab)
            for p in params]
    for r in reps:
        print(f"{r.strategy:8s} param={r.parameter:<8g} recall={r.recall:.4f} pruned={r.pruned_fraction:.4f}")
    if a.out:
        prunelab.write_reports(a.out, reps)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leafann", description="IVF + 4-bit PQ nearest-neighbour search")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("gt", help="exact ground truth")
    _common(s, "base", "queries", "metric", "k", "out")
    s.set_defaults(func=cmd_gt)

    s = sub.add_parser("build", help="build an index")
    _common(s, "base", "index", "metric", "graph", "filter-threshold", "seed")
    s.add_argument("--filter", type=_onoff, default=None, metavar="{on,off}")
    s.add_argument("--clusters", type=int, default=None)
    s.add_argument("--degree", type=int, default=16)
    s.add_argument("--residual", default="raw_mean", choices=["raw_mean", "normalized", "none"])
    s.add_argument("--stats", action="store_true", help="precompute cluster statistics")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("search", help="answer queries")
    _common(s, "index", "queries", "gt", "k", "nprob", "reorder", "adaptive", "graph", "theta", "out")
    _policy_flags(s)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("train", help="fit the adaptive models")
    _common(s, "index", "queries", "gt", "k", "theta", "seed", "out")
    s.add_argument("--nprob-min", type=int, default=None)
    s.add_argument("--nprob-max", type=int, default=None)
    s.add_argument("--reorder-min", type=int, default=None)
    s.add_argument("--reorder-max", type=int, default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("bench", help="recall and throughput report")
    _common(s, "index", "queries", "gt", "k", "nprob", "reorder", "adaptive", "graph", "theta", "workers", "seed", "out")
    _policy_flags(s)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("dims", help="per-dimension filtration fractions as CSV")
    _common(s, "base", "metric", "filter-threshold", "out")
    s.set_defaults(func=cmd_dims)

    s = sub.add_parser("lab", help="experimental pruning measurements")
    _common(s, "index", "queries", "gt", "k", "nprob", "reorder", "seed", "out")
    s.add_argument("--strategy", required=True, choices=["none", "sign", "strips", "hull", "annulus"])
    s.add_argument("--sweep", default=None, help="parameter value or start:stop[:step]")
    s.add_argument("--h", type=int, default=32, help="hyperplanes per cluster (sign)")
    s.add_argument("--strips", type=int, default=16)
    s.add_argument("--r", type=int, default=3, help="PCA rank for hulls")
    s.set_defaults(func=cmd_lab)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    if getattr(a, "theta", 0.0) and a.theta >= 1.0:
        raise SystemExit("--theta must be below 1")
    a.func(a)
    return 0


if __name__ == "__main__":
    sys.exit(main())

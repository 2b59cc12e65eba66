"""Time the compiled kernel core against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--blocks 20000] [--m 64] [--repeat 5] [--csv out.csv]

Reports the best-of-N wall time for the block kernels, a full cluster scan
into a candidate pool, a leaf-graph walk and an end-to-end batch search.
ISA variants of the compiled core are timed separately.
"""

from __future__ import annotations

import argparse
import csv
import time

import numpy as np

from leafann import kernels
from leafann.engine import IndexParams, SearchRequest, build_index, search_batch
from leafann.leafgraph import build_leaf_graph
from leafann.synthetic import gaussian


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def _isas(be) -> list[str]:
    if be.BACKEND != "compiled":
        return [be.isa_name()]
    out, prev = [], be.isa_name()
    for name in ("portable", "ssse3", "avx2"):
        try:
            be.set_isa(name)
            out.append(name)
        except (ValueError, RuntimeError):
            pass
    be.set_isa(prev)
    return out


def kernel_rows(args) -> list[dict]:
    rng = np.random.default_rng(0)
    m, nb = args.m, args.blocks
    lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
    packed = rng.integers(0, 256, (nb, m * 16)).astype(np.uint8)
    valid = np.full(nb, 32, np.int32)
    ids = np.arange(nb * 32, dtype=np.int64).reshape(nb, 32)

    g = gaussian(2000, 2 * m, seed=1)
    codes = rng.integers(0, 16, (2000, m)).astype(np.uint8)
    adj = build_leaf_graph(g, 16).adjacency

    rows = []
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        for isa in _isas(be):
            prev = be.set_isa(isa)
            cases = {
                "block_scalar": lambda: be.block_distances_scalar(lut, packed, valid),
                "block_vector_2lut": lambda: be.block_distances_vector(lut, packed, valid, 2),
                "block_vector_4lut": lambda: be.block_distances_vector(lut, packed, valid, 4),
                "scan_cluster": lambda: be.scan_cluster(be.CandidatePool(100), lut, packed, ids, valid, 1.0, 0.0, 4),
                "graph_search": lambda: be.graph_search(lut, codes, adj, 0, 32, 4),
            }
            for case, fn in cases.items():
                sec = best_of(fn, args.repeat)
                per = nb * 32 if case != "graph_search" else 1
                rows.append({"backend": name, "isa": isa, "case": case, "seconds": sec,
                             "ns_per_point": 1e9 * sec / per if case != "graph_search" else float("nan")})
            be.set_isa(prev)
    return rows


def search_rows(args) -> list[dict]:
    x = gaussian(args.n + 200, 64, seed=2, n_centers=32)
    idx = build_index(x[: args.n], IndexParams(seed=0), "l2")
    q = x[args.n :]
    rows = []
    for name in kernels.available_backends():
        req = SearchRequest(k=10, nprob=16, reorder=100, backend=name)
        sec = best_of(lambda: search_batch(q, idx, req), max(1, args.repeat // 2))
        rows.append({"backend": name, "isa": kernels.get_backend(name).isa_name(), "case": "search_batch",
                     "seconds": sec, "ns_per_point": float("nan"), "qps": len(q) / sec})
    return rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=20000)
    ap.add_argument("--m", type=int, default=64)
    ap.add_argument("--n", type=int, default=20000, help="base size for the end-to-end search case")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    if args.m % 2:
        ap.error("--m must be even")

    rows = kernel_rows(args) + search_rows(args)
    print(f"{'backend':<10}{'isa':<10}{'case':<20}{'seconds':>12}{'ns/point':>12}{'qps':>10}")
    for r in rows:
        qps = f"{r['qps']:.0f}" if "qps" in r else ""
        print(f"{r['backend']:<10}{r['isa']:<10}{r['case']:<20}{r['seconds']:>12.5f}{r['ns_per_point']:>12.2f}{qps:>10}")
    if args.csv:
        keys = ["backend", "isa", "case", "seconds", "ns_per_point", "qps"]
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, restval="")
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()

"""Batch-size-one evaluation: recall, latency percentiles and throughput."""

from __future__ import annotations

import csv
import dataclasses
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import GroundTruth, recall_at_k
from .engine import Index, SearchRequest, search


@dataclass
class BenchReport:
    recall: float
    mean_latency_ms: float
    median_latency_ms: float
    p99_latency_ms: float
    qps: float
    mean_nprob: float
    mean_points_scanned: float
    mean_escalations: float
    queries: int
    k: int
    workers: int
    seed: int
    config: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = dataclasses.asdict(self)
        cfg = d.pop("config")
        d.update({f"cfg_{k}": v for k, v in cfg.items()})
        return d

    def table(self) -> str:
        lines = [
            ("recall@k", f"{self.recall:.4f}"),
            ("queries", str(self.queries)),
            ("QPS", f"{self.qps:.1f}"),
            ("latency mean/median/p99 ms", f"{self.mean_latency_ms:.3f} / {self.median_latency_ms:.3f} / {self.p99_latency_ms:.3f}"),
            ("mean nprob", f"{self.mean_nprob:.2f}"),
            ("mean points scanned", f"{self.mean_points_scanned:.1f}"),
            ("mean escalations", f"{self.mean_escalations:.3f}"),
            ("workers", str(self.workers)),
        ]
        w = max(len(a) for a, _ in lines)
        return "\n".join(f"{a.ljust(w)}  {b}" for a, b in lines)


def _config_echo(req: SearchRequest) -> dict:
    return {"k": req.k, "nprob": req.nprob, "reorder": req.reorder, "adaptive": req.adaptive,
            "graph": req.graph, "theta": req.theta, "B": req.policy.brute_force_clusters,
            "efs": req.policy.efs, "f": req.policy.escalation_fraction}


def run_bench(index: Index, queries, gt: GroundTruth | None, request: SearchRequest, workers: int = 1,
              seed: int = 0) -> tuple[BenchReport, np.ndarray]:
    """Answer every query one at a time; worker ``w`` owns queries ``w, w + workers, ...``."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    nq = queries.shape[0]
    workers = max(1, min(workers, nq))
    k = request.k
    found = np.full((nq, k), -1, dtype=np.int64)
    lat = np.zeros(nq)
    nprob = np.zeros(nq)
    scanned = np.zeros(nq)
    esc = np.zeros(nq)
    errors: list[BaseException] = []

    def work(w):
        try:
            for i in range(w, nq, workers):
                t0 = time.perf_counter()
                r = search(queries[i], index, request)
                lat[i] = time.perf_counter() - t0
                found[i, : r.ids.size] = r.ids
                nprob[i], scanned[i], esc[i] = r.clusters_probed, r.points_scanned, r.escalations
        except BaseException as e:  # surfaced after join
            errors.append(e)

    t0 = time.perf_counter()
    if workers == 1:
        work(0)
    else:
        threads = [threading.Thread(target=work, args=(w,)) for w in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    wall = time.perf_counter() - t0
    if errors:
        raise errors[0]
    rec = recall_at_k(found, gt, k) if gt is not None else float("nan")
    ms = lat * 1e3
    rep = BenchReport(
        recall=rec, mean_latency_ms=float(ms.mean()), median_latency_ms=float(np.median(ms)),
        p99_latency_ms=float(np.percentile(ms, 99)), qps=nq / wall if wall > 0 else float("inf"),
        mean_nprob=float(nprob.mean()), mean_points_scanned=float(scanned.mean()),
        mean_escalations=float(esc.mean()), queries=nq, k=k, workers=workers, seed=seed,
        config=_config_echo(request),
    )
    return rep, found


def write_csv(path, reports: list[BenchReport]) -> Path:
    path = Path(path)
    rows = [r.row() for r in reports]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path

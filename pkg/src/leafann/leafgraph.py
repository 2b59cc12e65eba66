"""Exact k-NN graphs inside IVF leaves and the graph/brute-force switching policy."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

GATHER = 32


class Strategy(str, enum.Enum):
    BRUTE_FORCE = "brute_force"
    GRAPH = "graph"


@dataclass
class LeafGraph:
    adjacency: np.ndarray  # int32 (nc, R), local ids, -1 padded
    entry: int

    @property
    def degree(self) -> int:
        return self.adjacency.shape[1]

    def __len__(self) -> int:
        return self.adjacency.shape[0]

    def adjacency_blocks(self) -> np.ndarray:
        """Adjacency flattened and padded with -1 to a multiple of 32 entries."""
        flat = self.adjacency.ravel()
        pad = (-flat.size) % GATHER
        return np.concatenate([flat, np.full(pad, -1, dtype=np.int32)])


@dataclass
class HybridPolicy:
    brute_force_clusters: float = 3  # math.inf disables graph search
    efs: int | None = None  # None -> 2 * k
    escalation_fraction: float = 0.25

    def __post_init__(self):
        if self.brute_force_clusters < 0:
            raise ValueError("brute_force_clusters must be >= 0")
        if not 0 < self.escalation_fraction <= 1:
            raise ValueError("escalation_fraction must be in (0, 1]")

    def efs_for(self, k: int) -> int:
        efs = 2 * k if self.efs is None else self.efs
        if efs < k:
            raise ValueError(f"efs={efs} is smaller than k={k}")
        return efs


def build_leaf_graph(points, degree: int = 16, centroid=None, chunk: int = 1024) -> LeafGraph:
    """Link every point to its ``degree`` exact nearest neighbours (squared L2, ties to smaller id)."""
    x = np.asarray(points, dtype=np.float64)
    nc = x.shape[0]
    if nc < 1:
        raise ValueError("cluster must contain at least one point")
    if degree > GATHER:
        raise ValueError(f"degree above {GATHER} is not supported")
    r = min(degree, nc - 1)
    adj = np.full((nc, degree), -1, dtype=np.int32)
    sq = np.einsum("ij,ij->i", x, x)
    ids = np.arange(nc)
    for s in range(0, nc, chunk):
        e = min(nc, s + chunk)
        d = sq[s:e, None] - 2.0 * (x[s:e] @ x.T) + sq[None, :]
        d[np.arange(e - s), np.arange(s, e)] = np.inf
        if r == 0:
            continue
        for row in range(e - s):
            dr = d[row]
            if r < nc - 1:
                kth = np.partition(dr, r - 1)[r - 1]
                sel = np.flatnonzero(dr <= kth)
            else:
                sel = ids[np.isfinite(dr)]
            order = np.lexsort((sel, dr[sel]))[:r]
            adj[s + row, :r] = sel[order]
    if centroid is None:
        centroid = x.mean(axis=0)
    c = np.asarray(centroid, dtype=np.float64)
    dc = np.einsum("ij,ij->i", x - c, x - c)
    entry = int(np.argmin(dc))
    return LeafGraph(adj, entry)


def choose_strategy(rank: int, policy: HybridPolicy) -> Strategy:
    if rank < 0:
        raise ValueError("rank must be >= 0")
    return Strategy.BRUTE_FORCE if rank < policy.brute_force_clusters else Strategy.GRAPH


def should_escalate(graph_scores, pool, policy: HybridPolicy, efs: int) -> bool:
    """True when the pool is not full or enough graph hits beat its current worst."""
    if not pool.full:
        return True
    worst = pool.worst()
    hits = int(np.count_nonzero(np.asarray(graph_scores) < worst))
    return hits >= policy.escalation_fraction * efs


def graph_search(lut_table, codes, graph: LeafGraph, efs: int, backend, lanes_per_pass: int = 2):
    """Beam search within one leaf; returns ``(local_ids, acc, evaluations)``."""
    return backend.graph_search(lut_table, codes, graph.adjacency, graph.entry, efs, lanes_per_pass)


INF_CLUSTERS = math.inf

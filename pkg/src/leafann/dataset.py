"""Vector containers, TEXMEX-style file I/O, metrics and exact ground truth."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Metric(str, enum.Enum):
    """Every metric is reported as a score where lower is better."""

    L2 = "l2"
    ANGULAR = "angular"
    IP = "ip"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, Metric):
            return value
        aliases = {"euclidean": "l2", "cosine": "angular", "inner_product": "ip", "dot": "ip"}
        value = aliases.get(value.lower(), value.lower())
        return cls(value)


_FORMATS = {
    "fvecs": np.dtype("<f4"),
    "bvecs": np.dtype("u1"),
    "ivecs": np.dtype("<i4"),
}


class VecsFormatError(ValueError):
    pass


@dataclass
class VectorSet:
    """Dense row-major float32 vectors plus the metric they are compared under."""

    data: np.ndarray
    metric: Metric = Metric.L2
    zero_rows: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {data.shape}")
        if data.shape[1] < 1:
            raise ValueError("dimension must be >= 1")
        if data.size and not np.isfinite(data).all():
            raise ValueError("vector set contains non-finite values")
        self.data = np.ascontiguousarray(data)
        self.metric = Metric.parse(self.metric)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n


@dataclass
class GroundTruth:
    """Per-query exact top-k, sorted by (distance, id)."""

    ids: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def __len__(self) -> int:
        return self.ids.shape[0]


def _infer_format(path: str | os.PathLike, fmt: str | None) -> str:
    if fmt is None:
        fmt = Path(path).suffix.lstrip(".").lower()
    if fmt not in _FORMATS:
        raise VecsFormatError(f"unknown vecs format {fmt!r}")
    return fmt


def read_vecs(path: str | os.PathLike, fmt: str | None = None) -> np.ndarray:
    """Read an fvecs/bvecs/ivecs file into an ``(n, d)`` array of its native dtype."""
    fmt = _infer_format(path, fmt)
    elem = _FORMATS[fmt]
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.zeros((0, 1), dtype=elem)
    if raw.size < 4:
        raise VecsFormatError("truncated record header")
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise VecsFormatError(f"invalid dimension {d}")
    rec = 4 + d * elem.itemsize
    if raw.size % rec:
        raise VecsFormatError(f"file size {raw.size} is not a multiple of record size {rec} (truncated record or dimension mismatch)")
    recs = raw.reshape(-1, rec)
    dims = recs[:, :4].copy().view("<i4").ravel()
    if (dims != d).any():
        bad = int(np.flatnonzero(dims != d)[0])
        raise VecsFormatError(f"record {bad} has dimension {dims[bad]}, expected {d}")
    return np.ascontiguousarray(recs[:, 4:]).view(elem).reshape(-1, d)


def write_vecs(path: str | os.PathLike, data: np.ndarray, fmt: str | None = None) -> None:
    fmt = _infer_format(path, fmt)
    elem = _FORMATS[fmt]
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError("write_vecs expects a 2-D array")
    n, d = data.shape
    out = np.empty((n, 4 + d * elem.itemsize), dtype=np.uint8)
    out[:, :4] = np.full((n, 1), d, dtype="<i4").view(np.uint8)
    out[:, 4:] = np.ascontiguousarray(data.astype(elem, copy=False)).view(np.uint8).reshape(n, -1)
    out.tofile(path)


def load_vectors(path: str | os.PathLike, fmt: str | None = None, metric: Metric | str = Metric.L2) -> VectorSet:
    """Load a vecs file as a float32 :class:`VectorSet` (bytes and ints are widened)."""
    arr = read_vecs(path, fmt)
    return VectorSet(arr.astype(np.float32), metric)


def save_vectors(path: str | os.PathLike, vs: VectorSet | np.ndarray, fmt: str | None = None) -> None:
    data = vs.data if isinstance(vs, VectorSet) else vs
    write_vecs(path, data, fmt)


def distance(x, y, metric: Metric | str = Metric.L2) -> float:
    """Single-pair score; lower is better for every metric."""
    x = np.asarray(x, dtype=np.float32).ravel()
    y = np.asarray(y, dtype=np.float32).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return float(exact_distances(y, x[None, :], metric)[0])


def exact_distances(q, X: np.ndarray, metric: Metric | str = Metric.L2) -> np.ndarray:
    """Scores of ``q`` against every row of ``X`` as float32.

    Each row's value depends only on that row and ``q``, so scoring a subset
    of rows reproduces the full-set values bit for bit. Re-ranking relies on
    this to agree exactly with :func:`brute_force_topk`.
    """
    metric = Metric.parse(metric)
    q = np.asarray(q, dtype=np.float32).ravel()
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2 or X.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: query {q.shape[0]} vs data {X.shape}")
    if metric is Metric.L2:
        diff = X - q
        return np.add.reduce(diff * diff, axis=1)
    dots = np.add.reduce(X * q, axis=1)
    if metric is Metric.IP:
        return -dots
    xn = np.sqrt(np.add.reduce(X * X, axis=1))
    qn = np.float32(np.sqrt(np.add.reduce(q * q)))
    denom = xn * qn
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    return np.float32(1.0) - cos


def normalize_all(vs: VectorSet) -> VectorSet:
    """Scale rows to unit norm; zero rows stay zero and are flagged in ``zero_rows``."""
    data = vs.data.astype(np.float32, copy=True)
    norms = np.sqrt(np.add.reduce(data.astype(np.float64) ** 2, axis=1))
    zero = norms == 0
    nz = ~zero
    data[nz] = (data[nz] / norms[nz, None]).astype(np.float32)
    return VectorSet(data, vs.metric, zero_rows=zero)


def normalize_vector(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float32).ravel()
    nrm = float(np.sqrt(np.add.reduce(q.astype(np.float64) ** 2)))
    return q if nrm == 0 else (q / nrm).astype(np.float32)


def topk_from_scores(scores: np.ndarray, k: int, ids: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """The ``k`` smallest ``(score, id)`` pairs, ties broken by smaller id."""
    n = scores.shape[0]
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    if k > n:
        raise ValueError(f"k={k} exceeds the number of candidates {n}")
    if k == 0:
        return ids[:0], scores[:0]
    if k < n:
        kth = np.partition(scores, k - 1)[k - 1]
        sel = np.flatnonzero(scores <= kth)
    else:
        sel = np.arange(n)
    order = np.lexsort((ids[sel], scores[sel]))[:k]
    sel = sel[order]
    return ids[sel], scores[sel]


def _prefilter_scores(qb: np.ndarray, X: np.ndarray, xsq: np.ndarray, metric: "Metric") -> tuple[np.ndarray, np.ndarray]:
    """Float64 GEMM estimates of the exact scores plus a per-query error allowance."""
    q64 = qb.astype(np.float64)
    dots = q64 @ X.T
    d = X.shape[1]
    qsq = np.einsum("ij,ij->i", q64, q64)
    # float32 evaluation of a length-d sum carries relative error below d * 2^-23
    rel = 4.0 * (d + 4) * 2.0**-23
    if metric is Metric.L2:
        est = qsq[:, None] - 2.0 * dots + xsq[None, :]
        tol = rel * (qsq + xsq.max()) * 2.0
    elif metric is Metric.IP:
        est = -dots
        tol = rel * np.sqrt(qsq) * np.sqrt(xsq.max()) * 2.0
    else:
        xn = np.sqrt(xsq)
        qn = np.sqrt(qsq)
        denom = qn[:, None] * xn[None, :]
        est = 1.0 - np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
        tol = np.full(qb.shape[0], rel * 8.0)
    return est, tol + 1e-30


def brute_force_topk(vs: VectorSet, queries, k: int, batch: int = 256) -> GroundTruth:
    """Exact top-k for each query under ``vs.metric``.

    Candidates are pre-selected with a float64 matrix product and a margin
    that covers float32 rounding, then rescored with :func:`exact_distances`,
    so the output equals a full per-query scan.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if k > vs.n:
        raise ValueError(f"k={k} exceeds dataset size {vs.n}")
    if queries.shape[1] != vs.d:
        raise ValueError(f"dimension mismatch: queries {queries.shape[1]} vs data {vs.d}")
    nq = queries.shape[0]
    ids = np.empty((nq, k), dtype=np.int64)
    dists = np.empty((nq, k), dtype=np.float32)
    X = np.asarray(vs.data, dtype=np.float32)
    X64 = X.astype(np.float64)
    xsq = np.einsum("ij,ij->i", X64, X64)
    for s in range(0, nq, batch):
        qb = queries[s : s + batch]
        est, tol = _prefilter_scores(qb, X64, xsq, vs.metric)
        kth = np.partition(est, k - 1, axis=1)[:, k - 1]
        for r, q in enumerate(qb):
            cand = np.flatnonzero(est[r] <= kth[r] + 2.0 * tol[r])
            ids[s + r], dists[s + r] = topk_from_scores(exact_distances(q, X[cand], vs.metric), k, cand)
    return GroundTruth(ids, dists)


def save_groundtruth(prefix: str | os.PathLike, gt: GroundTruth) -> tuple[Path, Path]:
    """Write ``<prefix>.ivecs`` (ids) and ``<prefix>.fvecs`` (distances)."""
    prefix = Path(prefix)
    if prefix.suffix in (".ivecs", ".fvecs"):
        prefix = prefix.with_suffix("")
    ids_path = prefix.with_name(prefix.name + ".ivecs")
    d_path = prefix.with_name(prefix.name + ".fvecs")
    write_vecs(ids_path, gt.ids.astype(np.int32))
    write_vecs(d_path, gt.distances.astype(np.float32))
    return ids_path, d_path


def load_groundtruth(prefix: str | os.PathLike) -> GroundTruth:
    prefix = Path(prefix)
    if prefix.suffix in (".ivecs", ".fvecs"):
        prefix = prefix.with_suffix("")
    ids = read_vecs(prefix.with_name(prefix.name + ".ivecs")).astype(np.int64)
    d_path = prefix.with_name(prefix.name + ".fvecs")
    if d_path.exists():
        dists = read_vecs(d_path).astype(np.float32)
    else:
        dists = np.full(ids.shape, np.nan, dtype=np.float32)
    return GroundTruth(ids, dists)


def recall_at_k(found_ids: np.ndarray, gt: GroundTruth, k: int | None = None) -> float:
    """Mean fraction of the true top-k present in the returned top-k."""
    k = gt.k if k is None else k
    found_ids = np.asarray(found_ids)
    hits = 0
    for row, truth in zip(found_ids, gt.ids):
        hits += len(set(row[:k].tolist()) & set(truth[:k].tolist()))
    return hits / (k * len(gt))

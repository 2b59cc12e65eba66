"""Drop dimensions whose values are mostly zero or within one standard deviation of the mean."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 0.95
D_MIN = 8


@dataclass
class DimFilter:
    mask: np.ndarray  # bool (d_original,)
    fractions: np.ndarray  # float64 (d_original,)
    threshold: float

    @property
    def d_original(self) -> int:
        return self.mask.shape[0]

    @property
    def d_kept(self) -> int:
        return int(self.mask.sum())

    @property
    def kept(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @classmethod
    def identity(cls, d: int) -> "DimFilter":
        return cls(np.ones(d, dtype=bool), np.zeros(d), 1.0)


def compute_dim_stats(points, chunk: int = 16384) -> np.ndarray:
    """Per-dimension share of values that are zero or satisfy ``|x - mean| <= std``.

    Uses the population standard deviation and an inclusive boundary.
    """
    x = np.asarray(getattr(points, "data", points))
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two vectors")
    x64 = x.astype(np.float64, copy=False)
    mu = x64.mean(axis=0)
    sigma = x64.std(axis=0)
    count = np.zeros(x.shape[1], dtype=np.int64)
    for s in range(0, n, chunk):
        blk = x64[s : s + chunk]
        count += ((blk == 0) | (np.abs(blk - mu) <= sigma)).sum(axis=0)
    return count / n


def select_dims(fractions, threshold: float = DEFAULT_THRESHOLD, d_min: int = D_MIN) -> DimFilter:
    """Keep dimension ``j`` iff ``fractions[j] <= threshold``, never fewer than ``d_min`` dims."""
    fr = np.asarray(fractions, dtype=np.float64)
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    mask = fr <= threshold
    floor = min(d_min, fr.size)
    if mask.sum() < floor:
        order = np.lexsort((np.arange(fr.size), fr))
        mask[order[:floor]] = True
    return DimFilter(mask, fr, float(threshold))


def apply_filter(x, flt: DimFilter) -> np.ndarray:
    """Kept components in their original order, for a single vector or a 2-D set."""
    arr = np.asarray(getattr(x, "data", x))
    if arr.shape[-1] != flt.d_original:
        raise ValueError(f"dimension mismatch: {arr.shape[-1]} vs {flt.d_original}")
    return np.ascontiguousarray(arr[..., flt.mask])

"""Asymmetric-distance lookup tables and their 8-bit affine quantization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Metric
from .pq import Codebooks, pad_vectors

EPS = 1e-12
ACC_MAX = 65535


@dataclass
class FloatLut:
    table: np.ndarray  # float32 (m, 16)
    offset: float = 0.0  # per-cluster additive constant (inner product only)

    @property
    def m(self) -> int:
        return self.table.shape[0]

    def score(self, codes: np.ndarray) -> np.ndarray:
        codes = np.atleast_2d(codes).astype(np.intp)
        vals = self.table.astype(np.float64)[np.arange(self.m)[None, :], codes]
        return vals.sum(axis=1) + self.offset


@dataclass
class QuantizedLut:
    table: np.ndarray  # uint8 (m, 16)
    scale: float
    bias: np.ndarray  # float64 (m,)
    clamp_count: int = 0
    offset: float = 0.0

    @property
    def m(self) -> int:
        return self.table.shape[0]

    @property
    def base(self) -> float:
        """Constant added after scaling: sum of table minima plus the cluster offset."""
        return float(self.bias.sum()) + self.offset

    def dequantize(self, acc) -> np.ndarray:
        return self.scale * np.asarray(acc, dtype=np.float64) + self.base


def compute_float_lut(q, codebooks: Codebooks, metric: Metric | str = Metric.L2, offset: float = 0.0) -> FloatLut:
    """Per-subspace partial scores of ``q`` (already a residual when residual encoding is on)."""
    return FloatLut(compute_float_luts(np.atleast_2d(q), codebooks, metric)[0], offset)


def compute_float_luts(qs, codebooks: Codebooks, metric: Metric | str = Metric.L2) -> np.ndarray:
    """Batched tables for several (residual) queries: ``(P, m, 16)`` float32."""
    metric = Metric.parse(metric)
    q = pad_vectors(qs, codebooks.d_padded)
    p = q.shape[0]
    if metric is Metric.IP:
        qs = q.reshape(p, codebooks.m, codebooks.dsub)
        return -np.einsum("pmd,mkd->pmk", qs, codebooks.tables)
    diff = q.reshape(p, codebooks.m, 1, codebooks.dsub) - codebooks.tables[None]
    return np.einsum("pmkd,pmkd->pmk", diff, diff)


def quantize_luts(tables: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Quantize ``(P, m, 16)`` float tables.

    Returns ``(u8 tables, scales, biases, clamp_counts)``. Each table is shifted
    by its own minimum; one scale per query-table set is chosen so that no
    entry exceeds 255 and the sum of per-table maxima stays within a 16-bit
    accumulator. Rounding can add half a step per table, so that much
    headroom is reserved below 65535.
    """
    f = np.asarray(tables, dtype=np.float64)
    if f.ndim == 2:
        f = f[None]
    bias = f.min(axis=2)
    ranges = f.max(axis=2) - bias
    room = ACC_MAX - 0.5 * f.shape[1]
    scale = np.maximum(np.maximum(ranges.max(axis=1) / 255.0, ranges.sum(axis=1) / room), EPS)
    u = np.rint((f - bias[:, :, None]) / scale[:, None, None])
    clamps = ((u < 0) | (u > 255)).sum(axis=(1, 2))
    u = np.clip(u, 0, 255).astype(np.uint8)
    return u, scale, bias, clamps


def quantize_lut(flut: FloatLut) -> QuantizedLut:
    u, scale, bias, clamps = quantize_luts(flut.table[None])
    return QuantizedLut(u[0], float(scale[0]), bias[0], int(clamps[0]), flut.offset)

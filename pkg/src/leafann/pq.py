"""4-bit product quantization: residuals, codebooks, encoding and 32-point block packing.

Block layout
------------
A block holds 32 points. Subspaces are grouped in pairs; pair ``g`` occupies
32 bytes, and within it byte ``2*t + s`` stores subspace ``2*g + s`` for the
point pair ``(2*t, 2*t + 1)``: the even point in the low nibble, the odd point
in the high nibble. Unused slots carry code 15 in every subspace.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .kmeans import Clustering, KMeansConfig, train_kmeans

KSUB = 16
BLOCK = 32
PAD_CODE = 15


class ResidualMode(str, enum.Enum):
    RAW_MEAN = "raw_mean"
    NORMALIZED = "normalized"
    NONE = "none"


@dataclass
class Codebooks:
    tables: np.ndarray  # float32 (m, 16, dsub)
    d_in: int  # dimensionality before zero padding

    @property
    def m(self) -> int:
        return self.tables.shape[0]

    @property
    def dsub(self) -> int:
        return self.tables.shape[2]

    @property
    def d_padded(self) -> int:
        return self.m * self.dsub

    def decode(self, codes: np.ndarray) -> np.ndarray:
        """Reconstruct (padded) vectors from ``(n, m)`` codes."""
        codes = np.atleast_2d(codes)
        rec = self.tables[np.arange(self.m)[None, :], codes.astype(np.intp)]
        return rec.reshape(codes.shape[0], -1)


@dataclass
class CodeBlock:
    cluster: int
    ids: np.ndarray  # int64 (32,), -1 on padding slots
    codes: np.ndarray  # uint8 (m // 2 * 32,)
    valid_count: int

    @property
    def m(self) -> int:
        return self.codes.shape[0] // 16


def subspace_count(d: int, dsub: int = 2) -> int:
    """Subspaces needed for ``d`` dims, rounded up to an even count for pairwise packing."""
    m = -(-d // dsub)
    return m + (m & 1)


def pad_vectors(x: np.ndarray, d_padded: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float32))
    if x.shape[1] == d_padded:
        return x
    if x.shape[1] > d_padded:
        raise ValueError("vectors wider than the padded dimension")
    out = np.zeros((x.shape[0], d_padded), dtype=np.float32)
    out[:, : x.shape[1]] = x
    return out


def centroid_table(clustering: Clustering, mode: ResidualMode | str) -> np.ndarray | None:
    mode = ResidualMode(mode)
    if mode is ResidualMode.NONE:
        return None
    if mode is ResidualMode.NORMALIZED:
        if clustering.normalized_centroids is not None:
            return clustering.normalized_centroids
        c = clustering.centroids
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return np.divide(c, n, out=np.zeros_like(c), where=n > 0)
    return clustering.centroids


def compute_residuals(points, clustering: Clustering, mode: ResidualMode | str = ResidualMode.RAW_MEAN) -> np.ndarray:
    """``x_i - centroid(assignment_i)`` with the centroid flavour chosen by ``mode``."""
    x = np.asarray(getattr(points, "data", points), dtype=np.float32)
    cents = centroid_table(clustering, mode)
    if cents is None:
        return x.copy()
    return x - cents[clustering.assignment]


def train_codebooks(residuals, m: int | None = None, dsub: int = 2, config: KMeansConfig | None = None) -> Codebooks:
    """One 16-centroid k-means per subspace slice."""
    config = config or KMeansConfig()
    r = np.asarray(residuals, dtype=np.float32)
    n, d = r.shape
    if n < KSUB:
        raise ValueError(f"need at least {KSUB} training vectors, got {n}")
    if m is None:
        m = subspace_count(d, dsub)
    if m * dsub < d:
        raise ValueError(f"m={m} x dsub={dsub} cannot cover d={d}")
    r = pad_vectors(r, m * dsub)
    tables = np.zeros((m, KSUB, dsub), dtype=np.float32)
    for j in range(m):
        sub = r[:, j * dsub : (j + 1) * dsub]
        cfg = KMeansConfig(config.max_iters, config.epsilon, config.seed + j)
        tables[j] = train_kmeans(sub, KSUB, cfg).centroids
    return Codebooks(tables, d)


def encode(residuals, codebooks: Codebooks, chunk: int = 512) -> np.ndarray:
    """Nearest codeword per subspace, ties to the smaller index; returns ``(n, m)`` uint8."""
    r = pad_vectors(residuals, codebooks.d_padded)
    n = r.shape[0]
    m, dsub = codebooks.m, codebooks.dsub
    tab = codebooks.tables.astype(np.float64)
    out = np.empty((n, m), dtype=np.uint8)
    for s in range(0, n, chunk):
        sub = r[s : s + chunk].astype(np.float64).reshape(-1, m, 1, dsub)
        diff = sub - tab[None]
        dist = np.einsum("nmkd,nmkd->nmk", diff, diff)
        out[s : s + chunk] = np.argmin(dist, axis=2)
    return out


def pack_codes(codes: np.ndarray) -> np.ndarray:
    """Pack ``(n, m)`` codes into ``(ceil(n/32), m/2*32)`` interleaved block bytes."""
    codes = np.asarray(codes)
    if codes.size and codes.max() >= KSUB:
        raise ValueError("codes must be 4-bit (< 16)")
    n, m = codes.shape
    if m % 2:
        raise ValueError("subspace count must be even")
    nb = -(-n // BLOCK)
    padded = np.full((nb * BLOCK, m), PAD_CODE, dtype=np.uint8)
    padded[:n] = codes
    v = padded.reshape(nb, BLOCK // 2, 2, m // 2, 2)  # block, t, parity, pair, s
    lo = v[:, :, 0]
    hi = v[:, :, 1]
    packed = (hi << 4) | lo  # block, t, pair, s
    return np.ascontiguousarray(packed.transpose(0, 2, 1, 3)).reshape(nb, m // 2 * BLOCK)


def unpack_codes(packed: np.ndarray, m: int) -> np.ndarray:
    """Inverse of :func:`pack_codes`; returns ``(nblocks*32, m)`` including padding slots."""
    packed = np.atleast_2d(np.asarray(packed, dtype=np.uint8))
    nb = packed.shape[0]
    v = packed.reshape(nb, m // 2, BLOCK // 2, 2).transpose(0, 2, 1, 3)  # block, t, pair, s
    out = np.empty((nb, BLOCK // 2, 2, m // 2, 2), dtype=np.uint8)
    out[:, :, 0] = v & 0x0F
    out[:, :, 1] = v >> 4
    return out.reshape(nb * BLOCK, m)


def pack_blocks(codes: np.ndarray, ids, cluster: int = 0) -> list[CodeBlock]:
    codes = np.atleast_2d(np.asarray(codes))
    ids = np.asarray(ids, dtype=np.int64)
    if codes.shape[0] != ids.shape[0]:
        raise ValueError("codes and ids disagree in length")
    packed = pack_codes(codes)
    blocks = []
    for b in range(packed.shape[0]):
        bid = np.full(BLOCK, -1, dtype=np.int64)
        chunk = ids[b * BLOCK : (b + 1) * BLOCK]
        bid[: chunk.size] = chunk
        blocks.append(CodeBlock(cluster, bid, packed[b].copy(), int(chunk.size)))
    return blocks


def unpack_block(block: CodeBlock) -> np.ndarray:
    return unpack_codes(block.codes[None], block.m)


def reconstruction_error(residuals, codebooks: Codebooks, codes: np.ndarray | None = None) -> float:
    r = pad_vectors(residuals, codebooks.d_padded).astype(np.float64)
    if codes is None:
        codes = encode(r, codebooks)
    rec = codebooks.decode(codes).astype(np.float64)
    diff = r - rec
    return float(np.einsum("ij,ij->", diff, diff))

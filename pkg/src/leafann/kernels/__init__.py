"""LUT16 block kernels and the candidate pool.

Two interchangeable backends expose the same functions:

``compiled``
    the Cython extension ``_core`` (SSSE3/AVX2 shuffle kernels chosen by a
    CPU probe, portable C otherwise);
``fallback``
    numpy emulation with identical results.

The compiled backend is used when importable unless ``LEAFANN_KERNELS=fallback``
is set in the environment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from types import ModuleType

import numpy as np

from ..lut import QuantizedLut
from ..pq import CodeBlock
from . import _fallback

SLOT_OF = _fallback.SLOT_OF
POS_OF = _fallback.POS_OF
PAD_ACC = 0xFFFF

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None


def available_backends() -> list[str]:
    return ["compiled", "fallback"] if _compiled is not None else ["fallback"]


def get_backend(name: str | None = None) -> ModuleType:
    """Resolve a backend module by name; ``None`` picks the default."""
    if name is None:
        name = os.environ.get("LEAFANN_KERNELS", "compiled" if _compiled is not None else "fallback")
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel core is not built; run `pip install -e .`")
        return _compiled
    if name == "fallback":
        return _fallback
    raise ValueError(f"unknown kernel backend {name!r}")


backend = get_backend()
CandidatePool = backend.CandidatePool


@dataclass
class BlockDistances:
    """32 accumulated sums in layout order; ``values[p]`` belongs to block slot ``SLOT_OF[p]``."""

    values: np.ndarray  # uint16 (32,)
    ids: np.ndarray  # int64 (32,) block slot -> point id, -1 for padding

    def by_slot(self) -> np.ndarray:
        return self.values[POS_OF]


def scalar_block_distances(qlut: QuantizedLut, block: CodeBlock, be: ModuleType | None = None) -> BlockDistances:
    be = be or backend
    if qlut.m != block.m:
        raise ValueError(f"LUT has {qlut.m} subspaces, block has {block.m}")
    vals = be.block_distances_scalar(qlut.table, block.codes[None], block.valid_count)[0]
    return BlockDistances(vals, block.ids)


def vector_block_distances(qlut: QuantizedLut, block: CodeBlock, lanes_per_pass: int = 2, be: ModuleType | None = None) -> BlockDistances:
    be = be or backend
    if qlut.m != block.m:
        raise ValueError(f"LUT has {qlut.m} subspaces, block has {block.m}")
    vals = be.block_distances_vector(qlut.table, block.codes[None], block.valid_count, lanes_per_pass)[0]
    return BlockDistances(vals, block.ids)


def update_pool(pool, dists: BlockDistances, qlut: QuantizedLut):
    """Merge one block's valid slots into ``pool`` using the block's dequantized scores."""
    acc = dists.by_slot()
    ok = dists.ids >= 0
    pool.push(qlut.dequantize(acc[ok]), dists.ids[ok])
    return pool


def dequantize_pool(acc, qlut: QuantizedLut) -> np.ndarray:
    """Float scores ``scale * acc + sum(bias) + offset``."""
    return qlut.dequantize(acc)


def preferred_lanes(be: ModuleType | None = None) -> int:
    return (be or backend).preferred_lanes()

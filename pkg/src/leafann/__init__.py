"""leafann: inverted-file search over 4-bit product-quantized leaves.

Typical use::

    import leafann as la

    index = la.build_index(base, la.IndexParams(), metric="l2")
    res = la.search(query, index, la.SearchRequest(k=10, nprob=16, reorder=100))
    res.ids, res.distances

Kernels run in the compiled core when it is built and in numpy otherwise;
``leafann.kernels.available_backends()`` lists what is loaded.
"""

from .dataset import (
    GroundTruth,
    Metric,
    VectorSet,
    brute_force_topk,
    exact_distances,
    load_groundtruth,
    load_vectors,
    read_vecs,
    recall_at_k,
    save_groundtruth,
    write_vecs,
)
from .engine import (
    Index,
    IndexParams,
    SearchRequest,
    SearchResult,
    build_graphs,
    build_index,
    load_index,
    result_ids,
    save_index,
    search,
    search_batch,
)
from .filtration import DimFilter, apply_filter, compute_dim_stats, select_dims
from .leafgraph import HybridPolicy
from .storage import ChecksumError, IndexFormatError

__version__ = "0.1.0"

__all__ = [
    "ChecksumError",
    "DimFilter",
    "GroundTruth",
    "HybridPolicy",
    "Index",
    "IndexFormatError",
    "IndexParams",
    "Metric",
    "SearchRequest",
    "SearchResult",
    "VectorSet",
    "apply_filter",
    "brute_force_topk",
    "build_graphs",
    "build_index",
    "compute_dim_stats",
    "exact_distances",
    "load_groundtruth",
    "load_index",
    "load_vectors",
    "read_vecs",
    "recall_at_k",
    "result_ids",
    "save_groundtruth",
    "save_index",
    "search",
    "search_batch",
    "select_dims",
    "write_vecs",
]

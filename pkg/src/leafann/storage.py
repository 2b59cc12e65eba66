"""Binary index file.

Layout (all little-endian)::

    b"KSCN" | u32 version | u32 section count | sections... | 8-byte blake2b digest

Each section is ``u16 name length | name | u8 dtype length | dtype str |
u8 ndim | u64 shape[ndim] | raw bytes``. The digest covers every byte before
it and is checked before anything is parsed, so a damaged or truncated file
never yields a partial index.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .adaptive.features import ClusterStats
from .adaptive.gbdt import GBDT
from .adaptive.models import AdaptiveModels, AdaptiveParams, ProbModel
from .dataset import Metric
from .filtration import DimFilter
from .kmeans import Clustering
from .pq import Codebooks

MAGIC = b"KSCN"
DIGEST = 8


class IndexFormatError(ValueError):
    pass


class ChecksumError(IndexFormatError):
    pass


def _digest(buf: bytes) -> bytes:
    return hashlib.blake2b(buf, digest_size=DIGEST).digest()


def _pack(sections: dict[str, np.ndarray], version: int) -> bytes:
    parts = [MAGIC, struct.pack("<II", version, len(sections))]
    for name, arr in sections.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        arr = arr.astype(dt, copy=False)
        nb, ds = name.encode(), dt.str.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", len(ds)) + ds)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + _digest(body)


def _unpack(buf: bytes, expect_version: int) -> dict[str, np.ndarray]:
    if len(buf) < len(MAGIC) + 8 + DIGEST:
        raise ChecksumError("file too short to be an index")
    if buf[:4] != MAGIC:
        raise IndexFormatError("bad magic: not an index file")
    body, tail = buf[:-DIGEST], buf[-DIGEST:]
    if _digest(body) != tail:
        raise ChecksumError("checksum mismatch: file is damaged or truncated")
    version, count = struct.unpack_from("<II", body, 4)
    if version != expect_version:
        raise IndexFormatError(f"unsupported format version {version} (expected {expect_version})")
    pos = 12
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos : pos + ln].decode()
        pos += ln
        (ld,) = struct.unpack_from("<B", body, pos)
        pos += 1
        dt = np.dtype(body[pos : pos + ld].decode())
        pos += ld
        (nd,) = struct.unpack_from("<B", body, pos)
        pos += 1
        shape = struct.unpack_from(f"<{nd}Q", body, pos)
        pos += 8 * nd
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        out[name] = np.frombuffer(body, dtype=dt, count=size // dt.itemsize if dt.itemsize else 0, offset=pos).reshape(shape).copy()
        pos += size
    if pos != len(body):
        raise IndexFormatError("trailing bytes after the last section")
    return out


def _json(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode(), dtype=np.uint8)


def _unjson(arr: np.ndarray):
    return json.loads(arr.tobytes().decode())


def _model_sections(prefix: str, model: ProbModel, s: dict):
    s[f"{prefix}.info"] = _json({"schema": model.schema, "n_features": model.n_features, "seed": model.seed})
    for k, v in model.gbdt.to_arrays().items():
        s[f"{prefix}.{k}"] = v


def _read_model(prefix: str, s: dict) -> ProbModel | None:
    if f"{prefix}.info" not in s:
        return None
    info = _unjson(s[f"{prefix}.info"])
    arrs = {k[len(prefix) + 1 :]: v for k, v in s.items() if k.startswith(prefix + ".") and k != f"{prefix}.info"}
    return ProbModel(info["schema"], info["n_features"], GBDT.from_arrays(arrs), info["seed"])


def index_sections(index) -> dict[str, np.ndarray]:
    s: dict[str, np.ndarray] = {}
    s["header"] = _json({"metric": index.metric.value, "params": index.params.to_dict(), "d_in": index.codebooks.d_in})
    s["data"] = index.data
    if index.data_init is not None:
        s["data_init"] = index.data_init
    if index.dim_filter is not None:
        f = index.dim_filter
        s["mask.mask"] = f.mask.astype(np.uint8)
        s["mask.fractions"] = f.fractions
        s["mask.threshold"] = np.array([f.threshold])
    c = index.clustering
    s["centroids"] = c.centroids
    s["assignment"] = c.assignment
    s["sizes"] = c.sizes
    if c.normalized_centroids is not None:
        s["centroids_normalized"] = c.normalized_centroids
    s["objective_history"] = np.asarray(c.objective_history, dtype=np.float64)
    s["codebooks"] = index.codebooks.tables
    for name in ("member_ids", "cluster_offsets", "codes", "block_codes", "block_ids", "block_valid", "block_offsets"):
        s[f"blocks.{name}"] = getattr(index, name)
    if index.adjacency is not None:
        s["graphs.adjacency"] = index.adjacency
        s["graphs.entries"] = index.entries
    if index.stats is not None:
        for fld in ClusterStats.__dataclass_fields__:
            s[f"stats.{fld}"] = getattr(index.stats, fld)
    if index.models is not None:
        m = index.models
        s["models.info"] = _json({"params": m.params.__dict__, "t": m.t})
        for name in ("nprob", "reorder", "prune"):
            if getattr(m, name) is not None:
                _model_sections(f"models.{name}", getattr(m, name), s)
    return s


def save_index(index, path) -> None:
    from .engine import FORMAT_VERSION

    buf = _pack(index_sections(index), FORMAT_VERSION)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(buf)
    os.replace(tmp, path)


def load_index(path):
    from .engine import FORMAT_VERSION, Index, IndexParams

    s = _unpack(Path(path).read_bytes(), FORMAT_VERSION)
    hdr = _unjson(s["header"])
    params = IndexParams(**hdr["params"])
    flt = None
    if "mask.mask" in s:
        flt = DimFilter(s["mask.mask"].astype(bool), s["mask.fractions"], float(s["mask.threshold"][0]))
    clustering = Clustering(s["centroids"], s["assignment"], s["sizes"], s.get("centroids_normalized"),
                            s["objective_history"].tolist())
    stats = None
    if "stats.sizes" in s:
        stats = ClusterStats(**{f: s[f"stats.{f}"] for f in ClusterStats.__dataclass_fields__})
    models = None
    if "models.info" in s:
        info = _unjson(s["models.info"])
        models = AdaptiveModels(AdaptiveParams(**info["params"]), info["t"],
                                _read_model("models.nprob", s), _read_model("models.reorder", s),
                                _read_model("models.prune", s))
    b = {name: s[f"blocks.{name}"] for name in
         ("member_ids", "cluster_offsets", "codes", "block_codes", "block_ids", "block_valid", "block_offsets")}
    return Index(
        metric=Metric(hdr["metric"]), params=params, data=s["data"], data_init=s.get("data_init"),
        dim_filter=flt, clustering=clustering, codebooks=Codebooks(s["codebooks"], int(hdr["d_in"])),
        adjacency=s.get("graphs.adjacency"), entries=s.get("graphs.entries"), stats=stats, models=models,
        version=FORMAT_VERSION, **b,
    )

"""Pure numpy implementation of the kernel core, used when the extension is unavailable."""

from __future__ import annotations

import heapq

import numpy as np

from ..pq import pack_codes, unpack_codes

BACKEND = "fallback"

# output position p holds block slot SLOT_OF[p]
SLOT_OF = np.array([(16 + p // 2) if p & 1 else p // 2 for p in range(32)], dtype=np.intp)
POS_OF = np.argsort(SLOT_OF)
_HALF = (np.arange(32) & 1) * 16


def isa_name():
    return "numpy"


def set_isa(name):
    if name != "numpy":
        raise ValueError("the fallback backend only has the numpy path")
    return "numpy"


def preferred_lanes():
    return 2


def _check(lut, codes):
    lut = np.ascontiguousarray(lut, dtype=np.uint8)
    codes = np.ascontiguousarray(np.atleast_2d(codes), dtype=np.uint8)
    if lut.ndim != 2 or lut.shape[1] != 16:
        raise ValueError("LUT rows must have 16 entries")
    if codes.shape[1] != lut.shape[0] * 16:
        raise ValueError(f"block holds {codes.shape[1] // 16} subspaces, LUT has {lut.shape[0]}")
    return lut, codes


def _finish(acc_slots: np.ndarray, valid) -> np.ndarray:
    nb = acc_slots.shape[0]
    valid = np.broadcast_to(np.asarray(valid, dtype=np.int64), (nb,))
    out = acc_slots[:, SLOT_OF]
    out[SLOT_OF[None, :] >= valid[:, None]] = 0xFFFF
    return out


def block_distances_scalar(lut, codes, valid=32):
    lut, codes = _check(lut, codes)
    m = lut.shape[0]
    nb = codes.shape[0]
    c = unpack_codes(codes, m).reshape(nb, 32, m)
    acc = lut[np.arange(m)[None, None, :], c].astype(np.uint64).sum(axis=2)
    return _finish((acc & 0xFFFF).astype(np.uint16), valid)


def block_distances_vector(lut, codes, valid=32, lanes_per_pass=2):
    """Pair-at-a-time lookups into 32-entry (two-table) rows, ``lanes_per_pass`` tables per step."""
    if lanes_per_pass not in (2, 4):
        raise ValueError("lanes_per_pass must be 2 or 4")
    lut, codes = _check(lut, codes)
    m = lut.shape[0]
    nb = codes.shape[0]
    pairs = lut.reshape(m // 2, 32)
    by = codes.reshape(nb, m // 2, 32)
    lo = np.zeros((nb, 32), dtype=np.uint16)
    hi = np.zeros((nb, 32), dtype=np.uint16)
    step = lanes_per_pass // 2
    for g0 in range(0, m // 2, step):
        for g in range(g0, min(g0 + step, m // 2)):
            b = by[:, g, :]
            lo += pairs[g][_HALF[None, :] + (b & 0x0F)]
            hi += pairs[g][_HALF[None, :] + (b >> 4)]
    acc = np.empty((nb, 32), dtype=np.uint16)
    acc[:, 0::2] = lo[:, 0::2] + lo[:, 1::2]
    acc[:, 1::2] = hi[:, 0::2] + hi[:, 1::2]
    return _finish(acc, valid)


class CandidatePool:
    """The ``capacity`` smallest ``(distance, id)`` pairs pushed so far."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("pool capacity must be >= 1")
        self.capacity = int(capacity)
        self._d = np.zeros(0, dtype=np.float64)
        self._i = np.zeros(0, dtype=np.int64)
        self._pend_d: list[np.ndarray] = []
        self._pend_i: list[np.ndarray] = []
        self._npend = 0

    def _compact(self):
        if not self._pend_d:
            return
        d = np.concatenate([self._d, *self._pend_d])
        i = np.concatenate([self._i, *self._pend_i])
        self._pend_d, self._pend_i, self._npend = [], [], 0
        if d.size > self.capacity:
            order = np.lexsort((i, d))[: self.capacity]
            d, i = d[order], i[order]
        self._d, self._i = d, i

    def _worst_pair(self):
        self._compact()
        if self._d.size < self.capacity:
            return None
        j = np.lexsort((self._i, self._d))[-1]
        return self._d[j], self._i[j]

    def push(self, dists, ids):
        d = np.asarray(dists, dtype=np.float64).ravel()
        i = np.asarray(ids, dtype=np.int64).ravel()
        if d.shape != i.shape:
            raise ValueError("dists and ids disagree in length")
        if not d.size:
            return
        if self._d.size >= self.capacity and not self._pend_d:
            wd, wi = self._worst_pair()
            sel = (d < wd) | ((d == wd) & (i < wi))
            d, i = d[sel], i[sel]
        self._pend_d.append(d)
        self._pend_i.append(i)
        self._npend += d.size
        if self._npend > self.capacity:
            self._compact()

    def worst(self) -> float:
        w = self._worst_pair()
        return float("inf") if w is None else float(w[0])

    @property
    def full(self) -> bool:
        self._compact()
        return self._d.size >= self.capacity

    def __len__(self) -> int:
        self._compact()
        return int(self._d.size)

    def items(self):
        self._compact()
        order = np.lexsort((self._i, self._d))
        return self._i[order].copy(), self._d[order].copy()


def scan_cluster(pool, lut, codes, block_ids, valid, scale, base, lanes_per_pass=2, keep=None):
    if codes.shape[0] == 0:
        return 0
    acc = block_distances_vector(lut, codes, valid, lanes_per_pass)[:, POS_OF]  # back to slot order
    valid = np.asarray(valid)
    ok = np.arange(32)[None, :] < valid[:, None]
    if keep is not None:
        ok &= np.asarray(keep, dtype=bool)
    dist = scale * acc[ok].astype(np.float64) + base
    pool.push(dist, block_ids[ok])
    return int(valid.sum())


def graph_search(lut, codes, adjacency, entry, efs, lanes_per_pass=2):
    lut = np.ascontiguousarray(lut, dtype=np.uint8)
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    adjacency = np.asarray(adjacency, dtype=np.int32)
    nc = codes.shape[0]
    if efs < 1:
        raise ValueError("efs must be >= 1")
    if adjacency.shape[1] > 32:
        raise ValueError("graph degree above 32 does not fit one gather block")
    if nc == 0:
        return np.zeros(0, np.int32), np.zeros(0, np.uint16), 0
    if not 0 <= entry < nc:
        raise ValueError("entry point out of range")

    def score(members):
        blk = pack_codes(codes[members])
        acc = block_distances_vector(lut, blk, len(members), lanes_per_pass)[0]
        return acc[POS_OF][: len(members)]

    visited = np.zeros(nc, dtype=bool)
    visited[entry] = True
    d0 = int(score([entry])[0])
    evals = 1
    cand = [(d0, entry)]
    res = [(-d0, -entry)]  # max-heap on (acc, id)
    while cand:
        cd, ci = cand[0]
        if len(res) >= efs and (-res[0][0], -res[0][1]) < (cd, ci):
            break
        heapq.heappop(cand)
        members = []
        for nbr in adjacency[ci]:
            if nbr < 0:
                break
            if visited[nbr]:
                continue
            visited[nbr] = True
            members.append(int(nbr))
        if not members:
            continue
        accs = score(members)
        evals += len(members)
        for nbr, dv in zip(members, accs.tolist()):
            if len(res) < efs or (dv, nbr) < (-res[0][0], -res[0][1]):
                heapq.heappush(cand, (dv, nbr))
                heapq.heappush(res, (-dv, -nbr))
                if len(res) > efs:
                    heapq.heappop(res)
    out = sorted((-d, -i) for d, i in res)
    ids = np.array([i for _, i in out], dtype=np.int32)
    accs = np.array([d for d, _ in out], dtype=np.uint16)
    return ids, accs, evals


def nearest_centroids(x, c):
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if c.shape[1] != x.shape[1]:
        raise ValueError("dimension mismatch")
    d = np.zeros((x.shape[0], c.shape[0]))
    for t in range(x.shape[1]):
        diff = x[:, t, None] - c[None, :, t]
        d += diff * diff
    a = np.argmin(d, axis=1)
    return a.astype(np.int64), d[np.arange(x.shape[0]), a]

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: LUT16 block kernels, candidate pool, cluster scan and leaf graph search."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint16_t, int32_t, int64_t, uint32_t
from libc.string cimport memset
from libc.math cimport INFINITY

cnp.import_array()

cdef extern from "lut16.h":
    void lut16_scalar(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out) nogil
    void lut16_vector(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out, int lanes, int isa) nogil
    int lut16_has_ssse3() nogil
    int lut16_has_avx2() nogil

BACKEND = "compiled"

cdef int _ISA = 2 if lut16_has_avx2() else (1 if lut16_has_ssse3() else 0)


def isa_name():
    return ("portable", "ssse3", "avx2")[_ISA]


def set_isa(name):
    """Override the probed instruction set (``portable``, ``ssse3``, ``avx2``); returns the previous one."""
    global _ISA
    prev = isa_name()
    want = ("portable", "ssse3", "avx2").index(name)
    probed = 2 if lut16_has_avx2() else (1 if lut16_has_ssse3() else 0)
    if want > probed:
        raise ValueError(f"{name} is not supported on this CPU")
    _ISA = want
    return prev


def preferred_lanes():
    return 4 if _ISA == 2 else 2


cdef inline void _run(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out, int lanes) noexcept nogil:
    if lanes == 0:
        lut16_scalar(lut, codes, m, valid, out)
    else:
        lut16_vector(lut, codes, m, valid, out, lanes, _ISA)


cdef _blocks(lut, codes, valid, int lanes):
    cdef const uint8_t[:, ::1] L = np.ascontiguousarray(lut, dtype=np.uint8)
    cdef const uint8_t[:, ::1] C = np.ascontiguousarray(np.atleast_2d(codes), dtype=np.uint8)
    cdef int m = L.shape[0]
    cdef Py_ssize_t nb = C.shape[0]
    if L.shape[1] != 16:
        raise ValueError("LUT rows must have 16 entries")
    if C.shape[1] != m * 16:
        raise ValueError(f"block holds {C.shape[1] // 16} subspaces, LUT has {m}")
    v = np.broadcast_to(np.asarray(valid, dtype=np.int32), (nb,)).copy()
    cdef const int32_t[::1] V = v
    out = np.empty((nb, 32), dtype=np.uint16)
    cdef uint16_t[:, ::1] O = out
    cdef Py_ssize_t b
    if nb == 0:
        return out
    with nogil:
        for b in range(nb):
            _run(&L[0, 0], &C[b, 0], m, V[b], &O[b, 0], lanes)
    return out


def block_distances_scalar(lut, codes, valid=32):
    """Reference nibble-by-nibble sums for ``(nb, m/2*32)`` packed blocks -> ``(nb, 32)`` uint16."""
    return _blocks(lut, codes, valid, 0)


def block_distances_vector(lut, codes, valid=32, int lanes_per_pass=2):
    if lanes_per_pass not in (2, 4):
        raise ValueError("lanes_per_pass must be 2 or 4")
    return _blocks(lut, codes, valid, lanes_per_pass)


cdef inline bint _gt(double da, int64_t ia, double db, int64_t ib) noexcept nogil:
    return da > db or (da == db and ia > ib)


cdef class CandidatePool:
    """The ``capacity`` smallest ``(distance, id)`` pairs pushed so far.

    Filled by appending until full, then kept as a max-heap whose root is the
    current worst entry, so admission is a single comparison.
    """

    cdef double *d
    cdef int64_t *ids
    cdef object _dbuf, _ibuf
    cdef readonly Py_ssize_t capacity
    cdef Py_ssize_t size
    cdef bint heaped

    def __cinit__(self, Py_ssize_t capacity):
        if capacity < 1:
            raise ValueError("pool capacity must be >= 1")
        self.capacity = capacity
        self._dbuf = np.empty(capacity, dtype=np.float64)
        self._ibuf = np.empty(capacity, dtype=np.int64)
        cdef double[::1] dv = self._dbuf
        cdef int64_t[::1] iv = self._ibuf
        self.d = &dv[0]
        self.ids = &iv[0]
        self.size = 0
        self.heaped = False

    cdef inline void _sift_down(self, Py_ssize_t i) noexcept nogil:
        cdef Py_ssize_t n = self.size, l, r, big
        cdef double td
        cdef int64_t ti
        while True:
            l = 2 * i + 1
            if l >= n:
                break
            r = l + 1
            big = l
            if r < n and _gt(self.d[r], self.ids[r], self.d[l], self.ids[l]):
                big = r
            if not _gt(self.d[big], self.ids[big], self.d[i], self.ids[i]):
                break
            td = self.d[i]; self.d[i] = self.d[big]; self.d[big] = td
            ti = self.ids[i]; self.ids[i] = self.ids[big]; self.ids[big] = ti
            i = big

    cdef inline void push_one(self, double dist, int64_t pid) noexcept nogil:
        cdef Py_ssize_t i
        if self.size < self.capacity:
            self.d[self.size] = dist
            self.ids[self.size] = pid
            self.size += 1
            if self.size == self.capacity:
                i = self.size // 2 - 1
                while i >= 0:
                    self._sift_down(i)
                    i -= 1
                self.heaped = True
            return
        if _gt(self.d[0], self.ids[0], dist, pid):
            self.d[0] = dist
            self.ids[0] = pid
            self._sift_down(0)

    cdef inline double worst_c(self) noexcept nogil:
        if self.size < self.capacity:
            return INFINITY
        return self.d[0]

    def push(self, dists, ids):
        cdef const double[::1] D = np.ascontiguousarray(dists, dtype=np.float64)
        cdef const int64_t[::1] I = np.ascontiguousarray(ids, dtype=np.int64)
        if D.shape[0] != I.shape[0]:
            raise ValueError("dists and ids disagree in length")
        cdef Py_ssize_t i
        with nogil:
            for i in range(D.shape[0]):
                self.push_one(D[i], I[i])

    def worst(self):
        """Distance that a newcomer must beat; ``inf`` while the pool is not full."""
        return self.worst_c()

    @property
    def full(self):
        return self.size >= self.capacity

    def __len__(self):
        return self.size

    def items(self):
        """``(ids, dists)`` sorted by ``(distance, id)``."""
        d = np.asarray(self._dbuf)[: self.size].copy()
        i = np.asarray(self._ibuf)[: self.size].copy()
        order = np.lexsort((i, d))
        return i[order], d[order]


def scan_cluster(CandidatePool pool, lut, codes, block_ids, valid, double scale, double base, int lanes_per_pass=2, keep=None):
    """Score every block of one cluster and merge into ``pool``.

    A slot is admitted only if its dequantized score ``scale*acc + base``
    beats the pool's worst. ``keep`` (optional, aligned with ``block_ids``)
    drops points before they reach the pool. Returns the number of valid
    slots scored.
    """
    cdef const uint8_t[:, ::1] L = np.ascontiguousarray(lut, dtype=np.uint8)
    cdef const uint8_t[:, ::1] C = codes
    cdef const int64_t[:, ::1] B = block_ids
    cdef const int32_t[::1] V = valid
    cdef const uint8_t[:, ::1] K
    cdef bint use_keep = keep is not None
    if use_keep:
        K = keep
    cdef int m = L.shape[0]
    cdef Py_ssize_t nb = C.shape[0], b
    cdef int p, slot, vc
    cdef uint16_t tmp[32]
    cdef double dist
    cdef long scanned = 0
    if nb and C.shape[1] != m * 16:
        raise ValueError("block/LUT subspace mismatch")
    with nogil:
        for b in range(nb):
            vc = V[b]
            _run(&L[0, 0], &C[b, 0], m, vc, tmp, lanes_per_pass)
            scanned += vc
            for p in range(32):
                slot = (16 + (p >> 1)) if (p & 1) else (p >> 1)
                if slot >= vc:
                    continue
                if use_keep and not K[b, slot]:
                    continue
                dist = scale * <double>tmp[p] + base
                if pool.size < pool.capacity or _gt(pool.d[0], pool.ids[0], dist, B[b, slot]):
                    pool.push_one(dist, B[b, slot])
    return scanned


# ---- leaf graph beam search ---------------------------------------------------

cdef inline bint _lt16(uint16_t a, int32_t ia, uint16_t b, int32_t ib) noexcept nogil:
    return a < b or (a == b and ia < ib)


cdef void _heap_push_min(uint16_t *hd, int32_t *hi, Py_ssize_t *n, uint16_t d, int32_t i) noexcept nogil:
    cdef Py_ssize_t k = n[0], parent
    n[0] += 1
    while k > 0:
        parent = (k - 1) >> 1
        if not _lt16(d, i, hd[parent], hi[parent]):
            break
        hd[k] = hd[parent]; hi[k] = hi[parent]
        k = parent
    hd[k] = d; hi[k] = i


cdef void _heap_pop_min(uint16_t *hd, int32_t *hi, Py_ssize_t *n) noexcept nogil:
    cdef Py_ssize_t size = n[0] - 1, k = 0, c
    cdef uint16_t d = hd[size]
    cdef int32_t i = hi[size]
    n[0] = size
    while True:
        c = 2 * k + 1
        if c >= size:
            break
        if c + 1 < size and _lt16(hd[c + 1], hi[c + 1], hd[c], hi[c]):
            c += 1
        if not _lt16(hd[c], hi[c], d, i):
            break
        hd[k] = hd[c]; hi[k] = hi[c]
        k = c
    if size > 0:
        hd[k] = d; hi[k] = i


cdef void _heap_push_max(uint16_t *hd, int32_t *hi, Py_ssize_t *n, uint16_t d, int32_t i) noexcept nogil:
    cdef Py_ssize_t k = n[0], parent
    n[0] += 1
    while k > 0:
        parent = (k - 1) >> 1
        if not _lt16(hd[parent], hi[parent], d, i):
            break
        hd[k] = hd[parent]; hi[k] = hi[parent]
        k = parent
    hd[k] = d; hi[k] = i


cdef void _heap_pop_max(uint16_t *hd, int32_t *hi, Py_ssize_t *n) noexcept nogil:
    cdef Py_ssize_t size = n[0] - 1, k = 0, c
    cdef uint16_t d = hd[size]
    cdef int32_t i = hi[size]
    n[0] = size
    while True:
        c = 2 * k + 1
        if c >= size:
            break
        if c + 1 < size and _lt16(hd[c], hi[c], hd[c + 1], hi[c + 1]):
            c += 1
        if not _lt16(d, i, hd[c], hi[c]):
            break
        hd[k] = hd[c]; hi[k] = hi[c]
        k = c
    if size > 0:
        hd[k] = d; hi[k] = i


cdef void _pack_temp(const uint8_t *codes, int m, const int32_t *members, int cnt, uint8_t *blk) noexcept nogil:
    """Gather up to 32 points' unpacked codes into one interleaved block (padding code 15)."""
    cdef int g, t, s, j, p0, p1
    cdef uint8_t lo, hi
    for g in range(m >> 1):
        for t in range(16):
            p0 = 2 * t
            p1 = p0 + 1
            for s in range(2):
                j = 2 * g + s
                lo = codes[<Py_ssize_t>members[p0] * m + j] if p0 < cnt else 15
                hi = codes[<Py_ssize_t>members[p1] * m + j] if p1 < cnt else 15
                blk[32 * g + 2 * t + s] = <uint8_t>((hi << 4) | lo)


def graph_search(lut, codes, adjacency, int entry, int efs, int lanes_per_pass=2):
    """Best-first beam search over one leaf graph using quantized LUT scores.

    ``codes`` are the cluster's unpacked ``(nc, m)`` codes, ``adjacency`` is
    ``(nc, R)`` int32 padded with -1. Returns ``(local_ids, acc, evaluations)``
    for at most ``efs`` points sorted by ``(acc, local id)``.
    """
    cdef const uint8_t[:, ::1] L = np.ascontiguousarray(lut, dtype=np.uint8)
    cdef const uint8_t[:, ::1] C = np.ascontiguousarray(codes, dtype=np.uint8)
    cdef const int32_t[:, ::1] A = np.ascontiguousarray(adjacency, dtype=np.int32)
    cdef Py_ssize_t nc = C.shape[0]
    cdef int m = L.shape[0]
    cdef int R = A.shape[1]
    if efs < 1:
        raise ValueError("efs must be >= 1")
    if R > 32:
        raise ValueError("graph degree above 32 does not fit one gather block")
    if nc == 0:
        return np.zeros(0, np.int32), np.zeros(0, np.uint16), 0
    if C.shape[1] != m:
        raise ValueError("code/LUT subspace mismatch")
    visited_arr = np.zeros(nc, dtype=np.uint8)
    cand_d_arr = np.empty(nc + 1, dtype=np.uint16)
    cand_i_arr = np.empty(nc + 1, dtype=np.int32)
    res_d_arr = np.empty(efs + 1, dtype=np.uint16)
    res_i_arr = np.empty(efs + 1, dtype=np.int32)
    blk_arr = np.empty(max(m, 2) // 2 * 32, dtype=np.uint8)
    cdef uint8_t[::1] visited = visited_arr
    cdef uint16_t[::1] cd = cand_d_arr
    cdef int32_t[::1] ci = cand_i_arr
    cdef uint16_t[::1] rd = res_d_arr
    cdef int32_t[::1] ri = res_i_arr
    cdef uint8_t[::1] blk = blk_arr
    cdef Py_ssize_t nc_c = 0, nr = 0
    cdef int32_t members[32]
    cdef uint16_t tmp[32]
    cdef int cnt, u, p, slot, nb_i
    cdef int32_t cur, nbr
    cdef uint16_t cur_d, dv
    cdef long evals = 0
    if entry < 0 or entry >= nc:
        raise ValueError("entry point out of range")
    with nogil:
        members[0] = entry
        _pack_temp(&C[0, 0], m, members, 1, &blk[0])
        _run(&L[0, 0], &blk[0], m, 1, tmp, lanes_per_pass)
        evals = 1
        visited[entry] = 1
        _heap_push_min(&cd[0], &ci[0], &nc_c, tmp[0], entry)
        _heap_push_max(&rd[0], &ri[0], &nr, tmp[0], entry)
        while nc_c > 0:
            cur_d = cd[0]
            cur = ci[0]
            if nr >= efs and _lt16(rd[0], ri[0], cur_d, cur):
                break
            _heap_pop_min(&cd[0], &ci[0], &nc_c)
            cnt = 0
            for u in range(R):
                nbr = A[cur, u]
                if nbr < 0:
                    break
                if visited[nbr]:
                    continue
                visited[nbr] = 1
                members[cnt] = nbr
                cnt += 1
            if cnt == 0:
                continue
            _pack_temp(&C[0, 0], m, members, cnt, &blk[0])
            _run(&L[0, 0], &blk[0], m, cnt, tmp, lanes_per_pass)
            evals += cnt
            for slot in range(cnt):
                p = 2 * slot if slot < 16 else 2 * (slot - 16) + 1
                dv = tmp[p]
                nbr = members[slot]
                if nr < efs or _lt16(dv, nbr, rd[0], ri[0]):
                    _heap_push_min(&cd[0], &ci[0], &nc_c, dv, nbr)
                    _heap_push_max(&rd[0], &ri[0], &nr, dv, nbr)
                    if nr > efs:
                        _heap_pop_max(&rd[0], &ri[0], &nr)
    ids = res_i_arr[:nr].copy()
    accs = res_d_arr[:nr].copy()
    order = np.lexsort((ids, accs))
    return ids[order], accs[order], int(evals)


# ---- small-dimension nearest centroid -----------------------------------------

def nearest_centroids(x, c):
    """Index of and squared distance to the nearest row of ``c`` for every row of ``x``.

    Distances are accumulated as ``sum_j (x_j - c_j)^2`` left to right in
    float64; ties go to the lower centroid index.
    """
    cdef const double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] C = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], k = C.shape[0], d = X.shape[1], i, j, t
    if C.shape[1] != d:
        raise ValueError("dimension mismatch")
    assign_a = np.empty(n, dtype=np.int64)
    best_a = np.empty(n, dtype=np.float64)
    cdef int64_t[::1] A = assign_a
    cdef double[::1] B = best_a
    cdef double acc, diff, bv
    cdef int64_t bj
    with nogil:
        for i in range(n):
            bv = INFINITY
            bj = 0
            for j in range(k):
                acc = 0.0
                for t in range(d):
                    diff = X[i, t] - C[j, t]
                    acc = acc + diff * diff
                if acc < bv:
                    bv = acc
                    bj = j
            A[i] = bj
            B[i] = bv
    return assign_a, best_a

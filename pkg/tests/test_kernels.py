import heapq

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leafann import kernels
from leafann.kernels import (
    PAD_ACC,
    POS_OF,
    SLOT_OF,
    BlockDistances,
    dequantize_pool,
    scalar_block_distances,
    update_pool,
    vector_block_distances,
)
from leafann.lut import FloatLut, QuantizedLut, quantize_lut
from leafann.pq import pack_blocks, pack_codes

MS = [2, 4, 8, 16, 48, 64, 480]


def nibble_oracle(lut, packed, valid):
    """Walk the interleaved bytes one nibble at a time; returns sums in slot order (int, unwrapped)."""
    m = lut.shape[0]
    acc = [0] * 32
    for g in range(m // 2):
        for t in range(16):
            for s in range(2):
                byte = int(packed[32 * g + 2 * t + s])
                acc[2 * t] += int(lut[2 * g + s, byte & 15])
                acc[2 * t + 1] += int(lut[2 * g + s, byte >> 4])
    return [a if slot < valid else None for slot, a in enumerate(acc)]


def _qlut(u8):
    return QuantizedLut(np.asarray(u8, np.uint8), 1.0, np.zeros(len(u8)))


def _isas(be):
    if be.BACKEND != "compiled":
        return [be.isa_name()]
    out = []
    for name in ("portable", "ssse3", "avx2"):
        prev = be.set_isa(be.isa_name())
        try:
            be.set_isa(name)
            out.append(name)
        except ValueError:
            pass
        finally:
            be.set_isa(prev)
    return out


def test_layout_is_a_bijection():
    assert sorted(SLOT_OF.tolist()) == list(range(32))
    assert SLOT_OF[:6].tolist() == [0, 16, 1, 17, 2, 18]
    np.testing.assert_array_equal(SLOT_OF[POS_OF], np.arange(32))


def test_all_zero_codes(be):
    u = np.arange(32, dtype=np.uint8).reshape(2, 16)
    (blk,) = pack_blocks(np.zeros((32, 2), np.uint8), np.arange(32))
    d = scalar_block_distances(_qlut(u), blk, be)
    assert (d.values == u[0, 0] + u[1, 0]).all()


def test_single_point_and_padding(be):
    u = np.arange(32, dtype=np.uint8).reshape(2, 16)
    (blk,) = pack_blocks(np.array([[3, 7]]), [5])
    for d in (scalar_block_distances(_qlut(u), blk, be), vector_block_distances(_qlut(u), blk, 2, be)):
        by = d.by_slot()
        assert by[0] == u[0, 3] + u[1, 7]
        assert (by[1:] == PAD_ACC).all()


def test_all_zero_lut_gives_zero(be):
    (blk,) = pack_blocks(np.random.default_rng(0).integers(0, 16, (20, 8)), np.arange(20))
    d = vector_block_distances(_qlut(np.zeros((8, 16))), blk, 4, be)
    assert (d.by_slot()[:20] == 0).all()


def test_m_mismatch_rejected(be):
    (blk,) = pack_blocks(np.zeros((3, 4), np.uint8), np.arange(3))
    with pytest.raises(ValueError):
        scalar_block_distances(_qlut(np.zeros((2, 16))), blk, be)
    with pytest.raises(ValueError):
        be.block_distances_vector(np.zeros((2, 16), np.uint8), blk.codes[None], 3, 2)


def test_bad_lane_count(be):
    with pytest.raises(ValueError):
        be.block_distances_vector(np.zeros((2, 16), np.uint8), np.zeros((1, 32), np.uint8), 32, 3)


@pytest.mark.parametrize("m", MS)
@pytest.mark.parametrize("valid", [1, 31, 32])
def test_scalar_matches_nibble_oracle(be, rng, m, valid):
    for _ in range(3):
        lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
        codes = rng.integers(0, 16, (valid, m)).astype(np.uint8)
        packed = pack_codes(codes)
        ref = nibble_oracle(lut, packed[0], valid)
        got = be.block_distances_scalar(lut, packed, valid)[0][POS_OF]
        for slot in range(32):
            assert got[slot] == (PAD_ACC if ref[slot] is None else ref[slot] & 0xFFFF)


@pytest.mark.parametrize("m", MS)
@pytest.mark.parametrize("valid", [1, 31, 32])
@pytest.mark.parametrize("lanes", [2, 4])
def test_vector_equals_scalar(be, rng, m, valid, lanes):
    lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
    packed = rng.integers(0, 256, (40, m * 16)).astype(np.uint8)
    ref = be.block_distances_scalar(lut, packed, valid)
    for isa in _isas(be):
        prev = be.set_isa(isa)
        try:
            np.testing.assert_array_equal(be.block_distances_vector(lut, packed, valid, lanes), ref)
        finally:
            be.set_isa(prev)


def test_random_differential_many_blocks(be, rng):
    """10^5 random blocks spread over several table counts and fill levels."""
    total = 0
    for m in (2, 4, 16, 64):
        nb = 25_000
        lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
        packed = rng.integers(0, 256, (nb, m * 16)).astype(np.uint8)
        valid = rng.integers(1, 33, nb).astype(np.int32)
        ref = be.block_distances_scalar(lut, packed, valid)
        for lanes in (2, 4):
            assert (be.block_distances_vector(lut, packed, valid, lanes) != ref).sum() == 0
        total += nb
    assert total == 100_000


def test_backends_bit_identical(rng):
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled core not built")
    c, f = kernels.get_backend("compiled"), kernels.get_backend("fallback")
    for m in MS:
        lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
        packed = rng.integers(0, 256, (50, m * 16)).astype(np.uint8)
        valid = rng.integers(1, 33, 50).astype(np.int32)
        for lanes in (2, 4):
            np.testing.assert_array_equal(c.block_distances_vector(lut, packed, valid, lanes),
                                          f.block_distances_vector(lut, packed, valid, lanes))


def test_sixteen_bit_sums_wrap(be):
    m = 480  # 480 * 255 overflows a 16-bit accumulator without the scale sizing
    lut = np.full((m, 16), 255, np.uint8)
    packed = np.zeros((1, m * 16), np.uint8)
    expect = (m * 255) & 0xFFFF
    assert (be.block_distances_scalar(lut, packed, 32) == expect).all()
    assert (be.block_distances_vector(lut, packed, 32, 4) == expect).all()


def test_quantized_tables_never_wrap(be, rng):
    m = 480
    q = quantize_lut(FloatLut(rng.random((m, 16)).astype(np.float32)))
    worst = np.zeros((1, m), np.uint8)
    worst[0] = q.table.argmax(axis=1)
    acc = be.block_distances_scalar(q.table, pack_codes(worst), 1)[0][POS_OF][0]
    assert acc == int(q.table.max(axis=1).astype(np.int64).sum())


# ---- candidate pool ----------------------------------------------------------------

def test_pool_keeps_smallest(be, rng):
    pool = be.CandidatePool(10)
    d = rng.permutation(32).astype(np.float64)
    pool.push(d, np.arange(32))
    ids, dist = pool.items()
    assert dist.tolist() == list(range(10))
    np.testing.assert_array_equal(ids, np.argsort(d)[:10])


def test_pool_unchanged_by_worse_block(be):
    pool = be.CandidatePool(4)
    pool.push([1.0, 2.0, 3.0, 4.0], [1, 2, 3, 4])
    before = pool.items()
    pool.push(np.full(32, 9.0), np.arange(100, 132))
    after = pool.items()
    np.testing.assert_array_equal(before[0], after[0])
    assert pool.worst() == 4.0 and pool.full


def test_pool_ties_prefer_smaller_id(be):
    pool = be.CandidatePool(2)
    pool.push([1.0, 1.0, 1.0], [9, 4, 6])
    assert pool.items()[0].tolist() == [4, 6]
    pool.push([1.0], [2])
    assert pool.items()[0].tolist() == [2, 4]


def test_pool_not_full_reports_inf(be):
    pool = be.CandidatePool(5)
    pool.push([3.0], [0])
    assert pool.worst() == float("inf") and not pool.full and len(pool) == 1
    with pytest.raises(ValueError):
        be.CandidatePool(0)


@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_pool_matches_global_sort(cap, seed):
    r = np.random.default_rng(seed)
    d = r.integers(0, 40, 100 * 32).astype(np.float64)  # frequent ties
    ids = r.permutation(d.size)
    order = np.lexsort((ids, d))[:cap]
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        pool = be.CandidatePool(cap)
        for b in range(100):
            pool.push(d[32 * b : 32 * b + 32], ids[32 * b : 32 * b + 32])
        got_i, got_d = pool.items()
        np.testing.assert_array_equal(got_i, ids[order])
        np.testing.assert_array_equal(got_d, d[order])
        # arrival order does not matter
        pool2 = be.CandidatePool(cap)
        for b in r.permutation(100):
            pool2.push(d[32 * b : 32 * b + 32], ids[32 * b : 32 * b + 32])
        np.testing.assert_array_equal(pool2.items()[0], got_i)


def test_update_pool_skips_padding(be):
    u = np.arange(32, dtype=np.uint8).reshape(2, 16)
    q = QuantizedLut(u, 0.5, np.array([1.0, 2.0]))
    (blk,) = pack_blocks(np.array([[0, 0], [1, 1], [2, 2]]), [7, 8, 9])
    pool = update_pool(be.CandidatePool(10), vector_block_distances(q, blk, 2, be), q)
    ids, dist = pool.items()
    assert ids.tolist() == [7, 8, 9]
    np.testing.assert_allclose(dist, 0.5 * (u[0, :3] + u[1, :3]) + 3.0)


def test_dequantize_examples():
    q = QuantizedLut(np.zeros((2, 16), np.uint8), 0.25, np.array([1.0, 0.5]))
    assert dequantize_pool(0, q) == 1.5
    q1 = QuantizedLut(np.zeros((2, 16), np.uint8), 1.0, np.zeros(2))
    np.testing.assert_array_equal(dequantize_pool([0, 7, 300], q1), [0, 7, 300])


def test_dequantized_pool_close_to_float_sums(be, rng):
    m = 16
    flut = FloatLut(rng.random((m, 16)).astype(np.float32) * 3)
    q = quantize_lut(flut)
    codes = rng.integers(0, 16, (32, m)).astype(np.uint8)
    (blk,) = pack_blocks(codes, np.arange(32))
    pool = update_pool(be.CandidatePool(32), scalar_block_distances(q, blk, be), q)
    ids, dist = pool.items()
    np.testing.assert_allclose(dist, flut.score(codes[ids]), atol=q.scale * m / 2 + 1e-9)


# ---- fused cluster scan ------------------------------------------------------------

def test_scan_cluster_matches_manual(be, rng):
    m, n = 8, 77
    lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
    codes = rng.integers(0, 16, (n, m)).astype(np.uint8)
    packed = pack_codes(codes)
    nb = packed.shape[0]
    ids = np.full((nb, 32), -1, np.int64)
    ids.reshape(-1)[:n] = np.arange(1000, 1000 + n)
    valid = np.array([32, 32, 13], np.int32)
    keep = np.ones((nb, 32), np.uint8)
    keep[0, 5] = 0
    pool = be.CandidatePool(20)
    assert be.scan_cluster(pool, lut, packed, ids, valid, 0.5, 2.0, 2, keep) == n
    full = lut[np.arange(m)[None, :], codes.astype(np.intp)].astype(np.int64).sum(axis=1) * 0.5 + 2.0
    cand = [(full[i], 1000 + i) for i in range(n) if i != 5]
    ref = sorted(cand)[:20]
    got_i, got_d = pool.items()
    assert got_i.tolist() == [i for _, i in ref]
    np.testing.assert_allclose(got_d, [d for d, _ in ref])


# ---- leaf graph search -------------------------------------------------------------

def graph_oracle(lut, codes, adj, entry, efs):
    """Textbook best-first search over (acc, id) pairs."""
    m = lut.shape[0]

    def acc(i):
        return int(lut[np.arange(m), codes[i]].astype(np.int64).sum()) & 0xFFFF

    seen = {entry}
    cand = [(acc(entry), entry)]
    res = [(-acc(entry), -entry)]
    evals = 1
    while cand:
        d, i = cand[0]
        if len(res) >= efs and (-res[0][0], -res[0][1]) < (d, i):
            break
        heapq.heappop(cand)
        for nb in adj[i]:
            if nb < 0:
                break
            if nb in seen:
                continue
            seen.add(int(nb))
            dv = acc(nb)
            evals += 1
            if len(res) < efs or (dv, nb) < (-res[0][0], -res[0][1]):
                heapq.heappush(cand, (dv, int(nb)))
                heapq.heappush(res, (-dv, -int(nb)))
                if len(res) > efs:
                    heapq.heappop(res)
    out = sorted((-d, -i) for d, i in res)
    return [i for _, i in out], [d for d, _ in out], evals


@pytest.mark.parametrize("efs", [1, 5, 40])
def test_graph_search_matches_oracle(be, rng, efs):
    m, n, r = 8, 300, 12
    lut = rng.integers(0, 256, (m, 16)).astype(np.uint8)
    codes = rng.integers(0, 16, (n, m)).astype(np.uint8)
    adj = np.full((n, r), -1, np.int32)
    for i in range(n):
        k = rng.integers(1, r + 1)
        adj[i, :k] = rng.choice(n, k, replace=False)
    for entry in (0, 17, 299):
        ids, accs, evals = be.graph_search(lut, codes, adj, entry, efs, 2)
        ref_i, ref_d, ref_e = graph_oracle(lut, codes, adj, entry, efs)
        assert ids.tolist() == ref_i and accs.tolist() == ref_d and evals == ref_e


def test_graph_search_edge_cases(be):
    lut = np.zeros((2, 16), np.uint8)
    ids, accs, ev = be.graph_search(lut, np.zeros((0, 2), np.uint8), np.zeros((0, 4), np.int32), 0, 3)
    assert ids.size == 0 and ev == 0
    codes = np.zeros((3, 2), np.uint8)
    adj = np.array([[1, -1], [2, -1], [-1, -1]], np.int32)
    assert be.graph_search(lut, codes, adj, 0, 10)[0].tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        be.graph_search(lut, codes, adj, 3, 10)
    with pytest.raises(ValueError):
        be.graph_search(lut, codes, adj, 0, 0)
    with pytest.raises(ValueError):
        be.graph_search(lut, codes, np.zeros((3, 33), np.int32), 0, 1)


def test_nearest_centroids(be, rng):
    x = rng.standard_normal((200, 3))
    c = rng.standard_normal((9, 3))
    a, d = be.nearest_centroids(x, c)
    full = ((x[:, None, :] - c[None]) ** 2).sum(-1)
    np.testing.assert_array_equal(a, full.argmin(axis=1))
    np.testing.assert_allclose(d, full.min(axis=1))


def test_block_distances_dataclass_by_slot():
    vals = np.arange(32, dtype=np.uint16)
    d = BlockDistances(vals, np.arange(32))
    assert d.by_slot()[16] == 1 and d.by_slot()[1] == 2


def test_backend_selection():
    assert "fallback" in kernels.available_backends()
    assert kernels.get_backend("fallback").BACKEND == "fallback"
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")


def test_env_forces_fallback():
    import subprocess
    import sys

    code = "from leafann import kernels; print(kernels.backend.BACKEND)"
    env = {"LEAFANN_KERNELS": "fallback", "PATH": ""}
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert out.stdout.strip() == "fallback"

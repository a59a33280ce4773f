import numpy as np
import pytest

from fovmatch.correlation import (
    CorrConfig,
    Offset2D,
    pearson_table_1d,
    pearson_table_2d,
    resolve_max_lag,
    xcorr1_at,
    xcorr1_max,
    xcorr2_at,
    xcorr2_max,
)
from fovmatch.errors import InsufficientOverlap

CFG = CorrConfig(max_lag=6)


def scan_oracle(A, B, cfg, diagonal_only=False):
    """Exhaustive offset scan with np.corrcoef, replicating the tie-break."""
    lag = resolve_max_lag(cfg, min(A.shape), min(B.shape))
    best = None
    for di in range(-lag, lag + 1):
        for dj in range(-lag, lag + 1):
            if diagonal_only and di != dj:
                continue
            r0, r1 = max(0, -di), min(A.shape[0], B.shape[0] - di)
            c0, c1 = max(0, -dj), min(A.shape[1], B.shape[1] - dj)
            if r1 - r0 < cfg.min_overlap_fraction * min(A.shape[0], B.shape[0]):
                continue
            if c1 - c0 < cfg.min_overlap_fraction * min(A.shape[1], B.shape[1]):
                continue
            if r1 <= r0 or c1 <= c0:
                continue
            sa = A[r0:r1, c0:c1].ravel()
            sb = B[r0 + di : r1 + di, c0 + dj : c1 + dj].ravel()
            val = float(np.corrcoef(sa, sb)[0, 1])
            key = (-val, abs(di) + abs(dj), di, dj)
            if best is None or key < best[0]:
                best = (key, val, (di, dj))
    assert best is not None
    return best[1], best[2]


def test_xcorr2_at_self_is_one():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(12, 12))
    assert np.isclose(xcorr2_at(A, A, Offset2D(0, 0), CFG), 1.0)


def test_xcorr2_at_negated_is_minus_one():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(10, 10))
    assert np.isclose(xcorr2_at(A, -A, Offset2D(0, 0), CFG), -1.0)


def test_xcorr2_at_matches_subblock_pearson():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(20, 20))
    B = rng.normal(size=(20, 20))
    di, dj = 3, -2
    got = xcorr2_at(A, B, Offset2D(di, dj), CFG)
    # hand-extracted sub-blocks: rows 0..17 of A vs 3..20 of B, cols 2..20 vs 0..18
    sa = A[0:17, 2:20].ravel()
    sb = B[3:20, 0:18].ravel()
    expect = np.corrcoef(sa, sb)[0, 1]
    assert np.isclose(got, expect, atol=1e-12)


def test_xcorr2_at_constant_block_is_zero():
    A = np.ones((8, 8))
    B = np.arange(64, dtype=float).reshape(8, 8)
    assert xcorr2_at(A, B, Offset2D(0, 0), CFG) == 0.0


def test_xcorr2_at_insufficient_overlap_raises():
    A = np.random.default_rng(3).normal(size=(10, 10))
    with pytest.raises(InsufficientOverlap):
        xcorr2_at(A, A, Offset2D(8, 0), CorrConfig(max_lag=9))


def test_xcorr2_max_planted_shift():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(20, 20))
    B = np.zeros((30, 30))
    B[5:25, 5:25] = A
    val, off = xcorr2_max(A, B, CorrConfig(max_lag=8))
    assert (off.di, off.dj) == (5, 5)
    assert val > 0.99


def test_xcorr2_max_identical_at_origin():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(15, 15))
    val, off = xcorr2_max(A, A, CFG)
    assert (off.di, off.dj) == (0, 0)
    assert np.isclose(val, 1.0)


def test_xcorr2_max_matches_exhaustive_scan():
    rng = np.random.default_rng(6)
    for shape_a, shape_b in [((14, 14), (14, 14)), ((12, 16), (18, 13))]:
        A = rng.normal(size=shape_a)
        B = rng.normal(size=shape_b)
        cfg = CorrConfig(max_lag=4)
        val, off = xcorr2_max(A, B, cfg)
        oval, ooff = scan_oracle(A, B, cfg)
        assert np.isclose(val, oval, atol=1e-10)
        assert (off.di, off.dj) == ooff


def test_xcorr2_max_diagonal_only_matches_scan():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(16, 16))
    B = rng.normal(size=(16, 16))
    val, off = xcorr2_max(A, B, CFG, diagonal_only=True)
    oval, ooff = scan_oracle(A, B, CFG, diagonal_only=True)
    assert off.di == off.dj
    assert np.isclose(val, oval, atol=1e-10)
    assert (off.di, off.dj) == ooff


def test_xcorr1_planted_delay():
    rng = np.random.default_rng(8)
    u = rng.normal(size=40)
    v = np.concatenate([rng.normal(size=7) * 0.01, u, rng.normal(size=5) * 0.01])
    val, d = xcorr1_max(u, v, CorrConfig(max_lag=10))
    assert d == 7
    assert val > 0.99
    assert np.isclose(xcorr1_at(u, v, 7, CFG), val)


def test_xcorr1_self_max_at_zero():
    rng = np.random.default_rng(9)
    u = rng.normal(size=30)
    val, d = xcorr1_max(u, u, CFG)
    assert d == 0 and np.isclose(val, 1.0)


def test_xcorr1_matches_exhaustive_scan():
    rng = np.random.default_rng(10)
    u = rng.normal(size=25)
    v = rng.normal(size=31)
    cfg = CorrConfig(max_lag=5)
    val, d = xcorr1_max(u, v, cfg)
    best = None
    for dd in range(-5, 6):
        lo, hi = max(0, -dd), min(u.size, v.size - dd)
        if hi - lo < cfg.min_overlap_fraction * min(u.size, v.size):
            continue
        r = float(np.corrcoef(u[lo:hi], v[lo + dd : hi + dd])[0, 1])
        key = (-r, abs(dd), dd)
        if best is None or key < best[0]:
            best = (key, r, dd)
    assert np.isclose(val, best[1], atol=1e-10)
    assert d == best[2]


def test_antisymmetry_of_offsets():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(13, 11))
    B = rng.normal(size=(15, 17))
    for di, dj in [(0, 0), (2, -1), (-3, 2)]:
        a = xcorr2_at(A, B, Offset2D(di, dj), CFG)
        b = xcorr2_at(B, A, Offset2D(-di, -dj), CFG)
        assert np.isclose(a, b, atol=1e-12)


def test_max_dominates_random_probes():
    rng = np.random.default_rng(12)
    A = rng.normal(size=(20, 20))
    B = rng.normal(size=(20, 20))
    val, _ = xcorr2_max(A, B, CFG)
    for _ in range(30):
        di = int(rng.integers(-6, 7))
        dj = int(rng.integers(-6, 7))
        try:
            probe = xcorr2_at(A, B, Offset2D(di, dj), CFG)
        except InsufficientOverlap:
            continue
        assert val >= probe - 1e-12


def test_values_bounded():
    rng = np.random.default_rng(13)
    for _ in range(20):
        A = rng.normal(size=(10, 12)) * rng.uniform(0.1, 50)
        B = rng.normal(size=(11, 10)) * rng.uniform(0.1, 50)
        val, _ = xcorr2_max(A, B, CorrConfig(max_lag=3))
        assert -1.0 - 1e-9 <= val <= 1.0 + 1e-9


def test_planted_shift_recovery_sweep():
    rng = np.random.default_rng(14)
    n = 36
    cfg = CorrConfig(max_lag=12)
    A = rng.normal(size=(n, n))
    for d in range(-6, 7):  # |d| <= max_lag/2
        B = np.zeros_like(A)
        if d >= 0:
            B[d:, d:] = A[: n - d, : n - d]
        else:
            B[:d, :d] = A[-d:, -d:]
        val, off = xcorr2_max(A, B, cfg)
        assert (off.di, off.dj) == (d, d)
        assert val > 0.999

    # 1D planted delays
    u = rng.normal(size=50)
    for d in range(-10, 11):
        v = np.zeros_like(u)
        if d >= 0:
            v[d:] = u[: u.size - d]
        else:
            v[:d] = u[-d:]
        _, got = xcorr1_max(u, v, CorrConfig(max_lag=20))
        assert got == d


def test_tables_match_direct_kernels():
    rng = np.random.default_rng(15)
    A = rng.normal(size=(17, 13))
    B = rng.normal(size=(23, 19))
    lag = 5
    dis, djs, table = pearson_table_2d(A, B, lag, 0.5)
    for i, di in enumerate(dis):
        for j, dj in enumerate(djs):
            try:
                direct = xcorr2_at(A, B, Offset2D(int(di), int(dj)), CorrConfig(max_lag=lag))
            except InsufficientOverlap:
                assert np.isnan(table[i, j])
                continue
            assert np.isclose(table[i, j], direct, atol=1e-8)

    u = rng.normal(size=21)
    v = rng.normal(size=27)
    ds, vals = pearson_table_1d(u, v, lag, 0.5)
    for i, d in enumerate(ds):
        try:
            direct = xcorr1_at(u, v, int(d), CorrConfig(max_lag=lag))
        except InsufficientOverlap:
            assert np.isnan(vals[i])
            continue
        assert np.isclose(vals[i], direct, atol=1e-8)

"""1D and 2D cross-correlation kernels with offset search.

All values are Pearson correlations over the overlap window, so they are
comparable across pairs of different sizes and bounded in [-1, 1].
Placement convention: at offset (di, dj), A[r, c] aligns with B[r+di, c+dj];
for vectors, u[t] aligns with v[t+d]. A positive offset therefore means the
first stream lags the second.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft
from scipy.signal import fftconvolve

from .errors import InsufficientOverlap


@dataclass(frozen=True)
class Offset2D:
    """Row/column shift: di is the first video's delay, dj the second's."""

    di: int
    dj: int


@dataclass(frozen=True)
class CorrConfig:
    max_lag: int | None = None  # None -> 25% of the shorter stream
    min_overlap_fraction: float = 0.5
    diagonal_only_for_nodes: bool = True

    def __post_init__(self):
        if self.max_lag is not None and self.max_lag < 0:
            raise ValueError("max_lag must be >= 0")
        if not 0.0 < self.min_overlap_fraction <= 1.0:
            raise ValueError("min_overlap_fraction must be in (0, 1]")


def resolve_max_lag(cfg: CorrConfig, *lengths) -> int:
    if cfg.max_lag is not None:
        return cfg.max_lag
    return min(lengths) // 4


def _axis_window(n_a: int, n_b: int, d: int) -> tuple[int, int]:
    """Overlap of [0, n_a) placed at +d inside [0, n_b), in A coordinates."""
    lo = max(0, -d)
    hi = min(n_a, n_b - d)
    return lo, hi


def _axis_admissible(lo: int, hi: int, n_a: int, n_b: int, frac: float) -> bool:
    return hi - lo >= frac * min(n_a, n_b)


# variance below eps * n * max(1, mean square) counts as constant
_CONST_EPS = 1e-12


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    mx = x.mean()
    my = y.mean()
    dx = x - mx
    dy = y - my
    vx = float(np.dot(dx.ravel(), dx.ravel()))
    vy = float(np.dot(dy.ravel(), dy.ravel()))
    ex = _CONST_EPS * n * max(1.0, float(np.mean(x * x)))
    ey = _CONST_EPS * n * max(1.0, float(np.mean(y * y)))
    if vx <= ex or vy <= ey:
        return 0.0
    return float(np.dot(dx.ravel(), dy.ravel()) / np.sqrt(vx * vy))


def xcorr2_at(A, B, off: Offset2D, cfg: CorrConfig) -> float:
    """Pearson correlation of the overlapping sub-blocks at a fixed offset."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    r0, r1 = _axis_window(A.shape[0], B.shape[0], off.di)
    c0, c1 = _axis_window(A.shape[1], B.shape[1], off.dj)
    frac = cfg.min_overlap_fraction
    if (
        r1 <= r0
        or c1 <= c0
        or not _axis_admissible(r0, r1, A.shape[0], B.shape[0], frac)
        or not _axis_admissible(c0, c1, A.shape[1], B.shape[1], frac)
    ):
        raise InsufficientOverlap(f"offset ({off.di}, {off.dj}) leaves too little overlap")
    sub_a = A[r0:r1, c0:c1]
    sub_b = B[r0 + off.di : r1 + off.di, c0 + off.dj : c1 + off.dj]
    return _pearson(sub_a, sub_b)


def xcorr1_at(u, v, d: int, cfg: CorrConfig) -> float:
    """1D analogue of xcorr2_at."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lo, hi = _axis_window(u.size, v.size, d)
    if hi <= lo or not _axis_admissible(lo, hi, u.size, v.size, cfg.min_overlap_fraction):
        raise InsufficientOverlap(f"offset {d} leaves too little overlap")
    return _pearson(u[lo:hi], v[lo + d : hi + d])


def _pick_best(values: np.ndarray, dis: np.ndarray, djs: np.ndarray):
    """Argmax with ties broken by smallest |di|+|dj|, then lexicographic."""
    if not np.isfinite(values).any():
        raise InsufficientOverlap("no admissible offset")
    best = np.nanmax(values)
    rows, cols = np.nonzero(values == best)
    cand_di = dis[rows]
    cand_dj = djs[cols]
    order = np.lexsort((cand_dj, cand_di, np.abs(cand_di) + np.abs(cand_dj)))
    k = order[0]
    return float(best), Offset2D(int(cand_di[k]), int(cand_dj[k]))


def _integral(M: np.ndarray) -> np.ndarray:
    out = np.zeros((M.shape[0] + 1, M.shape[1] + 1))
    np.cumsum(np.cumsum(M, axis=0), axis=1, out=out[1:, 1:])
    return out


def _rect(I: np.ndarray, r0, r1, c0, c1) -> np.ndarray:
    """Rectangle sums for all (r, c) range combinations, broadcast to 2D."""
    return (
        I[np.ix_(r1, c1)] - I[np.ix_(r0, c1)] - I[np.ix_(r1, c0)] + I[np.ix_(r0, c0)]
    )


def _cached(cache, key, compute):
    if cache is None or key is None:
        return compute()
    if key not in cache:
        cache[key] = compute()
    return cache[key]


def _cross_sums(A, B, cache=None, key_a=None, key_b=None) -> np.ndarray:
    """Full cross-correlation sum table via FFT, with optional spectra reuse.

    Repeated calls against the same matrix (keyed by the caller) skip its
    forward transform; only the product and inverse transform remain.
    """
    m, n = A.shape
    p, q = B.shape
    out_shape = (m + p - 1, n + q - 1)
    fshape = (_fft.next_fast_len(out_shape[0]), _fft.next_fast_len(out_shape[1]))
    fa = _cached(
        cache,
        None if key_a is None else ("rfft2-flip", key_a, fshape),
        lambda: _fft.rfft2(A[::-1, ::-1], fshape),
    )
    fb = _cached(
        cache,
        None if key_b is None else ("rfft2", key_b, fshape),
        lambda: _fft.rfft2(B, fshape),
    )
    full = _fft.irfft2(fa * fb, fshape)
    return full[: out_shape[0], : out_shape[1]]


def pearson_table_2d(
    A, B, max_lag: int, min_overlap_fraction: float, cache=None, key_a=None, key_b=None
):
    """Pearson correlation at every offset |di|,|dj| <= max_lag in one shot.

    Returns (dis, djs, R) where R[i, j] is the correlation at
    (dis[i], djs[j]) and NaN marks inadmissible offsets. Cross sums come from
    one FFT cross-correlation; window sums and variances from integral images.
    Values match xcorr2_at to floating-point accuracy. The optional cache
    dict (with caller-stable keys) reuses FFT spectra and integral images of
    matrices that appear in many pairs.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    m, n = A.shape
    p, q = B.shape
    dis = np.arange(-max_lag, max_lag + 1)
    djs = np.arange(-max_lag, max_lag + 1)

    r0 = np.maximum(0, -dis)
    r1 = np.minimum(m, p - dis)
    c0 = np.maximum(0, -djs)
    c1 = np.minimum(n, q - djs)
    nr = np.maximum(0, r1 - r0)
    nc = np.maximum(0, c1 - c0)
    frac = min_overlap_fraction
    ok = ((nr >= frac * min(m, p)) & (nr > 0))[:, None] & (
        (nc >= frac * min(n, q)) & (nc > 0)
    )[None, :]
    if not ok.any():
        return dis, djs, np.full((dis.size, djs.size), np.nan)

    # clamp invalid ranges so integral lookups stay in bounds; masked later
    r0c = np.clip(r0, 0, m)
    r1c = np.clip(r1, 0, m)
    c0c = np.clip(c0, 0, n)
    c1c = np.clip(c1, 0, n)

    ia = _cached(cache, None if key_a is None else ("ii", key_a), lambda: _integral(A))
    ia2 = _cached(
        cache, None if key_a is None else ("ii2", key_a), lambda: _integral(A * A)
    )
    ib = _cached(cache, None if key_b is None else ("ii", key_b), lambda: _integral(B))
    ib2 = _cached(
        cache, None if key_b is None else ("ii2", key_b), lambda: _integral(B * B)
    )

    s_a = _rect(ia, r0c, r1c, c0c, c1c)
    s_a2 = _rect(ia2, r0c, r1c, c0c, c1c)
    b_r0 = np.clip(r0 + dis, 0, p)
    b_r1 = np.clip(r1 + dis, 0, p)
    b_c0 = np.clip(c0 + djs, 0, q)
    b_c1 = np.clip(c1 + djs, 0, q)
    s_b = _rect(ib, b_r0, b_r1, b_c0, b_c1)
    s_b2 = _rect(ib2, b_r0, b_r1, b_c0, b_c1)

    full = _cross_sums(A, B, cache, key_a, key_b)
    s_ab = full[np.ix_(dis + m - 1, djs + n - 1)]

    cnt = (nr[:, None] * nc[None, :]).astype(float)
    cnt[~ok] = 1.0  # avoid div by zero on masked cells
    cov = s_ab - s_a * s_b / cnt
    var_a = s_a2 - s_a * s_a / cnt
    var_b = s_b2 - s_b * s_b / cnt
    eps_a = _CONST_EPS * cnt * np.maximum(1.0, s_a2 / cnt)
    eps_b = _CONST_EPS * cnt * np.maximum(1.0, s_b2 / cnt)
    const = (var_a <= eps_a) | (var_b <= eps_b)
    denom = np.sqrt(np.clip(var_a, 0.0, None) * np.clip(var_b, 0.0, None))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = cov / denom
    r[const] = 0.0
    r[~ok] = np.nan
    return dis, djs, r


def pearson_table_1d(u, v, max_lag: int, min_overlap_fraction: float):
    """1D analogue of pearson_table_2d: (ds, r) with NaN for inadmissible."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    m = u.size
    p = v.size
    ds = np.arange(-max_lag, max_lag + 1)
    lo = np.maximum(0, -ds)
    hi = np.minimum(m, p - ds)
    cnt = np.maximum(0, hi - lo)
    ok = (cnt >= min_overlap_fraction * min(m, p)) & (cnt > 0)
    out = np.full(ds.size, np.nan)
    if not ok.any():
        return ds, out

    cu = np.concatenate([[0.0], np.cumsum(u)])
    cu2 = np.concatenate([[0.0], np.cumsum(u * u)])
    cv = np.concatenate([[0.0], np.cumsum(v)])
    cv2 = np.concatenate([[0.0], np.cumsum(v * v)])
    loc = np.clip(lo, 0, m)
    hic = np.clip(hi, 0, m)
    s_u = cu[hic] - cu[loc]
    s_u2 = cu2[hic] - cu2[loc]
    vlo = np.clip(lo + ds, 0, p)
    vhi = np.clip(hi + ds, 0, p)
    s_v = cv[vhi] - cv[vlo]
    s_v2 = cv2[vhi] - cv2[vlo]
    s_uv = fftconvolve(v, u[::-1], mode="full")[ds + m - 1]

    cntf = cnt.astype(float)
    cntf[~ok] = 1.0
    cov = s_uv - s_u * s_v / cntf
    var_u = s_u2 - s_u * s_u / cntf
    var_v = s_v2 - s_v * s_v / cntf
    eps_u = _CONST_EPS * cntf * np.maximum(1.0, s_u2 / cntf)
    eps_v = _CONST_EPS * cntf * np.maximum(1.0, s_v2 / cntf)
    const = (var_u <= eps_u) | (var_v <= eps_v)
    denom = np.sqrt(np.clip(var_u, 0.0, None) * np.clip(var_v, 0.0, None))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = cov / denom
    r[const] = 0.0
    r[~ok] = np.nan
    out = r
    return ds, out


def xcorr2_max(A, B, cfg: CorrConfig, diagonal_only: bool = False):
    """Max Pearson over the admissible offset grid.

    Restricting to diagonal offsets (di = dj) models a single shared delay,
    as a node comparison requires. Ties break toward the smallest |di|+|dj|,
    then lexicographically.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    lag = resolve_max_lag(cfg, min(A.shape), min(B.shape))
    dis, djs, table = pearson_table_2d(A, B, lag, cfg.min_overlap_fraction)
    if diagonal_only:
        diag = np.full_like(table, np.nan)
        idx = np.arange(dis.size)
        diag[idx, idx] = table[idx, idx]
        table = diag
    return _pick_best(table, dis, djs)


def xcorr1_max(u, v, cfg: CorrConfig):
    """Max Pearson over 1D offsets; same tie-break rule as xcorr2_max."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lag = resolve_max_lag(cfg, u.size, v.size)
    ds, vals = pearson_table_1d(u, v, lag, cfg.min_overlap_fraction)
    if not np.isfinite(vals).any():
        raise InsufficientOverlap("no admissible offset")
    best = np.nanmax(vals)
    cand = ds[vals == best]
    order = np.lexsort((cand, np.abs(cand)))
    return float(best), int(cand[order[0]])

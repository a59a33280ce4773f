"""Affinity assembly, spectral soft assignment, Hungarian hard assignment.

The affinity matrix scores the joint hypothesis "ego video i is top viewer k
AND ego video j is top viewer l" with the cross-correlation of the matching
edge features; diagonal entries blend the two node-level correlations. Two
variants exist: free (every entry takes its own best offset) and fixed
(every entry is evaluated at the offsets implied by one shared delay vector).

Offset-correlation tables for a graph pair are computed once by
AffinityBuilder, so repeated fixed-delay evaluations (the optimizers' inner
loop) reduce to table lookups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrConfig, Offset2D, pearson_table_1d, pearson_table_2d
from .correlation import resolve_max_lag
from .errors import NoConvergence, ZeroMatrix
from .features import FeatureConfig, ViewGraph


@dataclass
class AffinityMatrix:
    """Symmetric nonnegative (Ne*Nt) x (Ne*Nt) affinity with index (i,k) -> i*Nt+k."""

    data: np.ndarray
    n_ego: int
    n_top: int
    diagnostics: list = field(default_factory=list)

    def index(self, i: int, k: int) -> int:
        return i * self.n_top + k

    def validate(self) -> None:
        n = self.n_ego * self.n_top
        if self.data.shape != (n, n):
            raise ValueError("affinity shape mismatch")
        if not np.allclose(self.data, self.data.T):
            raise ValueError("affinity not symmetric")
        if (self.data < 0).any():
            raise ValueError("affinity has negative entries")


@dataclass
class SoftAssignment:
    P: np.ndarray  # (Ne, Nt), rows sum to 1


@dataclass
class HardAssignment:
    X: np.ndarray  # (Ne, Nt) binary, rows sum to 1, columns to <= 1

    @property
    def columns(self) -> np.ndarray:
        return self.X.argmax(axis=1)


@dataclass(frozen=True)
class SpectralConfig:
    power_iter_tol: float = 1e-10
    power_iter_max: int = 1000
    nonneg_floor: float = 0.0

    def __post_init__(self):
        if self.power_iter_tol <= 0:
            raise ValueError("power_iter_tol must be positive")


def _as_matrix(a) -> np.ndarray:
    return np.asarray(getattr(a, "data", a), dtype=float)


def _argmax_2d(table: np.ndarray, dis: np.ndarray, djs: np.ndarray):
    """(value, Offset2D) with ties to smallest |di|+|dj|, then lexicographic.

    Returns None when no offset is admissible.
    """
    if not np.isfinite(table).any():
        return None
    best = np.nanmax(table)
    rows, cols = np.nonzero(table == best)
    di = dis[rows]
    dj = djs[cols]
    k = np.lexsort((dj, di, np.abs(di) + np.abs(dj)))[0]
    return float(best), Offset2D(int(di[k]), int(dj[k]))


def _argmax_1d(vals: np.ndarray, ds: np.ndarray):
    if not np.isfinite(vals).any():
        return None
    best = np.nanmax(vals)
    cand = ds[vals == best]
    k = np.lexsort((cand, np.abs(cand)))[0]
    return float(best), int(cand[k])


class AffinityBuilder:
    """Precomputed offset-correlation tables for one (ego, top) graph pair.

    Tables cover all offsets |d| <= max_lag once; free affinities take the
    table max, fixed affinities index into it, and the delay optimizers reuse
    the same builder across hundreds of candidate delay vectors.
    """

    def __init__(self, ego: ViewGraph, top: ViewGraph, fcfg: FeatureConfig, ccfg: CorrConfig):
        if ego.view_kind != "ego" or top.view_kind != "top":
            raise ValueError("expected (ego, top) graphs in that order")
        if ego.n_nodes > top.n_nodes:
            raise ValueError(
                f"more egocentric videos ({ego.n_nodes}) than top viewers ({top.n_nodes})"
            )
        if ego.frame_rate != top.frame_rate:
            raise ValueError("graphs must share a frame rate; resample first")
        self.ego = ego
        self.top = top
        self.fcfg = fcfg
        self.ccfg = ccfg
        lengths = [ego.n_frames(v) for v in ego.node_ids]
        lengths.append(top.n_frames(top.node_ids[0]))
        self.max_lag = resolve_max_lag(ccfg, *lengths)
        self.offsets = np.arange(-self.max_lag, self.max_lag + 1)
        self._node2d: dict = {}
        self._node1d: dict = {}
        self._edge: dict = {}
        self._fft_cache: dict = {}

    # --- table access -----------------------------------------------------

    def node_table_2d(self, ego_id: str, top_id: str) -> np.ndarray:
        key = (ego_id, top_id)
        if key not in self._node2d:
            _, _, tab = pearson_table_2d(
                self.ego.node_features[ego_id].similarity,
                self.top.node_features[top_id].similarity,
                self.max_lag,
                self.ccfg.min_overlap_fraction,
                cache=self._fft_cache,
                key_a=("ego-node", ego_id),
                key_b=("top-node", top_id),
            )
            self._node2d[key] = tab
        return self._node2d[key]

    def node_table_1d(self, ego_id: str, top_id: str) -> np.ndarray:
        key = (ego_id, top_id)
        if key not in self._node1d:
            _, vals = pearson_table_1d(
                self.ego.node_features[ego_id].counts,
                self.top.node_features[top_id].counts,
                self.max_lag,
                self.ccfg.min_overlap_fraction,
            )
            self._node1d[key] = vals
        return self._node1d[key]

    def edge_table(self, ego_a: str, ego_b: str, top_k: str, top_l: str) -> np.ndarray:
        """Table for B^ego_(a,b) vs B^top_(k,l); rows move a, columns move b."""
        key = (ego_a, ego_b, top_k, top_l)
        if key not in self._edge:
            _, _, tab = pearson_table_2d(
                self.ego.edge_matrix(ego_a, ego_b),
                self.top.edge_matrix(top_k, top_l),
                self.max_lag,
                self.ccfg.min_overlap_fraction,
                cache=self._fft_cache,
                key_a=("ego-edge", ego_a, ego_b),
                key_b=("top-edge", top_k, top_l),
            )
            self._edge[key] = tab
        return self._edge[key]

    def _node_diag(self, ego_id: str, top_id: str) -> np.ndarray:
        return np.diagonal(self.node_table_2d(ego_id, top_id)).copy()

    # --- node/edge scores ---------------------------------------------------

    def node_free(self, ego_id: str, top_id: str, diagnostics=None):
        """Best blended node affinity and its offset (Eq.-6-style combination)."""
        if self.ccfg.diagonal_only_for_nodes:
            tab = self._node_diag(ego_id, top_id)
            best2 = _argmax_1d(tab, self.offsets)
            off2 = None if best2 is None else Offset2D(best2[1], best2[1])
        else:
            got = _argmax_2d(self.node_table_2d(ego_id, top_id), self.offsets, self.offsets)
            best2 = None if got is None else (got[0], got[1].di)
            off2 = None if got is None else got[1]
        best1 = _argmax_1d(self.node_table_1d(ego_id, top_id), self.offsets)
        v2 = 0.0
        v1 = 0.0
        if best2 is None:
            if diagnostics is not None:
                diagnostics.append(f"node ({ego_id},{top_id}): 2D term has no admissible offset")
        else:
            v2 = best2[0]
        if best1 is None:
            if diagnostics is not None:
                diagnostics.append(f"node ({ego_id},{top_id}): 1D term has no admissible offset")
        else:
            v1 = best1[0]
        value = self.fcfg.alpha * v2 + (1.0 - self.fcfg.alpha) * v1
        return value, off2, (None if best1 is None else best1[1])

    def node_fixed(self, ego_id: str, top_id: str, d: int, diagnostics=None) -> float:
        idx = d + self.max_lag
        tab2 = self.node_table_2d(ego_id, top_id)
        v2 = tab2[idx, idx]
        v1 = self.node_table_1d(ego_id, top_id)[idx]
        if np.isnan(v2):
            if diagnostics is not None:
                diagnostics.append(f"node ({ego_id},{top_id}) at d={d}: insufficient overlap (2D)")
            v2 = 0.0
        if np.isnan(v1):
            if diagnostics is not None:
                diagnostics.append(f"node ({ego_id},{top_id}) at d={d}: insufficient overlap (1D)")
            v1 = 0.0
        return self.fcfg.alpha * float(v2) + (1.0 - self.fcfg.alpha) * float(v1)

    # --- affinity assembly --------------------------------------------------

    def _check_delays(self, t_d) -> np.ndarray:
        delays = np.asarray(getattr(t_d, "delays", t_d), dtype=int)
        if delays.ndim != 1:
            raise ValueError("delay vector must be 1D")
        if np.abs(delays).max(initial=0) > self.max_lag:
            raise ValueError(f"|delay| exceeds max_lag={self.max_lag}")
        return delays

    def free(self, ego_ids=None) -> AffinityMatrix:
        return self._assemble(None, ego_ids)

    def fixed(self, t_d, ego_ids=None) -> AffinityMatrix:
        delays = self._check_delays(t_d)
        return self._assemble(delays, ego_ids)

    def _assemble(self, delays, ego_ids) -> AffinityMatrix:
        ids = list(self.ego.node_ids if ego_ids is None else ego_ids)
        tops = self.top.node_ids
        n_e = len(ids)
        n_t = len(tops)
        if delays is not None and delays.size != n_e:
            raise ValueError("delay vector length differs from ego node count")
        size = n_e * n_t
        data = np.zeros((size, size))
        diagnostics: list = []
        lag = self.max_lag
        for a in range(n_e):
            for k in range(n_t):
                if delays is None:
                    val, _, _ = self.node_free(ids[a], tops[k], diagnostics)
                else:
                    val = self.node_fixed(ids[a], tops[k], int(delays[a]), diagnostics)
                data[a * n_t + k, a * n_t + k] = max(val, 0.0)
        for a in range(n_e):
            for b in range(a + 1, n_e):
                for k in range(n_t):
                    for l in range(n_t):
                        if k == l:
                            continue
                        tab = self.edge_table(ids[a], ids[b], tops[k], tops[l])
                        if delays is None:
                            got = _argmax_2d(tab, self.offsets, self.offsets)
                            if got is None:
                                diagnostics.append(
                                    f"edge ({ids[a]}{ids[b]},{tops[k]}{tops[l]}): no admissible offset"
                                )
                                val = 0.0
                            else:
                                val = got[0]
                        else:
                            val = tab[int(delays[a]) + lag, int(delays[b]) + lag]
                            if np.isnan(val):
                                diagnostics.append(
                                    f"edge ({ids[a]}{ids[b]},{tops[k]}{tops[l]}) at "
                                    f"({delays[a]},{delays[b]}): insufficient overlap"
                                )
                                val = 0.0
                        val = max(float(val), 0.0)
                        row = a * n_t + k
                        col = b * n_t + l
                        data[row, col] = val
                        data[col, row] = val
        return AffinityMatrix(data, n_e, n_t, diagnostics)

    def median_suggestions(self, ego_ids=None) -> dict:
        """Per-ego-node delay suggestions from every node and edge argmax."""
        ids = list(self.ego.node_ids if ego_ids is None else ego_ids)
        tops = self.top.node_ids
        out = {vid: [] for vid in ids}
        for vid in ids:
            for k in tops:
                if self.ccfg.diagonal_only_for_nodes:
                    got = _argmax_1d(self._node_diag(vid, k), self.offsets)
                    if got is not None:
                        out[vid].append(got[1])
                else:
                    got = _argmax_2d(self.node_table_2d(vid, k), self.offsets, self.offsets)
                    if got is not None:
                        out[vid].append(got[1].di)
        for a_idx in range(len(ids)):
            for b_idx in range(a_idx + 1, len(ids)):
                a, b = ids[a_idx], ids[b_idx]
                for k in tops:
                    for l in tops:
                        if k == l:
                            continue
                        got = _argmax_2d(self.edge_table(a, b, k, l), self.offsets, self.offsets)
                        if got is not None:
                            out[a].append(got[1].di)
                            out[b].append(got[1].dj)
        return out


class SubsetBuilder:
    """View of an AffinityBuilder restricted to a subset of ego nodes.

    Shares the base builder's correlation tables, so evaluating many ego
    subsets of one scenario costs no extra FFTs.
    """

    def __init__(self, base: AffinityBuilder, ego_ids):
        self.base = base
        self.ego_ids = list(ego_ids)
        missing = set(self.ego_ids) - set(base.ego.node_ids)
        if missing:
            raise ValueError(f"unknown ego ids: {sorted(missing)}")
        self.max_lag = base.max_lag
        self.top = base.top
        self.fcfg = base.fcfg
        self.ccfg = base.ccfg

    def free(self) -> AffinityMatrix:
        return self.base.free(self.ego_ids)

    def fixed(self, t_d) -> AffinityMatrix:
        return self.base.fixed(t_d, self.ego_ids)

    def median_suggestions(self) -> dict:
        return self.base.median_suggestions(self.ego_ids)


def build_affinity_free(
    ego: ViewGraph, top: ViewGraph, fcfg: FeatureConfig, ccfg: CorrConfig
) -> AffinityMatrix:
    """Affinity with every entry maximized over its own offsets."""
    return AffinityBuilder(ego, top, fcfg, ccfg).free()


def build_affinity_fixed(
    ego: ViewGraph, top: ViewGraph, t_d, fcfg: FeatureConfig, ccfg: CorrConfig
) -> AffinityMatrix:
    """Affinity with every entry evaluated at the offsets implied by t_d."""
    return AffinityBuilder(ego, top, fcfg, ccfg).fixed(t_d)


def leading_eigenvector(A, cfg: SpectralConfig = SpectralConfig()):
    """Dominant eigenpair by power iteration from the uniform positive vector.

    Returns (eigenvalue, unit vector). The vector stays elementwise
    nonnegative for a nonnegative symmetric matrix. Raises ZeroMatrix on an
    all-zero input and NoConvergence (carrying the last iterate) at the
    iteration cap.
    """
    M = _as_matrix(A)
    n = M.shape[0]
    if not M.any():
        raise ZeroMatrix("affinity matrix is all zero")
    v = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(cfg.power_iter_max):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise ZeroMatrix("power iteration hit the zero vector")
        v_new = w / norm
        delta = np.abs(v_new - v).max()
        v = v_new
        if delta < cfg.power_iter_tol:
            break
    else:
        lam = float(v @ (M @ v))
        raise NoConvergence(lam, np.maximum(v, cfg.nonneg_floor), cfg.power_iter_max)
    lam = float(v @ (M @ v))
    return lam, np.maximum(v, cfg.nonneg_floor)


def soft_assignment(p, n_ego: int, n_top: int) -> SoftAssignment:
    """Reshape the eigenvector to (Ne, Nt) and row-normalize.

    An all-zero row becomes uniform 1/Nt.
    """
    p = np.maximum(np.asarray(p, dtype=float), 0.0)
    if p.size != n_ego * n_top:
        raise ValueError("vector length must be n_ego * n_top")
    P = p.reshape(n_ego, n_top).copy()
    sums = P.sum(axis=1)
    zero = sums == 0.0
    P[zero] = 1.0 / n_top
    P[~zero] /= sums[~zero, None]
    return SoftAssignment(P)


def _min_cost_square(cost: np.ndarray):
    """Exact square min-cost assignment via potentials + augmenting paths.

    Returns (col_of_row, ys, yt): the assignment and the dual potentials.
    """
    n = cost.shape[0]
    job = np.full(n + 1, -1, dtype=int)  # job[w] = row assigned to column w
    ys = np.zeros(n)
    yt = np.zeros(n + 1)
    for j_cur in range(n):
        w_cur = n
        job[n] = j_cur
        min_to = np.full(n + 1, np.inf)
        prev = np.full(n + 1, -1, dtype=int)
        in_z = np.zeros(n + 1, dtype=bool)
        while job[w_cur] != -1:
            in_z[w_cur] = True
            j = job[w_cur]
            active = ~in_z[:n]
            rcost = cost[j, active] - ys[j] - yt[:n][active]
            sub = min_to[:n][active]
            improved = rcost < sub
            sub[improved] = rcost[improved]
            min_to[:n][active] = sub
            prev_active = prev[:n][active]
            prev_active[improved] = w_cur
            prev[:n][active] = prev_active
            idx_active = np.nonzero(active)[0]
            pick = int(np.argmin(sub))
            delta = sub[pick]
            w_next = int(idx_active[pick])
            upd = in_z.copy()
            ys[job[:n + 1][upd]] += delta
            yt[upd] -= delta
            min_to[~upd] -= delta
            w_cur = w_next
        while w_cur != n:
            job[w_cur] = job[prev[w_cur]]
            w_cur = prev[w_cur]
    col_of_row = np.full(n, -1, dtype=int)
    for w in range(n):
        if job[w] != -1:
            col_of_row[job[w]] = w
    return col_of_row, ys, yt


def _max_profit_value(profit: np.ndarray) -> float:
    """Optimal total profit for a (possibly rectangular, rows <= cols) matrix."""
    n_r, n_c = profit.shape
    if n_r == 0:
        return 0.0
    n = max(n_r, n_c)
    cost = np.zeros((n, n))
    cost[:n_r, :n_c] = profit.max() - profit
    cols, _, _ = _min_cost_square(cost)
    chosen = cols[:n_r]
    real = chosen < n_c
    return float(profit[np.nonzero(real)[0], chosen[real]].sum())


def hungarian(P) -> HardAssignment:
    """Max-profit injective assignment, lexicographically smallest among ties.

    Runs on the profit matrix directly (rows may contain zeros); the
    rectangular case pads with zero-profit dummies. After the exact solve, a
    refinement pass walks rows in order and keeps the smallest column that
    still achieves the optimum, pruning candidates with positive reduced cost.
    """
    profit = np.asarray(getattr(P, "P", P), dtype=float)
    n_e, n_t = profit.shape
    if n_e > n_t:
        raise ValueError(f"more rows ({n_e}) than columns ({n_t})")
    n = n_t
    cost = np.zeros((n, n))
    cost[:n_e] = profit.max() - profit
    cols, ys, yt = _min_cost_square(cost)
    best_total = float(profit[np.arange(n_e), cols[:n_e]].sum())
    tol = 1e-9 * (1.0 + abs(best_total))

    chosen = np.full(n_e, -1, dtype=int)
    available = list(range(n_t))
    fixed_profit = 0.0
    deviated = False
    for i in range(n_e):
        for c in available:
            if not deviated and c == int(cols[i]):
                break  # the base solution already achieves the optimum here
            if cost[i, c] - ys[i] - yt[c] > tol:
                continue  # forcing (i, c) is provably suboptimal
            rest_rows = np.arange(i + 1, n_e)
            rest_cols = [cc for cc in available if cc != c]
            rest = _max_profit_value(profit[np.ix_(rest_rows, rest_cols)])
            if fixed_profit + profit[i, c] + rest >= best_total - tol:
                deviated = True
                break
        else:  # numerical fallback: keep the base solution's column
            c = int(cols[i]) if int(cols[i]) in available else available[0]
        chosen[i] = c
        fixed_profit += profit[i, c]
        available.remove(c)
    X = np.zeros((n_e, n_t), dtype=int)
    X[np.arange(n_e), chosen] = 1
    return HardAssignment(X)


def matching_score(A, X) -> float:
    """Quadratic form x^T A x for the vectorized hard assignment."""
    M = _as_matrix(A)
    x = np.asarray(getattr(X, "X", X), dtype=float).reshape(-1)
    if x.size != M.shape[0]:
        raise ValueError("assignment size does not match affinity")
    return float(x @ M @ x)


def report_dict(A: AffinityMatrix, P: SoftAssignment, X: HardAssignment, score: float) -> dict:
    """JSON-ready summary: dimensions, row-major entries, score, diagnostics."""
    return {
        "n_ego": A.n_ego,
        "n_top": A.n_top,
        "affinity": [float(v) for v in A.data.ravel()],
        "soft_assignment": [float(v) for v in P.P.ravel()],
        "hard_assignment": [int(v) for v in X.X.ravel()],
        "score": float(score),
        "diagnostics": list(A.diagnostics),
    }

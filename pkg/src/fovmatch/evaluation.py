"""Evaluation harness: ranking, CMC curves, accuracy, sweeps, baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FovMatchError
from .features import build_ego_graph, build_top_graph, ViewGraph
from .geometry import GeometryConfig
from .matching import AffinityBuilder, hungarian
from .pipeline import PipelineConfig, run_pipeline
from .simulator import Scenario


@dataclass
class CmcCurve:
    """Cumulative match fractions indexed by rank (1-based rank r = index r-1)."""

    hits_at_rank: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hits_at_rank, dtype=float)
        if np.any(np.diff(h) < -1e-12):
            raise ValueError("CMC curve must be non-decreasing")
        self.hits_at_rank = h

    def at(self, rank: int) -> float:
        return float(self.hits_at_rank[rank - 1])


@dataclass
class EvalRow:
    method: str
    init: str
    accuracy: float
    cmc: CmcCurve | None = None
    score: float | None = None
    timing_s: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def add(self, row: EvalRow) -> None:
        if not 0.0 <= row.accuracy <= 1.0:
            raise ValueError("accuracy must be in [0, 1]")
        self.rows.append(row)

    def to_dicts(self) -> list:
        out = []
        for r in self.rows:
            out.append(
                {
                    "method": r.method,
                    "init": r.init,
                    "accuracy": r.accuracy,
                    "score": r.score,
                    "cmc": None if r.cmc is None else [float(v) for v in r.cmc.hits_at_rank],
                    **r.extra,
                }
            )
        return out


def scenario_graphs(scenario: Scenario, geo: GeometryConfig, pcfg: PipelineConfig):
    """Build the (ego, top) graph pair of one scenario."""
    top = build_top_graph(scenario.trajectories, geo, pcfg.features)
    ego = build_ego_graph(scenario.ego_streams, pcfg.features)
    return ego, top


def truth_columns(scenario: Scenario, ego_ids, top_ids) -> np.ndarray:
    """Ground-truth top-node index per ego node, in the given orders."""
    return np.array(
        [top_ids.index(scenario.assignment[vid]) for vid in ego_ids], dtype=int
    )


def assignment_accuracy(X, truth) -> float:
    """Fraction of ego rows assigned to their true top column."""
    cols = np.asarray(getattr(X, "columns", X), dtype=int)
    truth = np.asarray(truth, dtype=int)
    if cols.shape != truth.shape:
        raise ValueError("assignment and truth lengths differ")
    return float(np.mean(cols == truth))


def viewer_cmc(P, truth) -> CmcCurve:
    """CMC of the soft assignment: rank of the true column per ego row.

    Ties take the worst (pessimistic) rank, so degenerate uniform rows score
    as badly as they deserve.
    """
    mat = np.asarray(getattr(P, "P", P), dtype=float)
    truth = np.asarray(truth, dtype=int)
    n_e, n_t = mat.shape
    if len(set(truth.tolist())) != truth.size:
        raise ValueError("truth assignment must be injective")
    ranks = np.array(
        [int(np.sum(mat[i] >= mat[i, truth[i]])) for i in range(n_e)], dtype=int
    )
    hits = np.array([np.mean(ranks <= r) for r in range(1, n_t + 1)])
    return CmcCurve(hits)


def rank_topviews(
    ego: ViewGraph,
    candidates,
    pcfg: PipelineConfig,
    true_index: int | None = None,
):
    """Score the ego set against each candidate top-view graph and sort.

    Returns (ranked list of (candidate index, score), rank of the true
    candidate or None, diagnostics). Failed candidates sink to the bottom.
    """
    candidates = list(candidates)
    if len(candidates) < 2:
        raise ValueError("need at least 2 candidate top views")
    scores = []
    diagnostics = []
    for idx, top in enumerate(candidates):
        try:
            result = run_pipeline(ego, top, pcfg)
            scores.append((idx, result.score))
        except FovMatchError as err:
            diagnostics.append(f"candidate {idx}: {type(err).__name__}: {err}")
            scores.append((idx, -np.inf))
    ranked = sorted(scores, key=lambda t: (-t[1], t[0]))
    rank = None
    if true_index is not None:
        rank = 1 + [idx for idx, _ in ranked].index(true_index)
    return ranked, rank, diagnostics


def _ego_subsets(n_ego: int, cap: int = 63, seed: int = 0):
    """All non-empty index subsets, or `cap` distinct ones sampled by seed."""
    total = (1 << n_ego) - 1
    if total <= cap:
        masks = range(1, total + 1)
    else:
        rng = np.random.default_rng(seed)
        masks = set()
        while len(masks) < cap:
            masks.add(int(rng.integers(1, total + 1)))
        masks = sorted(masks)
    for mask in masks:
        yield [i for i in range(n_ego) if mask >> i & 1]


RATIO_BINS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def sweep_completeness(
    scenarios,
    geo: GeometryConfig,
    pcfg: PipelineConfig,
    subset_cap: int = 63,
    seed: int = 0,
):
    """Accuracy vs completeness ratio n_ego_used / n_top over ego subsets.

    Returns a list of bin rows: {lo, hi, mean_accuracy, count}.
    """
    bin_acc = [[] for _ in range(len(RATIO_BINS) - 1)]
    for scenario in scenarios:
        if scenario.config.n_ego < 2:
            raise ValueError("completeness sweep needs scenarios with n_ego >= 2")
        ego, top = scenario_graphs(scenario, geo, pcfg)
        builder = AffinityBuilder(ego, top, pcfg.features, pcfg.correlation)
        truth_all = truth_columns(scenario, ego.node_ids, top.node_ids)
        for subset in _ego_subsets(ego.n_nodes, subset_cap, seed):
            ids = [ego.node_ids[i] for i in subset]
            result = run_pipeline(ego, top, pcfg, builder=builder, ego_subset=ids)
            acc = assignment_accuracy(result.hard, truth_all[subset])
            ratio = len(subset) / top.n_nodes
            for b in range(len(RATIO_BINS) - 1):
                if RATIO_BINS[b] < ratio <= RATIO_BINS[b + 1]:
                    bin_acc[b].append(acc)
                    break
    rows = []
    for b in range(len(RATIO_BINS) - 1):
        rows.append(
            {
                "ratio_lo": RATIO_BINS[b],
                "ratio_hi": RATIO_BINS[b + 1],
                "mean_accuracy": float(np.mean(bin_acc[b])) if bin_acc[b] else None,
                "count": len(bin_acc[b]),
            }
        )
    return rows


MIN_FEASIBLE_FRAMES = 4


def _truncated(scenario: Scenario, length: int) -> Scenario:
    from dataclasses import replace as dc_replace

    from .features import EgoStream
    from .geometry import Trajectory

    trajs = [
        Trajectory(t.viewer_id, t.positions[:length], t.frame_rate)
        for t in scenario.trajectories
    ]
    streams = [
        EgoStream(s.video_id, s.descriptors[:length], s.counts[:length], s.frame_rate)
        for s in scenario.ego_streams
    ]
    return Scenario(
        dc_replace(scenario.config, duration_frames=length, duration_bounds=None),
        scenario.world,
        trajs,
        streams,
        scenario.assignment,
        scenario.delays,
    )


def sweep_length(scenario: Scenario, geo: GeometryConfig, pcfg: PipelineConfig, lengths):
    """Accuracy vs stream prefix length; infeasibly short rows are skipped."""
    rows = []
    full = scenario.config.duration_frames
    for length in lengths:
        length = int(min(length, full))
        resampled = length * pcfg.features.resample_rate / scenario.config.frame_rate
        if resampled < MIN_FEASIBLE_FRAMES:
            rows.append(
                {
                    "length": length,
                    "accuracy": None,
                    "skipped": True,
                    "reason": f"resampled length {resampled:.0f} below feasibility",
                }
            )
            continue
        sub = _truncated(scenario, length)
        try:
            ego, top = scenario_graphs(sub, geo, pcfg)
            result = run_pipeline(ego, top, pcfg)
        except FovMatchError as err:
            rows.append(
                {
                    "length": length,
                    "accuracy": None,
                    "skipped": True,
                    "reason": f"{type(err).__name__}: {err}",
                }
            )
            continue
        truth = truth_columns(sub, result.ego_ids, result.top_ids)
        rows.append(
            {
                "length": length,
                "accuracy": assignment_accuracy(result.hard, truth),
                "skipped": False,
                "reason": "",
            }
        )
    return rows


def _unary_profit(builder: AffinityBuilder, blend: str) -> np.ndarray:
    """Node-level profit matrix: '1d' counts only, or the full 'blend'."""
    ego_ids = builder.ego.node_ids
    top_ids = builder.top.node_ids
    out = np.zeros((len(ego_ids), len(top_ids)))
    from .matching import _argmax_1d

    for i, e in enumerate(ego_ids):
        for k, t in enumerate(top_ids):
            if blend == "1d":
                got = _argmax_1d(builder.node_table_1d(e, t), builder.offsets)
                out[i, k] = got[0] if got else 0.0
            else:
                val, _, _ = builder.node_free(e, t)
                out[i, k] = val
    return out


def run_baselines(
    scenario: Scenario,
    geo: GeometryConfig,
    pcfg: PipelineConfig,
    seed: int = 0,
    random_draws: int = 100,
) -> EvalReport:
    """The four reference rows: random, counts-only, unary-only, free matching."""
    ego, top = scenario_graphs(scenario, geo, pcfg)
    builder = AffinityBuilder(ego, top, pcfg.features, pcfg.correlation)
    truth = truth_columns(scenario, ego.node_ids, top.node_ids)
    n_e = ego.n_nodes
    n_t = top.n_nodes
    report = EvalReport()

    rng = np.random.default_rng(seed)
    accs = [
        assignment_accuracy(rng.permutation(n_t)[:n_e], truth)
        for _ in range(random_draws)
    ]
    report.add(EvalRow("random", "none", float(np.mean(accs))))

    for label, blend in (("counts_only", "1d"), ("unary_only", "blend")):
        profit = _unary_profit(builder, blend)
        X = hungarian(profit)
        report.add(
            EvalRow(
                label,
                "none",
                assignment_accuracy(X, truth),
                cmc=viewer_cmc(profit, truth),  # CMC only needs row order
            )
        )

    free_cfg = PipelineConfig(
        method="free",
        init=pcfg.init,
        features=pcfg.features,
        correlation=pcfg.correlation,
        spectral=pcfg.spectral,
        optimizer=pcfg.optimizer,
    )
    result = run_pipeline(ego, top, free_cfg, builder=builder)
    report.add(
        EvalRow(
            "baseline_free",
            "none",
            assignment_accuracy(result.hard, truth),
            cmc=viewer_cmc(result.soft, truth),
            score=result.score,
        )
    )
    return report

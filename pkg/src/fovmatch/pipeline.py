"""One-call drivers tying graphs, affinity, delays and assignment together."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrConfig
from .delay_opt import (
    DelayVector,
    OptimizerConfig,
    OptimizationTrace,
    init_delays_median,
    init_delays_zero,
    optimize_matching_score,
    optimize_spectral,
)
from .errors import NoConvergence
from .features import FeatureConfig, ViewGraph
from .matching import (
    AffinityBuilder,
    AffinityMatrix,
    HardAssignment,
    SoftAssignment,
    SpectralConfig,
    SubsetBuilder,
    hungarian,
    leading_eigenvector,
    matching_score,
    soft_assignment,
)

METHODS = ("free", "spectral", "score")
INITS = ("zero", "median")


@dataclass
class PipelineConfig:
    """Bundle of the per-stage configs plus method/init selection."""

    method: str = "score"
    init: str = "median"
    features: FeatureConfig = field(default_factory=FeatureConfig)
    correlation: CorrConfig = field(default_factory=CorrConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")


@dataclass
class MatchResult:
    affinity: AffinityMatrix
    soft: SoftAssignment
    hard: HardAssignment
    delays: DelayVector
    score: float
    trace: OptimizationTrace | None
    ego_ids: list
    top_ids: list

    def assigned_top_ids(self) -> list:
        return [self.top_ids[c] for c in self.hard.columns]

    def assignment_map(self) -> dict:
        return dict(zip(self.ego_ids, self.assigned_top_ids()))


def _eigenvector(A, scfg):
    try:
        _, p = leading_eigenvector(A, scfg)
    except NoConvergence as err:
        p = err.eigenvector
    return p


def run_pipeline(
    ego: ViewGraph,
    top: ViewGraph,
    cfg: PipelineConfig | None = None,
    builder: AffinityBuilder | None = None,
    ego_subset=None,
) -> MatchResult:
    """Full matching run on prebuilt view graphs.

    method "free": per-entry best offsets, one spectral assignment.
    method "spectral"/"score": delay init (zero or median of suggestions)
    followed by the corresponding iterative optimization. ego_subset
    restricts the run to some ego nodes while reusing the builder's tables.
    """
    cfg = cfg or PipelineConfig()
    if builder is None:
        builder = AffinityBuilder(ego, top, cfg.features, cfg.correlation)
    ego_ids = list(ego.node_ids if ego_subset is None else ego_subset)
    if ego_subset is not None:
        builder = SubsetBuilder(builder, ego_ids)
    n_e = len(ego_ids)
    n_t = top.n_nodes
    if cfg.method == "free":
        A = builder.free()
        p = _eigenvector(A, cfg.spectral)
        P = soft_assignment(p, n_e, n_t)
        X = hungarian(P)
        delays = init_delays_zero(n_e)
        trace = None
    else:
        if cfg.init == "median":
            t0 = init_delays_median(ego, top, cfg.correlation, cfg.features, builder=builder)
        else:
            t0 = init_delays_zero(n_e)
        optimize = optimize_spectral if cfg.method == "spectral" else optimize_matching_score
        delays, A, P, X, trace = optimize(
            ego, top, t0, cfg.optimizer, cfg.features, cfg.correlation, cfg.spectral,
            builder=builder,
        )
    return MatchResult(
        affinity=A,
        soft=P,
        hard=X,
        delays=delays,
        score=matching_score(A, X),
        trace=trace,
        ego_ids=ego_ids,
        top_ids=list(top.node_ids),
    )

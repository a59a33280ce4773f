"""Joint time-delay and assignment optimization.

Both optimizers run the same discrete steepest-ascent loop over the delay
vector (one coordinate moves by one step per iteration), differing only in
the objective: the affinity's leading eigenvalue, or the graph-matching
score with the assignment recomputed per candidate. The objective is
piecewise constant in integer frames, so the "gradient step" is the best of
the 2*Ne single-coordinate neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrConfig
from .errors import NoConvergence, ZeroMatrix
from .features import FeatureConfig, ViewGraph
from .matching import (
    AffinityBuilder,
    AffinityMatrix,
    HardAssignment,
    SoftAssignment,
    SpectralConfig,
    hungarian,
    leading_eigenvector,
    matching_score,
    soft_assignment,
)


@dataclass
class DelayVector:
    """Per-egocentric-video offset relative to the top-view clock, in frames."""

    delays: np.ndarray
    step_frames: int = 1

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=int)
        if d.ndim != 1:
            raise ValueError("delays must be a 1D integer vector")
        if self.step_frames < 1:
            raise ValueError("step_frames must be >= 1")
        self.delays = d

    def __len__(self) -> int:
        return self.delays.size


@dataclass(frozen=True)
class OptimizerConfig:
    itr_max: int = 100
    epsilon: float = 1e-6
    objective: str = "spectral"  # "spectral" | "matching_score"

    def __post_init__(self):
        if self.itr_max < 1:
            raise ValueError("itr_max must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.objective not in ("spectral", "matching_score"):
            raise ValueError("objective must be 'spectral' or 'matching_score'")


@dataclass
class OptimizationTrace:
    """Accepted states in order: (delays tuple, objective), plus stop reason."""

    steps: list = field(default_factory=list)
    termination: str = ""  # "local_max" | "itr_max"

    def append(self, delays: np.ndarray, value: float) -> None:
        self.steps.append((tuple(int(d) for d in delays), float(value)))

    @property
    def values(self) -> list:
        return [v for _, v in self.steps]

    def to_dict(self) -> dict:
        return {
            "steps": [{"t_d": list(t), "objective": v} for t, v in self.steps],
            "termination": self.termination,
        }


def init_delays_zero(n_ego: int, step_frames: int = 1) -> DelayVector:
    """All-zero init: assume the videos are time-synchronized."""
    return DelayVector(np.zeros(n_ego, dtype=int), step_frames)


def _lower_median(values) -> int:
    ordered = sorted(values)
    return int(ordered[(len(ordered) - 1) // 2])


def _round_to_step(value: int, step: int) -> int:
    if step == 1:
        return int(value)
    return int(step * np.floor(value / step + 0.5))


def init_delays_median(
    ego: ViewGraph,
    top: ViewGraph,
    ccfg: CorrConfig,
    fcfg: FeatureConfig | None = None,
    step_frames: int = 1,
    builder: AffinityBuilder | None = None,
) -> DelayVector:
    """Median of all delay suggestions from node and edge argmax offsets.

    Each node correlation suggests one delay for its ego video; each edge
    correlation suggests one delay per participating ego video (its own shift
    component of the argmax). The per-video median (lower median for even
    counts) seeds the local search near the consensus.
    """
    if builder is None:
        builder = AffinityBuilder(ego, top, fcfg or FeatureConfig(), ccfg)
    suggestions = builder.median_suggestions()
    delays = np.array(
        [
            _round_to_step(_lower_median(votes), step_frames)
            for votes in suggestions.values()
        ],
        dtype=int,
    )
    return DelayVector(delays, step_frames)


def _eigen_value(A: AffinityMatrix, scfg: SpectralConfig) -> tuple[float, np.ndarray]:
    try:
        return leading_eigenvector(A, scfg)
    except NoConvergence as err:  # non-fatal: rank with the last iterate
        return err.eigenvalue, err.eigenvector


class _Search:
    """Shared steepest-ascent loop; the objective callback varies."""

    def __init__(self, builder, t0: DelayVector, ocfg, max_lag):
        self.builder = builder
        self.ocfg = ocfg
        self.max_lag = max_lag
        self.step = t0.step_frames
        self.t = np.clip(np.asarray(t0.delays, dtype=int), -max_lag, max_lag)
        self.cache: dict = {}

    def run(self, objective):
        trace = OptimizationTrace()
        current = objective(self.t)
        trace.append(self.t, current)
        for _ in range(self.ocfg.itr_max):
            best_val = -np.inf
            best_t = None
            for i in range(self.t.size):
                for delta in (-self.step, self.step):
                    cand = self.t.copy()
                    cand[i] += delta
                    if abs(cand[i]) > self.max_lag:
                        continue
                    key = tuple(cand)
                    if key not in self.cache:
                        try:
                            self.cache[key] = objective(cand)
                        except ZeroMatrix:
                            self.cache[key] = 0.0  # degenerate neighbor

                    # strict > keeps the earliest candidate on ties:
                    # lowest coordinate first, negative direction first
                    if self.cache[key] > best_val:
                        best_val = self.cache[key]
                        best_t = cand
            if best_t is None or best_val <= current + self.ocfg.epsilon:
                trace.termination = "local_max"
                break
            self.t = best_t
            current = best_val
            trace.append(self.t, current)
        else:
            trace.termination = "itr_max"
        return self.t, current, trace


def _finalize(builder, t, scfg):
    A = builder.fixed(t)
    _, p = _eigen_value(A, scfg)
    P = soft_assignment(p, A.n_ego, A.n_top)
    X = hungarian(P)
    return A, P, X


def optimize_spectral(
    ego: ViewGraph,
    top: ViewGraph,
    t0: DelayVector,
    ocfg: OptimizerConfig = OptimizerConfig(),
    fcfg: FeatureConfig = FeatureConfig(),
    ccfg: CorrConfig = CorrConfig(),
    scfg: SpectralConfig = SpectralConfig(),
    builder: AffinityBuilder | None = None,
):
    """Delay search maximizing the affinity's leading eigenvalue.

    The assignment is computed once, from the affinity at the final delays.
    Returns (DelayVector, AffinityMatrix, SoftAssignment, HardAssignment,
    OptimizationTrace).
    """
    if builder is None:
        builder = AffinityBuilder(ego, top, fcfg, ccfg)

    def objective(t):
        lam, _ = _eigen_value(builder.fixed(t), scfg)
        return lam

    search = _Search(builder, t0, ocfg, builder.max_lag)
    t, _, trace = search.run(objective)
    A, P, X = _finalize(builder, t, scfg)
    return DelayVector(t, t0.step_frames), A, P, X, trace


def optimize_matching_score(
    ego: ViewGraph,
    top: ViewGraph,
    t0: DelayVector,
    ocfg: OptimizerConfig = OptimizerConfig(),
    fcfg: FeatureConfig = FeatureConfig(),
    ccfg: CorrConfig = CorrConfig(),
    scfg: SpectralConfig = SpectralConfig(),
    builder: AffinityBuilder | None = None,
):
    """Delay search maximizing the matching score x^T A(t_d) x.

    Goes back and forth between delays and assignment: every candidate delay
    vector gets a fresh spectral soft assignment and Hungarian hard
    assignment, and only the hard assignment enters the score.
    """
    if builder is None:
        builder = AffinityBuilder(ego, top, fcfg, ccfg)

    def objective(t):
        A = builder.fixed(t)
        _, p = _eigen_value(A, scfg)
        X = hungarian(soft_assignment(p, A.n_ego, A.n_top))
        return matching_score(A, X)

    search = _Search(builder, t0, ocfg, builder.max_lag)
    t, _, trace = search.run(objective)
    A, P, X = _finalize(builder, t, scfg)
    return DelayVector(t, t0.step_frames), A, P, X, trace

"""Match egocentric cameras to viewers in a top-view video.

Both views become graphs (nodes = videos/viewers, edges = pairwise
relations); a cross-correlation affinity matrix scores joint hypotheses;
spectral matching plus Hungarian assignment answers "who holds which
camera", optionally refining per-video time delays jointly with the
assignment. A bundled synthetic-scene simulator provides ground truth.
"""

from .correlation import (
    CorrConfig,
    Offset2D,
    xcorr1_at,
    xcorr1_max,
    xcorr2_at,
    xcorr2_max,
)
from .delay_opt import (
    DelayVector,
    OptimizationTrace,
    OptimizerConfig,
    init_delays_median,
    init_delays_zero,
    optimize_matching_score,
    optimize_spectral,
)
from .errors import (
    AllStationary,
    DimensionMismatch,
    FovMatchError,
    InfeasibleMotion,
    InsufficientOverlap,
    MismatchedLengths,
    NoConvergence,
    ZeroMatrix,
)
from .estimator import EgoTopMatcher
from .evaluation import (
    CmcCurve,
    EvalReport,
    EvalRow,
    assignment_accuracy,
    rank_topviews,
    run_baselines,
    sweep_completeness,
    sweep_length,
    viewer_cmc,
)
from .features import (
    EgoStream,
    FeatureConfig,
    ViewGraph,
    build_ego_graph,
    build_top_graph,
    gist_similarity,
    ingest_detections,
    resample,
)
from .geometry import (
    FovCone,
    GeometryConfig,
    Trajectory,
    cone_at,
    cone_iou,
    count_in_cone,
    headings,
)
from .matching import (
    AffinityBuilder,
    AffinityMatrix,
    HardAssignment,
    SoftAssignment,
    SpectralConfig,
    build_affinity_fixed,
    build_affinity_free,
    hungarian,
    leading_eigenvector,
    matching_score,
    soft_assignment,
)
from .pipeline import MatchResult, PipelineConfig, run_pipeline
from .simulator import Scenario, ScenarioConfig, World, emit, generate, load_scenario_dir

__all__ = [
    "AffinityBuilder",
    "AffinityMatrix",
    "AllStationary",
    "CmcCurve",
    "CorrConfig",
    "DelayVector",
    "DimensionMismatch",
    "EgoStream",
    "EgoTopMatcher",
    "EvalReport",
    "EvalRow",
    "FeatureConfig",
    "FovCone",
    "FovMatchError",
    "GeometryConfig",
    "HardAssignment",
    "InfeasibleMotion",
    "InsufficientOverlap",
    "MatchResult",
    "MismatchedLengths",
    "NoConvergence",
    "Offset2D",
    "OptimizationTrace",
    "OptimizerConfig",
    "PipelineConfig",
    "Scenario",
    "ScenarioConfig",
    "SoftAssignment",
    "SpectralConfig",
    "Trajectory",
    "ViewGraph",
    "World",
    "ZeroMatrix",
    "assignment_accuracy",
    "build_affinity_fixed",
    "build_affinity_free",
    "build_ego_graph",
    "build_top_graph",
    "cone_at",
    "cone_iou",
    "count_in_cone",
    "emit",
    "generate",
    "gist_similarity",
    "headings",
    "hungarian",
    "ingest_detections",
    "init_delays_median",
    "init_delays_zero",
    "leading_eigenvector",
    "load_scenario_dir",
    "matching_score",
    "optimize_matching_score",
    "optimize_spectral",
    "rank_topviews",
    "resample",
    "run_baselines",
    "run_pipeline",
    "soft_assignment",
    "sweep_completeness",
    "sweep_length",
    "viewer_cmc",
    "xcorr1_at",
    "xcorr1_max",
    "xcorr2_at",
    "xcorr2_max",
]

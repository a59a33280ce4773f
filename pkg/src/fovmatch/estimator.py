"""sklearn-style facade over the matching pipeline.

EgoTopMatcher carries every pipeline knob as a constructor parameter (so
get_params/set_params/clone work for grid sweeps) and exposes the usual
fitted attributes after fit(ego, top).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .correlation import CorrConfig
from .delay_opt import OptimizerConfig
from .features import EgoStream, FeatureConfig, ViewGraph, build_ego_graph, build_top_graph
from .geometry import GeometryConfig, Trajectory
from .matching import SpectralConfig
from .pipeline import PipelineConfig, run_pipeline


class EgoTopMatcher(BaseEstimator):
    """Assign egocentric videos to viewers visible in a top-view video.

    fit() accepts either prebuilt ViewGraphs or raw inputs (EgoStream
    sequences and Trajectory sequences), builds what is missing, and stores
    the assignment, soft probabilities, per-video delays, and the matching
    score as fitted attributes.
    """

    def __init__(
        self,
        method="score",
        init="median",
        alpha=0.9,
        gamma=0.5,
        half_angle_deg=30.0,
        range_m=None,
        grid_resolution_m=0.1,
        speed_epsilon=1e-3,
        min_box_fraction=0.04,
        resample_rate=10.0,
        max_lag=None,
        min_overlap_fraction=0.5,
        diagonal_only_for_nodes=True,
        itr_max=100,
        epsilon=1e-6,
        power_iter_tol=1e-10,
        power_iter_max=1000,
    ):
        self.method = method
        self.init = init
        self.alpha = alpha
        self.gamma = gamma
        self.half_angle_deg = half_angle_deg
        self.range_m = range_m
        self.grid_resolution_m = grid_resolution_m
        self.speed_epsilon = speed_epsilon
        self.min_box_fraction = min_box_fraction
        self.resample_rate = resample_rate
        self.max_lag = max_lag
        self.min_overlap_fraction = min_overlap_fraction
        self.diagonal_only_for_nodes = diagonal_only_for_nodes
        self.itr_max = itr_max
        self.epsilon = epsilon
        self.power_iter_tol = power_iter_tol
        self.power_iter_max = power_iter_max

    def _geometry_config(self) -> GeometryConfig:
        return GeometryConfig(
            half_angle_deg=self.half_angle_deg,
            range_m=self.range_m,
            grid_resolution_m=self.grid_resolution_m,
            speed_epsilon=self.speed_epsilon,
        )

    def _pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            method=self.method,
            init=self.init,
            features=FeatureConfig(
                gamma=self.gamma,
                alpha=self.alpha,
                min_box_fraction=self.min_box_fraction,
                resample_rate=self.resample_rate,
            ),
            correlation=CorrConfig(
                max_lag=self.max_lag,
                min_overlap_fraction=self.min_overlap_fraction,
                diagonal_only_for_nodes=self.diagonal_only_for_nodes,
            ),
            spectral=SpectralConfig(
                power_iter_tol=self.power_iter_tol,
                power_iter_max=self.power_iter_max,
            ),
            optimizer=OptimizerConfig(itr_max=self.itr_max, epsilon=self.epsilon),
        )

    @staticmethod
    def _as_ego_graph(ego, cfg: PipelineConfig) -> ViewGraph:
        if isinstance(ego, ViewGraph):
            if ego.view_kind != "ego":
                raise ValueError("first argument must be the egocentric side")
            return ego
        streams = list(ego)
        if not all(isinstance(s, EgoStream) for s in streams):
            raise TypeError("ego must be a ViewGraph or a sequence of EgoStream")
        return build_ego_graph(streams, cfg.features)

    def _as_top_graph(self, top, cfg: PipelineConfig) -> ViewGraph:
        if isinstance(top, ViewGraph):
            if top.view_kind != "top":
                raise ValueError("second argument must be the top-view side")
            return top
        trajs = list(top)
        if not all(isinstance(t, Trajectory) for t in trajs):
            raise TypeError("top must be a ViewGraph or a sequence of Trajectory")
        return build_top_graph(trajs, self._geometry_config(), cfg.features)

    def fit(self, ego, top):
        """Run the selected matching method on the (ego, top) pair."""
        cfg = self._pipeline_config()
        ego_graph = self._as_ego_graph(ego, cfg)
        top_graph = self._as_top_graph(top, cfg)
        result = run_pipeline(ego_graph, top_graph, cfg)
        self.ego_ids_ = list(result.ego_ids)
        self.top_ids_ = list(result.top_ids)
        self.assignment_ = result.assignment_map()
        self.soft_assignment_ = result.soft.P
        self.hard_assignment_ = result.hard.X
        self.delays_ = result.delays.delays
        self.score_ = result.score
        self.trace_ = result.trace
        self.n_ego_ = len(self.ego_ids_)
        self.n_top_ = len(self.top_ids_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "assignment_"):
            raise NotFittedError("call fit before predict")

    def predict(self):
        """Assigned top viewer id per fitted ego video, in fit order."""
        self._check_fitted()
        return np.array([self.assignment_[vid] for vid in self.ego_ids_])

    def predict_proba(self):
        """Row-stochastic soft assignment matrix from the spectral step."""
        self._check_fitted()
        return self.soft_assignment_.copy()

"""Node and edge feature matrices for the top-view and egocentric graphs.

Top-view nodes carry the self-IOU matrix of a viewer's FOV cone over time
plus the count of other viewers inside the cone; edges carry the pairwise
cone IOU matrix. Egocentric nodes carry the frame-descriptor self-similarity
matrix plus a people-count series; edges carry cross-video descriptor
similarity. All streams are resampled to a common rate before graph building
so the two views share a clock granularity.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, MismatchedLengths
from .geometry import ConeSet, GeometryConfig, Trajectory, count_in_cone
from .geometry import pairwise_cone_iou, resolve_range


@dataclass(frozen=True)
class FeatureConfig:
    gamma: float = 0.5  # descriptor-similarity decay
    alpha: float = 0.9  # weight of the 2D term in the node affinity blend
    min_box_fraction: float = 0.04  # drop detections smaller than this
    resample_rate: float = 10.0  # frames/second shared by both views

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.0 < self.min_box_fraction < 1.0:
            raise ValueError("min_box_fraction must be in (0, 1)")
        if self.resample_rate <= 0:
            raise ValueError("resample_rate must be positive")


@dataclass
class TopNodeFeatures:
    iou_matrix: np.ndarray  # (T, T) symmetric, unit diagonal
    counts: np.ndarray  # (T,) nonnegative

    @property
    def similarity(self) -> np.ndarray:
        return self.iou_matrix


@dataclass
class TopEdgeFeatures:
    iou_matrix: np.ndarray  # (T, T); rows = first node's frames

    @property
    def similarity(self) -> np.ndarray:
        return self.iou_matrix


@dataclass
class EgoNodeFeatures:
    gist_sim: np.ndarray  # (T_E, T_E) symmetric, unit diagonal
    counts: np.ndarray  # (T_E,) nonnegative

    @property
    def similarity(self) -> np.ndarray:
        return self.gist_sim


@dataclass
class EgoEdgeFeatures:
    gist_sim: np.ndarray  # (T_Ei, T_Ej); rows = first node's frames

    @property
    def similarity(self) -> np.ndarray:
        return self.gist_sim


@dataclass
class ViewGraph:
    """One view (top or ego) as node features plus pairwise edge features.

    Edge features are stored once per unordered pair under the key
    (node_ids[a], node_ids[b]) with a < b in node order; edge_matrix()
    transposes on demand for the opposite orientation.
    """

    view_kind: str  # "top" | "ego"
    node_ids: list[str]
    node_features: dict = field(default_factory=dict)
    edge_features: dict = field(default_factory=dict)
    frame_rate: float = 10.0

    def __post_init__(self):
        if self.view_kind not in ("top", "ego"):
            raise ValueError("view_kind must be 'top' or 'ego'")
        if len(self.node_ids) < 1:
            raise ValueError("graph needs at least one node")

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def n_frames(self, node_id: str) -> int:
        return self.node_features[node_id].similarity.shape[0]

    def edge_matrix(self, a: str, b: str) -> np.ndarray:
        """Edge similarity oriented rows=a frames, cols=b frames."""
        if (a, b) in self.edge_features:
            return self.edge_features[(a, b)].similarity
        return self.edge_features[(b, a)].similarity.T


def resample(x, from_rate: float, to_rate: float, axes=(0,)):
    """Nearest-frame resampling along the given axes.

    New length is round(L * to_rate / from_rate); output index t reads input
    index round(t * from_rate / to_rate). Rounding is half-up so the index
    map is reproducible across platforms.
    """
    if from_rate <= 0 or to_rate <= 0:
        raise ValueError("rates must be positive")
    x = np.asarray(x)
    if from_rate == to_rate:
        return x
    out = x
    for ax in axes:
        n = out.shape[ax]
        m = max(1, int(np.floor(n * to_rate / from_rate + 0.5)))
        src = np.floor(np.arange(m) * from_rate / to_rate + 0.5).astype(int)
        src = np.clip(src, 0, n - 1)
        out = np.take(out, src, axis=ax)
    return out


def resample_trajectory(traj: Trajectory, to_rate: float) -> Trajectory:
    pos = resample(traj.positions, traj.frame_rate, to_rate, axes=(0,))
    return Trajectory(traj.viewer_id, pos, to_rate)


def gist_similarity(d1, d2, gamma: float) -> float:
    """exp(-gamma * euclidean distance) between two frame descriptors."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if d1.shape != d2.shape:
        raise DimensionMismatch(f"descriptor shapes differ: {d1.shape} vs {d2.shape}")
    return float(np.exp(-gamma * np.linalg.norm(d1 - d2)))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe


def _sim_from_dist(dist: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * dist)


def build_top_graph(
    trajectories, geo: GeometryConfig, cfg: FeatureConfig
) -> ViewGraph:
    """Top-view graph from trajectories: self/pairwise cone IOU plus counts.

    Every matrix entry equals a direct cone_iou / count_in_cone call on the
    resampled trajectories; the batch kernel only vectorizes the loop.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("need at least one trajectory")
    lengths = {t.n_frames for t in trajectories}
    rates = {t.frame_rate for t in trajectories}
    if len(lengths) > 1 or len(rates) > 1:
        raise MismatchedLengths(
            f"trajectories disagree: frame counts {lengths}, rates {rates}"
        )
    geo = resolve_range(geo, trajectories)
    trajs = [resample_trajectory(t, cfg.resample_rate) for t in trajectories]
    t_n = trajs[0].n_frames
    cones = {t.viewer_id: ConeSet.from_trajectory(t, geo) for t in trajs}
    ids = [t.viewer_id for t in trajs]
    res = geo.grid_resolution_m

    nodes = {}
    positions = np.stack([t.positions for t in trajs])  # (N, T, 2)
    for n_idx, traj in enumerate(trajs):
        cs = cones[traj.viewer_id]
        iu, ju = np.triu_indices(t_n, k=1)
        iou = np.eye(t_n)
        vals = pairwise_cone_iou(cs, cs, iu, ju, res)
        iou[iu, ju] = vals
        iou[ju, iu] = vals
        others = np.delete(positions, n_idx, axis=0)  # (N-1, T, 2)
        counts = np.array(
            [
                count_in_cone(cs.cone(t), others[:, t, :])
                for t in range(t_n)
            ],
            dtype=float,
        )
        nodes[traj.viewer_id] = TopNodeFeatures(iou_matrix=iou, counts=counts)

    edges = {}
    full_i, full_j = np.meshgrid(np.arange(t_n), np.arange(t_n), indexing="ij")
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            vals = pairwise_cone_iou(
                cones[ids[a]], cones[ids[b]], full_i.ravel(), full_j.ravel(), res
            )
            edges[(ids[a], ids[b])] = TopEdgeFeatures(
                iou_matrix=vals.reshape(t_n, t_n)
            )
    return ViewGraph("top", ids, nodes, edges, frame_rate=cfg.resample_rate)


@dataclass(frozen=True)
class EgoStream:
    """One egocentric video's raw inputs: per-frame descriptors and counts."""

    video_id: str
    descriptors: np.ndarray  # (T_E, D)
    counts: np.ndarray  # (T_E,)
    frame_rate: float

    def __post_init__(self):
        desc = np.asarray(self.descriptors, dtype=float)
        cnt = np.asarray(self.counts, dtype=float)
        if desc.ndim != 2 or desc.shape[0] == 0:
            raise ValueError("descriptors must be a non-empty (T, D) matrix")
        if cnt.shape != (desc.shape[0],):
            raise DimensionMismatch(
                f"{self.video_id}: counts length {cnt.shape} != frames {desc.shape[0]}"
            )
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        object.__setattr__(self, "descriptors", desc)
        object.__setattr__(self, "counts", cnt)


def build_ego_graph(streams, cfg: FeatureConfig) -> ViewGraph:
    """Egocentric graph: descriptor-similarity matrices plus count series.

    Descriptors are L2-normalized per frame at ingestion so the exponential
    similarity sees distances in [0, 2] regardless of descriptor provenance.
    """
    streams = list(streams)
    if not streams:
        raise ValueError("need at least one ego stream")
    dims = {s.descriptors.shape[1] for s in streams}
    if len(dims) > 1:
        raise DimensionMismatch(f"descriptor dimensions differ: {dims}")
    resampled = {}
    for s in streams:
        desc = resample(s.descriptors, s.frame_rate, cfg.resample_rate, axes=(0,))
        cnt = resample(s.counts, s.frame_rate, cfg.resample_rate, axes=(0,))
        resampled[s.video_id] = (_unit_rows(np.asarray(desc, dtype=float)), cnt)

    ids = [s.video_id for s in streams]
    nodes = {}
    for vid in ids:
        desc, cnt = resampled[vid]
        sim = _sim_from_dist(cdist(desc, desc), cfg.gamma)
        sim = np.triu(sim) + np.triu(sim, 1).T  # exact symmetry
        np.fill_diagonal(sim, 1.0)
        nodes[vid] = EgoNodeFeatures(gist_sim=sim, counts=np.asarray(cnt, float))
    edges = {}
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            da, _ = resampled[ids[a]]
            db, _ = resampled[ids[b]]
            edges[(ids[a], ids[b])] = EgoEdgeFeatures(
                gist_sim=_sim_from_dist(cdist(da, db), cfg.gamma)
            )
    return ViewGraph("ego", ids, nodes, edges, frame_rate=cfg.resample_rate)


def ingest_detections(rows, frame_count: int, cfg: FeatureConfig) -> np.ndarray:
    """Per-frame people-count series from raw detection records.

    rows: iterable of (frame, score, box_height_fraction). Small boxes are
    dropped, surviving scores min-max rescaled to [0, 1] over the whole video
    (a degenerate range maps to 1), then summed per frame.
    """
    kept = []
    for frame, score, box_frac in rows:
        frame = int(frame)
        if not 0 <= frame < frame_count:
            raise ValueError(f"detection frame {frame} outside [0, {frame_count})")
        if box_frac < cfg.min_box_fraction:
            continue
        kept.append((frame, float(score)))
    out = np.zeros(frame_count)
    if not kept:
        return out
    scores = np.array([s for _, s in kept])
    lo, hi = scores.min(), scores.max()
    if hi > lo:
        scores = (scores - lo) / (hi - lo)
    else:
        scores = np.ones_like(scores)
    for (frame, _), s in zip(kept, scores):
        out[frame] += s
    return out


# --- file ingestion -------------------------------------------------------

def load_descriptor_file(path) -> tuple[np.ndarray, dict]:
    """Descriptor matrix (rows=frames) plus its sidecar metadata dict."""
    mat = np.loadtxt(path, delimiter=",", ndmin=2)
    meta_path = str(path) + ".meta.json"
    with open(meta_path) as fh:
        meta = json.load(fh)
    return mat, meta


def save_descriptor_file(path, matrix, video_id: str, frame_rate: float) -> None:
    np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",", fmt="%.10g")
    meta = {
        "video_id": video_id,
        "frame_rate": frame_rate,
        "frames": int(np.asarray(matrix).shape[0]),
        "dim": int(np.asarray(matrix).shape[1]),
    }
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)


def load_counts_csv(path) -> np.ndarray:
    """Count series from `frame,count` rows (dense, 0-indexed)."""
    frames = []
    counts = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            frames.append(int(row["frame"]))
            counts.append(float(row["count"]))
    if frames != list(range(len(frames))):
        raise ValueError(f"{path}: frames not dense from 0")
    return np.array(counts)


def save_counts_csv(path, counts) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "count"])
        for t, c in enumerate(np.asarray(counts, dtype=float)):
            writer.writerow([t, f"{c:.10g}"])


def load_detections_csv(path) -> list[tuple[int, float, float]]:
    """Detection records from `frame,score,box_height_fraction` rows."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                (int(row["frame"]), float(row["score"]), float(row["box_height_fraction"]))
            )
    return out

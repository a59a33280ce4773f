"""Synthetic scene generator with ground truth.

Agents walk smoothed waypoint routes in a rectangular arena dotted with
landmarks that carry random unit appearance vectors. A recording agent's
egocentric descriptor at a frame is the distance-weighted sum of the
appearance vectors inside its FOV cone, so egocentric content change tracks
top-view FOV change by construction: correctness of the matching pipeline is
testable independently of any real feature extractor. Ego streams can be
shifted against the top-view clock and corrupted with noise; everything is
deterministic given the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleMotion
from .features import (
    EgoStream,
    load_counts_csv,
    load_descriptor_file,
    save_counts_csv,
    save_descriptor_file,
)
from .geometry import (
    FovCone,
    GeometryConfig,
    Trajectory,
    count_in_cone,
    headings,
    load_trajectories_csv,
    write_trajectories_csv,
)


@dataclass(frozen=True)
class World:
    """Arena plus appearance-carrying landmarks (the stand-in for scene content)."""

    arena: tuple[float, float]
    landmark_positions: np.ndarray  # (L, 2)
    landmark_appearances: np.ndarray  # (L, D), unit rows
    seed: int

    def __post_init__(self):
        if self.landmark_positions.shape[0] < 1:
            raise ValueError("world needs at least one landmark")
        norms = np.linalg.norm(self.landmark_appearances, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("landmark appearance vectors must be unit norm")


@dataclass(frozen=True)
class ScenarioConfig:
    n_top: int = 6
    n_ego: int = 6
    duration_frames: int = 400
    frame_rate: float = 10.0
    true_delays: tuple = None  # per-ego frames; None -> all zero
    descriptor_noise_sigma: float = 0.0
    count_noise_rate: float = 0.0
    arena: tuple = (10.0, 10.0)
    n_landmarks: int = 64
    descriptor_dim: int = 24
    waypoint_count: int = 6
    speed_range: tuple = (0.5, 2.0)
    pause_rate: float = 0.0  # fraction of time the whole crowd stands still
    gather_rate: float = 0.25  # fraction of time spent in crowd gatherings
    fov_half_angle_deg: float = 30.0
    fov_range_m: float = 4.0
    duration_bounds: tuple = (320, 3132)  # None disables the check
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_ego <= self.n_top:
            raise ValueError("need 1 <= n_ego <= n_top")
        if self.duration_bounds is not None and not (
            self.duration_bounds[0] <= self.duration_frames <= self.duration_bounds[1]
        ):
            raise ValueError(
                f"duration {self.duration_frames} outside {self.duration_bounds}; "
                "pass duration_bounds=None for desk-scale runs"
            )
        if self.true_delays is not None and len(self.true_delays) != self.n_ego:
            raise ValueError("true_delays length must equal n_ego")
        if self.speed_range[0] <= 0 or self.speed_range[0] > self.speed_range[1]:
            raise ValueError("speed_range must be 0 < lo <= hi")

    @property
    def delays(self) -> np.ndarray:
        if self.true_delays is None:
            return np.zeros(self.n_ego, dtype=int)
        return np.asarray(self.true_delays, dtype=int)


@dataclass
class Scenario:
    config: ScenarioConfig
    world: World | None
    trajectories: list  # top-view Trajectory objects, frames [0, T)
    ego_streams: list  # EgoStream objects
    assignment: dict  # ego video_id -> viewer_id
    delays: dict  # ego video_id -> frames (top-view clock)

    def __post_init__(self):
        targets = list(self.assignment.values())
        if len(set(targets)) != len(targets):
            raise ValueError("ground-truth assignment must be injective")


def make_world(cfg: ScenarioConfig, rng: np.random.Generator) -> World:
    pos = rng.uniform([0.0, 0.0], list(cfg.arena), size=(cfg.n_landmarks, 2))
    app = rng.normal(size=(cfg.n_landmarks, cfg.descriptor_dim))
    app /= np.linalg.norm(app, axis=1, keepdims=True)
    return World(tuple(cfg.arena), pos, app, cfg.seed)


def _pause_schedule(
    rng: np.random.Generator, n_frames: int, frame_rate: float, pause_rate: float
) -> np.ndarray:
    """Shared 0/1 motion gate: crowd-wide stops anchoring absolute time.

    Everyone freezing at the same moments gives every similarity matrix a
    block at the same world time, which is what lets mismatched node/edge
    correlations still vote for the right time delay.
    """
    gate = np.ones(n_frames)
    if pause_rate <= 0 or n_frames < 4:
        return gate
    target = pause_rate * n_frames
    guard = 0
    while n_frames - np.count_nonzero(gate) < target and guard < 10 * n_frames:
        dur = max(1, int(rng.uniform(0.5, 1.5) * frame_rate))
        start = int(rng.integers(0, max(1, n_frames - dur)))
        gate[start : start + dur] = 0.0
        guard += 1
    return gate


def _gather_schedule(
    rng: np.random.Generator,
    cfg: ScenarioConfig,
    n_frames: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Crowd gathering events: (per-frame event index or -1, event points).

    Everyone converging on the same spot at the same absolute times makes all
    pairwise features spike together, anchoring the world clock the way
    shared activity does in real footage.
    """
    idx = np.full(n_frames, -1, dtype=int)
    if cfg.gather_rate <= 0 or n_frames < 8:
        return idx, np.zeros((0, 2))
    mean_dur = 1.8 * cfg.frame_rate
    n_events = max(1, int(round(cfg.gather_rate * n_frames / mean_dur)))
    chunk = n_frames / n_events
    # spread event points so successive gatherings look different
    points = np.empty((n_events, 2))
    lo = np.array([0.2 * cfg.arena[0], 0.2 * cfg.arena[1]])
    hi = np.array([0.8 * cfg.arena[0], 0.8 * cfg.arena[1]])
    min_sep = 0.3 * min(cfg.arena)
    for m in range(n_events):
        for _ in range(20):
            cand = rng.uniform(lo, hi)
            if m == 0 or np.hypot(*(points[:m] - cand).T).min() >= min_sep:
                break
        points[m] = cand
    margin = int(0.05 * n_frames)
    for m in range(n_events):
        dur = int(rng.uniform(1.5, 2.2) * cfg.frame_rate)
        lo_t = max(margin, int(m * chunk))
        hi_t = max(lo_t + 1.0, min((m + 1) * chunk, n_frames - margin) - dur)
        start = int(rng.uniform(lo_t, hi_t))
        idx[start : min(n_frames, start + dur)] = m
    return idx, points


def _waypoint_path(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    n_frames: int,
    gate: np.ndarray,
    gather_idx: np.ndarray,
    gather_points: np.ndarray,
) -> np.ndarray:
    """March through a cyclic waypoint route at per-leg speeds, then smooth.

    During a gathering the agent heads for its own standing spot near the
    event point and waits there until the event ends.
    """
    margin = min(0.5, min(cfg.arena) / 10.0)
    lo = [margin, margin]
    hi = [cfg.arena[0] - margin, cfg.arena[1] - margin]
    waypoints = rng.uniform(lo, hi, size=(max(2, cfg.waypoint_count), 2))
    stances = (
        rng.uniform(-0.5, 0.5, size=(len(gather_points), 2))
        if len(gather_points)
        else np.zeros((0, 2))
    )
    pos = np.empty((n_frames, 2))
    cur = waypoints[0].copy()
    target = 1
    step = rng.uniform(*cfg.speed_range) / cfg.frame_rate
    for t in range(n_frames):
        pos[t] = cur
        remaining = step * gate[t]
        event = gather_idx[t]
        if event >= 0:
            spot = gather_points[event] + stances[event]
            to_spot = spot - cur
            dist = math.hypot(to_spot[0], to_spot[1])
            if dist > 1e-9 and remaining > 0:
                move = min(dist, remaining)
                cur = cur + to_spot * (move / dist)
            continue
        while remaining > 0:
            to_target = waypoints[target % len(waypoints)] - cur
            dist = math.hypot(to_target[0], to_target[1])
            if dist <= remaining:
                cur = waypoints[target % len(waypoints)].copy()
                remaining -= dist
                target += 1
                step = rng.uniform(*cfg.speed_range) / cfg.frame_rate
                remaining = min(remaining, step)
            else:
                cur = cur + to_target * (remaining / dist)
                remaining = 0.0
    window = int(round(0.5 * cfg.frame_rate))
    window = max(1, window + (window % 2 == 0))
    if window > 1:
        padded = np.pad(pos, ((window // 2, window // 2), (0, 0)), mode="edge")
        kernel = np.ones(window) / window
        pos = np.stack(
            [np.convolve(padded[:, c], kernel, mode="valid") for c in (0, 1)], axis=1
        )
    return pos


def render_descriptor(
    world: World, cone: FovCone, noise=None
) -> np.ndarray:
    """Distance-weighted sum of in-cone landmark appearances, L2-normalized.

    Optional pre-drawn additive noise is applied before re-normalization.
    A cone seeing no landmark yields the zero vector (plus noise, if any).
    """
    d = world.landmark_positions - np.asarray(cone.apex)
    dist = np.hypot(d[:, 0], d[:, 1])
    proj = d[:, 0] * math.cos(cone.heading) + d[:, 1] * math.sin(cone.heading)
    cos_half = math.cos(cone.half_angle)
    inside = (
        (dist <= cone.range_m)
        & (proj >= 0.0)
        & (proj * proj >= dist * dist * cos_half * cos_half)
    )
    vec = world.landmark_appearances.T @ (inside / (1.0 + dist))
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec = vec / norm
    if noise is not None:
        vec = vec + noise
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
    return vec


def generate(cfg: ScenarioConfig) -> Scenario:
    """Deterministic scenario: trajectories, shifted ego streams, ground truth."""
    max_step = cfg.speed_range[1] / cfg.frame_rate
    if 4.0 * max_step > min(cfg.arena):
        raise InfeasibleMotion(
            f"per-frame step {max_step:.3g} m too large for arena {cfg.arena}"
        )
    rng = np.random.default_rng(cfg.seed)
    world_rng, motion_rng, assign_rng, noise_rng, count_rng = rng.spawn(5)
    world = make_world(cfg, world_rng)

    delays = cfg.delays
    pad = int(np.abs(delays).max(initial=0))
    t_total = cfg.duration_frames + 2 * pad
    gate = _pause_schedule(motion_rng, t_total, cfg.frame_rate, cfg.pause_rate)
    gather_idx, gather_points = _gather_schedule(motion_rng, cfg, t_total)
    paths = [
        _waypoint_path(cfg, motion_rng, t_total, gate, gather_idx, gather_points)
        for _ in range(cfg.n_top)
    ]

    geo = GeometryConfig(
        half_angle_deg=cfg.fov_half_angle_deg,
        range_m=cfg.fov_range_m,
        speed_epsilon=1e-6,
    )
    world_heads = [
        headings(Trajectory(str(i), paths[i], cfg.frame_rate), geo)
        for i in range(cfg.n_top)
    ]
    half_angle = math.radians(cfg.fov_half_angle_deg)

    recorders = assign_rng.permutation(cfg.n_top)[: cfg.n_ego]
    streams = []
    assignment = {}
    delay_map = {}
    t_n = cfg.duration_frames
    for k, agent in enumerate(recorders):
        vid = f"e{k}"
        d = int(delays[k])
        desc = np.empty((t_n, cfg.descriptor_dim))
        counts = np.empty(t_n)
        if cfg.descriptor_noise_sigma > 0:
            noise = noise_rng.normal(0.0, cfg.descriptor_noise_sigma, size=desc.shape)
        else:
            noise = None
        for f in range(t_n):
            w = pad + d + f
            cone = FovCone(
                apex=(float(paths[agent][w, 0]), float(paths[agent][w, 1])),
                heading=float(world_heads[agent][w]),
                half_angle=half_angle,
                range_m=cfg.fov_range_m,
            )
            desc[f] = render_descriptor(
                world, cone, None if noise is None else noise[f]
            )
            others = [paths[a][w] for a in range(cfg.n_top) if a != agent]
            counts[f] = count_in_cone(cone, np.asarray(others))
        if cfg.count_noise_rate > 0:
            flips = count_rng.random(t_n) < cfg.count_noise_rate
            bumps = count_rng.choice([-1.0, 1.0], size=t_n)
            counts = np.maximum(0.0, counts + flips * bumps)
        streams.append(EgoStream(vid, desc, counts, cfg.frame_rate))
        assignment[vid] = str(int(agent))
        delay_map[vid] = d

    trajectories = [
        Trajectory(str(i), paths[i][pad : pad + t_n], cfg.frame_rate)
        for i in range(cfg.n_top)
    ]
    return Scenario(cfg, world, trajectories, streams, assignment, delay_map)


# --- scenario directory layout ---------------------------------------------
# topview.csv, ego_<k>.desc (+ .meta.json), ego_<k>.counts.csv,
# truth.json, config.json


def emit(scenario: Scenario, directory) -> Path:
    """Write one self-contained scenario directory in the pipeline's formats."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_trajectories_csv(directory / "topview.csv", scenario.trajectories)
    for k, stream in enumerate(scenario.ego_streams):
        save_descriptor_file(
            directory / f"ego_{k}.desc",
            stream.descriptors,
            stream.video_id,
            stream.frame_rate,
        )
        save_counts_csv(directory / f"ego_{k}.counts.csv", stream.counts)
    truth = {
        "assignment": scenario.assignment,
        "delays": scenario.delays,
    }
    (directory / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=1))
    cfg = asdict(scenario.config)
    (directory / "config.json").write_text(json.dumps(cfg, sort_keys=True, indent=1))
    return directory


def load_scenario_dir(directory) -> Scenario:
    """Read a scenario directory back; validates the truth assignment."""
    directory = Path(directory)
    cfg_raw = json.loads((directory / "config.json").read_text())
    for key in ("true_delays", "arena", "speed_range", "duration_bounds"):
        if cfg_raw.get(key) is not None:
            cfg_raw[key] = tuple(cfg_raw[key])
    cfg = ScenarioConfig(**cfg_raw)
    trajectories = load_trajectories_csv(directory / "topview.csv", cfg.frame_rate)
    streams = []
    for k in range(cfg.n_ego):
        desc, meta = load_descriptor_file(directory / f"ego_{k}.desc")
        counts = load_counts_csv(directory / f"ego_{k}.counts.csv")
        streams.append(EgoStream(meta["video_id"], desc, counts, meta["frame_rate"]))
    truth = json.loads((directory / "truth.json").read_text())
    return Scenario(
        cfg,
        None,
        trajectories,
        streams,
        truth["assignment"],
        {k: int(v) for k, v in truth["delays"].items()},
    )

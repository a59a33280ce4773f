"""Top-view trajectory geometry: headings, FOV cones, cone IOU, containment.

A viewer's field of view in the top-view plane is modeled as a circular
sector (a cone in 2D): apex at the viewer's position, axis along the motion
heading, fixed half-angle, truncated at a finite range. Cone overlap is
measured as intersection-over-union of rasterized sectors so it is simple,
symmetric and tunable via the grid resolution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AllStationary, MismatchedLengths

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GeometryConfig:
    """Knobs for cone construction and rasterized IOU.

    range_m=None means "resolve to the scene bounding-box diagonal" once the
    set of trajectories is known (see resolve_range).
    """

    half_angle_deg: float = 30.0
    range_m: float | None = None
    grid_resolution_m: float = 0.1
    speed_epsilon: float = 1e-3  # meters per frame

    def __post_init__(self):
        if not 0.0 < self.half_angle_deg < 90.0:
            raise ValueError("half_angle_deg must be in (0, 90)")
        if self.range_m is not None and self.range_m <= 0.0:
            raise ValueError("range_m must be positive")
        if self.grid_resolution_m <= 0.0:
            raise ValueError("grid_resolution_m must be positive")
        if self.speed_epsilon <= 0.0:
            raise ValueError("speed_epsilon must be positive")

    @property
    def half_angle_rad(self) -> float:
        return math.radians(self.half_angle_deg)


@dataclass(frozen=True)
class Trajectory:
    """Per-frame 2D positions of one top-view viewer."""

    viewer_id: str
    positions: np.ndarray  # (T, 2) meters
    frame_rate: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] == 0:
            raise ValueError("positions must be a non-empty (T, 2) array")
        if not np.isfinite(pos).all():
            raise ValueError("positions must be finite")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        object.__setattr__(self, "positions", pos)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class FovCone:
    """Circular sector: apex, axis heading, half-angle, finite range."""

    apex: tuple[float, float]
    heading: float
    half_angle: float
    range_m: float

    def __post_init__(self):
        if not 0.0 < self.half_angle < math.pi / 2:
            raise ValueError("half_angle must be in (0, pi/2)")
        if self.range_m <= 0.0:
            raise ValueError("range_m must be positive")


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


def resolve_range(cfg: GeometryConfig, trajectories) -> GeometryConfig:
    """Fill cfg.range_m with the scene bounding-box diagonal if unset."""
    if cfg.range_m is not None:
        return cfg
    pts = np.vstack([t.positions for t in trajectories])
    span = pts.max(axis=0) - pts.min(axis=0)
    diam = float(np.hypot(span[0], span[1]))
    return replace(cfg, range_m=max(diam, cfg.grid_resolution_m))


def headings(traj: Trajectory, cfg: GeometryConfig) -> np.ndarray:
    """Per-frame camera heading from the speed vector.

    Frame t takes the angle of positions[t+1] - positions[t]; the last frame
    reuses the previous displacement. Displacements below speed_epsilon leave
    the heading undefined: the most recent defined heading carries forward,
    and a leading undefined stretch is back-filled from the first defined one.
    """
    pos = traj.positions
    t_n = pos.shape[0]
    if t_n == 1:
        raise AllStationary(f"trajectory {traj.viewer_id!r} has a single frame")
    disp = np.diff(pos, axis=0)
    mag = np.hypot(disp[:, 0], disp[:, 1])
    defined = mag >= cfg.speed_epsilon
    if not defined.any():
        raise AllStationary(
            f"trajectory {traj.viewer_id!r} never moves by >= speed_epsilon"
        )
    ang = np.empty(t_n)
    ok = np.empty(t_n, dtype=bool)
    ang[:-1] = np.arctan2(disp[:, 1], disp[:, 0])
    ok[:-1] = defined
    ang[-1] = ang[-2]  # last frame reuses previous displacement
    ok[-1] = ok[-2]
    # carry forward, then back-fill the leading undefined stretch
    idx = np.where(ok, np.arange(t_n), -1)
    ff = np.maximum.accumulate(idx)
    first = int(np.argmax(ok))
    ff[ff < 0] = first
    return ang[ff]


def cone_at(traj: Trajectory, frame: int, cfg: GeometryConfig) -> FovCone:
    """FOV cone of a viewer at one frame. Propagates AllStationary."""
    if not 0 <= frame < traj.n_frames:
        raise IndexError(f"frame {frame} out of range [0, {traj.n_frames})")
    if cfg.range_m is None:
        raise ValueError("range_m unresolved; call resolve_range first")
    head = headings(traj, cfg)
    x, y = traj.positions[frame]
    return FovCone(
        apex=(float(x), float(y)),
        heading=float(head[frame]),
        half_angle=cfg.half_angle_rad,
        range_m=cfg.range_m,
    )


def _contains(dx, dy, cos_h, sin_h, cos_half, r2):
    """Vectorized sector membership for offsets (dx, dy) from the apex.

    |angle - heading| <= half_angle is tested trig-free via the projection
    onto the axis: proj >= 0 and proj^2 >= d^2 cos^2(half). The apex itself
    (d = 0) passes both tests.
    """
    d2 = dx * dx + dy * dy
    proj = dx * cos_h + dy * sin_h
    return (d2 <= r2) & (proj >= 0.0) & (proj * proj >= d2 * (cos_half * cos_half))


def sector_bboxes(apex, heading, half_angle, range_m) -> np.ndarray:
    """Tight axis-aligned bounding boxes (N, 4) as (x0, y0, x1, y1).

    Candidate extremes: the apex, both arc endpoints, and each cardinal
    direction whose angle falls inside the sector span.
    """
    apex = np.atleast_2d(np.asarray(apex, dtype=float))
    heading = np.atleast_1d(np.asarray(heading, dtype=float))
    n = apex.shape[0]
    cand_x = np.full((n, 7), np.nan)
    cand_y = np.full((n, 7), np.nan)
    cand_x[:, 0] = apex[:, 0]
    cand_y[:, 0] = apex[:, 1]
    for col, a in ((1, heading - half_angle), (2, heading + half_angle)):
        cand_x[:, col] = apex[:, 0] + range_m * np.cos(a)
        cand_y[:, col] = apex[:, 1] + range_m * np.sin(a)
    for col, card in enumerate((0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)):
        inside = np.abs(wrap_angle(card - heading)) <= half_angle
        cand_x[inside, 3 + col] = apex[inside, 0] + range_m * math.cos(card)
        cand_y[inside, 3 + col] = apex[inside, 1] + range_m * math.sin(card)
    return np.stack(
        [
            np.nanmin(cand_x, axis=1),
            np.nanmin(cand_y, axis=1),
            np.nanmax(cand_x, axis=1),
            np.nanmax(cand_y, axis=1),
        ],
        axis=1,
    )


@dataclass(frozen=True)
class ConeSet:
    """Cones of one viewer over all frames, in array form for batch IOU."""

    apex: np.ndarray  # (T, 2)
    heading: np.ndarray  # (T,)
    half_angle: float
    range_m: float
    bbox: np.ndarray  # (T, 4)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, cfg: GeometryConfig) -> "ConeSet":
        if cfg.range_m is None:
            raise ValueError("range_m unresolved; call resolve_range first")
        head = headings(traj, cfg)
        ha = cfg.half_angle_rad
        bbox = sector_bboxes(traj.positions, head, ha, cfg.range_m)
        return cls(traj.positions, head, ha, cfg.range_m, bbox)

    @classmethod
    def from_cones(cls, cones) -> "ConeSet":
        ha = cones[0].half_angle
        rng = cones[0].range_m
        if any(c.half_angle != ha or c.range_m != rng for c in cones):
            raise ValueError("batch cones must share half_angle and range_m")
        apex = np.array([c.apex for c in cones], dtype=float)
        heading = np.array([c.heading for c in cones], dtype=float)
        bbox = sector_bboxes(apex, heading, ha, rng)
        return cls(apex, heading, ha, rng, bbox)

    def cone(self, t: int) -> FovCone:
        return FovCone(
            apex=(float(self.apex[t, 0]), float(self.apex[t, 1])),
            heading=float(self.heading[t]),
            half_angle=self.half_angle,
            range_m=self.range_m,
        )


# cap on pair-cells evaluated per numpy slab
_CHUNK_CELLS = 4_000_000


def pairwise_cone_iou(a: ConeSet, b: ConeSet, ia, ib, resolution: float) -> np.ndarray:
    """IOU for cone pairs (a[ia[k]], b[ib[k]]), identical to cone_iou per pair.

    Each pair gets its own grid over the union of the two sector bounding
    boxes, cell size `resolution`, cells tested at their centers. Pairs are
    grouped by grid shape so a group evaluates as one broadcast slab.
    """
    ia = np.asarray(ia, dtype=int)
    ib = np.asarray(ib, dtype=int)
    out = np.zeros(ia.shape[0])
    ba = a.bbox[ia]
    bb = b.bbox[ib]
    overlap = (
        (ba[:, 0] <= bb[:, 2])
        & (bb[:, 0] <= ba[:, 2])
        & (ba[:, 1] <= bb[:, 3])
        & (bb[:, 1] <= ba[:, 3])
    )
    if not overlap.any():
        return out
    sel = np.where(overlap)[0]
    x0 = np.minimum(ba[sel, 0], bb[sel, 0])
    y0 = np.minimum(ba[sel, 1], bb[sel, 1])
    x1 = np.maximum(ba[sel, 2], bb[sel, 2])
    y1 = np.maximum(ba[sel, 3], bb[sel, 3])
    nx = np.maximum(1, np.ceil((x1 - x0) / resolution)).astype(int)
    ny = np.maximum(1, np.ceil((y1 - y0) / resolution)).astype(int)

    cos_half_a = math.cos(a.half_angle)
    cos_half_b = math.cos(b.half_angle)
    r2a = a.range_m * a.range_m
    r2b = b.range_m * b.range_m

    shape_key = ny.astype(np.int64) * (nx.max() + 1) + nx
    order = np.argsort(shape_key, kind="stable")
    bounds = np.flatnonzero(np.diff(shape_key[order])) + 1
    for grp in np.split(order, bounds):
        gnx = int(nx[grp[0]])
        gny = int(ny[grp[0]])
        step = max(1, _CHUNK_CELLS // (gnx * gny))
        for lo in range(0, grp.size, step):
            g = grp[lo : lo + step]
            rows = sel[g]
            pa = ia[sel[g]]
            pb = ib[sel[g]]
            cx = x0[g][:, None] + (np.arange(gnx) + 0.5) * resolution  # (P, nx)
            cy = y0[g][:, None] + (np.arange(gny) + 0.5) * resolution  # (P, ny)
            dx_a = cx[:, None, :] - a.apex[pa, 0][:, None, None]
            dy_a = cy[:, :, None] - a.apex[pa, 1][:, None, None]
            mask_a = _contains(
                dx_a,
                dy_a,
                np.cos(a.heading[pa])[:, None, None],
                np.sin(a.heading[pa])[:, None, None],
                cos_half_a,
                r2a,
            )
            dx_b = cx[:, None, :] - b.apex[pb, 0][:, None, None]
            dy_b = cy[:, :, None] - b.apex[pb, 1][:, None, None]
            mask_b = _contains(
                dx_b,
                dy_b,
                np.cos(b.heading[pb])[:, None, None],
                np.sin(b.heading[pb])[:, None, None],
                cos_half_b,
                r2b,
            )
            inter = np.count_nonzero(mask_a & mask_b, axis=(1, 2))
            union = np.count_nonzero(mask_a | mask_b, axis=(1, 2))
            vals = np.zeros(g.size)
            nz = union > 0
            vals[nz] = inter[nz] / union[nz]
            if (~nz).any():
                # degenerate: no cell center in either sector
                same = (
                    (a.apex[pa] == b.apex[pb]).all(axis=1)
                    & (a.heading[pa] == b.heading[pb])
                    & (a.half_angle == b.half_angle)
                    & (a.range_m == b.range_m)
                )
                vals[~nz & same] = 1.0
            out[rows] = vals
    return out


def cone_iou(a: FovCone, b: FovCone, cfg: GeometryConfig) -> float:
    """Rasterized intersection-over-union of two sectors.

    Shared grid over the pair's bounding box at cfg.grid_resolution_m;
    1.0 for identical cones, 0.0 for disjoint ones.
    """
    if (a.half_angle, a.range_m) == (b.half_angle, b.range_m):
        sa = ConeSet.from_cones([a, b])
        return float(pairwise_cone_iou(sa, sa, [0], [1], cfg.grid_resolution_m)[0])
    sa = ConeSet.from_cones([a])
    sb = ConeSet.from_cones([b])
    return float(pairwise_cone_iou(sa, sb, [0], [0], cfg.grid_resolution_m)[0])


def rasterize_sector(cone: FovCone, resolution: float):
    """Boolean occupancy mask of one sector on its own bounding-box grid.

    Returns (mask, (x0, y0)) with mask[j, i] covering cell center
    (x0 + (i+0.5)res, y0 + (j+0.5)res). Used for area checks and rendering.
    """
    box = sector_bboxes([cone.apex], [cone.heading], cone.half_angle, cone.range_m)[0]
    x0, y0, x1, y1 = box
    nx = max(1, math.ceil((x1 - x0) / resolution))
    ny = max(1, math.ceil((y1 - y0) / resolution))
    cx = x0 + (np.arange(nx) + 0.5) * resolution
    cy = y0 + (np.arange(ny) + 0.5) * resolution
    mask = _contains(
        cx[None, :] - cone.apex[0],
        cy[:, None] - cone.apex[1],
        math.cos(cone.heading),
        math.sin(cone.heading),
        math.cos(cone.half_angle),
        cone.range_m * cone.range_m,
    )
    return mask, (float(x0), float(y0))


def count_in_cone(cone: FovCone, points) -> int:
    """Number of points inside the sector (distance <= R, |angle| <= half)."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return 0
    pts = pts.reshape(-1, 2)
    inside = _contains(
        pts[:, 0] - cone.apex[0],
        pts[:, 1] - cone.apex[1],
        math.cos(cone.heading),
        math.sin(cone.heading),
        math.cos(cone.half_angle),
        cone.range_m * cone.range_m,
    )
    return int(np.count_nonzero(inside))


def _viewer_sort_key(vid: str):
    try:
        return (0, int(vid), vid)
    except ValueError:
        return (1, 0, vid)


def load_trajectories_csv(path, frame_rate: float) -> list[Trajectory]:
    """Read `frame,viewer_id,x,y` rows into per-viewer trajectories.

    Frames must be 0-indexed and dense per viewer; all viewers must cover the
    same frame count (MismatchedLengths otherwise).
    """
    per_viewer: dict[str, list[tuple[int, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"frame", "viewer_id", "x", "y"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected header frame,viewer_id,x,y")
        for row in reader:
            per_viewer.setdefault(row["viewer_id"], []).append(
                (int(row["frame"]), float(row["x"]), float(row["y"]))
            )
    if not per_viewer:
        raise ValueError(f"{path}: no rows")
    trajs = []
    lengths = set()
    for vid in sorted(per_viewer, key=_viewer_sort_key):
        rows = sorted(per_viewer[vid])
        frames = [r[0] for r in rows]
        if frames != list(range(len(rows))):
            raise ValueError(f"{path}: viewer {vid!r} frames not dense from 0")
        trajs.append(
            Trajectory(vid, np.array([(r[1], r[2]) for r in rows]), frame_rate)
        )
        lengths.add(len(rows))
    if len(lengths) > 1:
        raise MismatchedLengths(f"{path}: viewers disagree on frame count {lengths}")
    return trajs


def write_trajectories_csv(path, trajectories) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "viewer_id", "x", "y"])
        for traj in trajectories:
            for t, (x, y) in enumerate(traj.positions):
                writer.writerow([t, traj.viewer_id, f"{x:.10g}", f"{y:.10g}"])

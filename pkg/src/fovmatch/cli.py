"""Command-line driver: simulate, match, rank, sweep, baselines.

Reports are JSON with sorted keys and no timestamps, so a rerun with the
same seed is byte-identical; wall-clock timing goes to a separate
timing.txt next to each report.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .correlation import CorrConfig
from .delay_opt import OptimizerConfig
from .evaluation import (
    assignment_accuracy,
    rank_topviews,
    run_baselines,
    scenario_graphs,
    sweep_completeness,
    sweep_length,
    truth_columns,
    viewer_cmc,
)
from .features import FeatureConfig, build_ego_graph, build_top_graph
from .geometry import GeometryConfig
from .matching import SpectralConfig
from .pipeline import PipelineConfig, run_pipeline
from .simulator import ScenarioConfig, emit, generate, load_scenario_dir

METHOD_FLAGS = {"free": "free", "spectral": "spectral", "score": "score"}


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=sorted(METHOD_FLAGS), default="score")
    parser.add_argument("--init", choices=["zero", "median"], default="median")
    parser.add_argument("--alpha", type=float, default=0.9)
    parser.add_argument("--gamma", type=float, default=0.5)
    parser.add_argument("--theta-d", type=float, default=30.0, help="FOV half-angle, degrees")
    parser.add_argument("--fov-range", type=float, default=None, help="FOV range, meters")
    parser.add_argument("--grid-res", type=float, default=0.25, help="IOU raster cell, meters")
    parser.add_argument("--resample-rate", type=float, default=5.0)
    parser.add_argument("--max-lag", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def _configs(args) -> tuple[GeometryConfig, PipelineConfig]:
    geo = GeometryConfig(
        half_angle_deg=args.theta_d,
        range_m=args.fov_range,
        grid_resolution_m=args.grid_res,
    )
    pcfg = PipelineConfig(
        method=METHOD_FLAGS[args.method],
        init=args.init,
        features=FeatureConfig(
            gamma=args.gamma, alpha=args.alpha, resample_rate=args.resample_rate
        ),
        correlation=CorrConfig(max_lag=args.max_lag),
        spectral=SpectralConfig(),
        optimizer=OptimizerConfig(),
    )
    return geo, pcfg


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _write_timing(out_dir: Path, seconds: float) -> None:
    (out_dir / "timing.txt").write_text(f"{seconds:.3f} s\n")


def _write_cmc_csv(path: Path, curves: dict) -> None:
    with open(path, "w") as fh:
        fh.write("rank," + ",".join(curves) + "\n")
        length = max(len(c) for c in curves.values())
        for r in range(length):
            cells = [
                f"{curve[r]:.6f}" if r < len(curve) else ""
                for curve in curves.values()
            ]
            fh.write(f"{r + 1}," + ",".join(cells) + "\n")


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for idx in range(args.count):
        if args.delay_range > 0:
            delays = tuple(
                int(d) for d in rng.integers(-args.delay_range, args.delay_range + 1, args.n_ego)
            )
        else:
            delays = None
        cfg = ScenarioConfig(
            n_top=args.n_top,
            n_ego=args.n_ego,
            duration_frames=args.frames,
            frame_rate=args.fps,
            true_delays=delays,
            descriptor_noise_sigma=args.noise_sigma,
            count_noise_rate=args.count_noise,
            duration_bounds=None,
            seed=args.seed + idx,
        )
        emit(generate(cfg), args.out / f"scenario_{idx:03d}")
    print(f"wrote {args.count} scenario directories under {args.out}")
    return 0


def cmd_match(args) -> int:
    started = time.perf_counter()
    geo, pcfg = _configs(args)
    scenario = load_scenario_dir(args.scenario)
    ego, top = scenario_graphs(scenario, geo, pcfg)
    result = run_pipeline(ego, top, pcfg)
    truth = truth_columns(scenario, result.ego_ids, result.top_ids)
    cmc = viewer_cmc(result.soft, truth)
    report = {
        "method": args.method,
        "init": args.init,
        "assignment": result.assignment_map(),
        "delays": {vid: int(d) for vid, d in zip(result.ego_ids, result.delays.delays)},
        "score": result.score,
        "accuracy": assignment_accuracy(result.hard, truth),
        "cmc": [float(v) for v in cmc.hits_at_rank],
        "affinity": {
            "n_ego": result.affinity.n_ego,
            "n_top": result.affinity.n_top,
            "entries": [float(v) for v in result.affinity.data.ravel()],
            "diagnostics": list(result.affinity.diagnostics),
        },
        "soft_assignment": [float(v) for v in result.soft.P.ravel()],
        "hard_assignment": [int(v) for v in result.hard.X.ravel()],
        "trace": None if result.trace is None else result.trace.to_dict(),
    }
    _write_json(args.out / "report.json", report)
    _write_cmc_csv(args.out / "cmc.csv", {"viewer_cmc": cmc.hits_at_rank})
    _write_timing(args.out, time.perf_counter() - started)
    print(f"accuracy {report['accuracy']:.3f} score {result.score:.4f} -> {args.out}")
    return 0


def cmd_rank(args) -> int:
    started = time.perf_counter()
    geo, pcfg = _configs(args)
    query = load_scenario_dir(args.scenario)
    ego = build_ego_graph(query.ego_streams, pcfg.features)
    pool_dirs = sorted(p for p in Path(args.pool).iterdir() if p.is_dir())
    candidates = []
    true_index = None
    for idx, d in enumerate(pool_dirs):
        cand = load_scenario_dir(d)
        candidates.append(build_top_graph(cand.trajectories, geo, pcfg.features))
        if d.resolve() == Path(args.scenario).resolve():
            true_index = idx
    ranked, rank, diagnostics = rank_topviews(ego, candidates, pcfg, true_index)
    report = {
        "method": args.method,
        "init": args.init,
        "pool": [str(d.name) for d in pool_dirs],
        "ranking": [
            {"candidate": pool_dirs[idx].name, "score": None if np.isinf(s) else s}
            for idx, s in ranked
        ],
        "true_candidate_rank": rank,
        "diagnostics": diagnostics,
    }
    _write_json(args.out / "ranking.json", report)
    with open(args.out / "ranking.csv", "w") as fh:
        fh.write("rank,candidate,score\n")
        for pos, (idx, s) in enumerate(ranked, start=1):
            fh.write(f"{pos},{pool_dirs[idx].name},{'' if np.isinf(s) else f'{s:.6f}'}\n")
    _write_timing(args.out, time.perf_counter() - started)
    print(f"ranked {len(candidates)} candidates -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    geo, pcfg = _configs(args)
    def fmt(value):
        return "" if value is None else f"{value:.6f}"

    if args.kind == "completeness":
        scenarios = [
            load_scenario_dir(d)
            for d in sorted(p for p in Path(args.scenarios).iterdir() if p.is_dir())
        ]
        rows = sweep_completeness(scenarios, geo, pcfg, seed=args.seed)
        csv_lines = ["ratio_lo,ratio_hi,mean_accuracy,count"] + [
            f"{r['ratio_lo']},{r['ratio_hi']},{fmt(r['mean_accuracy'])},{r['count']}"
            for r in rows
        ]
    else:
        scenario = load_scenario_dir(args.scenario)
        rows = sweep_length(scenario, geo, pcfg, args.lengths)
        csv_lines = ["length,accuracy,skipped,reason"] + [
            f"{r['length']},{fmt(r['accuracy'])},{r['skipped']},{r['reason']}"
            for r in rows
        ]
    _write_json(args.out / "sweep.json", {"kind": args.kind, "rows": rows})
    (args.out / "sweep.csv").write_text("\n".join(csv_lines) + "\n")
    _write_timing(args.out, time.perf_counter() - started)
    print(f"{args.kind} sweep: {len(rows)} rows -> {args.out}")
    return 0


def cmd_baselines(args) -> int:
    started = time.perf_counter()
    geo, pcfg = _configs(args)
    scenario = load_scenario_dir(args.scenario)
    report = run_baselines(scenario, geo, pcfg, seed=args.seed)
    _write_json(args.out / "baselines.json", {"rows": report.to_dicts()})
    curves = {
        row.method: row.cmc.hits_at_rank for row in report.rows if row.cmc is not None
    }
    if curves:
        _write_cmc_csv(args.out / "baselines_cmc.csv", curves)
    _write_timing(args.out, time.perf_counter() - started)
    for row in report.rows:
        print(f"{row.method:>14}: accuracy {row.accuracy:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fovmatch",
        description="Match egocentric cameras to viewers in a top-view video",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="emit synthetic scenario directories")
    p_sim.add_argument("--count", type=int, default=1)
    p_sim.add_argument("--n-top", type=int, default=6)
    p_sim.add_argument("--n-ego", type=int, default=6)
    p_sim.add_argument("--frames", type=int, default=400)
    p_sim.add_argument("--fps", type=float, default=10.0)
    p_sim.add_argument("--delay-range", type=int, default=0)
    p_sim.add_argument("--noise-sigma", type=float, default=0.0)
    p_sim.add_argument("--count-noise", type=float, default=0.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", type=Path, required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_match = sub.add_parser("match", help="assign one scenario's ego videos")
    p_match.add_argument("--scenario", type=Path, required=True)
    _add_shared(p_match)
    p_match.set_defaults(func=cmd_match)

    p_rank = sub.add_parser("rank", help="rank candidate top views for an ego set")
    p_rank.add_argument("--scenario", type=Path, required=True, help="query scenario")
    p_rank.add_argument("--pool", type=Path, required=True, help="directory of scenario dirs")
    _add_shared(p_rank)
    p_rank.set_defaults(func=cmd_rank)

    p_sweep = sub.add_parser("sweep", help="completeness or length sweep")
    p_sweep.add_argument("--kind", choices=["completeness", "length"], required=True)
    p_sweep.add_argument("--scenario", type=Path, help="scenario dir (length sweep)")
    p_sweep.add_argument("--scenarios", type=Path, help="dir of scenario dirs (completeness)")
    p_sweep.add_argument("--lengths", type=int, nargs="+", default=[100, 200, 300, 400])
    _add_shared(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_base = sub.add_parser("baselines", help="reference methods on one scenario")
    p_base.add_argument("--scenario", type=Path, required=True)
    _add_shared(p_base)
    p_base.set_defaults(func=cmd_baselines)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep":
        if args.kind == "completeness" and args.scenarios is None:
            build_parser().error("--scenarios required for completeness sweep")
        if args.kind == "length" and args.scenario is None:
            build_parser().error("--scenario required for length sweep")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

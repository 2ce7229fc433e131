"""Batch command-line surface: generate | augment | project | reconstruct |
evaluate | plot.

Every command is deterministic given its flags and seed. Data goes to files,
diagnostics to stderr. Exit codes: 0 ok, 1 usage, 2 data error, 3 I/O.
Frames may be processed by a bounded worker pool; output ordering always
matches input ordering.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluate as ev
from . import model, plot, synth
from .augment import AugmentConfig, augment_scene
from .errors import InvalidInput, Lane3DError
from .model import FlatFrame, Lane2D, Scene
from .projection import project_virtual_top_xy
from .reconstruct import SolveOptions, reconstruct_frame, write_trace_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _ordered_map(fn, items, workers: int):
    """Apply fn to items, optionally in a worker pool; results keep order."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _parse_config(path, parse):
    """Load and parse a config file, turning malformed content into a data
    error instead of a traceback."""
    try:
        return parse(_load_json(path))
    except (TypeError, ValueError, KeyError) as e:
        raise InvalidInput(f"bad config {path}: {e!r}") from e


def cmd_generate(args) -> int:
    config = _parse_config(args.config, dict) if args.config else {}
    try:
        scenes = synth.generate_scenes(config, args.count, args.seed)
    except (TypeError, ValueError, KeyError) as e:
        raise InvalidInput(f"bad config {args.config}: {e!r}") from e
    model.write_scenes(scenes, args.out)
    print(f"wrote {len(scenes)} scenes to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = _parse_config(args.config, AugmentConfig.from_dict) if args.config \
        else AugmentConfig()
    if args.seed is not None:
        cfg = AugmentConfig.from_dict({**_cfg_dict(cfg), "seed": args.seed})
    scenes = model.read_scenes(args.in_path)
    out = _ordered_map(lambda pair: augment_scene(pair[1], cfg, draw_index=pair[0]),
                       list(enumerate(scenes)), args.workers)
    model.write_scenes(out, args.out)
    print(f"augmented {len(out)} scenes to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cfg_dict(cfg: AugmentConfig) -> dict:
    return {
        "pitch_range": list(cfg.pitch_range), "roll_range": list(cfg.roll_range),
        "yaw_range": list(cfg.yaw_range), "p_pitch": cfg.p_pitch,
        "p_roll": cfg.p_roll, "p_yaw": cfg.p_yaw,
        "angle_unit": cfg.angle_unit, "seed": cfg.seed,
    }


def _project_scene(scene: Scene) -> FlatFrame:
    h = scene.camera.height_m
    lanes = [Lane2D(id=lane.id,
                    points=project_virtual_top_xy(lane.xy, lane.z, h),
                    visibility=lane.visibility)
             for lane in scene.lanes]
    return FlatFrame(frame_id=scene.frame_id, camera=scene.camera, lanes=lanes)


def cmd_project(args) -> int:
    scenes = model.read_scenes(args.in_path)
    frames = _ordered_map(_project_scene, scenes, args.workers)
    model.write_flat_frames(frames, args.out)
    print(f"projected {len(frames)} frames to {args.out}", file=sys.stderr)
    return EXIT_OK


def _reconstruct_config(raw: dict):
    opts = SolveOptions.from_dict({k: v for k, v in raw.items() if k != "trace_dir"})
    return opts, raw.get("trace_dir")


def cmd_reconstruct(args) -> int:
    opts, trace_dir = _parse_config(args.config, _reconstruct_config) \
        if args.config else (SolveOptions(), None)
    frames = model.read_flat_frames(args.in_path)

    def solve(frame: FlatFrame) -> Scene:
        if args.h_cam is not None:
            frame = FlatFrame(frame_id=frame.frame_id,
                              camera=model.CameraPose(
                                  height_m=args.h_cam,
                                  pitch_rad=frame.camera.pitch_rad,
                                  intrinsics=frame.camera.intrinsics),
                              lanes=frame.lanes)
        result = reconstruct_frame(frame, opts)
        if trace_dir is not None:
            out = Path(trace_dir)
            out.mkdir(parents=True, exist_ok=True)
            for k, trace in enumerate(result.traces):
                write_trace_csv(trace, out / f"{frame.frame_id}_pair{k}.csv")
        meta = {f"solver_status:{lane_id}": status
                for lane_id, status in sorted(result.statuses.items())}
        for lane_id, was_clamped in sorted(result.clamped.items()):
            if was_clamped:
                meta[f"solver_clamped:{lane_id}"] = "1"
        return Scene(frame_id=frame.frame_id, camera=frame.camera,
                     lanes=result.lanes, metadata=meta)

    scenes = _ordered_map(solve, frames, args.workers)
    model.write_scenes(scenes, args.out)
    skipped = sum(1 for s in scenes
                  for v in s.metadata.values() if v == "no_pairing")
    if skipped:
        print(f"{skipped} lanes had no pairing", file=sys.stderr)
    print(f"reconstructed {len(scenes)} frames to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _parse_config(args.config, ev.MatchConfig.from_dict) if args.config \
        else ev.MatchConfig()
    gt = model.read_scenes(args.gt)
    main_report = ev.evaluate_frames(gt, model.read_predictions(args.pred), cfg)
    out = main_report.to_dict()
    if args.joint:
        reports = [main_report]
        for path in args.joint:
            reports.append(ev.evaluate_frames(gt, model.read_predictions(path), cfg))
        joint = ev.joint_offset_errors(reports)
        out["joint"] = [
            {"source": src, "x_far": j.x_far, "z_far": j.z_far,
             "pair_count": j.pair_count, "empty_intersection": j.empty_intersection}
            for src, j in zip([args.pred, *args.joint], joint)
        ]
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    if args.csv:
        ev.write_report_csv(main_report, args.csv)
    print(f"F={main_report.f_score:.4f} AP={main_report.ap:.4f} "
          f"x_far={main_report.x_err_far:.4f} z_far={main_report.z_err_far:.4f}",
          file=sys.stderr)
    return EXIT_OK


def _looks_like_report(path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.read(1).strip()
        if head != "{":
            return False
        fh.seek(0)
        try:
            doc = json.load(fh)
        except json.JSONDecodeError:
            return False
    return "per_frame" in doc


def cmd_plot(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if _looks_like_report(args.in_path):
        report = ev.read_report(args.in_path)
        path = out_dir / "report.svg"
        plot.write_svg(plot.render_report_svg(report), path)
        print(f"wrote {path}", file=sys.stderr)
        return EXIT_OK
    scenes = model.read_scenes(args.in_path)
    pred_by_frame = {}
    if args.pred:
        for p in model.read_predictions(args.pred):
            pred_by_frame[p.frame_id] = p.lanes
    count = 0
    for scene in scenes:
        svg = plot.render_scene_svg(scene, pred_by_frame.get(scene.frame_id))
        plot.write_svg(svg, out_dir / f"{scene.frame_id}.svg")
        count += 1
    print(f"wrote {count} figures to {out_dir}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="lane3d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_workers(p):
        p.add_argument("--workers", type=int, default=1, metavar="N")

    p = sub.add_parser("generate", help="generate synthetic scenes")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("augment", help="rotation-augment scenes")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--config", help="augment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", required=True)
    add_workers(p)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("project", help="project scenes to flat-ground lanes")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    add_workers(p)
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("reconstruct", help="reconstruct 3D lanes from flat lanes")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--config", help="solver options JSON")
    p.add_argument("--h-cam", dest="h_cam", type=float, default=None,
                   help="override the camera height of the input frames")
    p.add_argument("--out", required=True)
    add_workers(p)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="evaluate predictions against GT")
    p.add_argument("gt", help="ground-truth scenes JSONL")
    p.add_argument("pred", help="prediction JSONL")
    p.add_argument("--config", help="match config JSON")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="optional per-frame CSV path")
    p.add_argument("--joint", nargs="+", default=None, metavar="PRED",
                   help="additional prediction files for the joint metric")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("plot", help="render SVG figures")
    p.add_argument("--in", dest="in_path", required=True,
                   help="scenes JSONL or report JSON")
    p.add_argument("--pred", help="optional prediction JSONL overlay")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.fn(args)
    except (Lane3DError, json.JSONDecodeError) as e:
        print(f"lane3d: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"lane3d: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

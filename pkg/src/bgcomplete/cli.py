"""Command-line entry points.

Verbs: synth, init-bg, run, eval, flow, complete, report. Exit codes:
0 success, 2 I/O failure, 3 numeric failure, 4 precondition violation,
5 data mismatch. Diagnostics go to stderr; machine-readable output goes
to files or stdout.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import backend
from .completion import (FILL_DIFFUSION, FILL_FLOW, FILL_OBSERVED,
                         FILL_POISSON, complete_background)
from .errors import (AllPixelsMissing, BgCompleteError, DimensionMismatch,
                     IoFailure, MissingFrame, PreconditionError,
                     UnreadableFile)
from .evaluation import (ConfusionCounts, MetricSet, accumulate, aggregate,
                         emit_report, load_gt_frame, metrics,
                         parse_grouping_file, parse_range_file)
from .flow import FlowParams, estimate_flow, write_flo
from .imaging import (dilate_mask, list_frame_files, load_frame, load_mask,
                      load_sequence, save_frame, save_mask, to_gray)
from .pipeline import PipelineConfig, initialize, run_video
from .synthetic import SCENES, generate_scene, write_scene

EXIT_OK = 0
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_PRECONDITION = 4
EXIT_MISMATCH = 5

PROVENANCE_COLORS = {
    FILL_OBSERVED: (0, 0, 0),
    FILL_FLOW: (0, 170, 0),
    FILL_POISSON: (255, 165, 0),
    FILL_DIFFUSION: (220, 0, 0),
}

_AUTO_PATTERNS = ("in%06d.png", "in%06d.jpg")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with the precondition code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PRECONDITION)


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(parser):
    group = parser.add_argument_group(
        "pipeline configuration (flags override --config file values)")
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = _parse_bool if isinstance(f.default, bool) else type(f.default)
        group.add_argument(flag, dest=f.name, type=kind, default=None,
                           metavar="V", help=f"default: {f.default}")


def _build_config(args) -> PipelineConfig:
    cfg = (PipelineConfig.from_file(args.config)
           if getattr(args, "config", None) else PipelineConfig())
    for f in dataclasses.fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    return cfg.validate()


def _resolve_pattern(directory, pattern):
    if pattern != "auto":
        return pattern
    for cand in _AUTO_PATTERNS:
        if list_frame_files(directory, cand):
            return cand
    raise UnreadableFile(f"no {' or '.join(_AUTO_PATTERNS)} files "
                         f"in {directory}")


def _provenance_png(path, filled):
    img = np.zeros(filled.shape + (3,), dtype=np.uint8)
    for code, color in PROVENANCE_COLORS.items():
        img[filled == code] = color
    save_frame(path, img)


def _say(msg):
    print(msg, file=sys.stderr)


# --- verbs ---


def cmd_synth(args):
    scene = generate_scene(args.scene, args.length, width=args.width,
                           height=args.height, seed=args.seed,
                           speed=args.speed, box_size=args.box_size)
    write_scene(scene, args.out)
    _say(f"wrote {args.length} frames (+gt, +plates) to {args.out}")
    return EXIT_OK


def cmd_init_bg(args):
    cfg = _build_config(args)
    if args.frames is not None:
        cfg.init_window = args.frames
    cfg.validate()
    pattern = _resolve_pattern(args.input_dir, args.pattern)
    seq = load_sequence(args.input_dir, pattern)
    if len(seq) < cfg.init_window:
        raise PreconditionError(
            f"{len(seq)} frames < init window {cfg.init_window}")
    backend.set_num_threads(cfg.threads)
    model = initialize(seq, cfg)
    save_frame(args.out, model.empty_background)
    if model.provenance is not None:
        stem, ext = os.path.splitext(args.out)
        _provenance_png(f"{stem}_provenance{ext or '.png'}",
                        model.provenance)
    for warning in model.warnings:
        _say(f"warning: {warning}")
    _say(f"wrote background to {args.out}")
    return EXIT_OK


def cmd_run(args):
    cfg = _build_config(args)
    pattern = _resolve_pattern(args.input_dir, args.pattern)
    seq = load_sequence(args.input_dir, pattern)
    records = run_video(seq, cfg)
    os.makedirs(args.out, exist_ok=True)
    frames_log = []
    refreshes = []
    for rec in records:
        file_idx = seq.first_index + rec.index
        save_mask(os.path.join(args.out, f"bin{file_idx:06d}.png"), rec.mask)
        frames_log.append({"index": file_idx, "fg_ratio": rec.fg_ratio,
                           "bg_refreshed": rec.bg_refreshed,
                           "warm_up": rec.warm_up})
        if rec.bg_refreshed:
            refreshes.append(file_idx)
    manifest = {"config": cfg.to_dict(), "source": seq.source_id,
                "first_index": seq.first_index, "frames": frames_log,
                "refresh_indices": refreshes}
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(f"wrote {len(records)} masks and manifest.json to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    gt_files = list_frame_files(args.gt_dir, args.gt_pattern)
    if not gt_files:
        raise UnreadableFile(f"no {args.gt_pattern} files in {args.gt_dir}")
    pred_files = list_frame_files(args.pred_dir, args.pred_pattern)
    indices = sorted(gt_files)
    if args.range:
        first, last = parse_range_file(args.range)
        indices = [i for i in indices if first <= i <= last]
    if args.manifest and not args.include_warmup:
        with open(args.manifest) as fh:
            doc = json.load(fh)
        warm = {f["index"] for f in doc.get("frames", []) if f["warm_up"]}
        indices = [i for i in indices if i not in warm]
    if not indices:
        raise PreconditionError("no frames selected for evaluation")
    counts = ConfusionCounts()
    for idx in indices:
        if idx not in pred_files:
            raise MissingFrame(f"no prediction for frame {idx}")
        pred = load_mask(pred_files[idx])
        gt = load_gt_frame(gt_files[idx])
        counts = accumulate(pred, gt, counts)
    name = args.name or os.path.basename(os.path.abspath(args.pred_dir))
    mset = metrics(counts)
    agg = aggregate({name: mset})
    emit_report(agg, args.out, basename="report")
    with open(os.path.join(args.out, "report_counts.json"), "w") as fh:
        json.dump({"counts": {name: dataclasses.asdict(counts)},
                   "frames_evaluated": len(indices)}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    row = [name] + [("" if v is None else f"{v:.4f}")
                    for v in mset.as_dict().values()]
    print("\t".join(row))
    return EXIT_OK


def cmd_flow(args):
    cfg = _build_config(args)
    pattern = _resolve_pattern(args.input_dir, args.pattern)
    files = list_frame_files(args.input_dir, pattern)
    for idx in (args.frame_a, args.frame_b):
        if idx not in files:
            raise PreconditionError(f"frame index {idx} not present")
    if args.frame_a == args.frame_b:
        raise PreconditionError("need two distinct frame indices")
    frames = []
    for idx in (args.frame_a, args.frame_b):
        arr = load_frame(files[idx])
        frames.append(to_gray(arr) if arr.ndim == 3 else arr)
    params = FlowParams(levels=cfg.flow_levels,
                        iterations=cfg.flow_iterations,
                        regularization=cfg.flow_regularization)
    backend.set_num_threads(cfg.threads)
    field = estimate_flow(frames[0], frames[1], params)
    write_flo(args.out, field)
    _say(f"wrote flow {args.frame_a}->{args.frame_b} to {args.out}")
    return EXIT_OK


def cmd_complete(args):
    cfg = _build_config(args)
    pattern = _resolve_pattern(args.input_dir, args.pattern)
    seq = load_sequence(args.input_dir, pattern)
    mask_dir = args.mask_dir or args.input_dir
    mask_files = list_frame_files(mask_dir, args.mask_pattern)
    masks = []
    for idx in seq.indices:
        if idx not in mask_files:
            raise MissingFrame(f"no mask for frame {idx} "
                               f"({args.mask_pattern} in {mask_dir})")
        masks.append(load_mask(mask_files[idx]))
    masks = np.stack([dilate_mask(m, cfg.dilation_radius) for m in masks])
    if masks.shape[1:] != seq.frames.shape[1:3]:
        raise DimensionMismatch(f"masks {masks.shape[1:]} vs frames "
                                f"{seq.frames.shape[1:3]}")
    backend.set_num_threads(cfg.threads)
    done = complete_background(seq.frames, masks, cfg.completion_config())
    save_frame(args.out, done.frame)
    stem, ext = os.path.splitext(args.out)
    _provenance_png(f"{stem}_provenance{ext or '.png'}", done.filled)
    for warning in done.warnings:
        _say(f"warning: {warning}")
    _say(f"wrote completed frame to {args.out}")
    return EXIT_OK


def cmd_report(args):
    per_video = {}
    for path in args.inputs:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UnreadableFile(f"cannot read {path}: {exc}") from exc
        if "counts" in doc:
            for video, c in doc["counts"].items():
                per_video[video] = metrics(ConfusionCounts(**c))
        elif "videos" in doc:
            for video, vals in doc["videos"].items():
                per_video[video] = MetricSet(**vals)
        else:
            raise UnreadableFile(f"{path}: neither counts nor videos")
    grouping = parse_grouping_file(args.grouping) if args.grouping else {}
    agg = aggregate(per_video, grouping)
    paths = emit_report(agg, args.out, basename=args.basename,
                        grouping=grouping)
    _say("wrote " + ", ".join(paths))
    return EXIT_OK


# --- parser wiring ---


def build_parser():
    parser = _Parser(prog="bgcomplete",
                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene",
                       parents=[], description="Deterministic synthetic "
                       "sequence + ground truth + clean plates.")
    p.add_argument("--scene", choices=SCENES, default="pan")
    p.add_argument("--length", type=int, default=250)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--speed", type=int, default=1,
                   help="camera pan in px/frame (pan scene)")
    p.add_argument("--box-size", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("init-bg", help="generate the initial background")
    p.add_argument("input_dir")
    p.add_argument("--frames", type=int, default=None,
                   help="initialization window (overrides --init-window)")
    p.add_argument("--pattern", default="auto")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_init_bg)

    p = sub.add_parser("run", help="full detection run over a sequence")
    p.add_argument("input_dir")
    p.add_argument("--pattern", default="auto")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--pred-pattern", default="bin%06d.png")
    p.add_argument("--gt-pattern", default="gt%06d.png")
    p.add_argument("--range", default=None,
                   help="file with inclusive 'first last' frame indices")
    p.add_argument("--manifest", default=None,
                   help="run manifest used to exclude warm-up frames")
    p.add_argument("--include-warmup", action="store_true")
    p.add_argument("--name", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flow", help="dump flow between two frames as .flo")
    p.add_argument("input_dir")
    p.add_argument("frame_a", type=int)
    p.add_argument("frame_b", type=int)
    p.add_argument("--pattern", default="auto")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("complete",
                       help="background-complete a window of frames")
    p.add_argument("input_dir")
    p.add_argument("--mask-dir", default=None,
                   help="directory with masks (default: input dir)")
    p.add_argument("--mask-pattern", default="gt%06d.png")
    p.add_argument("--pattern", default="auto")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("report", help="aggregate eval outputs into tables")
    p.add_argument("inputs", nargs="+",
                   help="report_counts.json / report.json files")
    p.add_argument("--grouping", default=None,
                   help="file mapping 'video category' per line")
    p.add_argument("--basename", default="report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_PRECONDITION
    except (UnreadableFile, MissingFrame, IoFailure) as exc:
        _say(f"error: {exc}")
        return EXIT_IO
    except AllPixelsMissing as exc:
        _say(f"error: {exc}")
        return EXIT_NUMERIC
    except PreconditionError as exc:
        _say(f"error: {exc}")
        return EXIT_PRECONDITION
    except DimensionMismatch as exc:
        _say(f"error: {exc}")
        return EXIT_MISMATCH
    except BgCompleteError as exc:
        _say(f"error: {exc}")
        return EXIT_NUMERIC


def entry():
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()

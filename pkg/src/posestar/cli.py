"""Command-line entry points: generate, sweep, synth."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import PoseStarError
from .pipeline import PipelineConfig, load_fixture_dir, run, sweep, write_sweep_csv
from .synthgen import DEFAULT_INSTRUCTIONS, POSE_PRESETS, PhaseProfile, emit_fixture
from .tensorio import (
    read_attention_stack,
    read_image,
    read_keypoints,
    read_mask_png,
    read_self_attention_stack,
    write_mask_pgm,
    write_mask_png,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PIPELINE = 3


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--beta", type=float, default=0.3)
    parser.add_argument("--alpha", type=float, default=0.4)
    parser.add_argument("--mu", type=float, default=0.1)
    parser.add_argument("--r-mode", choices=("min", "average", "max"), default="average")
    parser.add_argument("--window", type=int, default=3)
    parser.add_argument("--combine-mode", choices=("max", "mean", "best"), default="max")
    parser.add_argument("--mu-literal", action="store_true",
                        help="use the center-disk edge selector variant")
    parser.add_argument("--debug-dir", default=None)


def _config_from(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        beta=args.beta, alpha=args.alpha, mu=args.mu, r_mode=args.r_mode,
        window=args.window, combine_mode=args.combine_mode,
        mu_literal=args.mu_literal, debug_dir=args.debug_dir,
    )


def _cmd_generate(args: argparse.Namespace) -> int:
    try:
        image = read_image(args.image)
        attn = read_attention_stack(args.attn)
        self_attn = read_self_attention_stack(args.self_attn)
        keypoints = read_keypoints(args.keypoints)
        ground_truth = read_mask_png(args.gt) if args.gt else None
        config = _config_from(args)
        config.validate()
    except (PoseStarError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        mask, report = run(image, attn, self_attn, keypoints, args.instruction,
                           config, ground_truth=ground_truth)
        write_mask_png(mask.data, args.out)
        if args.out_pgm:
            write_mask_pgm(mask.data, args.out_pgm)
        report.mask_path = args.out
        if args.report:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(report.to_json() + "\n")
        summary = {"mask": args.out, "area": mask.area()}
        if report.iou is not None:
            summary["iou"] = round(report.iou, 4)
        print(json.dumps(summary))
        return EXIT_OK
    except PoseStarError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


def _cmd_sweep(args: argparse.Namespace) -> int:
    try:
        with open(args.grid, "r", encoding="utf-8") as fh:
            grid = json.load(fh)
        fixtures = load_fixture_dir(args.fixtures)
        if not fixtures:
            print(f"input error: no fixtures under {args.fixtures}", file=sys.stderr)
            return EXIT_INPUT
    except (PoseStarError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        rows = sweep(grid, fixtures)
        write_sweep_csv(rows, args.out)
        for row in rows:
            print(json.dumps(row))
        return EXIT_OK
    except PoseStarError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


def _cmd_synth(args: argparse.Namespace) -> int:
    try:
        profile = PhaseProfile(
            phase1_frac=args.phase1, phase2_frac=args.phase2, phase3_frac=args.phase3,
            jitter=args.jitter, seed=args.seed, paper_band=not args.no_band_check,
        )
        manifest = emit_fixture(
            args.out_dir, pose=args.pose, seed=args.seed, image_size=args.image_size,
            profile=profile, primary_instruction=args.instruction,
        )
        print(json.dumps(manifest, sort_keys=True))
        return EXIT_OK
    except (PoseStarError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posestar",
                                     description="Anatomy-aware human mask synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="synthesize a mask for one image")
    gen.add_argument("--image", required=True)
    gen.add_argument("--attn", required=True)
    gen.add_argument("--self-attn", required=True, dest="self_attn")
    gen.add_argument("--keypoints", required=True)
    gen.add_argument("--instruction", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--out-pgm", default=None)
    gen.add_argument("--gt", default=None, help="ground-truth mask PNG for IoU reporting")
    gen.add_argument("--report", default=None, help="write the run report JSON here")
    _add_config_flags(gen)
    gen.set_defaults(func=_cmd_generate)

    sw = sub.add_parser("sweep", help="mean IoU over a fixture set for a config grid")
    sw.add_argument("--fixtures", required=True)
    sw.add_argument("--grid", required=True, help="JSON file: {param: [values, ...]}")
    sw.add_argument("--out", required=True, help="CSV output path")
    sw.set_defaults(func=_cmd_sweep)

    sy = sub.add_parser("synth", help="emit a synthetic fixture directory")
    sy.add_argument("--pose", choices=POSE_PRESETS, default="standing")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out-dir", required=True)
    sy.add_argument("--image-size", type=int, default=256)
    sy.add_argument("--instruction", default=DEFAULT_INSTRUCTIONS[0])
    sy.add_argument("--phase1", type=float, default=0.3)
    sy.add_argument("--phase2", type=float, default=0.3)
    sy.add_argument("--phase3", type=float, default=0.4)
    sy.add_argument("--jitter", type=float, default=0.05)
    sy.add_argument("--no-band-check", action="store_true")
    sy.set_defaults(func=_cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

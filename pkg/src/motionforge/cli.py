"""Command-line entry points: synth, condition, train, generate, eval, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frames", type=int, default=17, help="frames per clip")
    p.add_argument("--size", type=int, default=64, help="square image extent")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--vcm-blocks", type=int, default=2)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--points", type=int, default=9, help="trajectory points per object")


def _config_from_args(args) -> "ModelConfig":
    from .dit.model import ModelConfig

    return ModelConfig(n_frames=args.frames, height=args.size, width=args.size,
                       patch=args.patch, stride=args.stride, dim=args.dim,
                       heads=args.heads, blocks=args.blocks, vcm_blocks=args.vcm_blocks,
                       n_points=args.points, seed=getattr(args, "seed", 0))


def cmd_synth(args) -> int:
    from .synth import make_dataset

    index = make_dataset(args.count, args.seed, args.out, n_frames=args.frames,
                         size=args.size, progress=not args.quiet)
    print(f"wrote {len(index)} clips to {args.out}")
    return 0


def cmd_condition(args) -> int:
    from .conditioning import build_control_package, read_spec, save_package

    spec = read_spec(args.spec)
    pkg = build_control_package(spec, stride=args.stride, n_p=args.points,
                                point_radius_px=args.radius)
    save_package(pkg, args.out)
    print(f"wrote conditioning package to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .dit.training import TrainSettings, train

    stage_steps = tuple(int(s) for s in args.steps.split(","))
    if len(stage_steps) != 3:
        print("--steps must be three comma-separated integers (stage 0,1,2)", file=sys.stderr)
        return 1
    settings = TrainSettings(batch_size=args.batch, lr=args.lr, warmup_steps=args.warmup,
                             stage_steps=stage_steps, seed=args.seed,
                             use_guidance=not args.no_guidance)
    stages = tuple(int(s) for s in args.stages.split(",")) if args.stages else (0, 1, 2)
    result = train(args.data, _config_from_args(args), settings, args.out,
                   log_path=args.log, resume_from=args.resume, stages=stages,
                   progress=not args.quiet)
    print(f"checkpoint: {result.checkpoint_path} (step {result.steps}, "
          f"final loss {result.final_loss:.5f})")
    return 0


def cmd_generate(args) -> int:
    from .conditioning import read_spec
    from .dit.generation import generate

    spec = read_spec(args.spec)
    video = generate(spec, steps=args.steps, checkpoint=args.checkpoint, out_dir=args.out,
                     use_vcm=not args.no_vcm, use_omm=not args.no_omm,
                     use_guidance=not args.no_guidance, write_mp4=args.mp4)
    print(f"wrote {video.shape[0]} frames to {os.path.join(args.out, 'frames')}")
    return 0


def cmd_eval(args) -> int:
    from .conditioning import read_spec
    from .imgio import read_png
    from .metrics import evaluate, write_reports
    from .synth import read_manifest

    spec = read_spec(args.spec)
    frames = []
    j = 0
    while True:
        path = os.path.join(args.video, f"{j:03d}.png")
        if not os.path.exists(path):
            break
        frames.append(read_png(path))
        j += 1
    if not frames:
        print(f"no frames found under {args.video}", file=sys.stderr)
        return 1
    annotation = read_manifest(args.ann) if args.ann else None
    clip_id = args.clip_id or os.path.basename(os.path.normpath(args.video))
    report = evaluate(spec, np.stack(frames), annotation, clip_id=clip_id)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if args.out:
        write_reports([report], args.out)
    return 0


def cmd_serve(args) -> int:
    from .service.app import serve

    serve(port=args.port, host=args.host, workers=args.workers)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionforge",
                                     description="joint camera/object motion control pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=17)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("condition", help="build a conditioning package from a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--radius", type=int, default=1, help="splat radius in pixels")
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("train", help="train the toy model (stages 0-2)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", default="800,1100,1100")
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", default=None)
    p.add_argument("--stages", default=None, help="comma list, e.g. 1,2")
    p.add_argument("--log", default=None)
    p.add_argument("--no-guidance", action="store_true",
                   help="ablation: drop guidance renders (Plücker only)")
    p.add_argument("--quiet", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate a video from a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--no-vcm", action="store_true")
    p.add_argument("--no-omm", action="store_true")
    p.add_argument("--no-guidance", action="store_true")
    p.add_argument("--mp4", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score a frame directory against a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--video", required=True, help="directory of 000.png, 001.png, ...")
    p.add_argument("--ann", default=None, help="annotation.json for camera-error metrics")
    p.add_argument("--out", default=None, help="report output directory")
    p.add_argument("--clip-id", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # uniform nonzero exit with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

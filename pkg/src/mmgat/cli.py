"""Command-line entry point: ``mmgat {synth,preprocess,train,eval,gradcheck,inspect}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import DataFormatError, load_frames_csv, preprocess, save_frames_csv, synth_dataset
from .optim import NonFiniteGradientError
from .training import (CheckpointError, NonFiniteLossError, TrainConfig, evaluate_checkpoint,
                       load_checkpoint, train)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _odd_window(text: str) -> int:
    value = _positive_int(text)
    if value % 2 == 0:
        raise argparse.ArgumentTypeError(f"fusion window must be odd, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmgat", description="Graph-attention pose estimation "
                     "from radar point clouds.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic labeled dataset")
    p.add_argument("--frames", type=_positive_int, default=100, help="number of frames")
    p.add_argument("--points", type=_positive_int, default=64, help="points per frame")
    p.add_argument("--joints", type=_positive_int, default=17, help="joints per skeleton")
    p.add_argument("--noise", type=float, default=0.02, help="point noise sigma (m)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--trajectories", type=_positive_int, default=1,
                   help="independent walkers (group ids for holdout splits)")
    p.add_argument("--out", required=True, help="output directory for points.csv/labels.csv")

    p = sub.add_parser("preprocess", help="sort, fuse and denoise a dataset")
    p.add_argument("--in", dest="inp", required=True, help="input point CSV")
    p.add_argument("--labels", help="label CSV (default: companion of --in)")
    p.add_argument("--out", required=True, help="output point CSV (labels written alongside)")
    p.add_argument("--fuse-window", type=_odd_window, default=1,
                   help="consecutive frames stacked per output frame (odd)")
    p.add_argument("--denoise-bound", type=_positive_float, default=None,
                   help="drop frames with a keypoint coordinate outside (-B, B) m")
    p.add_argument("--sort", action="store_true", help="sort points by (x, y, z)")

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True, help="JSON or key=value training config")
    p.add_argument("--data", required=True, help="point CSV with companion labels")
    p.add_argument("--labels", help="label CSV (default: companion of --data)")
    p.add_argument("--checkpoint", help="checkpoint path (overrides config)")
    p.add_argument("--log", help="per-epoch JSON-lines log (overrides config)")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="labeled point CSV")
    p.add_argument("--labels", help="label CSV (default: companion of --data)")
    p.add_argument("--protocol", choices=("mars", "mri"), default="mri",
                   help="mars: MAE/RMSE; mri: MPJPE and PA-MPJPE")

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--full-width", action="store_true",
                   help="default-width model, differencing --sample entries per tensor")
    p.add_argument("--sample", type=_positive_int, default=20,
                   help="entries per tensor with --full-width")
    p.add_argument("--verbose-params", action="store_true", help="per-tensor errors")

    p = sub.add_parser("inspect", help="print a checkpoint's parameters and config")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    return parser


def _cmd_synth(args) -> int:
    ds = synth_dataset(args.frames, args.points, args.joints, args.noise, args.seed,
                       n_trajectories=args.trajectories)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        pts, labels = save_frames_csv(ds, out / "points.csv", out / "labels.csv")
    except OSError as exc:
        print(f"cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote {pts} ({sum(f.n_points for f in ds)} points) and {labels} ({len(ds)} frames)")
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    ds = load_frames_csv(args.inp, args.labels, sort=args.sort)
    ds, removed = preprocess(ds, sort=args.sort, window=args.fuse_window,
                             bound=args.denoise_bound)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_frames_csv(ds, out)
    except OSError as exc:
        print(f"cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"frames={len(ds)} removed={len(removed)}")
    print("removed_ids=" + ",".join(map(str, removed)))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_file(args.config)
    if args.checkpoint:
        cfg.checkpoint_path = args.checkpoint
    if args.log:
        cfg.log_path = args.log
    ds = load_frames_csv(args.data, args.labels)
    resume = load_checkpoint(args.resume) if args.resume else None
    result = train(ds, cfg, resume=resume)
    for rec in result.log:
        print(rec.to_json())
    if cfg.checkpoint_path:
        print(f"checkpoint={cfg.checkpoint_path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_frames_csv(args.data, args.labels)
    if not ds.labeled_frames():
        print("evaluation needs labeled frames", file=sys.stderr)
        return EXIT_USAGE
    report = evaluate_checkpoint(ckpt, ds, args.protocol)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_canonical
    from .model import ModelConfig

    if args.full_width:
        report = run_canonical(args.seed, ModelConfig(joint_count=3), sample=args.sample)
    else:
        report = run_canonical(args.seed)
    text = report.to_text()
    print(text if args.verbose_params else text.splitlines()[-1])
    return EXIT_OK if report.passed else EXIT_NUMERIC


def _cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    print(f"epoch={ckpt.epoch} step={ckpt.adam.step}")
    print("config=" + json.dumps(ckpt.config.to_dict(), sort_keys=True))
    total = 0
    for name, p in ckpt.params.items():
        print(f"{name} {list(p.shape)}")
        total += p.size
    print(f"parameters={total}")
    return EXIT_OK


COMMANDS = {"synth": _cmd_synth, "preprocess": _cmd_preprocess, "train": _cmd_train,
            "eval": _cmd_eval, "gradcheck": _cmd_gradcheck, "inspect": _cmd_inspect}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stdout)
    try:
        return COMMANDS[args.command](args)
    except (NonFiniteLossError, NonFiniteGradientError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config
from .errors import ConfigError, DataError
from .synthetic import make_dataset

log = logging.getLogger("melanoma_ensemble")


def _stage(args):
    cfg = load_config(args.config, out=args.out, seed=args.seed, jobs=args.jobs)
    if args.command == "extract":
        status = pipeline.cmd_extract(cfg)
        computed = sum(1 for v in status.values() if v == "computed")
        print(f"feature files: {computed} computed, {len(status) - computed} cached")
    elif args.command == "train":
        for info in pipeline.cmd_train_predict(cfg):
            print(f"{info['member_id']}: C={info['C']:g} gamma={info['gamma']:.4g} "
                  f"train bAcc={info['train_bacc']:.4f} ({info['reduction']})")
    elif args.command == "fuse":
        res = pipeline.cmd_fuse(cfg)
        print(f"fused {len(res.kept)} of {len(res.members)} members")
    elif args.command == "evaluate":
        print(pipeline.cmd_evaluate(cfg).table(), end="")
    elif args.command == "run-all":
        print(pipeline.run_all(cfg).table(), end="")


def _synth(args):
    counts = {"train": args.train, "val": args.val, "test": args.test}
    manifest = make_dataset(args.out, counts, args.classes, (args.size, args.size), args.seed)
    print(manifest)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melanoma-ensemble", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("extract", "compute descriptor feature files"),
                        ("train", "reduce, tune, train SVMs and write score files"),
                        ("fuse", "normalise, filter and sum member scores"),
                        ("evaluate", "fuse and write the evaluation report"),
                        ("run-all", "run every stage")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON pipeline config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--jobs", type=int, default=None, help="worker processes for extraction")
        p.set_defaults(func=_stage)
    p = sub.add_parser("synth", help="write a synthetic 7-class texture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--size", type=int, default=48)
    p.add_argument("--train", type=int, default=10, help="train images per class")
    p.add_argument("--val", type=int, default=5, help="val images per class")
    p.add_argument("--test", type=int, default=5, help="test images per class")
    p.set_defaults(func=_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

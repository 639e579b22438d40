"""Command-line entry point.

Subcommands: train, eval, gradcheck, inspect. Exit codes: 0 ok,
1 runtime failure, 2 configuration error, 3 data/IO error.
"""

import argparse
import os
import sys

import numpy as np

from . import checks as checks_mod
from . import data as dp
from . import training as tr
from .model import ModelSpec, WeightFormatError, build_model, load_weights, save_weights

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

DATA_DIR_ENV = "ACRN_DATA_DIR"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _add_data_flags(p):
    p.add_argument("--data-dir", default=None,
                   help=f"CIFAR-10 binary directory (default: ${DATA_DIR_ENV})")
    p.add_argument("--synthetic", type=int, default=0, metavar="N",
                   help="use N synthetic training images per class instead of CIFAR-10 "
                        "(0 = use real data)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="acresnet",
        description="Classic and accumulated residual nets on CIFAR-10")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("train", help="train a model and emit metrics CSV + weights",
                       formatter_class=fmt)
    p.add_argument("--arch", choices=["classic", "accumulated"], default="classic")
    p.add_argument("--depth", type=int, default=32, help="network depth (6n+2)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--milestones", default="25,40",
                   help="comma-separated epochs where the LR drops by 10x")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-augment", action="store_true",
                   help="disable pad-4 random crop and horizontal flip")
    p.add_argument("--threads", type=int, default=1,
                   help="internal kernel threads (best effort)")
    p.add_argument("--out", default="metrics.csv", help="metrics CSV path")
    p.add_argument("--weights-out", default="weights.acrn", help="weights output path")
    _add_data_flags(p)

    p = sub.add_parser("eval", help="evaluate saved weights on the test split",
                       formatter_class=fmt)
    p.add_argument("--weights", required=True, help="weights file to evaluate")
    p.add_argument("--arch", choices=["classic", "accumulated"], default=None,
                   help="expected variant (checked against the weights header)")
    p.add_argument("--depth", type=int, default=None,
                   help="expected depth (checked against the weights header)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="internal kernel threads (best effort)")
    _add_data_flags(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification",
                       formatter_class=fmt)
    p.add_argument("--tol", type=float, default=1e-4, help="relative tolerance")
    p.add_argument("--h", type=float, default=1e-3, help="central-difference step")
    p.add_argument("--only", default=None,
                   help=f"run a single check ({', '.join(sorted(checks_mod.ALL_CHECKS))})")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="summarize a dataset", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=0)
    _add_data_flags(p)
    return parser


def _limit_threads(n):
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=max(1, n))
    except Exception:
        pass


def _load_datasets(args):
    if args.synthetic > 0:
        train = dp.synthetic_dataset(10, args.synthetic, args.seed, split="train")
        test = dp.synthetic_dataset(10, max(2, args.synthetic // 5), args.seed,
                                    split="test")
        return train, test
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise CliError(
            f"no data source: pass --data-dir, set ${DATA_DIR_ENV}, or use --synthetic N",
            EXIT_CONFIG)
    try:
        return dp.load_cifar10(data_dir)
    except dp.DataError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc


def _parse_milestones(text, epochs):
    if not text.strip():
        return ()
    try:
        ms = tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise CliError(f"bad --milestones value {text!r}: {exc}", EXIT_CONFIG) from exc
    # milestones beyond the epoch budget are ignored
    return tuple(m for m in ms if m <= epochs)


def cmd_train(args):
    _limit_threads(args.threads)
    if args.depth < 8 or args.depth % 6 != 2:
        raise CliError(f"--depth must be of the form 6n+2 (8, 14, 20, ...), got {args.depth}",
                       EXIT_CONFIG)
    try:
        config = tr.TrainConfig(
            epochs=args.epochs, batch_size=args.batch_size, base_lr=args.lr,
            momentum=args.momentum, weight_decay=args.weight_decay,
            milestones=_parse_milestones(args.milestones, args.epochs),
            seed=args.seed, augment=not args.no_augment)
        spec = ModelSpec(depth=args.depth, variant=args.arch)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    train_ds, val_ds = _load_datasets(args)
    model = build_model(spec, seed=args.seed)
    stats = dp.compute_channel_stats(train_ds.images)
    model, metrics = tr.train(model, train_ds, val_ds, config, stats=stats,
                              log=lambda s: print(s, file=sys.stderr))
    tr.write_metrics_csv(args.out, metrics)
    save_weights(model, args.weights_out)
    stats.save(args.weights_out + ".stats.json")
    if metrics:
        mn, avg = tr.summarize(metrics)
        print(f"min_top1={mn:.6f} avg_top1={avg:.6f}")
    return EXIT_OK


def cmd_eval(args):
    _limit_threads(args.threads)
    try:
        model = load_weights(args.weights)
    except (OSError, WeightFormatError) as exc:
        raise CliError(f"cannot load weights: {exc}", EXIT_DATA) from exc
    if args.arch is not None and model.spec.variant != args.arch:
        raise CliError(f"weights are {model.spec.variant!r}, --arch requested {args.arch!r}",
                       EXIT_DATA)
    if args.depth is not None and model.spec.depth != args.depth:
        raise CliError(f"weights have depth {model.spec.depth}, --depth requested {args.depth}",
                       EXIT_DATA)
    train_ds, test_ds = _load_datasets(args)
    stats_path = args.weights + ".stats.json"
    if os.path.exists(stats_path):
        stats = dp.ChannelStats.load(stats_path)
    else:
        stats = dp.compute_channel_stats(train_ds.images)
    loss, top1 = tr.evaluate(model, test_ds, stats)
    print(f"loss={loss:.6f} top1_err={top1:.6f}")
    return EXIT_OK


def cmd_gradcheck(args):
    try:
        reports = checks_mod.run_checks(only=args.only, seed=args.seed, h=args.h,
                                        tol=args.tol)
    except KeyError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    ok = True
    for name, report in reports.items():
        status = "PASS" if report.passed else "FAIL"
        print(f"check={name} max_rel_err={report.max_rel_err:.3e} status={status}")
        ok = ok and report.passed
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_inspect(args):
    train_ds, test_ds = _load_datasets(args)
    for ds in (train_ds, test_ds):
        counts = np.bincount(ds.labels, minlength=10)
        mean = ds.images.mean(axis=(0, 2, 3))
        std = ds.images.std(axis=(0, 2, 3))
        print(f"split={ds.split} records={len(ds)} "
              f"label_counts={','.join(map(str, counts))} "
              f"channel_mean={','.join(f'{v:.4f}' for v in mean)} "
              f"channel_std={','.join(f'{v:.4f}' for v in std)} "
              f"pixel_range=[{ds.images.min():.4f},{ds.images.max():.4f}]")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"train": cmd_train, "eval": cmd_eval,
                "gradcheck": cmd_gradcheck, "inspect": cmd_inspect}
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except dp.DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Command-line entry points for training and evaluating the refiner."""

from __future__ import annotations

import argparse
import sys

from . import data, gfbio, training

EXIT_OK = 0
EXIT_BAD_ARGS = 2


def cmd_train(args) -> int:
    train_samples = data.load_dataset(args.dataset)
    val_samples = data.load_dataset(args.val_dir) if args.val_dir else None
    settings = training.TrainSettings(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, blocks_per_level=args.blocks)
    training.train(train_samples, settings, val_samples,
                   checkpoint_path=args.out, curve_path=args.curve,
                   log=print)
    print(f"saved checkpoint -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    samples = data.load_dataset(args.dataset)
    model = training.load_checkpoint(args.ckpt)
    rmse = training.masked_depth_rmse_m(model, samples)
    print(f"masked depth rmse over {len(samples)} sample(s): {rmse:.6f} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="neural-refine",
        description="Train and evaluate the learned depth-map refiner")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the network on a dataset directory")
    p.add_argument("dataset", help="directory with manifest.csv and pairs")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--curve", help="write per-epoch losses to this CSV")
    p.add_argument("--val-dir", help="separate dataset for validation RMSE")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blocks", type=int, default=2,
                   help="encoder blocks per resolution level")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report masked depth RMSE on a dataset")
    p.add_argument("dataset")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, gfbio.FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())

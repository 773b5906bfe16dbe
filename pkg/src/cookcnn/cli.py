"""Command-line entry point: ``cookcnn <command> ...``.

Exit codes: 0 success, 2 config/format error, 3 data error, 4 numeric
divergence, 5 gradient check failure.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import gradcheck
from .checkpoint import load_checkpoint
from .data import AugConfig, ImageDataset, augment, compute_stats, load_image, resize_center_crop, \
    save_image_png, scan_dataset, write_text_atomic
from .errors import CookCNNError, DataError
from .plot import history_svg
from .tensor import Rng
from .train import History, TrainConfig, evaluate, train

EXIT_GRADCHECK = 5


def cmd_train(args):
    cfg = TrainConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = str(Path(args.out).resolve())
    if args.max_epochs is not None:
        cfg.max_epochs = args.max_epochs

    def progress(rec, is_best):
        if not args.quiet:
            print(f"epoch {rec.epoch:3d}  lr {rec.lr:.0e}  train {rec.train_loss:.4f}/{rec.train_acc:.3f}"
                  f"  valid {rec.val_loss:.4f}/{rec.val_acc:.3f}{'  *' if is_best else ''}", flush=True)

    result = train(cfg, progress=progress)
    print(f"best epoch {result.best_epoch}: validation accuracy {result.best_val_acc:.4f}")
    print(f"wrote {cfg.out_dir}/history.csv, best.ckpt, report.txt, report.json")
    return 0


def cmd_eval(args):
    graph = load_checkpoint(args.ckpt)
    meta = graph.metadata
    stats = meta.get("stats")
    if stats is None:
        raise DataError("checkpoint carries no normalization statistics")
    manifest = scan_dataset(args.data, splits=(args.split,))
    records = manifest.split(args.split)
    if not records:
        raise DataError(f"split {args.split!r} under {args.data!r} has no images")
    ds = ImageDataset(records, stats["mean"], stats["std"], train=False,
                      resize_to=meta.get("resize_to", 256), crop_to=meta.get("crop_to", 224))
    report = evaluate(graph, ds, args.batch_size)
    out = Path(args.out) if args.out else Path(args.ckpt).resolve().parent
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / f"eval_{args.split}.txt", report.to_text())
    write_text_atomic(out / f"eval_{args.split}.json", report.to_json())
    print(report.to_text(), end="")
    print(f"overall accuracy: {report.accuracy:.4f}")
    return 0


def cmd_gradcheck(args):
    worst = gradcheck.run_suite(seeds=range(args.seed, args.seed + args.seeds), preset=args.preset,
                                fault=args.inject_fault)
    print(gradcheck.format_report(worst))
    failed = [name for name, err in worst.items() if err > gradcheck.TOLERANCE]
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GRADCHECK
    return 0


def cmd_stats(args):
    manifest = scan_dataset(args.data)
    stats = compute_stats(manifest, "train", workers=args.workers)
    out = Path(args.out)
    write_text_atomic(out, stats.to_json())
    print(f"mean {list(stats.mean)}  std {list(stats.std)}  ({stats.count} pixels)")
    print(f"wrote {out}")
    return 0


def cmd_scan(args):
    manifest = scan_dataset(args.data)
    print(manifest.report())
    return 0


def cmd_preview(args):
    img = resize_center_crop(load_image(args.image))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_image_png(img, out / "original.png")
    cfg = AugConfig()
    rng = Rng(args.seed, ("preview",))
    for i in range(args.count):
        save_image_png(augment(img, cfg, rng.child(i)), out / f"augmented_{i:02d}.png")
    print(f"wrote original.png and {args.count} augmented variants to {out}")
    return 0


def cmd_plot(args):
    try:
        text = Path(args.history).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read history {args.history!r}: {exc}") from None
    history = History.from_csv(text)
    if len(history) == 0:
        raise DataError(f"history {args.history!r} has no rows")
    write_text_atomic(args.out, history_svg(history))
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="cookcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="valid", choices=("train", "valid"))
    p.add_argument("--out")
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and a tiny network")
    p.add_argument("--preset", default="proposed-tiny")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--inject-fault", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("stats", help="compute per-channel mean/std of the training split")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="stats.json")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("scan", help="list per-class image counts")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("preview", help="write augmented variants of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("plot", help="render history.csv curves to SVG")
    p.add_argument("--history", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CookCNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

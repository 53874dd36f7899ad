"""Command-line entry point: ``orunet {synth,split,train,predict,evaluate}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import data
from .config import DATA_ROOT_ENV, ExperimentConfig
from .io import atomic_path, atomic_write_text, write_npyish

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("orunet")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path) -> ExperimentConfig:
    try:
        return ExperimentConfig.load(path)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except (ValueError, KeyError) as exc:
        raise UsageError(f"invalid config {path}: {exc}")


def _index(root):
    try:
        return data.load_dataset_index(root)
    except FileNotFoundError as exc:
        raise DataError(str(exc))


def _folds(records):
    try:
        return data.make_folds(records)
    except ValueError as exc:
        raise DataError(f"cannot split dataset: {exc}")


def _save_png(path, array):
    with atomic_path(path) as tmp:
        Image.fromarray(np.asarray(array, dtype=np.uint8)).save(tmp, format="PNG")


# commands -------------------------------------------------------------------

def cmd_synth(args):
    from .seeding import substream

    spec = data.SynthSpec.from_file(args.spec) if args.spec else data.SynthSpec()
    data.make_synthetic_dataset(args.out, spec, substream(args.seed, "synth"))
    print(f"wrote synthetic dataset to {args.out}")


def cmd_split(args):
    root = args.data_root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise UsageError(f"--data-root not given and {DATA_ROOT_ENV} not set")
    records = _index(root)
    if not records:
        raise DataError(f"no frames found under {root}")
    folds = _folds(records)
    with atomic_path(args.out) as tmp:
        data.write_folds(folds, tmp)
    print(f"wrote {len(folds)} folds to {args.out}")


def cmd_train(args):
    from .trainer import train_fold

    cfg = _load_config(args.config)
    if not cfg.data_root:
        raise UsageError(f"no data_root in config and {DATA_ROOT_ENV} not set")
    folds = _folds(_index(cfg.data_root))
    if not 0 <= args.fold < len(folds):
        raise UsageError(f"--fold {args.fold} out of range: valid folds are 0..{len(folds) - 1}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.ini", cfg.to_text())
    try:
        ckpt = train_fold(cfg.data_root, folds[args.fold], cfg.model, cfg.train, cfg.augment,
                          out, resume=args.resume)
    except ValueError as exc:
        raise DataError(str(exc))
    print(f"fold {args.fold}: trained {ckpt.epoch} epochs, checkpoints in {out}")


def cmd_predict(args):
    from .infer import binarize, connected_components, ensemble_predict
    from .trainer import load_checkpoint

    cfg = _load_config(args.config)
    models = []
    for path in args.checkpoints:
        try:
            models.append(load_checkpoint(path).model)
        except FileNotFoundError:
            raise UsageError(f"checkpoint not found: {path}")
    ref = models[0].config
    for path, m in zip(args.checkpoints[1:], models[1:]):
        if m.config != ref:
            raise UsageError(f"{path}: model config differs from {args.checkpoints[0]}")
    root = args.frames or cfg.data_root
    records = _index(root)
    if not records:
        raise DataError(f"no frames found under {root}")
    window = cfg.train.patch_size
    out = Path(args.out)
    for rec in records:
        image = data.preprocess(data.read_raw(rec.image_path))
        win = (min(window[0], image.shape[1]), min(window[1], image.shape[2]))
        pred = ensemble_predict(models, image, win)
        binary = binarize(pred)
        instances = connected_components(binary)
        if instances.max() > 255:
            raise RuntimeError(f"{rec.key}: more than 255 instances")
        fdir = out / rec.relpath()
        _save_png(fdir / "binary.png", binary * 255)
        _save_png(fdir / "instances.png", instances)
        if args.save_softmax:
            write_npyish(fdir / "softmax.npyish", pred.softmax)
    print(f"predicted {len(records)} frames with {len(models)} model(s) into {out}")


def _pred_index(root):
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"prediction directory does not exist: {root}")
    found = {}
    for stype in data.SurgeryType:
        for path in sorted((root / stype.value).glob("*/*/binary.png")):
            sid, fid = path.parent.parent.name, path.parent.name
            if sid.isdigit() and fid.isdigit():
                found[(stype.value, int(sid), int(fid))] = path
    return found


def cmd_evaluate(args):
    from .evaluation import dice_score, histogram_report, scores_csv, summarize, summary_text

    preds = _pred_index(args.pred)
    gts = {r.key: r.mask_path for r in _index(args.gt) if r.labeled}
    common = sorted(set(preds) & set(gts))
    if not common:
        missing = sorted(set(gts) - set(preds)) or sorted(preds)
        listed = ", ".join("/".join(map(str, k)) for k in missing[:20])
        raise DataError(f"no overlapping frames between predictions and ground truth; "
                        f"missing predictions for: {listed}")
    skipped = len(set(gts) ^ set(preds))
    if skipped:
        log.warning("%d frames present on only one side were skipped", skipped)
    records = []
    for key in common:
        pred = data.read_mask(preds[key]) > 0
        gt = data.read_mask(gts[key]) > 0
        try:
            records.append(dice_score(pred, gt, args.convention, key))
        except ValueError as exc:
            raise DataError(f"{'/'.join(map(str, key))}: {exc}")
    try:
        summary = summarize(records)
    except ValueError as exc:
        raise DataError(str(exc))
    out = Path(args.out)
    atomic_write_text(out / "scores.csv", scores_csv(records))
    histogram_report(summary, out / "histogram")
    atomic_write_text(out / "summary.ini", summary_text(summary, args.convention))
    print(f"mean {summary.mean:.4f} median {summary.median:.4f} "
          f"IQR {summary.iqr[0]:.4f}-{summary.iqr[1]:.4f} "
          f"included {summary.count_included} excluded {summary.count_excluded}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orunet", description="Residual U-Net surgical instrument segmentation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--spec", help="INI file with a [synth] section (defaults if omitted)")
    s.add_argument("--out", required=True, help="dataset root to create")
    s.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="write leave-one-surgery-out folds")
    s.add_argument("--data-root", help=f"dataset root (falls back to ${DATA_ROOT_ENV})")
    s.add_argument("--out", required=True, help="fold file to write")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train one cross-validation fold")
    s.add_argument("--config", required=True, help="experiment config file")
    s.add_argument("--fold", type=int, required=True, help="fold index to train")
    s.add_argument("--resume", help="checkpoint to resume from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="ensemble prediction + connected components")
    s.add_argument("--config", required=True, help="experiment config file")
    s.add_argument("--checkpoints", nargs="+", required=True, help="one checkpoint per ensemble member")
    s.add_argument("--frames", help="dataset root of frames to predict (default: config data_root)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--save-softmax", action="store_true", help="also write softmax.npyish per frame")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="per-image Dice and cohort summary")
    s.add_argument("--pred", required=True, help="prediction directory written by predict")
    s.add_argument("--gt", required=True, help="dataset root with ground-truth masks")
    s.add_argument("--convention", choices=["train", "test"], default="train",
                   help="exclusion convention for empty ground truth (default train)")
    s.add_argument("--out", required=True, help="directory for scores, summary and histogram")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"orunet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"orunet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"orunet {args.command}: failed: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

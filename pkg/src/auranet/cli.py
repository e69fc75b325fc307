"""Command-line entry point.

    auranet train   --config ds1.yaml [--epochs N --seed N --output DIR]
    auranet eval    --checkpoint best.pt --dataset DIR [--threshold 0.5]
    auranet predict --checkpoint best.pt --images DIR --out DIR [--overlay]
    auranet ablate  --config ds1.yaml [--variants all|TRIPLES]
    auranet sweep   --config ds1.yaml --param lambda --grid 0,5,10

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np

from .config import ConfigError, load_run_config
from .data import Sample, ingest, resize_and_crop, resize_and_crop_image, DatasetSpec
from .metrics import binarize, format_report_table
from .training import (
    TABLE_VARIANTS,
    ablate,
    evaluate_model,
    line_search,
    predict_probabilities,
    train,
)
from .weights import load_checkpoint

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _setup_logging(verbosity: str) -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO,
             "debug": logging.DEBUG}[verbosity]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    if args.epochs is not None:
        overrides["training.epochs"] = args.epochs
    if args.seed is not None:
        overrides["training.seed"] = args.seed
    if args.batch_size is not None:
        overrides["training.batch_size"] = args.batch_size
    if args.lr is not None:
        overrides["training.learning_rate"] = args.lr
    return overrides


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, type=Path,
                        help="YAML run configuration")
    parser.add_argument("--output", type=Path, default=None,
                        help="override the configured output directory")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)


def cmd_train(args: argparse.Namespace) -> int:
    run = load_run_config(args.config, _collect_overrides(args))
    _setup_logging(run.verbosity)
    out = args.output or run.output_dir
    model, history = train(run.train, out)
    final = history.records[-1]
    print(f"trained {run.train.epochs} epoch(s); "
          f"final train loss {final.train_loss:.6f}, val loss {final.val_loss:.6f}")
    print(f"run directory: {out}")
    return EXIT_OK


def _report_payload(report, threshold: float, invocation: dict) -> dict:
    payload = report.as_dict()
    payload["threshold"] = threshold
    payload["invocation"] = invocation
    return payload


def cmd_eval(args: argparse.Namespace) -> int:
    _setup_logging(args.verbosity)
    model, _ = load_checkpoint(args.checkpoint)
    size = model.config.input_size[0]
    spec = DatasetSpec(root=args.dataset, target_size=size,
                       train_count=1, test_count=1)
    samples = [resize_and_crop(s, size) for s in ingest(spec)]
    report = evaluate_model(model, samples, threshold=args.threshold)
    print(format_report_table(report))

    # default next to the checkpoint's run directory, never in the dataset
    out_path = args.output or (Path(args.checkpoint).parent.parent / "metrics.json")
    invocation = {
        "command": "eval",
        "checkpoint": str(args.checkpoint),
        "dataset": str(args.dataset),
        "threshold": args.threshold,
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(_report_payload(report, args.threshold, invocation), indent=2)
    )
    print(f"metrics written to {out_path}")
    return EXIT_OK


def _overlay(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Prediction boundary drawn over the preprocessed image."""
    canvas = cv2.cvtColor(image, cv2.COLOR_GRAY2BGR)
    contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    cv2.drawContours(canvas, contours, -1, (0, 0, 255), 1)
    return canvas


def cmd_predict(args: argparse.Namespace) -> int:
    _setup_logging(args.verbosity)
    model, _ = load_checkpoint(args.checkpoint)
    size = model.config.input_size[0]
    image_paths = sorted(
        p for p in Path(args.images).iterdir()
        if p.suffix.lower() in (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")
    )
    if not image_paths:
        raise FileNotFoundError(f"no images found under {args.images}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    for path in image_paths:
        raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
        if raw is None:
            raise IOError(f"unreadable image file: {path}")
        image = resize_and_crop_image(raw, size, cv2.INTER_LINEAR)
        sample = Sample(image=image, mask=np.zeros_like(image, np.uint8),
                        id=path.stem)
        prob = predict_probabilities(model, [sample])[0]
        mask = binarize(prob, args.threshold)
        cv2.imwrite(str(out_dir / f"{path.stem}_mask.png"), mask * 255)
        if args.overlay:
            cv2.imwrite(str(out_dir / f"{path.stem}_overlay.png"),
                        _overlay(image, mask))
    print(f"wrote {len(image_paths)} mask(s) to {out_dir}")
    return EXIT_OK


def _parse_variants(text: str) -> list[tuple[bool, bool, bool]]:
    if text == "all":
        return list(TABLE_VARIANTS)
    variants = []
    for part in text.split(";"):
        bits = part.strip().split(",")
        if len(bits) != 3 or not all(b in ("0", "1") for b in bits):
            raise ConfigError(
                f"variant {part!r} must be three 0/1 flags (resnet,attention,ac), "
                "variants separated by ';'"
            )
        variants.append(tuple(b == "1" for b in bits))
    return variants


def cmd_ablate(args: argparse.Namespace) -> int:
    run = load_run_config(args.config, _collect_overrides(args))
    _setup_logging(run.verbosity)
    out = args.output or run.output_dir
    variants = _parse_variants(args.variants)
    rows = ablate(run.train, variants, run_root=out, threshold=args.threshold)

    print(f"{'variant':<26} {'IoU':>7} {'Dice':>7} {'Prec':>7} {'Recall':>7} {'HD':>8}")
    results = {}
    for row in rows:
        m = row.report.mean
        hd = f"{m.hausdorff:.2f}" if m.hausdorff is not None else "undef"
        print(f"{row.label:<26} {100 * m.iou:6.2f}% {100 * m.dice:6.2f}% "
              f"{100 * m.precision:6.2f}% {100 * m.recall:6.2f}% {hd:>8}")
        results[row.label] = row.report.as_dict()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(results, indent=2))
    return EXIT_OK


def _parse_grid(param: str, text: str) -> list:
    try:
        if param == "beta_gamma":
            return [tuple(float(x) for x in pair.split(":"))
                    for pair in text.split(",")]
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"malformed grid {text!r}: {exc}") from exc


def cmd_sweep(args: argparse.Namespace) -> int:
    run = load_run_config(args.config, _collect_overrides(args))
    _setup_logging(run.verbosity)
    out = args.output or run.output_dir
    grid = _parse_grid(args.param, args.grid)
    rows = line_search(args.param, grid, run.train, run_root=out,
                       threshold=args.threshold)

    print(f"{'value':<16} {'val Dice':>9} {'val IoU':>9}")
    results = []
    for row in rows:
        m = row.report.mean
        print(f"{str(row.value):<16} {100 * m.dice:8.2f}% {100 * m.iou:8.2f}%")
        results.append({"value": row.value, "report": row.report.as_dict()})
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(results, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auranet", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a run config")
    _add_config_options(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True, type=Path)
    p_eval.add_argument("--dataset", required=True, type=Path,
                        help="directory with images/ and masks/")
    p_eval.add_argument("--threshold", type=float, default=0.5)
    p_eval.add_argument("--output", type=Path, default=None,
                        help="metrics.json destination")
    p_eval.add_argument("--verbosity", choices=("quiet", "info", "debug"),
                        default="info")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="write predicted masks for a folder")
    p_pred.add_argument("--checkpoint", required=True, type=Path)
    p_pred.add_argument("--images", required=True, type=Path)
    p_pred.add_argument("--out", required=True, type=Path)
    p_pred.add_argument("--threshold", type=float, default=0.5)
    p_pred.add_argument("--overlay", action="store_true",
                        help="also render boundary overlays")
    p_pred.add_argument("--verbosity", choices=("quiet", "info", "debug"),
                        default="info")
    p_pred.set_defaults(func=cmd_predict)

    p_abl = sub.add_parser("ablate", help="train and evaluate ablation variants")
    _add_config_options(p_abl)
    p_abl.add_argument("--variants", default="all",
                       help="'all' or 'r,a,c;r,a,c;...' 0/1 toggle triples")
    p_abl.add_argument("--threshold", type=float, default=0.5)
    p_abl.set_defaults(func=cmd_ablate)

    p_sweep = sub.add_parser("sweep", help="hyperparameter line search")
    _add_config_options(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=("lambda", "beta_gamma"))
    p_sweep.add_argument("--grid", required=True,
                         help="comma-separated values; beta_gamma pairs as b:g")
    p_sweep.add_argument("--threshold", type=float, default=0.5)
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())

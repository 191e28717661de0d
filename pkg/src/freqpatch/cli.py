"""Command-line entry points, config handling, dataset/annotation I/O and
run-directory persistence.

Commands: gen-data, train-detector, train-patch, eval, jpeg-eval, viz-mask.
Every command takes --config <json> plus flags; flags beat the file. Run
directories are append-only: each training run gets a fresh numbered
subdirectory under the run root (FREQPATCH_RUN_DIR or ./runs).
"""

import argparse
import dataclasses
import json
import os
import sys
import warnings

import numpy as np

from .detector import (
    DatasetSample,
    DetectorConfig,
    generate_synthetic_dataset,
    load_model,
    save_model,
    train_toy_detector,
)
from .fran import load_theta, mask_visualization, save_theta
from .imaging import ImageTensor, RGB, load_png, save_png, to_uint8
from .jpeg_harness import DEFAULT_QUALITIES, JpegSweepReport, jpeg_eval
from .metrics import EvalReport, MetricsConfig, evaluate_patch
from .optimize import TrainConfig, select_best_checkpoint, train_patch
from .render import AugmentConfig, BoundingBox, make_random_patch

MODES = ("ours", "non_ycbcr", "keep_fran", "baseline", "random", "clean")


# ---------------------------------------------------------------------------
# annotations (JSON-Lines, one record per image)
# ---------------------------------------------------------------------------

def save_annotations(path, samples, image_dir="images"):
    """Write PNGs plus a JSONL annotation file referencing them."""
    root = os.path.dirname(os.path.abspath(path))
    os.makedirs(os.path.join(root, image_dir), exist_ok=True)
    with open(path, "w") as f:
        for i, sample in enumerate(samples):
            rel = os.path.join(image_dir, f"img_{i:05d}.png")
            save_png(os.path.join(root, rel), sample.image)
            h, w = sample.image_u8.shape[:2]
            record = {
                "image_path": rel,
                "width": w,
                "height": h,
                "boxes": [{"x_min": b.x_min, "y_min": b.y_min,
                           "x_max": b.x_max, "y_max": b.y_max}
                          for b in sample.gt_boxes],
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")


def load_annotations(path):
    """Parse a JSONL annotation file into dataset samples.

    Malformed lines, missing images and invalid boxes are reported with
    their line number.
    """
    root = os.path.dirname(os.path.abspath(path))
    samples = []
    with open(path) as f:
        lines = f.readlines()
    if not lines:
        warnings.warn(f"annotation file {path} is empty")
        return samples
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: malformed JSON ({exc})") from None
        img_path = os.path.join(root, record["image_path"])
        if not os.path.exists(img_path):
            raise FileNotFoundError(f"{path}:{lineno}: image not found: {img_path}")
        img = load_png(img_path)
        try:
            boxes = [BoundingBox(b["x_min"], b["y_min"], b["x_max"], b["y_max"])
                     for b in record["boxes"]]
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}:{lineno}: invalid box: {exc}") from None
        samples.append(DatasetSample(image_u8=to_uint8(img.data), gt_boxes=boxes))
    return samples


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

_REQUIRED_BY_KIND = {
    "eval": ("asr", "asr_s", "asr_m", "asr_l", "counts", "mode", "seed", "config"),
    "jpeg": ("lossless", "records", "seed", "config"),
}


def write_report(report, path):
    """Pretty-printed JSON with stable key order; validates required fields."""
    if dataclasses.is_dataclass(report):
        kind = "jpeg" if isinstance(report, JpegSweepReport) else "eval"
        payload = dataclasses.asdict(report)
    elif isinstance(report, dict):
        kind = "jpeg" if "records" in report else "eval"
        payload = report
    else:
        raise TypeError(f"cannot serialize report of type {type(report)}")
    missing = [k for k in _REQUIRED_BY_KIND[kind] if k not in payload]
    if missing:
        raise ValueError(f"report is missing required field(s): {missing}")
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def run_root():
    return os.environ.get("FREQPATCH_RUN_DIR", "runs")


def new_run_dir(root, name):
    """Append-only: allocate the next free numbered directory."""
    base = os.path.join(root, name)
    os.makedirs(base, exist_ok=True)
    for i in range(10000):
        candidate = os.path.join(base, f"{i:03d}")
        if not os.path.exists(candidate):
            os.makedirs(candidate)
            return candidate
    raise RuntimeError(f"run directory {base} is full")


def _merge_config(args, keys):
    """default <- config file <- explicit flags."""
    merged = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            file_cfg = json.load(f)
        for k, v in file_cfg.items():
            if k in keys:
                merged[k] = v
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


_TRAIN_KEYS = ("patch_side", "lr", "batch_size", "epochs", "fran_epochs", "alpha",
               "scale_ratio", "use_ycbcr", "seed", "eval_every")
_METRIC_KEYS = ("t_iou", "eps0", "eps1")
_AUGMENT_KEYS = ("augment_enabled", "augment_brightness", "augment_contrast",
                 "augment_noise")
_DET_KEYS = ("input_side", "grid", "objectness_threshold", "det_lr", "det_epochs",
             "det_batch_size", "pos_weight", "box_weight", "min_recall", "seed")


def _metrics_from(cfg):
    return MetricsConfig(t_iou=cfg.get("t_iou", 0.5), eps0=cfg.get("eps0", 0.3),
                         eps1=cfg.get("eps1", 0.6))


def _augment_from(cfg):
    return AugmentConfig(enabled=bool(cfg.get("augment_enabled", True)),
                         brightness=cfg.get("augment_brightness", 0.1),
                         contrast=cfg.get("augment_contrast", 0.1),
                         noise=cfg.get("augment_noise", 0.05))


def apply_mode(mode, train_cfg: dict) -> dict:
    """Map an ablation mode onto the training knobs."""
    cfg = dict(train_cfg)
    epochs = cfg.get("epochs", 10)
    if mode == "baseline":
        cfg["fran_epochs"] = 0
    elif mode == "keep_fran":
        cfg["fran_epochs"] = epochs
    elif mode == "non_ycbcr":
        cfg["use_ycbcr"] = False
        cfg["fran_epochs"] = min(cfg.get("fran_epochs", 7), epochs)
    elif mode == "ours":
        cfg["use_ycbcr"] = True
        cfg["fran_epochs"] = min(cfg.get("fran_epochs", 7), epochs)
    else:
        raise ValueError(f"mode {mode!r} is not a training mode")
    return cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args):
    cfg = _merge_config(args, ("n", "image_side", "seed"))
    n = int(cfg.get("n", 100))
    side = int(cfg.get("image_side", 128))
    seed = int(cfg.get("seed", 0))
    samples = generate_synthetic_dataset(n, side, seed)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)) or ".", exist_ok=True)
    save_annotations(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")


def cmd_train_detector(args):
    cfg = _merge_config(args, _DET_KEYS)
    train = load_annotations(args.train)
    val = load_annotations(args.val)
    dcfg = DetectorConfig(
        input_side=int(cfg.get("input_side", 128)),
        grid=int(cfg.get("grid", 16)),
        objectness_threshold=float(cfg.get("objectness_threshold", 0.5)),
        lr=float(cfg.get("det_lr", 3e-3)),
        batch_size=int(cfg.get("det_batch_size", 16)),
        epochs=int(cfg.get("det_epochs", 14)),
        seed=int(cfg.get("seed", 0)),
        min_recall=float(cfg.get("min_recall", 0.90)),
        pos_weight=float(cfg.get("pos_weight", 24.0)),
        box_weight=float(cfg.get("box_weight", 4.0)),
    )
    model = train_toy_detector(train, val, dcfg)
    save_model(args.out, model)
    best = max(h["recall"] for h in model.history)
    print(f"saved detector to {args.out} (best clean recall {best:.4f})")


def cmd_train_patch(args):
    keys = _TRAIN_KEYS + _METRIC_KEYS + _AUGMENT_KEYS + ("mode", "run_name")
    cfg = _merge_config(args, keys)
    mode = cfg.get("mode", "ours")
    if mode not in ("ours", "non_ycbcr", "keep_fran", "baseline"):
        raise SystemExit(f"train-patch mode must be one of ours/non_ycbcr/keep_fran/baseline, got {mode}")
    train_cfg = apply_mode(mode, {k: cfg[k] for k in _TRAIN_KEYS if k in cfg})
    tc = TrainConfig(
        patch_side=int(train_cfg.get("patch_side", 950)),
        lr=float(train_cfg.get("lr", 0.005)),
        batch_size=int(train_cfg.get("batch_size", 4)),
        epochs=int(train_cfg.get("epochs", 10)),
        fran_epochs=int(train_cfg.get("fran_epochs", 7)),
        alpha=float(train_cfg.get("alpha", 2.5)),
        scale_ratio=float(train_cfg.get("scale_ratio", 0.3)),
        use_ycbcr=bool(train_cfg.get("use_ycbcr", True)),
        seed=int(train_cfg.get("seed", 0)),
        eval_every=int(train_cfg.get("eval_every", 1)),
        augment=_augment_from(cfg),
        metrics=_metrics_from(cfg),
    )
    model = load_model(args.detector)
    train = load_annotations(args.train)
    test = load_annotations(args.test)
    run_dir = args.run_dir or new_run_dir(run_root(), cfg.get("run_name", mode))
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w") as f:
        json.dump({"mode": mode, **{k: cfg[k] for k in sorted(cfg)}}, f,
                  indent=2, sort_keys=True)

    patch, theta, history = train_patch(train, test, model, tc, run_dir=run_dir,
                                        log_fn=print)
    with open(os.path.join(run_dir, "history.json"), "w") as f:
        f.write(history.to_json())
    best_patch, best_theta = select_best_checkpoint(history)
    save_png(os.path.join(run_dir, "patch_best.png"), ImageTensor(best_patch, RGB))
    save_theta(os.path.join(run_dir, "theta_best.bin"), best_theta)
    best = max(history.records, key=lambda r: (r.asr, -r.epoch))
    print(f"run dir: {run_dir}")
    print(f"best checkpoint: epoch {best.epoch} asr {best.asr:.4f}")


def _load_eval_patch(args, cfg, mode):
    if mode == "clean":
        return None
    if mode == "random":
        return make_random_patch(int(cfg.get("patch_side", 950)),
                                 rng_seed=int(cfg.get("seed", 0)))
    if not args.patch:
        raise SystemExit(f"mode {mode} requires --patch")
    return load_png(args.patch).data


def cmd_eval(args):
    keys = _TRAIN_KEYS + _METRIC_KEYS + ("mode",)
    cfg = _merge_config(args, keys)
    mode = cfg.get("mode", "clean")
    if mode not in MODES:
        raise SystemExit(f"unknown mode {mode}")
    model = load_model(args.detector)
    data = load_annotations(args.data)
    patch = _load_eval_patch(args, cfg, mode)
    theta = load_theta(args.theta) if args.theta else None
    report = evaluate_patch(
        model, data, patch=patch, theta=theta, cfg=_metrics_from(cfg),
        seed=int(cfg.get("seed", 0)),
        scale_ratio=float(cfg.get("scale_ratio", 0.3)),
        mode=mode)
    write_report(report, args.out)
    print(f"{mode}: asr {report.asr:.4f} (s {report.asr_s:.4f} "
          f"m {report.asr_m:.4f} l {report.asr_l:.4f}) -> {args.out}")


def cmd_jpeg_eval(args):
    keys = _METRIC_KEYS + ("seed", "scale_ratio")
    cfg = _merge_config(args, keys)
    model = load_model(args.detector)
    data = load_annotations(args.data)
    patch = load_png(args.patch).data
    qualities = [int(q) for q in args.qualities.split(",")] if args.qualities \
        else list(DEFAULT_QUALITIES)
    report = jpeg_eval(model, data, patch, qualities=qualities,
                       cfg=_metrics_from(cfg), seed=int(cfg.get("seed", 0)),
                       scale_ratio=float(cfg.get("scale_ratio", 0.3)))
    write_report(report, args.out)
    for rec in report.records:
        print(f"q{rec.quality}: asr {rec.asr:.4f} (delta {rec.delta_asr:+.4f}, "
              f"small delta {rec.delta_asr_s:+.4f})")


def cmd_viz_mask(args):
    theta = load_theta(args.theta)
    viz = mask_visualization(theta)
    save_png(args.out, ImageTensor(viz, RGB))
    print(f"wrote {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="freqpatch",
                                description="Adversarial patches with frequency attention")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--out", required=True, help="annotation file to write (JSONL)")
    g.add_argument("--config")
    g.add_argument("--n", type=int)
    g.add_argument("--image-side", dest="image_side", type=int)
    g.add_argument("--seed", type=int)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train-detector", help="train the toy objectness detector")
    t.add_argument("--train", required=True)
    t.add_argument("--val", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    for key in _DET_KEYS:
        t.add_argument(f"--{key.replace('_', '-')}", dest=key,
                       type=float if key not in ("input_side", "grid", "det_epochs",
                                                 "det_batch_size", "seed") else int)
    t.set_defaults(fn=cmd_train_detector)

    tp = sub.add_parser("train-patch", help="optimize an adversarial patch")
    tp.add_argument("--train", required=True)
    tp.add_argument("--test", required=True)
    tp.add_argument("--detector", required=True)
    tp.add_argument("--run-dir", dest="run_dir")
    tp.add_argument("--run-name", dest="run_name")
    tp.add_argument("--config")
    tp.add_argument("--mode", choices=("ours", "non_ycbcr", "keep_fran", "baseline"))
    for key, typ in (("patch_side", int), ("lr", float), ("batch_size", int),
                     ("epochs", int), ("fran_epochs", int), ("alpha", float),
                     ("scale_ratio", float), ("seed", int), ("eval_every", int),
                     ("t_iou", float), ("eps0", float), ("eps1", float),
                     ("augment_brightness", float), ("augment_contrast", float),
                     ("augment_noise", float)):
        tp.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    tp.add_argument("--use-ycbcr", dest="use_ycbcr", type=int, choices=(0, 1))
    tp.add_argument("--augment-enabled", dest="augment_enabled", type=int, choices=(0, 1))
    tp.set_defaults(fn=cmd_train_patch)

    e = sub.add_parser("eval", help="score a patch (or clean/random) on a dataset")
    e.add_argument("--detector", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--patch")
    e.add_argument("--theta")
    e.add_argument("--config")
    e.add_argument("--mode", choices=MODES)
    for key, typ in (("patch_side", int), ("scale_ratio", float), ("seed", int),
                     ("t_iou", float), ("eps0", float), ("eps1", float)):
        e.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    e.set_defaults(fn=cmd_eval)

    j = sub.add_parser("jpeg-eval", help="JPEG round-trip robustness sweep")
    j.add_argument("--detector", required=True)
    j.add_argument("--data", required=True)
    j.add_argument("--patch", required=True)
    j.add_argument("--out", required=True)
    j.add_argument("--qualities", help="comma-separated, e.g. 50,75,95")
    j.add_argument("--config")
    for key, typ in (("scale_ratio", float), ("seed", int), ("t_iou", float),
                     ("eps0", float), ("eps1", float)):
        j.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    j.set_defaults(fn=cmd_jpeg_eval)

    v = sub.add_parser("viz-mask", help="grayscale view of the learned mask")
    v.add_argument("--theta", required=True)
    v.add_argument("--out", required=True)
    v.set_defaults(fn=cmd_viz_mask)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()

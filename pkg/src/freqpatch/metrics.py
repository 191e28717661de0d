"""Attack-success-rate metrics for the object-vanishing attack.

A ground-truth box counts as vanished when no prediction overlaps it with
IOU >= t_iou. Boxes are bucketed into small/medium/large by the height
ratio (box pixel height over image height) with thresholds eps0/eps1;
the boundary values belong to the medium bucket.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

SMALL, MEDIUM, LARGE = "small", "medium", "large"
BUCKETS = (SMALL, MEDIUM, LARGE)


@dataclass(frozen=True)
class MetricsConfig:
    t_iou: float = 0.5
    eps0: float = 0.3
    eps1: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.t_iou < 1.0:
            raise ValueError("t_iou must be in (0, 1)")
        if not 0.0 < self.eps0 < self.eps1 < 1.0:
            raise ValueError("need 0 < eps0 < eps1 < 1")


@dataclass
class EvalReport:
    asr: float
    asr_s: float
    asr_m: float
    asr_l: float
    counts: dict
    vanished: dict
    mode: str
    seed: int
    empty_gt_images: int
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def iou(a, b) -> float:
    """Intersection over union of two boxes; symmetric, in [0, 1]."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = (a.x_max - a.x_min) * (a.y_max - a.y_min) \
        + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def size_bucket(box, image_h: int, cfg: MetricsConfig = MetricsConfig()) -> str:
    # height ratio = box pixel height / image height; boxes are normalized,
    # so the image height cancels
    eps = box.y_max - box.y_min
    if eps < cfg.eps0:
        return SMALL
    if eps <= cfg.eps1:
        return MEDIUM
    return LARGE


def attack_success_rate(gt, preds, cfg: MetricsConfig = MetricsConfig()) -> float:
    """Fraction of ground-truth boxes not covered by any prediction."""
    if not gt:
        return 0.0
    vanished = 0
    for g in gt:
        if not any(iou(g, p.box) >= cfg.t_iou for p in preds):
            vanished += 1
    return vanished / len(gt)


def evaluate_patch(model, data, patch=None, theta=None,
                   cfg: MetricsConfig = MetricsConfig(), seed: int = 0,
                   scale_ratio: float = 0.3, augment=None, mode: str = None) -> EvalReport:
    """Detect on every sample (optionally patched) and aggregate vanishing
    rates overall and per size bucket.

    When ``theta`` is given the frequency attention is applied to the patch
    once up front; rendering then uses the attended patch for every sample.
    """
    from . import detector as _detector
    from .fran import fran_forward
    from .render import AugmentConfig, render_patch_cached

    if augment is None:
        augment = AugmentConfig.disabled()
    effective = None
    if patch is not None:
        effective = fran_forward(patch, theta) if theta is not None else np.asarray(patch, dtype=np.float64)
    counts = {b: 0 for b in BUCKETS}
    vanished = {b: 0 for b in BUCKETS}
    empty = 0

    for i, sample in enumerate(data):
        img = sample.image
        gt = sample.gt_boxes
        if not gt:
            empty += 1
            continue
        scene = img.data
        if effective is not None:
            scene, _ = render_patch_cached(scene, gt, effective, scale_ratio,
                                           augment, rng_seed=_mix_seed(seed, i))
        dets = _detector.detect(model, scene)
        for g in gt:
            bucket = size_bucket(g, img.height, cfg)
            counts[bucket] += 1
            if not any(iou(g, d.box) >= cfg.t_iou for d in dets):
                vanished[bucket] += 1

    total = sum(counts.values())
    rate = lambda b: vanished[b] / counts[b] if counts[b] else 0.0
    asr = sum(vanished.values()) / total if total else 0.0
    if mode is None:
        mode = "clean" if patch is None else "patched"
    return EvalReport(
        asr=asr, asr_s=rate(SMALL), asr_m=rate(MEDIUM), asr_l=rate(LARGE),
        counts=dict(counts), vanished=dict(vanished), mode=mode, seed=seed,
        empty_gt_images=empty,
        config={"t_iou": cfg.t_iou, "eps0": cfg.eps0, "eps1": cfg.eps1,
                "scale_ratio": scale_ratio,
                "augment_enabled": bool(augment.enabled)},
    )


def _mix_seed(seed: int, index: int) -> int:
    # deterministic per-sample stream derived from (seed, index)
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])

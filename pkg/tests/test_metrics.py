import numpy as np
import pytest

from freqpatch.detector import Detection
from freqpatch.metrics import (
    BUCKETS,
    MetricsConfig,
    attack_success_rate,
    iou,
    size_bucket,
)
from freqpatch.render import BoundingBox


def box(x0, y0, x1, y1):
    return BoundingBox(x0, y0, x1, y1)


def test_iou_identical():
    b = box(0.1, 0.2, 0.6, 0.9)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(box(0.0, 0.0, 0.2, 0.2), box(0.5, 0.5, 0.9, 0.9)) == 0.0


def test_iou_hand_value():
    # (0,0,2,2) vs (1,1,3,3) in common units: intersection 1, union 7
    a = box(0.0, 0.0, 0.2, 0.2)
    b = box(0.1, 0.1, 0.3, 0.3)
    assert abs(iou(a, b) - 1.0 / 7.0) < 1e-12
    assert iou(a, b) == iou(b, a)


def test_iou_against_shapely_oracle():
    from shapely.geometry import box as shapely_box

    rng = np.random.default_rng(0)
    for _ in range(200):
        x0, y0 = rng.uniform(0, 0.6, size=2)
        a = box(x0, y0, x0 + rng.uniform(0.05, 0.4), y0 + rng.uniform(0.05, 0.4))
        x0, y0 = rng.uniform(0, 0.6, size=2)
        b = box(x0, y0, x0 + rng.uniform(0.05, 0.4), y0 + rng.uniform(0.05, 0.4))
        pa = shapely_box(a.x_min, a.y_min, a.x_max, a.y_max)
        pb = shapely_box(b.x_min, b.y_min, b.x_max, b.y_max)
        expect = pa.intersection(pb).area / pa.union(pb).area
        assert abs(iou(a, b) - expect) < 1e-12


def test_size_bucket_boundaries():
    cfg = MetricsConfig()
    assert size_bucket(box(0.1, 0.0, 0.3, 0.2), 128, cfg) == "small"       # eps 0.2
    assert size_bucket(box(0.1, 0.0, 0.3, 0.45), 128, cfg) == "medium"     # eps 0.45
    assert size_bucket(box(0.1, 0.0, 0.3, 0.3), 128, cfg) == "medium"      # eps exactly 0.3
    assert size_bucket(box(0.1, 0.0, 0.3, 0.6), 128, cfg) == "medium"      # eps exactly 0.6
    assert size_bucket(box(0.1, 0.0, 0.3, 0.7), 128, cfg) == "large"       # eps 0.7


def test_metrics_config_validation():
    with pytest.raises(ValueError):
        MetricsConfig(t_iou=0.0)
    with pytest.raises(ValueError):
        MetricsConfig(eps0=0.7, eps1=0.6)


def test_asr_trivial_cases():
    gt = [box(0.1, 0.1, 0.3, 0.3), box(0.4, 0.4, 0.6, 0.6), box(0.7, 0.7, 0.9, 0.9)]
    assert attack_success_rate(gt, []) == 1.0
    preds = [Detection(b, 0.9) for b in gt]
    assert attack_success_rate(gt, preds) == 0.0


def test_asr_partial():
    # one gt overlapped at IOU 0.6, one at 0.4 -> half vanished at t=0.5
    g1 = box(0.0, 0.0, 0.2, 0.5)
    p1 = box(0.0, 0.0, 0.2, 0.3)     # nested, same width: iou = 0.3/0.5
    assert abs(iou(g1, p1) - 0.6) < 1e-12
    g2 = box(0.5, 0.5, 0.7, 0.9)
    p2 = box(0.5, 0.5, 0.7, 0.66)    # iou 0.16/0.40
    assert abs(iou(g2, p2) - 0.4) < 1e-12
    got = attack_success_rate([g1, g2], [Detection(p1, 0.8), Detection(p2, 0.8)])
    assert got == 0.5


def test_asr_empty_gt_is_zero():
    assert attack_success_rate([], [Detection(box(0, 0, 0.5, 0.5), 0.9)]) == 0.0


def brute_force_asr(gt, preds, t_iou):
    """Independent oracle: exhaustive all-pairs check, shapely geometry."""
    from shapely.geometry import box as shapely_box

    if not gt:
        return 0.0
    vanished = 0
    for g in gt:
        pg = shapely_box(g.x_min, g.y_min, g.x_max, g.y_max)
        covered = False
        for p in preds:
            pp = shapely_box(p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max)
            if pp.intersection(pg).area / pp.union(pg).area >= t_iou:
                covered = True
        if not covered:
            vanished += 1
    return vanished / len(gt)


def random_boxes(rng, n):
    out = []
    for _ in range(n):
        x0, y0 = rng.uniform(0, 0.7, size=2)
        out.append(box(x0, y0, x0 + rng.uniform(0.02, 0.3), y0 + rng.uniform(0.02, 0.3)))
    return out


def test_asr_matches_brute_force_oracle_1000():
    rng = np.random.default_rng(1)
    cfg = MetricsConfig()
    for _ in range(1000):
        gt = random_boxes(rng, rng.integers(0, 6))
        preds = [Detection(b, 0.7) for b in random_boxes(rng, rng.integers(0, 6))]
        assert attack_success_rate(gt, preds, cfg) == brute_force_asr(gt, preds, cfg.t_iou)


def test_asr_monotonicity():
    rng = np.random.default_rng(2)
    cfg = MetricsConfig()
    for _ in range(50):
        gt = random_boxes(rng, 4)
        preds = [Detection(b, 0.7) for b in random_boxes(rng, 4)]
        base = attack_success_rate(gt, preds, cfg)
        # removing a prediction never decreases ASR
        for i in range(len(preds)):
            fewer = preds[:i] + preds[i + 1:]
            assert attack_success_rate(gt, fewer, cfg) >= base
        # adding a prediction never increases it
        more = preds + [Detection(random_boxes(rng, 1)[0], 0.9)]
        assert attack_success_rate(gt, more, cfg) <= base


def test_bucket_partition_counts():
    rng = np.random.default_rng(3)
    cfg = MetricsConfig()
    boxes = random_boxes(rng, 300)
    buckets = [size_bucket(b, 128, cfg) for b in boxes]
    assert all(b in BUCKETS for b in buckets)
    assert sum(buckets.count(b) for b in BUCKETS) == 300

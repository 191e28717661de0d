import numpy as np
import pytest

from freqpatch import detector as D
from freqpatch.metrics import MetricsConfig, size_bucket


@pytest.fixture(scope="module")
def tiny_data():
    train = D.generate_synthetic_dataset(60, 64, rng_seed=10)
    val = D.generate_synthetic_dataset(24, 64, rng_seed=11)
    return train, val


@pytest.fixture(scope="module")
def tiny_model(tiny_data):
    train, val = tiny_data
    cfg = D.DetectorConfig(input_side=64, grid=8, epochs=14, seed=3, lr=3e-3,
                           pos_weight=24.0, box_weight=4.0, min_recall=0.5,
                           channels=(12, 24, 32, 32))
    return D.train_toy_detector(train, val, cfg)


def test_dataset_determinism():
    a = D.generate_synthetic_dataset(20, 64, rng_seed=5)
    b = D.generate_synthetic_dataset(20, 64, rng_seed=5)
    assert len(a) == len(b) == 20
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.image_u8, sb.image_u8)
        assert sa.gt_boxes == sb.gt_boxes
    c = D.generate_synthetic_dataset(20, 64, rng_seed=6)
    assert not all(np.array_equal(sa.image_u8, sc.image_u8) for sa, sc in zip(a, c))


def test_dataset_every_sample_has_boxes():
    for s in D.generate_synthetic_dataset(50, 64, rng_seed=7):
        assert len(s.gt_boxes) >= 1
        assert s.image_u8.dtype == np.uint8


def test_dataset_bucket_balance():
    data = D.generate_synthetic_dataset(1200, 128, rng_seed=8)
    cfg = MetricsConfig()
    counts = {"small": 0, "medium": 0, "large": 0}
    for s in data:
        for b in s.gt_boxes:
            counts[size_bucket(b, 128, cfg)] += 1
    total = sum(counts.values())
    for share in (counts[k] / total for k in counts):
        assert 0.28 <= share <= 0.39


def test_training_loss_decreases(tiny_model):
    hist = tiny_model.history
    assert hist[-1]["loss"] < hist[0]["loss"]


def test_training_reaches_reasonable_recall(tiny_model):
    assert max(h["recall"] for h in tiny_model.history) >= 0.5


def test_training_failure_raises(tiny_data):
    train, val = tiny_data
    cfg = D.DetectorConfig(input_side=64, grid=8, epochs=1, seed=0,
                           min_recall=0.99, channels=(8, 8, 8, 8))
    with pytest.raises(D.TrainingFailedError) as ei:
        D.train_toy_detector(train, val, cfg)
    assert 0.0 <= ei.value.best_recall < 0.99


def test_training_determinism(tiny_data):
    train, val = tiny_data
    cfg = D.DetectorConfig(input_side=64, grid=8, epochs=2, seed=1, min_recall=0.0,
                           channels=(8, 16, 16, 16))
    m1 = D.train_toy_detector(train, val, cfg)
    m2 = D.train_toy_detector(train, val, cfg)
    assert m1.weights_hash() == m2.weights_hash()
    assert m1.history == m2.history


def test_detect_threshold_monotone(tiny_model, tiny_data):
    _, val = tiny_data
    img = val[0].image
    counts = [len(D.detect(tiny_model, img, threshold=t))
              for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert counts == sorted(counts, reverse=True)


def test_background_only_image_no_detections(tiny_model):
    rng = np.random.default_rng(42)
    bg = D.make_background(64, rng)
    dets = D.detect(tiny_model, bg)
    assert len(dets) <= 1  # allow a stray borderline cell on the toy model


def test_detect_consistent_with_objectness_map(tiny_model, tiny_data):
    _, val = tiny_data
    for s in val[:5]:
        score_map = D.objectness_scores(tiny_model, s.image)
        assert score_map.shape == (8, 8)
        assert score_map.min() >= 0.0 and score_map.max() <= 1.0
        for det in D.detect(tiny_model, s.image):
            assert np.abs(score_map - det.objectness).min() < 1e-12


def test_objectness_input_gradient(tiny_model, tiny_data):
    _, val = tiny_data
    img = val[1].image.data
    maps, cache = D.objectness_forward(tiny_model, img[None])
    gmap = np.zeros_like(maps)
    i, j = np.unravel_index(np.argmax(maps[0]), maps[0].shape)
    gmap[0, i, j] = 1.0
    g = D.objectness_backward(tiny_model, cache, gmap)
    assert g.shape == img[None].shape
    assert np.abs(g).max() > 0

    # finite-difference probe at the strongest-gradient pixel
    k = np.unravel_index(np.argmax(np.abs(g[0])), g[0].shape)
    h = 1e-5
    up = img.copy(); up[k] += h
    dn = img.copy(); dn[k] -= h
    fd = (D.objectness_forward(tiny_model, up[None])[0][0, i, j]
          - D.objectness_forward(tiny_model, dn[None])[0][0, i, j]) / (2 * h)
    assert abs(fd - g[0][k]) < 1e-4 * max(1.0, abs(fd))


def test_objectness_gradient_through_resize(tiny_model):
    # image larger than the model input exercises the resize adjoint
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(96, 96, 3))
    maps, cache = D.objectness_forward(tiny_model, img[None])
    g = D.objectness_backward(tiny_model, cache, np.ones_like(maps))
    assert g.shape == (1, 96, 96, 3)
    assert np.abs(g).max() > 0


def test_model_save_load_roundtrip(tiny_model, tiny_data, tmp_path):
    _, val = tiny_data
    p = tmp_path / "model.npz"
    D.save_model(p, tiny_model)
    back = D.load_model(p)
    assert back.weights_hash() == tiny_model.weights_hash()
    assert back.config == tiny_model.config
    img = val[2].image
    d1 = D.detect(tiny_model, img)
    d2 = D.detect(back, img)
    assert len(d1) == len(d2)
    for a, b in zip(d1, d2):
        assert a.objectness == b.objectness and a.box == b.box

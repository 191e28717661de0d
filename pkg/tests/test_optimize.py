import numpy as np
import pytest

from freqpatch import detector as D
from freqpatch.optimize import (
    EpochRecord,
    TrainConfig,
    TrainHistory,
    select_best_checkpoint,
    train_patch,
)
from freqpatch.render import make_random_patch


@pytest.fixture(scope="module")
def setup(small_detector_setup):
    train, val, model = small_detector_setup
    return train[:30], val[:12], model


def tiny_train_config(**kw):
    base = dict(patch_side=24, lr=0.01, batch_size=4, epochs=2, fran_epochs=1,
                alpha=1e-4, scale_ratio=0.4, seed=7, eval_every=1)
    base.update(kw)
    return TrainConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_train_config(fran_epochs=3, epochs=2)
    with pytest.raises(ValueError):
        tiny_train_config(lr=0.0)
    with pytest.raises(ValueError):
        tiny_train_config(batch_size=0)


def test_zero_epochs_returns_init(setup):
    train, test, model = setup
    cfg = tiny_train_config(epochs=0, fran_epochs=0)
    patch, theta, hist = train_patch(train, test, model, cfg)
    assert np.array_equal(patch, make_random_patch(24, rng_seed=7))
    assert np.array_equal(theta, np.ones((24, 24, 3)))
    assert hist.records == []


def test_training_is_deterministic(setup):
    train, test, model = setup
    cfg = tiny_train_config()
    p1, t1, h1 = train_patch(train, test, model, cfg)
    p2, t2, h2 = train_patch(train, test, model, cfg)
    assert np.array_equal(p1, p2)
    assert np.array_equal(t1, t2)
    assert [r.__dict__ for r in h1.records] == [r.__dict__ for r in h2.records]


def test_detector_frozen_and_patch_clamped(setup):
    train, test, model = setup
    before = model.weights_hash()
    cfg = tiny_train_config()
    patch, theta, hist = train_patch(train, test, model, cfg)
    assert model.weights_hash() == before
    assert patch.min() >= 0.0 and patch.max() <= 1.0
    for rec in hist.records:
        ckpt = hist.load_patch(rec.patch_checkpoint_ref)
        assert ckpt.min() >= 0.0 and ckpt.max() <= 1.0


def test_theta_frozen_after_fran_epochs(setup):
    train, test, model = setup
    cfg = tiny_train_config(epochs=4, fran_epochs=2)
    _, _, hist = train_patch(train, test, model, cfg)
    thetas = [hist.load_theta(r.theta_checkpoint_ref) for r in hist.records]
    # epochs 2 and 3 run after the freeze: identical checkpoints
    assert np.array_equal(thetas[2], thetas[3])
    # the mask actually moved while it was active
    assert not np.array_equal(thetas[0], np.ones((24, 24, 3)))


def test_baseline_mode_never_touches_theta(setup):
    train, test, model = setup
    cfg = tiny_train_config(epochs=2, fran_epochs=0)
    patch, theta, hist = train_patch(train, test, model, cfg)
    assert np.array_equal(theta, np.ones((24, 24, 3)))
    for rec in hist.records:
        assert np.array_equal(hist.load_theta(rec.theta_checkpoint_ref),
                              np.ones((24, 24, 3)))


def test_history_checkpoints_on_disk(setup, tmp_path):
    train, test, model = setup
    cfg = tiny_train_config()
    _, _, hist = train_patch(train, test, model, cfg, run_dir=str(tmp_path))
    assert len(hist.records) == 2
    for rec in hist.records:
        assert (tmp_path / rec.patch_checkpoint_ref).exists()
        assert (tmp_path / rec.theta_checkpoint_ref).exists()
        patch = hist.load_patch(rec.patch_checkpoint_ref)
        assert patch.shape == (24, 24, 3)


def make_history(asrs):
    hist = TrainHistory()
    for i, asr in enumerate(asrs):
        hist._store[f"mem:patch:{i}"] = np.full((4, 4, 3), i, dtype=np.uint8)
        hist._store[f"mem:theta:{i}"] = np.full((4, 4, 3), float(i))
        hist.records.append(EpochRecord(
            epoch=i, mean_loss=0.0, asr=asr, asr_s=0, asr_m=0, asr_l=0,
            patch_checkpoint_ref=f"mem:patch:{i}",
            theta_checkpoint_ref=f"mem:theta:{i}"))
    return hist


def test_select_best_checkpoint_argmax():
    hist = make_history([0.3, 0.8, 0.6])
    patch, theta = select_best_checkpoint(hist)
    assert theta[0, 0, 0] == 1.0


def test_select_best_checkpoint_tie_earliest():
    hist = make_history([0.5, 0.5])
    _, theta = select_best_checkpoint(hist)
    assert theta[0, 0, 0] == 0.0


def test_select_best_checkpoint_single_and_empty():
    hist = make_history([0.4])
    _, theta = select_best_checkpoint(hist)
    assert theta[0, 0, 0] == 0.0
    with pytest.raises(ValueError):
        select_best_checkpoint(TrainHistory())

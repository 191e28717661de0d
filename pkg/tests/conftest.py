import pytest

from freqpatch import detector as D


@pytest.fixture(scope="session")
def small_detector_setup():
    """One decently trained 64px detector shared by the slower suites."""
    train = D.generate_synthetic_dataset(150, 64, rng_seed=50)
    val = D.generate_synthetic_dataset(50, 64, rng_seed=51)
    cfg = D.DetectorConfig(input_side=64, grid=8, epochs=12, seed=6, lr=3e-3,
                           pos_weight=24.0, box_weight=4.0, min_recall=0.5,
                           channels=(12, 24, 32, 32))
    model = D.train_toy_detector(train, val, cfg)
    return train, val, model

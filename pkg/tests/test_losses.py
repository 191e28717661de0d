import math

import numpy as np
import pytest

from freqpatch import losses


def finite_diff(f, x, idx, h=1e-6):
    xp = x.copy()
    xp[idx] += h
    fp = f(xp)
    xp[idx] -= 2 * h
    fm = f(xp)
    return (fp - fm) / (2 * h)


# hand-worked values; delta inside the sqrt perturbs them by < 1e-8
def test_tv_two_pixel_row():
    assert abs(losses.tv_loss(np.array([[0.0, 1.0]])) - 1.0) < 1e-6


def test_tv_2x2_checker():
    patch = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert abs(losses.tv_loss(patch) - (math.sqrt(2) + 2.0)) < 1e-6


def test_tv_r_2x2_checker():
    patch = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert abs(losses.tv_r_loss(patch) - 4.0 * math.sqrt(2)) < 1e-6


def test_tv_r_single_pixel_is_zero():
    assert losses.tv_r_loss(np.array([[0.5]])) == 0.0


def test_constant_patches_are_flat():
    patch = np.full((20, 30, 3), 0.42)
    count = 20 * 30 * 3
    assert losses.tv_loss(patch) <= math.sqrt(losses.SQRT_DELTA) * count
    assert losses.tv_r_loss(patch) <= math.sqrt(losses.SQRT_DELTA) * count


def test_tv_r_dominates_tv():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rng.uniform(size=(7, 9, 3))
        assert losses.tv_r_loss(p) >= losses.tv_loss(p) - 1e-12


def test_tv_r_symmetry_invariance_on_square_patches():
    # the 8-neighborhood is closed under the dihedral group, so tv_r is
    # exactly invariant under flips and rotations
    rng = np.random.default_rng(1)
    p = rng.uniform(size=(8, 8, 3))
    base = losses.tv_r_loss(p)
    assert abs(losses.tv_r_loss(p[::-1].copy()) - base) < 1e-9
    assert abs(losses.tv_r_loss(p[:, ::-1].copy()) - base) < 1e-9
    assert abs(losses.tv_r_loss(np.rot90(p).copy()) - base) < 1e-9


def test_tv_transpose_invariance():
    # the 2-neighbor loss pairs each pixel's right+below diffs inside one
    # sqrt, so only transposition preserves the pairing (flips do not)
    rng = np.random.default_rng(1)
    p = rng.uniform(size=(8, 8, 3))
    assert abs(losses.tv_loss(p.transpose(1, 0, 2).copy()) - losses.tv_loss(p)) < 1e-9


def test_tv_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    p = rng.uniform(size=(6, 7, 3))
    for lossgrad, lossval in [(losses.tv_loss_grad, losses.tv_loss),
                              (losses.tv_r_loss_grad, losses.tv_r_loss)]:
        _, g = lossgrad(p)
        for _ in range(20):
            idx = tuple(rng.integers(0, s) for s in p.shape)
            fd = finite_diff(lossval, p, idx)
            assert abs(fd - g[idx]) < 1e-3 * max(1.0, abs(fd))


def test_objectness_loss_values():
    assert losses.objectness_loss([np.zeros((4, 4))]) == 0.0
    m = np.zeros((4, 4))
    m[2, 1] = 0.5
    assert losses.objectness_loss([m]) == 0.5
    m2 = np.full((4, 4), 0.1)
    m2[0, 0] = 0.9
    m3 = np.full((4, 4), 0.7)
    assert abs(losses.objectness_loss([m2, m3]) - 1.6) < 1e-12


def test_objectness_loss_empty_batch():
    with pytest.raises(ValueError):
        losses.objectness_loss([])
    with pytest.raises(ValueError):
        losses.objectness_loss_grad([])


def test_objectness_grad_matches_finite_differences():
    rng = np.random.default_rng(3)
    maps = [rng.uniform(size=(5, 5)) for _ in range(3)]
    _, grads = losses.objectness_loss_grad(maps)
    for mi in range(3):
        for _ in range(7):
            idx = tuple(rng.integers(0, 5, size=2))
            fd = finite_diff(
                lambda m: losses.objectness_loss([m if i == mi else maps[i] for i in range(3)]),
                maps[mi], idx)
            assert abs(fd - grads[mi][idx]) < 1e-6


def test_total_loss():
    lv = losses.total_loss(1.0, 2.0, 2.5)
    assert lv.total == 6.0
    assert lv.total == lv.obj + lv.alpha * lv.tv_r
    assert losses.total_loss(0.8, 123.0, 0.0).total == 0.8
    with pytest.raises(ValueError):
        losses.total_loss(1.0, 1.0, -0.1)


def test_total_loss_gradient_composition():
    # grad(total) = grad(obj part) + alpha * grad(tv_r part), checked by FD
    rng = np.random.default_rng(4)
    p = rng.uniform(size=(5, 5, 3))
    alpha = 2.5
    probe = rng.normal(size=(5, 5, 3))

    def total_of(patch):
        obj = float((patch * probe).sum())  # stand-in differentiable objective
        return obj + alpha * losses.tv_r_loss(patch)

    _, g_tvr = losses.tv_r_loss_grad(p)
    g = probe + alpha * g_tvr
    for _ in range(20):
        idx = tuple(rng.integers(0, s) for s in p.shape)
        fd = finite_diff(total_of, p, idx)
        assert abs(fd - g[idx]) < 1e-3 * max(1.0, abs(fd))

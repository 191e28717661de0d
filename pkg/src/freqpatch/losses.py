"""Training losses: smoothness terms on the patch and the objectness term.

The smoothness terms put a small delta inside every square root so the
gradient stays bounded on constant regions. Out-of-range neighbors are
skipped; a pixel with no in-range neighbor contributes nothing.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels

SQRT_DELTA = 1e-8


@dataclass
class LossValue:
    total: float
    obj: float
    tv_r: float
    alpha: float


def tv_loss(patch: np.ndarray) -> float:
    """2-neighbor total variation (right and below)."""
    loss, _ = _kernels.tv_loss_and_grad(_as3d(patch), SQRT_DELTA)
    return loss


def tv_loss_grad(patch: np.ndarray):
    loss, g = _kernels.tv_loss_and_grad(_as3d(patch), SQRT_DELTA)
    return loss, g.reshape(np.asarray(patch).shape)


def tv_r_loss(patch: np.ndarray) -> float:
    """8-neighbor total variation."""
    loss, _ = _kernels.tv_r_loss_and_grad(_as3d(patch), SQRT_DELTA)
    return loss


def tv_r_loss_grad(patch: np.ndarray):
    loss, g = _kernels.tv_r_loss_and_grad(_as3d(patch), SQRT_DELTA)
    return loss, g.reshape(np.asarray(patch).shape)


def _as3d(patch):
    patch = np.ascontiguousarray(patch, dtype=np.float64)
    if patch.ndim == 2:
        return patch[:, :, None]
    if patch.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, C) array, got {patch.shape}")
    return patch


def objectness_loss(score_maps) -> float:
    """Sum over batch images of each image's maximum objectness."""
    maps = list(score_maps)
    if not maps:
        raise ValueError("objectness_loss needs at least one score map")
    return float(sum(np.asarray(m).max() for m in maps))


def objectness_loss_grad(score_maps):
    """Loss and the per-map gradient (one-hot at each map's argmax)."""
    maps = [np.asarray(m, dtype=np.float64) for m in score_maps]
    if not maps:
        raise ValueError("objectness_loss needs at least one score map")
    loss = 0.0
    grads = []
    for m in maps:
        flat = m.reshape(-1)
        k = int(np.argmax(flat))
        loss += float(flat[k])
        g = np.zeros_like(flat)
        g[k] = 1.0
        grads.append(g.reshape(m.shape))
    return loss, grads


def total_loss(obj: float, tvr: float, alpha: float) -> LossValue:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return LossValue(total=obj + alpha * tvr, obj=obj, tv_r=tvr, alpha=alpha)

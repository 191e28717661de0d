"""Rescale the patch per ground-truth box and composite it into the scene.

For each box the patch is bilinearly resized to a square whose side is
round(scale_ratio * box_pixel_height), optionally jittered, and pasted
centered on the box center. Later boxes paint over earlier ones. The
whole map is linear in the patch pixels for fixed geometry and jitter, so
gradients flow back through a paste-crop followed by the resize adjoint.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .imaging import ImageTensor, RGB, resize_array, resize_bilinear_adjoint

log = logging.getLogger(__name__)

DEFAULT_PATCH_SIDE = 950


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized [0, 1] image coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (0.0 <= self.x_min < self.x_max <= 1.0
                and 0.0 <= self.y_min < self.y_max <= 1.0):
            raise ValueError(f"invalid box {self}")

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def width(self):
        return self.x_max - self.x_min

    def center(self):
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0


@dataclass
class AugmentConfig:
    """Per-paste jitter. Disabled for evaluation runs."""

    enabled: bool = True
    brightness: float = 0.1   # offset ~ U(-brightness, brightness)
    contrast: float = 0.1     # scale ~ U(1-contrast, 1+contrast)
    noise: float = 0.05       # per-pixel additive ~ U(-noise, noise)

    @staticmethod
    def disabled():
        return AugmentConfig(enabled=False)


@dataclass
class PasteRecord:
    top: int
    left: int
    side: int
    crop: tuple        # (row0, row1, col0, col1) of the resized patch kept in-frame
    contrast: float
    pass_mask: np.ndarray


@dataclass
class RenderCache:
    patch_shape: tuple
    pastes: list = field(default_factory=list)
    skipped: int = 0


def make_random_patch(side: int = DEFAULT_PATCH_SIDE, rng_seed: int = 0) -> np.ndarray:
    """I.i.d. uniform [0, 1] square patch, deterministic per seed."""
    if side < 1:
        raise ValueError("patch side must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return rng.uniform(0.0, 1.0, size=(side, side, 3))


def render_patch(image: ImageTensor, boxes, patch: np.ndarray, scale_ratio: float = 0.3,
                 augment: AugmentConfig = None, rng_seed: int = 0) -> ImageTensor:
    if image.colorspace != RGB:
        raise ValueError("render_patch expects an RGB image")
    out, cache = render_patch_cached(image.data, boxes, patch, scale_ratio, augment, rng_seed)
    if cache.skipped:
        log.warning("render_patch skipped %d box(es) with sub-pixel patch size", cache.skipped)
    return ImageTensor(out, RGB)


def render_patch_cached(image: np.ndarray, boxes, patch: np.ndarray, scale_ratio: float,
                        augment: AugmentConfig = None, rng_seed: int = 0):
    """Array-level compositor returning the cache used by the adjoint."""
    if not 0.0 < scale_ratio <= 1.0:
        raise ValueError(f"scale_ratio must be in (0, 1], got {scale_ratio}")
    if augment is None:
        augment = AugmentConfig.disabled()
    h, w = image.shape[:2]
    out = image.copy()
    cache = RenderCache(patch_shape=np.asarray(patch).shape)
    rng = np.random.default_rng(rng_seed)

    for box in boxes:
        side = int(round(scale_ratio * box.height * h))
        # draw jitter regardless of validity to keep the stream aligned
        if augment.enabled:
            brightness = rng.uniform(-augment.brightness, augment.brightness)
            contrast = rng.uniform(1.0 - augment.contrast, 1.0 + augment.contrast)
        else:
            brightness, contrast = 0.0, 1.0
        if side < 1:
            cache.skipped += 1
            continue
        resized = resize_array(np.asarray(patch, dtype=np.float64), side, side)
        if augment.enabled and augment.noise > 0:
            resized = resized + rng.uniform(-augment.noise, augment.noise, size=resized.shape)
        pasted = contrast * resized + brightness

        cx, cy = box.center()
        top = int(round(cy * h - side / 2.0))
        left = int(round(cx * w - side / 2.0))
        r0, r1 = max(0, top), min(h, top + side)
        c0, c1 = max(0, left), min(w, left + side)
        if r0 >= r1 or c0 >= c1:
            cache.skipped += 1
            continue
        crop = (r0 - top, r1 - top, c0 - left, c1 - left)
        visible = pasted[crop[0]:crop[1], crop[2]:crop[3]]
        pass_mask = (visible >= 0.0) & (visible <= 1.0)
        out[r0:r1, c0:c1] = np.clip(visible, 0.0, 1.0)
        cache.pastes.append(PasteRecord(top=r0, left=c0, side=side, crop=crop,
                                        contrast=contrast, pass_mask=pass_mask))
    return out, cache


def render_patch_adjoint(cache: RenderCache, grad_image: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the patch for one rendered scene.

    Pastes overwrite, so only the topmost paste at a pixel receives
    gradient; overwritten regions are zeroed back-to-front.
    """
    ph, pw = cache.patch_shape[:2]
    grad_patch = np.zeros(cache.patch_shape)
    g = np.array(grad_image, dtype=np.float64, copy=True)
    for rec in reversed(cache.pastes):
        r0, r1 = rec.top, rec.top + (rec.crop[1] - rec.crop[0])
        c0, c1 = rec.left, rec.left + (rec.crop[3] - rec.crop[2])
        region = g[r0:r1, c0:c1] * rec.pass_mask * rec.contrast
        full = np.zeros((rec.side, rec.side, cache.patch_shape[2]))
        full[rec.crop[0]:rec.crop[1], rec.crop[2]:rec.crop[3]] = region
        grad_patch += resize_bilinear_adjoint(full, ph, pw)
        g[r0:r1, c0:c1] = 0.0  # this paste hid everything underneath
    return grad_patch

"""Patch training: joint gradient descent on the patch pixels and the
frequency-attention mask against a frozen detector.

While epoch < fran_epochs the patch passes through the attention module
and both the patch and the mask receive Adam updates; afterwards the
attention is bypassed entirely and the mask is frozen. Every eval_every
epochs the deployable artifact (the 8-bit-quantized effective patch) is
scored on the test set and checkpointed; the best checkpoint by ASR is
the final result.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .detector import DetectorModel, objectness_backward, objectness_forward
from .fran import fran_backward, fran_forward_cached, make_identity_mask, save_theta, load_theta
from .imaging import ImageTensor, RGB, from_uint8, load_png, save_png, to_uint8
from .losses import objectness_loss_grad, tv_r_loss_grad
from .metrics import MetricsConfig, evaluate_patch
from .render import AugmentConfig, make_random_patch, render_patch_adjoint, render_patch_cached


class NonFiniteLossError(RuntimeError):
    """Loss went non-finite; carries a snapshot of the parameters."""

    def __init__(self, message, patch, theta):
        super().__init__(message)
        self.patch = patch
        self.theta = theta


@dataclass
class TrainConfig:
    patch_side: int = 950
    lr: float = 0.005
    batch_size: int = 4
    epochs: int = 10
    fran_epochs: int = 7
    alpha: float = 2.5
    scale_ratio: float = 0.3
    use_ycbcr: bool = True
    seed: int = 0
    eval_every: int = 1
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        if not 0 <= self.fran_epochs <= self.epochs:
            raise ValueError(f"need 0 <= fran_epochs <= epochs, got "
                             f"{self.fran_epochs} / {self.epochs}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    asr: float
    asr_s: float
    asr_m: float
    asr_l: float
    patch_checkpoint_ref: str
    theta_checkpoint_ref: str


class TrainHistory:
    """Per-epoch records plus resolvable checkpoint references.

    With a run_dir the checkpoints live on disk (patch PNG + mask binary);
    without one they are kept in memory under mem: refs.
    """

    def __init__(self, run_dir=None):
        self.run_dir = str(run_dir) if run_dir is not None else None
        self.records = []
        self._store = {}

    def add(self, epoch, mean_loss, report, patch_u8, theta):
        if self.run_dir is not None:
            patch_ref = f"patch_epoch{epoch:03d}.png"
            theta_ref = f"theta_epoch{epoch:03d}.bin"
            save_png(os.path.join(self.run_dir, patch_ref),
                     ImageTensor(from_uint8(patch_u8), RGB))
            save_theta(os.path.join(self.run_dir, theta_ref), theta)
        else:
            patch_ref = f"mem:patch:{epoch}"
            theta_ref = f"mem:theta:{epoch}"
            self._store[patch_ref] = patch_u8.copy()
            self._store[theta_ref] = theta.copy()
        self.records.append(EpochRecord(
            epoch=epoch, mean_loss=mean_loss, asr=report.asr, asr_s=report.asr_s,
            asr_m=report.asr_m, asr_l=report.asr_l,
            patch_checkpoint_ref=patch_ref, theta_checkpoint_ref=theta_ref))

    def load_patch(self, ref) -> np.ndarray:
        if ref.startswith("mem:"):
            return from_uint8(self._store[ref])
        return load_png(os.path.join(self.run_dir, ref)).data

    def load_theta(self, ref) -> np.ndarray:
        if ref.startswith("mem:"):
            return self._store[ref].copy()
        return load_theta(os.path.join(self.run_dir, ref))

    def to_json(self) -> str:
        return json.dumps([r.__dict__ for r in self.records], indent=2, sort_keys=True)


def _render_seed(seed, epoch, step, item):
    return int(np.random.SeedSequence([seed, epoch, step, item]).generate_state(1)[0])


def effective_patch(patch, theta, use_fran, use_ycbcr):
    """The patch as rendered this epoch: attended while FRAN is active."""
    if use_fran:
        out, cache = fran_forward_cached(patch, theta, use_ycbcr)
        return out, cache
    return patch, None


def train_patch(train_data, test_data, model: DetectorModel, config: TrainConfig,
                run_dir=None, log_fn=None):
    """Returns (patch, theta, history); detector weights are left untouched."""
    if not train_data or not test_data:
        raise ValueError("datasets must be non-empty")
    rng = np.random.default_rng(config.seed)
    patch = make_random_patch(config.patch_side, rng_seed=config.seed)
    theta = make_identity_mask(config.patch_side, config.patch_side)
    history = TrainHistory(run_dir)
    if config.epochs == 0:
        return patch, theta, history

    opt_patch = nn.Adam([patch], lr=config.lr)
    opt_theta = nn.Adam([theta], lr=config.lr)
    weights_before = model.weights_hash()

    for epoch in range(config.epochs):
        use_fran = epoch < config.fran_epochs
        order = rng.permutation(len(train_data))
        epoch_loss = 0.0
        n_steps = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            p_eff, fran_cache = effective_patch(patch, theta, use_fran, config.use_ycbcr)

            scenes = []
            render_caches = []
            for j, i in enumerate(idx):
                sample = train_data[i]
                scene, rcache = render_patch_cached(
                    from_uint8(sample.image_u8), sample.gt_boxes, p_eff,
                    config.scale_ratio, config.augment,
                    rng_seed=_render_seed(config.seed, epoch, n_steps, j))
                scenes.append(scene)
                render_caches.append(rcache)
            scenes = np.stack(scenes)

            maps, det_cache = objectness_forward(model, scenes)
            obj_loss, g_maps = objectness_loss_grad(list(maps))
            g_scenes = objectness_backward(model, det_cache, np.stack(g_maps))

            g_eff = np.zeros_like(p_eff)
            for rcache, g_scene in zip(render_caches, g_scenes):
                g_eff += render_patch_adjoint(rcache, g_scene)

            tvr, g_tvr = tv_r_loss_grad(p_eff)
            loss = obj_loss + config.alpha * tvr
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}", patch.copy(), theta.copy())
            g_eff += config.alpha * g_tvr

            if use_fran:
                g_patch, g_theta = fran_backward(fran_cache, g_eff)
                opt_theta.step([g_theta])
            else:
                g_patch = g_eff
            opt_patch.step([g_patch])
            np.clip(patch, 0.0, 1.0, out=patch)
            epoch_loss += loss
            n_steps += 1

        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            p_eff, _ = effective_patch(patch, theta, use_fran, config.use_ycbcr)
            artifact_u8 = to_uint8(p_eff)
            report = evaluate_patch(
                model, test_data, patch=from_uint8(artifact_u8), theta=None,
                cfg=config.metrics, seed=config.seed,
                scale_ratio=config.scale_ratio, augment=AugmentConfig.disabled(),
                mode="patched")
            history.add(epoch, epoch_loss / max(1, n_steps), report, artifact_u8, theta)
            if log_fn:
                log_fn(f"epoch {epoch}: loss {epoch_loss / max(1, n_steps):.4f} "
                       f"asr {report.asr:.3f} (s {report.asr_s:.3f} m {report.asr_m:.3f} "
                       f"l {report.asr_l:.3f})")

    if model.weights_hash() != weights_before:
        raise RuntimeError("detector weights changed during patch training")
    return patch, theta, history


def select_best_checkpoint(history: TrainHistory):
    """Checkpoint with maximal ASR; earliest epoch wins ties."""
    if not history.records:
        raise ValueError("history is empty")
    best = max(history.records, key=lambda r: (r.asr, -r.epoch))
    return history.load_patch(best.patch_checkpoint_ref), \
        history.load_theta(best.theta_checkpoint_ref)

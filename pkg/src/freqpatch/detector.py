"""The victim: a small anchor-free objectness detector plus a synthetic
person-proxy dataset generator.

Each person proxy is a textured torso rectangle topped by a head ellipse,
drawn over cluttered backgrounds. Box heights are sampled so the three
height-ratio buckets stay balanced. The detector maps the input image to
a G x G grid; every cell predicts an objectness logit and a box
(cx, cy, w, h) in normalized coordinates.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .imaging import ImageTensor, RGB, from_uint8, resize_array, resize_bilinear_adjoint, to_uint8
from .metrics import iou
from .render import BoundingBox

MODEL_FORMAT_VERSION = 1


class TrainingFailedError(RuntimeError):
    def __init__(self, best_recall, min_recall):
        super().__init__(f"detector recall {best_recall:.4f} below required {min_recall:.4f}")
        self.best_recall = best_recall


@dataclass
class Detection:
    box: BoundingBox
    objectness: float


@dataclass
class DatasetSample:
    image_u8: np.ndarray          # kept 8-bit; float views are built per use
    gt_boxes: list

    @property
    def image(self) -> ImageTensor:
        return ImageTensor(from_uint8(self.image_u8), RGB)


@dataclass
class DetectorConfig:
    input_side: int = 128
    grid: int = 16
    objectness_threshold: float = 0.5
    channels: tuple = (16, 32, 48, 48, 48)
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 12
    seed: int = 0
    min_recall: float = 0.90
    pos_weight: float = 8.0
    box_weight: float = 2.0
    nms_iou: float = 0.5


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

# interior margins keep the snapped pixel boxes inside their bucket
_BUCKET_EPS_RANGES = [(0.15, 0.29), (0.31, 0.59), (0.61, 0.90)]


def make_background(side: int, rng) -> np.ndarray:
    """Cluttered but muted background so the proxies stay salient: a tinted
    gradient, flat low-contrast rectangles with extreme aspect ratios (never
    person-like), and mild noise."""
    gray = rng.uniform(0.3, 0.6)
    base = np.clip(gray + rng.uniform(-0.06, 0.06, size=3), 0, 1)
    img = np.empty((side, side, 3))
    img[:] = base
    ramp = np.linspace(-1.0, 1.0, side)
    img += ramp[:, None, None] * rng.uniform(-0.08, 0.08, size=3)
    img += ramp[None, :, None] * rng.uniform(-0.08, 0.08, size=3)
    for _ in range(rng.integers(3, 9)):
        if rng.integers(0, 2):
            h = rng.integers(2, max(3, side // 16))
            w = rng.integers(side // 6, side // 2)
        else:
            h = rng.integers(side // 6, side // 2)
            w = rng.integers(2, max(3, side // 16))
        r = rng.integers(0, side - h)
        c = rng.integers(0, side - w)
        img[r:r + h, c:c + w] = np.clip(gray + rng.uniform(-0.18, 0.18, size=3), 0, 1)
    img += rng.normal(0.0, 0.015, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _draw_proxy(img: np.ndarray, rng, top: int, left: int,
                h_px: int, w_px: int) -> BoundingBox:
    side = img.shape[0]
    head_h = max(2, int(round(0.28 * h_px)))
    torso_top = top + head_h
    torso_h = h_px - head_h

    # textured torso: saturated high-contrast two-tone checker whose cell
    # size scales with the proxy, so apparent scale is locally readable
    c1 = rng.uniform(0.0, 0.35, size=3)
    c1[rng.integers(0, 3)] = rng.uniform(0.5, 1.0)
    c2 = np.clip(1.0 - c1 + rng.uniform(-0.15, 0.15, size=3), 0.0, 1.0)
    cell = max(1, h_px // 8)
    yy, xx = np.mgrid[0:torso_h, 0:w_px]
    checker = ((yy // cell + xx // cell) % 2).astype(float)[:, :, None]
    torso = checker * c1 + (1.0 - checker) * c2
    torso += rng.normal(0.0, 0.03, size=torso.shape)
    img[torso_top:torso_top + torso_h, left:left + w_px] = np.clip(torso, 0, 1)

    # head: skin-tone ellipse centered over the torso
    skin = np.array([rng.uniform(0.65, 0.95), rng.uniform(0.45, 0.75), rng.uniform(0.3, 0.6)])
    ry = head_h / 2.0
    rx = max(1.0, 0.38 * w_px)
    cy = top + ry
    cx = left + w_px / 2.0
    yy, xx = np.mgrid[top:top + head_h, left:left + w_px]
    mask = ((yy + 0.5 - cy) / ry) ** 2 + ((xx + 0.5 - cx) / rx) ** 2 <= 1.0
    region = img[top:top + head_h, left:left + w_px]
    region[mask] = np.clip(skin + rng.normal(0.0, 0.02, size=3), 0, 1)

    return BoundingBox(left / side, top / side, (left + w_px) / side, (top + h_px) / side)


def _mostly_covers(a: BoundingBox, b: BoundingBox) -> bool:
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    smaller = min(a.width * a.height, b.width * b.height)
    return inter / smaller > 0.3


def generate_synthetic_dataset(n: int, image_side: int = 128, rng_seed: int = 0):
    """Deterministic list of samples; 1-4 proxies each, buckets balanced.

    Placements that would bury an earlier proxy (or be buried by it) are
    rejected and resampled so every ground-truth box stays detectable.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(rng_seed)
    samples = []
    for _ in range(n):
        img = make_background(image_side, rng)
        boxes = []
        for _ in range(rng.integers(1, 5)):
            lo, hi = _BUCKET_EPS_RANGES[rng.integers(0, 3)]
            for _attempt in range(25):
                eps = rng.uniform(lo, hi)
                h_px = int(round(eps * image_side))
                w_px = max(3, int(round(h_px * rng.uniform(0.34, 0.48))))
                top = int(rng.integers(0, image_side - h_px)) if image_side > h_px else 0
                left = int(rng.integers(0, image_side - w_px)) if image_side > w_px else 0
                cand = BoundingBox(left / image_side, top / image_side,
                                   (left + w_px) / image_side, (top + h_px) / image_side)
                if not any(_mostly_covers(cand, b) for b in boxes):
                    boxes.append(_draw_proxy(img, rng, top, left, h_px, w_px))
                    break
        samples.append(DatasetSample(image_u8=to_uint8(img), gt_boxes=boxes))
    return samples


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class DetectorModel:
    """Conv trunk (three stride-2 stages, then stride-1 stages widening the
    receptive field) and a 1x1 head emitting (objectness, tx, ty, tw, th)
    per grid cell."""

    def __init__(self, config: DetectorConfig, rng=None):
        self.config = config
        rng = rng or np.random.default_rng(config.seed)
        chans = config.channels
        self.layers = []
        cin = 3
        for i, cout in enumerate(chans):
            stride = 2 if i < 3 else 1
            self.layers.append(nn.Conv2d(cin, cout, k=3, stride=stride, pad=1, rng=rng))
            cin = cout
        self.head = nn.Conv2d(cin, 5, k=1, stride=1, pad=0, rng=rng)
        self.history = []

    # -- raw network ---------------------------------------------------
    def forward(self, x):
        """x: (B, input_side, input_side, 3) -> logits (B, G, G, 5), cache."""
        caches = []
        h = x
        for layer in self.layers:
            h, cx = layer.forward(h)
            h, mask = nn.leaky_relu(h)
            caches.append((cx, mask))
        logits, cx = self.head.forward(h)
        caches.append((cx, None))
        return logits, caches

    def backward(self, caches, g_logits, want_input_grad=True, want_param_grads=True):
        param_grads = []
        g, gw, gb = self.head.backward(caches[-1][0], g_logits)
        if want_param_grads:
            param_grads = [gw, gb]
        for layer, (cx, mask) in zip(reversed(self.layers), reversed(caches[:-1])):
            g = nn.leaky_relu_backward(mask, g)
            g, gw, gb = layer.backward(cx, g)
            if want_param_grads:
                param_grads = [gw, gb] + param_grads
        return (g if want_input_grad else None), param_grads

    def params(self):
        out = []
        for layer in self.layers + [self.head]:
            out.extend(layer.params())
        return out

    def set_params(self, values):
        it = iter(values)
        for layer in self.layers + [self.head]:
            layer.set_params(next(it), next(it))

    def weights_hash(self) -> str:
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()


def _prepare_batch(model: DetectorModel, images: np.ndarray):
    side = model.config.input_side
    if images.shape[1] == side and images.shape[2] == side:
        return images, None
    resized = np.stack([resize_array(im, side, side) for im in images])
    return resized, images.shape[1:3]


def objectness_forward(model: DetectorModel, images: np.ndarray):
    """images: (B, H, W, 3) in [0, 1] -> sigmoid objectness maps (B, G, G)."""
    x, orig_hw = _prepare_batch(model, np.asarray(images, dtype=np.float64))
    logits, caches = model.forward(x)
    maps = nn.sigmoid(logits[:, :, :, 0])
    return maps, (caches, maps, logits.shape, orig_hw)


def objectness_backward(model: DetectorModel, cache, grad_maps: np.ndarray):
    """Gradient of a scalar loss (given d loss / d maps) w.r.t. the images."""
    caches, maps, logits_shape, orig_hw = cache
    g_logits = np.zeros(logits_shape)
    g_logits[:, :, :, 0] = nn.sigmoid_backward(maps, grad_maps)
    g_input, _ = model.backward(caches, g_logits, want_input_grad=True,
                                want_param_grads=False)
    if orig_hw is not None:
        g_input = np.stack([resize_bilinear_adjoint(g, orig_hw[0], orig_hw[1])
                            for g in g_input])
    return g_input


def objectness_scores(model: DetectorModel, image) -> np.ndarray:
    """Differentiable G x G objectness map for one image."""
    data = image.data if isinstance(image, ImageTensor) else np.asarray(image, dtype=np.float64)
    maps, _ = objectness_forward(model, data[None])
    return maps[0]


def _decode_cell(model, logits_cell, gy, gx):
    g = model.config.grid
    tx, ty, tw, th = logits_cell[1], logits_cell[2], logits_cell[3], logits_cell[4]
    cx = (gx + float(nn.sigmoid(np.array(tx)))) / g
    cy = (gy + float(nn.sigmoid(np.array(ty)))) / g
    w = float(nn.sigmoid(np.array(tw)))
    h = float(nn.sigmoid(np.array(th)))
    x0 = max(0.0, cx - w / 2)
    x1 = min(1.0, cx + w / 2)
    y0 = max(0.0, cy - h / 2)
    y1 = min(1.0, cy + h / 2)
    return BoundingBox(x0, y0, x1, y1)


def detect(model: DetectorModel, image, threshold: float = None):
    """Decode per-cell predictions, filter by objectness, greedy NMS."""
    data = image.data if isinstance(image, ImageTensor) else np.asarray(image, dtype=np.float64)
    if threshold is None:
        threshold = model.config.objectness_threshold
    x, _ = _prepare_batch(model, data[None])
    logits, _ = model.forward(x)
    logits = logits[0]
    obj = nn.sigmoid(logits[:, :, 0])
    g = model.config.grid
    cands = []
    for gy in range(g):
        for gx in range(g):
            score = float(obj[gy, gx])
            if score >= threshold:
                cands.append(Detection(box=_decode_cell(model, logits[gy, gx], gy, gx),
                                       objectness=score))
    cands.sort(key=lambda d: -d.objectness)
    kept = []
    for d in cands:
        if all(iou(d.box, k.box) < model.config.nms_iou for k in kept):
            kept.append(d)
    return kept


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _targets_for(model: DetectorModel, boxes_per_image):
    g = model.config.grid
    n = len(boxes_per_image)
    t_obj = np.zeros((n, g, g))
    t_box = np.zeros((n, g, g, 4))
    t_scale = np.zeros((n, g, g))
    for i, boxes in enumerate(boxes_per_image):
        for box in boxes:
            cx, cy = box.center()
            gx = min(g - 1, int(cx * g))
            gy = min(g - 1, int(cy * g))
            t_obj[i, gy, gx] = 1.0
            t_box[i, gy, gx] = (cx, cy, box.width, box.height)
            # height-relative weight: small boxes need absolute precision
            t_scale[i, gy, gx] = min(3.0, max(0.5, 0.3 / box.height))
    return t_obj, t_box, t_scale


def _detection_loss(model: DetectorModel, logits, t_obj, t_box, t_scale):
    """Weighted BCE on objectness plus height-weighted L1 on decoded boxes
    at positive cells. Returns (loss, grad wrt logits)."""
    cfg = model.config
    n, g = logits.shape[0], logits.shape[1]
    obj = nn.sigmoid(logits[:, :, :, 0])
    wgt = np.where(t_obj > 0, cfg.pos_weight, 1.0)
    eps = 1e-12
    bce = -(t_obj * np.log(obj + eps) + (1 - t_obj) * np.log(1 - obj + eps)) * wgt
    n_cells = n * g * g
    loss = float(bce.sum()) / n_cells

    g_logits = np.zeros_like(logits)
    g_logits[:, :, :, 0] = wgt * (obj - t_obj) / n_cells

    pos = t_obj > 0
    n_pos = int(pos.sum())
    if n_pos:
        grid_x = np.broadcast_to(np.arange(g)[None, None, :], (n, g, g))
        grid_y = np.broadcast_to(np.arange(g)[None, :, None], (n, g, g))
        s = nn.sigmoid(logits[:, :, :, 1:])
        pred = np.empty_like(s)
        pred[:, :, :, 0] = (grid_x + s[:, :, :, 0]) / g
        pred[:, :, :, 1] = (grid_y + s[:, :, :, 1]) / g
        pred[:, :, :, 2] = s[:, :, :, 2]
        pred[:, :, :, 3] = s[:, :, :, 3]
        diff = pred - t_box
        w4 = (t_scale * pos)[:, :, :, None]
        loss += cfg.box_weight * float((np.abs(diff) * w4).sum()) / n_pos
        g_pred = np.sign(diff) * w4 * (cfg.box_weight / n_pos)
        g_pred[:, :, :, 0] /= g
        g_pred[:, :, :, 1] /= g
        g_logits[:, :, :, 1:] = nn.sigmoid_backward(s, g_pred)
    return loss, g_logits


def clean_recall(model: DetectorModel, data, t_iou: float = 0.5) -> float:
    """Fraction of ground-truth boxes matched by a detection at t_iou."""
    matched = 0
    total = 0
    for sample in data:
        dets = detect(model, sample.image)
        for box in sample.gt_boxes:
            total += 1
            if any(iou(box, d.box) >= t_iou for d in dets):
                matched += 1
    return matched / total if total else 0.0


def train_toy_detector(train, val, config: DetectorConfig = DetectorConfig()) -> DetectorModel:
    if not train or not val:
        raise ValueError("train and val datasets must be non-empty")
    rng = np.random.default_rng(config.seed)
    model = DetectorModel(config, rng=rng)
    opt = nn.Adam(model.params(), lr=config.lr)
    best_recall = -1.0
    best_params = None

    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            images = np.stack([from_uint8(train[i].image_u8) for i in idx])
            boxes = [train[i].gt_boxes for i in idx]
            t_obj, t_box, t_scale = _targets_for(model, boxes)
            logits, caches = model.forward(images)
            loss, g_logits = _detection_loss(model, logits, t_obj, t_box, t_scale)
            _, grads = model.backward(caches, g_logits, want_input_grad=False)
            opt.step(grads)
            epoch_loss += loss
            n_batches += 1
        recall = clean_recall(model, val)
        model.history.append({"epoch": epoch, "loss": epoch_loss / max(1, n_batches),
                              "recall": recall})
        if recall > best_recall:
            best_recall = recall
            best_params = [p.copy() for p in model.params()]

    model.set_params(best_params)
    if best_recall < config.min_recall:
        raise TrainingFailedError(best_recall, config.min_recall)
    return model


# ---------------------------------------------------------------------------
# persistence: one self-describing binary file with a version field
# ---------------------------------------------------------------------------

def save_model(path, model: DetectorModel):
    cfg = dict(model.config.__dict__)
    cfg["channels"] = list(cfg["channels"])
    arrays = {f"param_{i}": p for i, p in enumerate(model.params())}
    with open(path, "wb") as f:
        np.savez(f, version=np.array([MODEL_FORMAT_VERSION]),
                 config=np.frombuffer(json.dumps(cfg, sort_keys=True).encode(), dtype=np.uint8),
                 history=np.frombuffer(json.dumps(model.history).encode(), dtype=np.uint8),
                 **arrays)


def load_model(path) -> DetectorModel:
    with np.load(path) as data:
        version = int(data["version"][0])
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model file version {version}")
        cfg = json.loads(bytes(data["config"]).decode())
        cfg["channels"] = tuple(cfg["channels"])
        model = DetectorModel(DetectorConfig(**cfg))
        model.history = json.loads(bytes(data["history"]).decode())
        n = len(model.params())
        model.set_params([data[f"param_{i}"] for i in range(n)])
    return model

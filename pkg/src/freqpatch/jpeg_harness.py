"""JPEG robustness protocol: persist the patch lossily, reload, re-score.

The round-trip applies to the patch artifact only; the scene images stay
untouched. The attention module is not re-applied at evaluation time (the
persisted patch already is the final artifact).
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .imaging import ImageTensor, RGB, jpeg_roundtrip
from .metrics import MetricsConfig, evaluate_patch


@dataclass
class QualityRecord:
    quality: int
    asr: float
    asr_s: float
    asr_m: float
    asr_l: float
    delta_asr: float
    delta_asr_s: float
    delta_asr_m: float
    delta_asr_l: float


@dataclass
class JpegSweepReport:
    lossless: dict
    records: list
    seed: int
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


DEFAULT_QUALITIES = (50, 75, 95)


def jpeg_eval(model, data, patch: np.ndarray, qualities=DEFAULT_QUALITIES,
              cfg: MetricsConfig = MetricsConfig(), seed: int = 0,
              scale_ratio: float = 0.3) -> JpegSweepReport:
    qualities = list(qualities)
    if not qualities:
        raise ValueError("need at least one quality")
    for q in qualities:
        if not 1 <= int(q) <= 100:
            raise ValueError(f"quality {q} out of 1..100")

    base = evaluate_patch(model, data, patch=patch, theta=None, cfg=cfg, seed=seed,
                          scale_ratio=scale_ratio, mode="patched")
    records = []
    for q in qualities:
        compressed = jpeg_roundtrip(ImageTensor(np.asarray(patch, dtype=np.float64), RGB), q)
        rep = evaluate_patch(model, data, patch=compressed.data, theta=None, cfg=cfg,
                             seed=seed, scale_ratio=scale_ratio, mode="patched")
        records.append(QualityRecord(
            quality=int(q), asr=rep.asr, asr_s=rep.asr_s, asr_m=rep.asr_m, asr_l=rep.asr_l,
            delta_asr=base.asr - rep.asr,
            delta_asr_s=base.asr_s - rep.asr_s,
            delta_asr_m=base.asr_m - rep.asr_m,
            delta_asr_l=base.asr_l - rep.asr_l))
    return JpegSweepReport(
        lossless={"asr": base.asr, "asr_s": base.asr_s, "asr_m": base.asr_m,
                  "asr_l": base.asr_l},
        records=records, seed=seed,
        config={"qualities": [int(q) for q in qualities], "t_iou": cfg.t_iou,
                "eps0": cfg.eps0, "eps1": cfg.eps1, "scale_ratio": scale_ratio})

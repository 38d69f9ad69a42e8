"""Selector -> prompts -> frozen segmenter -> refinement, with graceful fallback."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..data import RgbtSample
from ..errors import BackendUnavailable, EmptyPrompt
from .prompts import MIN_AREA_FRACTION, binarize, build_prompts
from .refine import RefineStrategy, refine
from .segmenter import SegmenterBackend, segment
from .selector import RGB, THERMAL, QualityScores, SelectorConfig, select_modality

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    threshold: float = 0.5
    min_area: int | None = None  # None: min_area_frac of the pixels
    min_area_frac: float = MIN_AREA_FRACTION
    strategy: RefineStrategy = field(default_factory=RefineStrategy)
    refine_coarse: bool = False  # fuse the raw coarse map instead of its binarization
    use_mask: bool = True
    use_boxes: bool = True
    use_points: bool = False


@dataclass
class PipelineResult:
    saliency: np.ndarray
    modality: str | None = None
    scores: QualityScores | None = None
    n_boxes: int = 0
    fallback: str | None = None

    def record(self, name: str) -> dict:
        out = {"name": name, "modality": self.modality, "n_boxes": self.n_boxes, "fallback": self.fallback}
        if self.scores is not None:
            out.update(s_alpha=self.scores.s_alpha, s_beta=self.scores.s_beta)
        return out


def run_pipeline(sample: RgbtSample, coarse: np.ndarray, cfg: PipelineConfig, backend: SegmenterBackend | None,
                 scorer=None) -> PipelineResult:
    """Refine ``coarse`` (H x W in [0,1]). Without a scorer the RGB image is used.
    Empty prompts and an unavailable backend return ``coarse`` unchanged."""
    if scorer is None:
        modality, scores = RGB, None
    else:
        modality, scores = select_modality(sample.rgb, sample.thermal, cfg.selector, scorer)
    image = sample.rgb if modality == RGB else sample.thermal
    result = PipelineResult(coarse, modality, scores)
    try:
        if backend is None:
            raise BackendUnavailable("no segmenter backend configured")
        min_area = cfg.min_area
        if min_area is None:
            min_area = max(1, math.ceil(cfg.min_area_frac * coarse.shape[0] * coarse.shape[1]))
        prompt = build_prompts(coarse, image, cfg.threshold, min_area, with_points=cfg.use_points)
        s_g = segment(prompt, backend, use_mask=cfg.use_mask, use_boxes=cfg.use_boxes, out_shape=coarse.shape)
    except EmptyPrompt as exc:
        log.info("%s: %s; keeping the coarse map", sample.name, exc)
        result.fallback = "empty_prompt"
        return result
    except BackendUnavailable as exc:
        log.warning("%s: %s; keeping the coarse map", sample.name, exc)
        result.fallback = "backend_unavailable"
        return result
    base = np.asarray(coarse, dtype=np.float32) if cfg.refine_coarse else prompt.mask.astype(np.float32)
    result.saliency = refine(base, s_g, cfg.strategy)
    result.n_boxes = len(prompt.boxes)
    return result


__all__ = ["PipelineConfig", "PipelineResult", "run_pipeline", "binarize", "RGB", "THERMAL"]

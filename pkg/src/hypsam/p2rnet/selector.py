"""Quality-aware choice between the RGB and thermal image as the segmenter input."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigInvalid, ScorerUnavailable

RGB, THERMAL = "rgb", "thermal"
BRIGHTNESS_PAIR = ("Bright photo.", "Dark photo.")
COLORFULNESS_PAIR = ("Colorful photo.", "Dull photo.")


@dataclass(frozen=True)
class QualityScores:
    s_alpha: float
    s_beta: float


@dataclass
class SelectorConfig:
    tau: float = 0.01
    theta: float = 0.85
    antonym_pairs: tuple = (BRIGHTNESS_PAIR, COLORFULNESS_PAIR)
    # cosine similarities are multiplied by this before the two-way softmax
    logit_scale: float = 100.0
    # "bright_first": s_alpha is the probability of the positive (bright) text;
    # "dark_first": the pair is swapped so s_alpha measures darkness
    alpha_order: str = "bright_first"

    def __post_init__(self):
        for name in ("tau", "theta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigInvalid(f"p2rnet.{name} must lie in [0, 1], got {v}")
        if self.alpha_order not in ("bright_first", "dark_first"):
            raise ConfigInvalid(f"unknown alpha_order {self.alpha_order!r}")
        if len(self.antonym_pairs) != 2 or any(len(p) != 2 for p in self.antonym_pairs):
            raise ConfigInvalid("antonym_pairs must hold two (positive, negative) text pairs")
        if self.logit_scale <= 0:
            raise ConfigInvalid("logit_scale must be positive")


def _cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def softmax_pair(s1: float, s2: float, logit_scale: float = 1.0) -> float:
    """e^{k s1} / (e^{k s1} + e^{k s2}), computed stably."""
    d = logit_scale * (s2 - s1)
    if d > 0:
        e = math.exp(-d)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(d))


def quality_score(image, pair, scorer, logit_scale: float = 1.0) -> float:
    """Probability of the positive description against its antonym."""
    f = scorer.encode_image(image)
    t = scorer.encode_text(list(pair))
    return softmax_pair(_cosine(f, t[0]), _cosine(f, t[1]), logit_scale)


def score_image(image, cfg: SelectorConfig, scorer) -> QualityScores:
    bright, color = cfg.antonym_pairs
    if cfg.alpha_order == "dark_first":
        bright = bright[::-1]
    return QualityScores(
        quality_score(image, bright, scorer, cfg.logit_scale),
        quality_score(image, color, scorer, cfg.logit_scale),
    )


def decide(scores: QualityScores, tau: float, theta: float) -> str:
    return RGB if (scores.s_alpha > tau or scores.s_beta > theta) else THERMAL


def select_modality(rgb, thermal, cfg: SelectorConfig, scorer):
    """Only the RGB image is scored; thermal is the fallback."""
    scores = score_image(rgb, cfg, scorer)
    return decide(scores, cfg.tau, cfg.theta), scores


class StubScorer:
    """Deterministic scorer for tests: user-supplied image and text embeddings."""

    def __init__(self, image_fn, text_table: dict):
        self.image_fn = image_fn
        self.text_table = text_table

    def encode_image(self, image):
        return np.asarray(self.image_fn(image), dtype=np.float64)

    def encode_text(self, texts):
        return np.stack([np.asarray(self.text_table[t], dtype=np.float64) for t in texts])


class ClipScorer:
    """Image-text embeddings from a CLIP model via transformers."""

    DEFAULT_MODEL = "openai/clip-vit-base-patch32"

    def __init__(self, model_name_or_path: str | None = None):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ScorerUnavailable("transformers is not installed") from exc
        name = model_name_or_path or self.DEFAULT_MODEL
        kwargs = {"cache_dir": os.environ.get("HYPSAM_CACHE")}
        try:
            self.model = CLIPModel.from_pretrained(name, **kwargs).eval()
            self.processor = CLIPProcessor.from_pretrained(name, **kwargs)
        except Exception as exc:
            raise ScorerUnavailable(f"could not load CLIP weights {name!r}: {exc}") from exc
        self._torch = torch
        self._text_cache: dict = {}

    @staticmethod
    def _as_tensor(out):
        # recent transformers may wrap projected features in a model output
        return out if hasattr(out, "shape") else out.pooler_output

    def encode_image(self, image):
        with self._torch.no_grad():
            inputs = self.processor(images=np.asarray(image), return_tensors="pt")
            return self._as_tensor(self.model.get_image_features(**inputs))[0].numpy()

    def encode_text(self, texts):
        key = tuple(texts)
        if key not in self._text_cache:
            with self._torch.no_grad():
                inputs = self.processor(text=list(texts), return_tensors="pt", padding=True)
                self._text_cache[key] = self._as_tensor(self.model.get_text_features(**inputs)).numpy()
        return self._text_cache[key]


def build_scorer(name: str, weights: str | None = None):
    if name == "clip":
        return ClipScorer(weights)
    if name == "none":
        return None
    raise ConfigInvalid(f"unknown scorer {name!r}; choose clip or none")

"""Fusion of the binarized coarse map with the segmenter mask."""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ..errors import ConfigInvalid, ShapeMismatch, UnknownStrategy

KINDS = ("max", "add", "weighted_add", "morphological")


@dataclass(frozen=True)
class RefineStrategy:
    kind: str = "max"
    weight: float = 0.5
    se_radius: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownStrategy(f"unknown refinement strategy {self.kind!r}; choose from {KINDS}")
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigInvalid(f"weight must lie in [0, 1], got {self.weight}")
        if self.se_radius < 1:
            raise ConfigInvalid(f"se_radius must be >= 1, got {self.se_radius}")


def disk(radius: int) -> np.ndarray:
    return cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * radius + 1, 2 * radius + 1))


def refine(base: np.ndarray, s_g: np.ndarray, strategy: RefineStrategy | str = "max") -> np.ndarray:
    if isinstance(strategy, str):
        strategy = RefineStrategy(strategy)
    a = np.asarray(base, dtype=np.float32)
    b = np.asarray(s_g, dtype=np.float32)
    if a.shape != b.shape:
        raise ShapeMismatch(f"refinement inputs {a.shape} vs {b.shape}")
    if strategy.kind == "max":
        return np.maximum(a, b)
    if strategy.kind == "add":
        return np.clip(a + b, 0.0, 1.0)
    if strategy.kind == "weighted_add":
        w = strategy.weight
        return np.clip(w * a + (1 - w) * b, 0.0, 1.0)
    fused = np.maximum(a, b)
    return cv2.morphologyEx(fused, cv2.MORPH_CLOSE, disk(strategy.se_radius), borderType=cv2.BORDER_REPLICATE)

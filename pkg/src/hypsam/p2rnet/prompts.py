"""Mask and box prompts built from a coarse saliency map."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from ..errors import EmptyPrompt, ShapeMismatch

MIN_AREA_FRACTION = 0.001


@dataclass
class HybridPrompt:
    mask: np.ndarray  # bool, H x W
    boxes: list  # (x0, y0, x1, y1), inclusive pixel coordinates
    image: np.ndarray  # H x W x 3, aligned with mask
    points: list = field(default_factory=list)  # (x, y) centroids, optional


def binarize(coarse: np.ndarray, T: float = 0.5) -> np.ndarray:
    return np.asarray(coarse) > T


def default_min_area(shape) -> int:
    return max(1, math.ceil(MIN_AREA_FRACTION * shape[0] * shape[1]))


def _components(mask: np.ndarray):
    n, labels, stats, centroids = cv2.connectedComponentsWithStats(mask.astype(np.uint8), connectivity=8)
    comps = []
    for i in range(1, n):
        x, y, w, h, area = (int(v) for v in stats[i])
        comps.append((area, (x, y, x + w - 1, y + h - 1), tuple(float(c) for c in centroids[i])))
    # largest first; ties broken by box position for determinism
    comps.sort(key=lambda c: (-c[0], c[1][1], c[1][0], c[1][3], c[1][2]))
    return comps


def extract_boxes(mask: np.ndarray, min_area: int = 0) -> list:
    return [box for area, box, _ in _components(mask) if area >= min_area]


def extract_points(mask: np.ndarray, min_area: int = 0) -> list:
    return [(round(cx), round(cy)) for area, _, (cx, cy) in _components(mask) if area >= min_area]


def build_prompts(coarse: np.ndarray, image: np.ndarray, T: float = 0.5, min_area: int | None = None,
                  with_points: bool = False) -> HybridPrompt:
    coarse = np.asarray(coarse)
    if coarse.ndim != 2:
        raise ShapeMismatch(f"coarse map must be 2-D, got {coarse.shape}")
    if image.shape[:2] != coarse.shape:
        image = cv2.resize(image, (coarse.shape[1], coarse.shape[0]), interpolation=cv2.INTER_LINEAR)
    if min_area is None:
        min_area = default_min_area(coarse.shape)
    mask = binarize(coarse, T)
    comps = [c for c in _components(mask) if c[0] >= min_area]
    if not comps:
        raise EmptyPrompt(f"no foreground component of at least {min_area} px above T={T}")
    points = [(round(cx), round(cy)) for _, _, (cx, cy) in comps] if with_points else []
    return HybridPrompt(mask=mask, boxes=[c[1] for c in comps], image=image, points=points)

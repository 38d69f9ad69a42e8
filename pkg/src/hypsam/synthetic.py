"""Synthetic RGB-T pairs (one square or disk per image) for desk-scale runs."""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .data import RgbtSample


def make_sample(rng: np.random.Generator, size: int = 64, name: str = "syn") -> RgbtSample:
    """A textured background with one square or disk. The object contrasts in
    colour on RGB and is warm on the thermal image."""
    gt = np.zeros((size, size), np.uint8)
    r = int(rng.integers(size // 8, size // 4 + 1))
    cy, cx = (int(v) for v in rng.integers(r, size - r, size=2))
    if rng.uniform() < 0.5:
        gt[cy - r:cy + r, cx - r:cx + r] = 1
    else:
        cv2.circle(gt, (cx, cy), r, 1, thickness=-1)
    fg = rng.uniform(0, 255, 3)
    bg = (fg + rng.uniform(80, 175, 3)) % 255
    noise = rng.normal(0, 12, (size, size, 3))
    rgb = np.where(gt[..., None] == 1, fg, bg) + noise
    warm, cold = rng.uniform(170, 240), rng.uniform(30, 100)
    t = np.where(gt == 1, warm, cold) + rng.normal(0, 10, (size, size))
    t = cv2.GaussianBlur(t, (3, 3), 0)
    thermal = np.repeat(t[..., None], 3, axis=2)
    return RgbtSample(name, np.clip(rgb, 0, 255).astype(np.uint8), np.clip(thermal, 0, 255).astype(np.uint8), gt)


def write_dataset(root, splits: dict, size: int = 64, seed: int = 0) -> Path:
    """Write ``{split: count}`` samples in the standard RGB/T/GT layout."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for split, count in splits.items():
        for sub in ("RGB", "T", "GT"):
            (root / split / sub).mkdir(parents=True, exist_ok=True)
        for i in range(count):
            name = f"{split}_{i:04d}"
            s = make_sample(rng, size, name)
            cv2.imwrite(str(root / split / "RGB" / f"{name}.png"), s.rgb[..., ::-1])
            cv2.imwrite(str(root / split / "T" / f"{name}.png"), s.thermal)
            cv2.imwrite(str(root / split / "GT" / f"{name}.png"), s.gt * 255)
    return root

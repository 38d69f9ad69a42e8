"""Five-branch supervision: hybrid BCE + SSIM + IoU loss and boundary dice loss.

All losses take probability maps (post-sigmoid) shaped ``(N, 1, H, W)`` or
``(H, W)`` and return a scalar tensor averaged over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import torch
import torch.nn.functional as F

from .errors import ShapeMismatch

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _as_batch(pred: torch.Tensor, gt: torch.Tensor):
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {tuple(pred.shape)} vs target {tuple(gt.shape)}")
    gt = gt.to(pred.dtype)
    if pred.dim() == 2:
        return pred[None, None], gt[None, None]
    if pred.dim() == 3:
        return pred[:, None], gt[:, None]
    return pred, gt


def bce_loss(pred: torch.Tensor, gt: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    pred, gt = _as_batch(pred, gt)
    p = pred.clamp(eps, 1 - eps)
    return -(gt * torch.log(p) + (1 - gt) * torch.log(1 - p)).mean()


@lru_cache(maxsize=8)
def _gaussian_window(size: int, sigma: float, dtype, device):
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g).to(dtype=dtype, device=device)[None, None]


def ssim_map(pred: torch.Tensor, gt: torch.Tensor, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA):
    """Local SSIM with a Gaussian window and zero padding; inputs are (N, C, H, W)."""
    c = pred.shape[1]
    w = _gaussian_window(window, sigma, pred.dtype, pred.device).expand(c, 1, window, window)
    pad = window // 2

    def filt(x):
        return F.conv2d(x, w, padding=pad, groups=c)

    mu_x, mu_y = filt(pred), filt(gt)
    sxx = filt(pred * pred) - mu_x**2
    syy = filt(gt * gt) - mu_y**2
    sxy = filt(pred * gt) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (sxx + syy + SSIM_C2)
    return num / den


def ssim_loss(pred: torch.Tensor, gt: torch.Tensor, window: int = SSIM_WINDOW) -> torch.Tensor:
    if window % 2 != 1:
        raise ValueError("SSIM window must be odd")
    pred, gt = _as_batch(pred, gt)
    return 1 - ssim_map(pred, gt, window).mean()


def iou_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    pred, gt = _as_batch(pred, gt)
    inter = (pred * gt).sum(dim=(1, 2, 3))
    union = pred.sum(dim=(1, 2, 3)) + gt.sum(dim=(1, 2, 3)) - inter
    return (1 - (inter + 1) / (union + 1)).mean()


def dice_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    pred, gt = _as_batch(pred, gt)
    inter = (pred * gt).sum(dim=(1, 2, 3))
    total = pred.sum(dim=(1, 2, 3)) + gt.sum(dim=(1, 2, 3))
    return (1 - (2 * inter + 1) / (total + 1)).mean()


def hybrid_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    return bce_loss(pred, gt) + ssim_loss(pred, gt) + iou_loss(pred, gt)


@dataclass
class LossBreakdown:
    l_R: torch.Tensor
    l_T: torch.Tensor
    l_M: torch.Tensor
    l_B: torch.Tensor
    l_F: torch.Tensor
    total: torch.Tensor

    def items(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("l_R", "l_T", "l_M", "l_B", "l_F", "total")}


def total_loss(preds, gt: torch.Tensor, boundary: torch.Tensor) -> LossBreakdown:
    """Sum of the hybrid losses on the RGB, thermal, mixed and fused maps and
    the dice loss on the boundary map. ``preds`` is a PredictionSet."""
    l_r = hybrid_loss(preds.sal_rgb, gt)
    l_t = hybrid_loss(preds.sal_thermal, gt)
    l_m = hybrid_loss(preds.sal_mixed, gt)
    l_b = dice_loss(preds.sal_boundary, boundary)
    l_f = hybrid_loss(preds.sal_fused, gt)
    return LossBreakdown(l_r, l_t, l_m, l_b, l_f, l_r + l_t + l_m + l_b + l_f)


def format_log_line(step: int, losses: LossBreakdown, lr: float) -> str:
    """``step=12 l_R=0.51 ... total=2.73 lr=0.05`` (key=value, space separated)."""
    parts = [f"step={step}"] + [f"{k}={v:.6f}" for k, v in losses.items().items()] + [f"lr={lr:.6g}"]
    return " ".join(parts)


def parse_log_line(line: str) -> dict:
    out = {}
    for tok in line.split():
        k, _, v = tok.partition("=")
        out[k] = int(v) if k == "step" else float(v)
    return out

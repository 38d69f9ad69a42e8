"""Progressive branch decoders, boundary decoder and decision fusion."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ShapeMismatch

LEVELS = (2, 3, 4, 5)


def up_to(x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, size=ref.shape[-2:], mode="bilinear", align_corners=False)


class CBR(nn.Sequential):
    def __init__(self, cin: int, cout: int, k: int = 3):
        super().__init__(nn.Conv2d(cin, cout, k, padding=k // 2, bias=False), nn.BatchNorm2d(cout), nn.ReLU(inplace=True))


def _check_pyramid(pyr):
    sizes = [pyr[i].shape[-2:] for i in LEVELS]
    for (h0, w0), (h1, w1) in zip(sizes, sizes[1:]):
        if (h0 + 1) // 2 != h1 or (w0 + 1) // 2 != w1:
            raise ShapeMismatch(f"inconsistent pyramid strides: {[tuple(s) for s in sizes]}")


class BranchDecoder(nn.Module):
    """Top-down decoding from level 5 to level 2 with additive skips."""

    def __init__(self, channels: int = 64):
        super().__init__()
        self.c5, self.c4, self.c3, self.c2 = (CBR(channels, channels) for _ in range(4))

    def forward(self, pyr) -> torch.Tensor:
        _check_pyramid(pyr)
        x = up_to(self.c5(pyr[5]), pyr[4]) + pyr[4]
        x = up_to(self.c4(x), pyr[3]) + pyr[3]
        x = up_to(self.c3(x), pyr[2]) + pyr[2]
        return self.c2(x)


class BoundaryDecoder(nn.Module):
    def __init__(self, channels: int = 64):
        super().__init__()
        self.body = nn.Sequential(CBR(2 * channels, channels), CBR(channels, channels))

    def forward(self, f5_m: torch.Tensor, f2_m: torch.Tensor) -> torch.Tensor:
        if f5_m.shape[:2] != f2_m.shape[:2]:
            raise ShapeMismatch(f"boundary inputs {tuple(f5_m.shape)} / {tuple(f2_m.shape)}")
        return self.body(torch.cat([up_to(f5_m, f2_m), f2_m], dim=1))


class DecisionFusion(nn.Module):
    def __init__(self, channels: int = 64):
        super().__init__()
        self.body = nn.Sequential(CBR(4 * channels, channels), CBR(channels, channels))

    def forward(self, f_m, f_r, f_t, f_b) -> torch.Tensor:
        if not (f_m.shape == f_r.shape == f_t.shape == f_b.shape):
            raise ShapeMismatch("decision fusion inputs must share one shape")
        return self.body(torch.cat([f_m, f_r, f_t, f_b], dim=1))

"""Hierarchical backbones returning four feature maps at strides 4, 8, 16, 32."""
from __future__ import annotations

import os
from pathlib import Path

import torch
from torch import nn

from ..errors import BackboneWeightsMissing, ConfigInvalid


class TinyBackbone(nn.Module):
    """Small randomly initialised CNN for desk-scale runs and tests."""

    def __init__(self, widths=(16, 32, 48, 64)):
        super().__init__()
        self.out_channels = tuple(widths)

        def block(cin, cout, stride):
            return nn.Sequential(
                nn.Conv2d(cin, cout, 3, stride, 1, bias=False),
                nn.BatchNorm2d(cout),
                nn.ReLU(inplace=True),
                nn.Conv2d(cout, cout, 3, 1, 1, bias=False),
                nn.BatchNorm2d(cout),
                nn.ReLU(inplace=True),
            )

        self.stem = nn.Sequential(
            nn.Conv2d(3, widths[0], 3, 2, 1, bias=False), nn.BatchNorm2d(widths[0]), nn.ReLU(inplace=True)
        )
        self.stages = nn.ModuleList(
            [block(widths[0], widths[0], 2)] + [block(widths[i - 1], widths[i], 2) for i in range(1, 4)]
        )

    def forward(self, x):
        x = self.stem(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class SwinV2Backbone(nn.Module):
    """torchvision SwinV2-B; stage outputs are converted to NCHW."""

    def __init__(self, pretrained: bool = False, weights_path=None):
        super().__init__()
        from torchvision.models import Swin_V2_B_Weights, swin_v2_b

        model = swin_v2_b(weights=None)
        if pretrained:
            state = _load_swin_state(weights_path, Swin_V2_B_Weights.IMAGENET1K_V1)
            model.load_state_dict(state)
        self.features = model.features
        self.out_channels = (128, 256, 512, 1024)

    def forward(self, x):
        feats = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i % 2 == 1:
                feats.append(x.permute(0, 3, 1, 2).contiguous())
        return feats


def _load_swin_state(weights_path, weights_enum):
    if weights_path:
        path = Path(weights_path)
        if not path.is_file():
            raise BackboneWeightsMissing(f"backbone weights not found: {path}")
        return torch.load(path, map_location="cpu")
    cache = os.environ.get("HYPSAM_CACHE")
    if cache:
        cached = Path(cache) / Path(weights_enum.url).name
        if cached.is_file():
            return torch.load(cached, map_location="cpu")
    try:
        return weights_enum.get_state_dict(progress=False, model_dir=cache)
    except Exception as exc:  # network or cache failures all mean the same thing here
        raise BackboneWeightsMissing(
            f"could not obtain pretrained SwinV2-B weights ({exc}); place them under $HYPSAM_CACHE "
            "or pass model.backbone_weights"
        ) from exc


BACKBONES = {
    "tiny": lambda pretrained, weights_path: TinyBackbone(),
    "swinv2_b": lambda pretrained, weights_path: SwinV2Backbone(pretrained, weights_path),
}


def build_backbone(name: str, pretrained: bool = False, weights_path=None) -> nn.Module:
    if name not in BACKBONES:
        raise ConfigInvalid(f"unknown backbone {name!r}; choose from {sorted(BACKBONES)}")
    if name == "tiny" and pretrained:
        raise BackboneWeightsMissing("the tiny backbone has no pretrained weights")
    return BACKBONES[name](pretrained, weights_path)

"""DFNet: dual-stream encoder, per-level dynamic interaction, three branch
decoders, a boundary decoder and decision fusion."""
from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import CheckpointIncompatible, MissingFile
from .backbone import build_backbone
from .decoder import LEVELS, BoundaryDecoder, BranchDecoder, DecisionFusion
from .dim import DynamicInteraction

BRANCHES = ("mixed", "rgb", "thermal", "boundary", "fused")
MANIFEST_KEYS = ("backbone", "kernels", "kernel_size", "channels", "resolution", "reduction")


@dataclass
class PredictionSet:
    sal_mixed: torch.Tensor
    sal_rgb: torch.Tensor
    sal_thermal: torch.Tensor
    sal_boundary: torch.Tensor
    sal_fused: torch.Tensor

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Stream(nn.Module):
    """Backbone plus per-level 1x1 channel compression."""

    def __init__(self, backbone: nn.Module, channels: int):
        super().__init__()
        self.backbone = backbone
        self.compress = nn.ModuleList([nn.Conv2d(c, channels, 1) for c in backbone.out_channels])

    def forward(self, x):
        feats = self.backbone(x)
        return {lvl: conv(f) for lvl, conv, f in zip(LEVELS, self.compress, feats)}


class DFNet(nn.Module):
    def __init__(self, backbone: str = "swinv2_b", channels: int = 64, kernels: int = 4, kernel_size: int = 3,
                 reduction: float = 0.25, resolution: int = 384, pretrained: bool = False, backbone_weights=None):
        super().__init__()
        self.config = dict(backbone=backbone, kernels=kernels, kernel_size=kernel_size, channels=channels,
                           resolution=resolution, reduction=reduction)
        # both streams start from the same weights but are not shared
        self.stream_r = Stream(build_backbone(backbone, pretrained, backbone_weights), channels)
        self.stream_t = copy.deepcopy(self.stream_r)
        self.dims = nn.ModuleDict(
            {str(i): DynamicInteraction(channels, kernels, kernel_size, reduction) for i in LEVELS}
        )
        # mixed levels are 2C after concatenation; bring them back to C
        self.mix_compress = nn.ModuleDict({str(i): nn.Conv2d(2 * channels, channels, 1) for i in LEVELS})
        self.decoders = nn.ModuleDict({b: BranchDecoder(channels) for b in "RTM"})
        self.boundary = BoundaryDecoder(channels)
        self.fusion = DecisionFusion(channels)
        self.heads = nn.ModuleDict({b: nn.Conv2d(channels, 1, 1) for b in BRANCHES})

    def backbone_parameters(self):
        return list(self.stream_r.backbone.parameters()) + list(self.stream_t.backbone.parameters())

    def other_parameters(self):
        ids = {id(p) for p in self.backbone_parameters()}
        return [p for p in self.parameters() if id(p) not in ids]

    def extract_features(self, rgb: torch.Tensor, thermal: torch.Tensor):
        return self.stream_r(rgb), self.stream_t(thermal)

    def mixed_pyramid(self, pyr_r, pyr_t):
        return {i: self.mix_compress[str(i)](self.dims[str(i)](pyr_r[i], pyr_t[i])) for i in LEVELS}

    def features(self, rgb, thermal) -> dict:
        """Decoder outputs (stride 4) for each of the five branches."""
        pyr_r, pyr_t = self.extract_features(rgb, thermal)
        pyr_m = self.mixed_pyramid(pyr_r, pyr_t)
        out = {
            "rgb": self.decoders["R"](pyr_r),
            "thermal": self.decoders["T"](pyr_t),
            "mixed": self.decoders["M"](pyr_m),
            "boundary": self.boundary(pyr_m[5], pyr_m[2]),
        }
        out["fused"] = self.fusion(out["mixed"], out["rgb"], out["thermal"], out["boundary"])
        return out

    def forward(self, rgb: torch.Tensor, thermal: torch.Tensor) -> PredictionSet:
        size = rgb.shape[-2:]
        feats = self.features(rgb, thermal)
        maps = {}
        for b in BRANCHES:
            logit = F.interpolate(self.heads[b](feats[b]), size=size, mode="bilinear", align_corners=False)
            maps[f"sal_{b}"] = torch.sigmoid(logit)
        return PredictionSet(**maps)

    @torch.no_grad()
    def predict(self, rgb: torch.Tensor, thermal: torch.Tensor) -> PredictionSet:
        """Eval-mode inference; accepts unbatched (3, S, S) or batched inputs."""
        was_training = self.training
        self.eval()
        single = rgb.dim() == 3
        if single:
            rgb, thermal = rgb[None], thermal[None]
        try:
            out = self(rgb, thermal)
        finally:
            self.train(was_training)
        if single:
            out = PredictionSet(**{k: v[0, 0] for k, v in out.as_dict().items()})
        return out


def build_model(cfg: dict, pretrained: bool = False, backbone_weights=None) -> DFNet:
    kwargs = {k: cfg[k] for k in MANIFEST_KEYS if k in cfg}
    return DFNet(pretrained=pretrained, backbone_weights=backbone_weights, **kwargs)


def save_checkpoint(path, model: DFNet, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"manifest": dict(model.config), "state_dict": model.state_dict(), "extra": extra or {}}, path)


def read_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"checkpoint not found: {path}")
    try:
        blob = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointIncompatible(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(blob, dict) or "manifest" not in blob or "state_dict" not in blob:
        raise CheckpointIncompatible(f"{path} has no manifest")
    return blob


def load_checkpoint(path, expected: dict | None = None) -> DFNet:
    """Rebuild the model from a checkpoint. ``expected`` entries that differ
    from the stored manifest raise CheckpointIncompatible."""
    blob = read_checkpoint(path)
    manifest = blob["manifest"]
    if expected:
        diff = {k: (manifest.get(k), v) for k, v in expected.items() if k in MANIFEST_KEYS and manifest.get(k) != v}
        if diff:
            raise CheckpointIncompatible(f"checkpoint manifest mismatch (stored, requested): {diff}")
    model = build_model(manifest)
    try:
        model.load_state_dict(blob["state_dict"])
    except RuntimeError as exc:
        raise CheckpointIncompatible(str(exc)) from exc
    model.eval()
    return model

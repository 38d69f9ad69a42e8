"""Dynamic interaction module: attention-modulated dynamic convolution shared
between the RGB and thermal streams of one pyramid level."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ShapeMismatch


@dataclass
class AttentionBundle:
    """Per-sample attentions over the N base kernels.

    spatial (B, N, k, k), channel (B, N, C_in), filter (B, N, C_out) are
    sigmoid outputs; kernel (B, N) is a softmax over kernels.
    """

    spatial: torch.Tensor
    channel: torch.Tensor
    filter: torch.Tensor
    kernel: torch.Tensor

    @classmethod
    def ones(cls, batch, n, c_in, c_out, k, dtype=torch.float32):
        return cls(
            torch.ones(batch, n, k, k, dtype=dtype),
            torch.ones(batch, n, c_in, dtype=dtype),
            torch.ones(batch, n, c_out, dtype=dtype),
            torch.ones(batch, n, dtype=dtype),
        )


def fuse_concat(f_r: torch.Tensor, f_t: torch.Tensor) -> torch.Tensor:
    if f_r.shape != f_t.shape:
        raise ShapeMismatch(f"cannot fuse {tuple(f_r.shape)} with {tuple(f_t.shape)}")
    return torch.cat([f_r, f_t], dim=1)


class ContextProjection(nn.Module):
    """Global average pooling, linear projection, ReLU."""

    def __init__(self, in_channels: int, hidden: int):
        super().__init__()
        self.proj = nn.Linear(in_channels, hidden)

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        return F.relu(self.proj(fused.mean(dim=(2, 3))))


class AttentionHeads(nn.Module):
    def __init__(self, hidden: int, c_in: int, c_out: int, kernel_size: int, n_kernels: int):
        super().__init__()
        self.n, self.k, self.c_in, self.c_out = n_kernels, kernel_size, c_in, c_out
        self.spatial = nn.Linear(hidden, n_kernels * kernel_size * kernel_size)
        self.channel = nn.Linear(hidden, n_kernels * c_in)
        self.filter = nn.Linear(hidden, n_kernels * c_out)
        self.kernel = nn.Linear(hidden, n_kernels)

    def forward(self, v: torch.Tensor) -> AttentionBundle:
        b = v.shape[0]
        return AttentionBundle(
            spatial=torch.sigmoid(self.spatial(v)).view(b, self.n, self.k, self.k),
            channel=torch.sigmoid(self.channel(v)).view(b, self.n, self.c_in),
            filter=torch.sigmoid(self.filter(v)).view(b, self.n, self.c_out),
            kernel=torch.softmax(self.kernel(v), dim=1),
        )


def aggregate_kernel(weights: torch.Tensor, att: AttentionBundle) -> torch.Tensor:
    """Modulate each base kernel along all four dimensions and sum over kernels.

    weights: (N, C_out, C_in, k, k) -> per-sample kernel (B, C_out, C_in, k, k).
    """
    mod = (
        att.kernel[:, :, None, None, None, None]
        * att.filter[:, :, :, None, None, None]
        * att.channel[:, :, None, :, None, None]
        * att.spatial[:, :, None, None, :, :]
        * weights[None]
    )
    return mod.sum(dim=1)


def dynamic_conv(f: torch.Tensor, weights: torch.Tensor, att: AttentionBundle, bias=None) -> torch.Tensor:
    """Convolve each sample with its own aggregated kernel (size-preserving)."""
    n, c_out, c_in, k, k2 = weights.shape
    b, c, h, w = f.shape
    if c != c_in or k != k2 or k % 2 != 1:
        raise ShapeMismatch(f"kernel bank {tuple(weights.shape)} incompatible with features {tuple(f.shape)}")
    if att.kernel.shape != (b, n) or att.channel.shape[-1] != c_in or att.filter.shape[-1] != c_out:
        raise ShapeMismatch("attention bundle does not match the kernel bank")
    kernel = aggregate_kernel(weights, att).reshape(b * c_out, c_in, k, k)
    out = F.conv2d(f.reshape(1, b * c_in, h, w), kernel, padding=k // 2, groups=b)
    out = out.view(b, c_out, h, w)
    if bias is not None:
        out = out + bias.view(1, -1, 1, 1)
    return out


class DynamicInteraction(nn.Module):
    """One pyramid level: both modalities get their own context projection,
    attention heads and kernel bank, all conditioned on the fused features."""

    def __init__(self, channels: int = 64, n_kernels: int = 4, kernel_size: int = 3, reduction: float = 0.25,
                 min_hidden: int = 16):
        super().__init__()
        self.channels, self.n_kernels, self.kernel_size = channels, n_kernels, kernel_size
        self.hidden = max(int(2 * channels * reduction), min_hidden)
        self.context = nn.ModuleDict({m: ContextProjection(2 * channels, self.hidden) for m in "RT"})
        self.heads = nn.ModuleDict(
            {m: AttentionHeads(self.hidden, channels, channels, kernel_size, n_kernels) for m in "RT"}
        )
        self.banks = nn.ParameterDict(
            {m: nn.Parameter(torch.empty(n_kernels, channels, channels, kernel_size, kernel_size)) for m in "RT"}
        )
        for bank in self.banks.values():
            for i in range(n_kernels):
                nn.init.kaiming_uniform_(bank.data[i], a=math.sqrt(5))

    def compute_context(self, fused: torch.Tensor, modality: str) -> torch.Tensor:
        return self.context[modality](fused)

    def compute_attentions(self, v: torch.Tensor, modality: str) -> AttentionBundle:
        return self.heads[modality](v)

    def enhance(self, f_r, f_t):
        fused = fuse_concat(f_r, f_t)
        out = {}
        for m, f in (("R", f_r), ("T", f_t)):
            att = self.compute_attentions(self.compute_context(fused, m), m)
            out[m] = dynamic_conv(f, self.banks[m], att)
        return out["R"], out["T"]

    def forward(self, f_r: torch.Tensor, f_t: torch.Tensor) -> torch.Tensor:
        e_r, e_t = self.enhance(f_r, f_t)
        return torch.cat([e_r + f_r, e_t + f_t], dim=1)


def dim_parameter_count(channels: int, n_kernels: int, kernel_size: int, hidden: int) -> int:
    """Closed-form parameter count of one DynamicInteraction."""
    c, n, k, h = channels, n_kernels, kernel_size, hidden
    context = 2 * c * h + h
    heads = (h + 1) * (n * k * k + n * c + n * c + n)
    bank = n * c * c * k * k
    return 2 * (context + heads + bank)

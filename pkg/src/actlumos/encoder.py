"""Factorized (2+1)D convolutional backbone and its pooling heads.

Each block is a spatial ``1 x k x k`` convolution followed by a temporal
``k x 1 x 1`` convolution, each followed by a rectifier except the temporal
convolution of the final block, which stays linear. One encoder instance is
shared by every stream that passes through it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


class DegenerateEmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    channels: int = 32
    # (temporal, spatial) stride per block
    stage_strides: tuple = ((2, 4), (1, 2), (1, 1))
    kernel: int = 3
    in_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "stage_strides", tuple(tuple(int(v) for v in s) for s in self.stage_strides))
        if self.channels < 1 or self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("channels must be positive and kernel a positive odd integer")
        if not self.stage_strides:
            raise ValueError("encoder needs at least one block")

    @property
    def temporal_stride(self) -> int:
        return math.prod(t for t, _ in self.stage_strides)

    @property
    def spatial_stride(self) -> int:
        return math.prod(s for _, s in self.stage_strides)

    def output_shape(self, dims) -> tuple[int, int, int, int]:
        """[C, T, h, w] produced for input dims (L, H, W); raises if incompatible."""
        L, H, W = dims
        ts, ss = self.temporal_stride, self.spatial_stride
        problems = []
        if L % ts:
            problems.append(f"L={L} is not divisible by the temporal stride product {ts}")
        if H % ss or W % ss:
            problems.append(f"H x W = {H}x{W} is not divisible by the spatial stride product {ss}")
        if problems:
            raise ValueError("input incompatible with encoder: " + "; ".join(problems))
        return self.channels, L // ts, H // ss, W // ss

    def to_dict(self) -> dict:
        return {"channels": self.channels, "stage_strides": [list(s) for s in self.stage_strides],
                "kernel": self.kernel, "in_channels": self.in_channels}


def fan_in_uniform_(module: nn.Module, generator: torch.Generator) -> None:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases, drawn from ``generator``."""
    for m in module.modules():
        if isinstance(m, (nn.Conv3d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = math.sqrt(6.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.rand(m.weight.shape, generator=generator, dtype=m.weight.dtype) * 2 * bound - bound)
                if m.bias is not None:
                    m.bias.zero_()


# Gradient checks swap this for a mask-replaying version so finite
# differences stay on one linear piece of each rectifier.
_rectifier_hook = None


def rectify(x: torch.Tensor) -> torch.Tensor:
    if _rectifier_hook is not None:
        return _rectifier_hook(x)
    return torch.relu(x)


class FactorizedBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, t_stride: int, s_stride: int, k: int = 3, final: bool = False):
        super().__init__()
        p = k // 2
        self.spatial = nn.Conv3d(c_in, c_out, (1, k, k), stride=(1, s_stride, s_stride), padding=(0, p, p))
        self.temporal = nn.Conv3d(c_out, c_out, (k, 1, 1), stride=(t_stride, 1, 1), padding=(p, 0, 0))
        self.final = final

    def forward(self, x):
        x = rectify(self.spatial(x))
        x = self.temporal(x)
        return x if self.final else rectify(x)


class Encoder(nn.Module):
    """Clip batch [N, 3, L, H, W] -> feature maps [N, C, T, h, w]."""

    def __init__(self, config: EncoderConfig = EncoderConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        blocks, c_in = [], config.in_channels
        n = len(config.stage_strides)
        for i, (ts, ss) in enumerate(config.stage_strides):
            blocks.append(FactorizedBlock(c_in, config.channels, ts, ss, config.kernel, final=i == n - 1))
            c_in = config.channels
        self.blocks = nn.Sequential(*blocks)
        if not any(p.is_meta for p in self.parameters()):
            fan_in_uniform_(self, torch.Generator().manual_seed(seed))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 4:
            x = x.unsqueeze(0)
        if x.dim() != 5 or x.shape[1] != self.config.in_channels:
            raise ValueError(f"expected clips of shape [N, {self.config.in_channels}, L, H, W], got {tuple(x.shape)}")
        self.config.output_shape(tuple(x.shape[2:]))
        return self.blocks(x)


def encode(clip, encoder: Encoder) -> torch.Tensor:
    """Forward a single clip ([3, L, H, W] array or tensor) to a [C, T, h, w] feature map."""
    x = torch.as_tensor(getattr(clip, "data", clip), dtype=next(encoder.parameters()).dtype)
    return encoder(x.unsqueeze(0))[0]


def spatial_gap(fm: torch.Tensor) -> torch.Tensor:
    """[..., C, T, h, w] -> [..., T, C] by averaging over h, w."""
    return fm.mean(dim=(-2, -1)).transpose(-1, -2)


def clip_embedding(fm: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """[..., C, T, h, w] -> unit-norm [..., C] (mean over T, h, w then L2 normalise)."""
    v = fm.mean(dim=(-3, -2, -1))
    norm = v.norm(dim=-1, keepdim=True)
    if bool((norm <= eps).any()):
        raise DegenerateEmbeddingError("pooled feature vector has zero norm; embedding is undefined")
    return v / norm


__all__ = ["EncoderConfig", "Encoder", "FactorizedBlock", "encode", "spatial_gap", "clip_embedding",
           "DegenerateEmbeddingError", "fan_in_uniform_"]

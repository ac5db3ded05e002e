"""Stream fusion and the temporal transformer head.

Fusion variants map a pair of [.., T, C] feature sequences to one sequence:

* ``dff``: a two-layer gate MLP scores ``[f_dark; f_ret]`` at each timestep,
  softmax turns the two scores into convex weights.
* ``static``: concatenate and project back to C with a learned linear map.
* ``dark_only`` / ``retinex_only``: pass one stream through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .encoder import rectify

FUSION_VARIANTS = ("dff", "static", "dark_only", "retinex_only")


class DFFGate(nn.Module):
    """Per-timestep gate ``[f_dark; f_ret] -> softmax(MLP(.)) in R^2``."""

    def __init__(self, channels: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or channels
        self.fc1 = nn.Linear(2 * channels, hidden)
        self.fc2 = nn.Linear(hidden, 2)

    def logits(self, seq_dark, seq_ret):
        return self.fc2(rectify(self.fc1(torch.cat([seq_dark, seq_ret], dim=-1))))

    def forward(self, seq_dark: torch.Tensor, seq_ret: torch.Tensor) -> torch.Tensor:
        if seq_dark.shape != seq_ret.shape:
            raise ValueError(f"stream shapes differ: {tuple(seq_dark.shape)} vs {tuple(seq_ret.shape)}")
        return torch.softmax(self.logits(seq_dark, seq_ret), dim=-1)


def dff_gate(seq_dark, seq_ret, gate: DFFGate) -> torch.Tensor:
    return gate(seq_dark, seq_ret)


def dff_fuse(seq_dark: torch.Tensor, seq_ret: torch.Tensor, weights: torch.Tensor, atol: float = 1e-6) -> torch.Tensor:
    """Convex per-timestep combination; ``weights[..., t] = (w_dark, w_ret)``."""
    if seq_dark.shape != seq_ret.shape:
        raise ValueError(f"stream shapes differ: {tuple(seq_dark.shape)} vs {tuple(seq_ret.shape)}")
    if weights.shape != seq_dark.shape[:-1] + (2,):
        raise ValueError(f"gate weights of shape {tuple(weights.shape)} do not match sequences {tuple(seq_dark.shape)}")
    w = weights.detach()
    if bool((w < -atol).any()) or bool(((w.sum(-1) - 1).abs() > atol).any()):
        raise ValueError("gate weight rows must be nonnegative and sum to 1")
    return weights[..., :1] * seq_dark + weights[..., 1:] * seq_ret


class StaticConcatFusion(nn.Module):
    """``W [f_dark; f_ret]`` with W: R^{2C} -> R^C, initialised to the stream mean."""

    def __init__(self, channels: int):
        super().__init__()
        self.proj = nn.Linear(2 * channels, channels, bias=False)
        eye = torch.eye(channels)
        with torch.no_grad():
            self.proj.weight.copy_(0.5 * torch.cat([eye, eye], dim=1))

    def forward(self, seq_dark, seq_ret):
        if seq_dark.shape != seq_ret.shape:
            raise ValueError(f"stream shapes differ: {tuple(seq_dark.shape)} vs {tuple(seq_ret.shape)}")
        return self.proj(torch.cat([seq_dark, seq_ret], dim=-1))


def static_concat_fuse(seq_dark, seq_ret, fusion: StaticConcatFusion) -> torch.Tensor:
    return fusion(seq_dark, seq_ret)


class Fusion(nn.Module):
    """Dispatches one of FUSION_VARIANTS; ``last_weights`` keeps the latest DFF gate output."""

    def __init__(self, variant: str, channels: int):
        super().__init__()
        if variant not in FUSION_VARIANTS:
            raise ValueError(f"unknown fusion variant {variant!r}; expected one of {FUSION_VARIANTS}")
        self.variant = variant
        self.gate = DFFGate(channels) if variant == "dff" else None
        self.static = StaticConcatFusion(channels) if variant == "static" else None
        self.last_weights = None

    @property
    def streams(self) -> tuple[str, ...]:
        return {"dark_only": ("dark",), "retinex_only": ("retinex",)}.get(self.variant, ("dark", "retinex"))

    def forward(self, seq_dark=None, seq_ret=None):
        if self.variant == "dark_only":
            return seq_dark
        if self.variant == "retinex_only":
            return seq_ret
        if self.variant == "static":
            return self.static(seq_dark, seq_ret)
        w = self.gate(seq_dark, seq_ret)
        self.last_weights = w.detach()
        return dff_fuse(seq_dark, seq_ret, w)


@dataclass(frozen=True)
class TemporalHeadConfig:
    model_dim: int = 32
    num_layers: int = 2
    num_heads: int = 4
    num_classes: int = 10
    seq_len: int = 8
    ff_mult: int = 4

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise ValueError(f"num_heads={self.num_heads} must divide model_dim={self.model_dim}")
        if self.num_layers < 0 or self.seq_len < 1 or self.num_classes < 2:
            raise ValueError("invalid temporal head configuration")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x):
        *lead, n, d = x.shape
        q, k, v = self.qkv(x).reshape(*lead, n, 3, self.heads, d // self.heads).unbind(-3)
        q, k, v = (t.transpose(-2, -3) for t in (q, k, v))  # [..., heads, n, dh]
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d // self.heads), dim=-1)
        y = (att @ v).transpose(-2, -3).reshape(*lead, n, d)
        return self.out(y)


class EncoderLayer(nn.Module):
    """Pre-norm transformer layer: x + Attn(LN(x)), then x + FF(LN(x))."""

    def __init__(self, dim: int, heads: int, ff_mult: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_mult * dim), nn.GELU(), nn.Linear(ff_mult * dim, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class TemporalHead(nn.Module):
    """[.., T, C] sequence -> [.., K] logits through a CLS-token transformer."""

    def __init__(self, config: TemporalHeadConfig = TemporalHeadConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        C = config.model_dim
        self.cls_token = nn.Parameter(torch.zeros(C))
        self.pos_embedding = nn.Parameter(torch.zeros(config.seq_len, C))
        self.layers = nn.ModuleList(EncoderLayer(C, config.num_heads, config.ff_mult) for _ in range(config.num_layers))
        self.norm = nn.LayerNorm(C)
        self.classifier = nn.Linear(C, config.num_classes)
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.pos_embedding.copy_(0.02 * torch.randn(self.pos_embedding.shape, generator=g))
            for m in self.modules():
                if isinstance(m, nn.Linear):
                    bound = 1.0 / math.sqrt(m.in_features)
                    m.weight.copy_(torch.rand(m.weight.shape, generator=g) * 2 * bound - bound)
                    m.bias.zero_()

    def tokens(self, seq: torch.Tensor) -> torch.Tensor:
        """The (T+1) x C transformer input: CLS token prepended to seq + positions."""
        T = seq.shape[-2]
        if T != self.config.seq_len:
            raise ValueError(f"sequence length {T} does not match positional embedding length {self.config.seq_len}")
        x = seq + self.pos_embedding
        cls = self.cls_token.expand(*x.shape[:-2], 1, x.shape[-1])
        return torch.cat([cls, x], dim=-2)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        x = self.tokens(seq)
        for layer in self.layers:
            x = layer(x)
        return self.classifier(self.norm(x[..., 0, :]))


def temporal_head(seq, head: TemporalHead) -> torch.Tensor:
    return head(seq)


__all__ = [
    "FUSION_VARIANTS", "DFFGate", "dff_gate", "dff_fuse", "StaticConcatFusion", "static_concat_fuse",
    "Fusion", "TemporalHeadConfig", "TemporalHead", "temporal_head",
]

"""Teacher (dual stream + fusion) and student (dark stream only) networks."""

from __future__ import annotations

import math

import torch
from torch import nn

from .encoder import Encoder, EncoderConfig, clip_embedding, fan_in_uniform_, spatial_gap
from .fusion import Fusion, TemporalHead, TemporalHeadConfig


class InputNorm(nn.Module):
    """Fixed affine standardisation (x - mean) / std of one input stream.

    The constants are training-split statistics; they live in buffers so
    checkpoints carry them.
    """

    def __init__(self, mean: float = 0.0, std: float = 1.0):
        super().__init__()
        if not std > 0:
            raise ValueError(f"std must be positive, got {std}")
        self.register_buffer("mean", torch.tensor(float(mean)))
        self.register_buffer("std", torch.tensor(float(std)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.mean) / self.std


class TeacherModel(nn.Module):
    """Shared encoder over the streams the fusion variant needs, fusion, temporal head.

    ``forward`` returns logits and the per-stream clip embeddings (``None`` for
    streams the variant does not use).
    """

    def __init__(self, enc_cfg: EncoderConfig, head_cfg: TemporalHeadConfig, fusion_variant: str, seed: int = 0,
                 stats: dict | None = None):
        super().__init__()
        stats = stats or {}
        self.input_norm = nn.ModuleDict({s: InputNorm(*stats.get(s, (0.0, 1.0))) for s in ("dark", "retinex")})
        self.encoder = Encoder(enc_cfg, seed)
        self.fusion = Fusion(fusion_variant, enc_cfg.channels)
        if self.fusion.gate is not None:
            g = torch.Generator().manual_seed(seed + 1)
            fan_in_uniform_(self.fusion.gate, g)
            with torch.no_grad():
                # near-zero gate logits: training starts from an even mix
                self.fusion.gate.fc2.weight.mul_(0.1)
        self.head = TemporalHead(head_cfg, seed + 2)

    @property
    def streams(self) -> tuple[str, ...]:
        return self.fusion.streams

    def forward(self, dark: torch.Tensor | None = None, retinex: torch.Tensor | None = None):
        inputs = {"dark": dark, "retinex": retinex}
        if any(inputs[s] is None for s in self.streams):
            raise ValueError(f"fusion variant {self.fusion.variant!r} needs streams {self.streams}")
        used = [self.input_norm[s](inputs[s]) for s in self.streams]
        n = used[0].shape[0]
        fm = self.encoder(torch.cat(used, dim=0)) if len(used) > 1 else self.encoder(used[0])
        seqs = dict(zip(self.streams, spatial_gap(fm).split(n)))
        embs = dict(zip(self.streams, clip_embedding(fm).split(n)))
        logits = self.head(self.fusion(seqs.get("dark"), seqs.get("retinex")))
        return logits, embs.get("dark"), embs.get("retinex")


class StudentModel(nn.Module):
    """Dark clip -> encoder -> spatial GAP -> temporal head -> logits. No fusion."""

    def __init__(self, enc_cfg: EncoderConfig, head_cfg: TemporalHeadConfig, seed: int = 0,
                 dark_stats: tuple[float, float] = (0.0, 1.0)):
        super().__init__()
        self.input_norm = InputNorm(*dark_stats)
        self.encoder = Encoder(enc_cfg, seed)
        self.head = TemporalHead(head_cfg, seed + 2)

    def forward(self, dark: torch.Tensor) -> torch.Tensor:
        return self.head(spatial_gap(self.encoder(self.input_norm(dark))))

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        return clip_embedding(self.encoder(self.input_norm(x)))


class ProbeModel(nn.Module):
    """Frozen encoder embeddings -> linear classifier."""

    def __init__(self, enc_cfg: EncoderConfig, num_classes: int, seed: int = 0,
                 dark_stats: tuple[float, float] = (0.0, 1.0)):
        super().__init__()
        self.input_norm = InputNorm(*dark_stats)
        self.encoder = Encoder(enc_cfg, seed)
        self.linear = nn.Linear(enc_cfg.channels, num_classes)
        g = torch.Generator().manual_seed(seed + 3)
        bound = 1.0 / math.sqrt(enc_cfg.channels)
        with torch.no_grad():
            self.linear.weight.copy_(torch.rand(self.linear.weight.shape, generator=g) * 2 * bound - bound)
            self.linear.bias.zero_()

    def forward(self, dark: torch.Tensor) -> torch.Tensor:
        return self.linear(self.embed(dark))

    def embed(self, dark: torch.Tensor) -> torch.Tensor:
        return clip_embedding(self.encoder(self.input_norm(dark)))


__all__ = ["InputNorm", "TeacherModel", "StudentModel", "ProbeModel"]

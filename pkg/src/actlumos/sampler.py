"""Class-balanced contrastive batches and fast/slow two-view augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

SSL_VARIANTS = ("none", "spatial_only", "temporal_only", "both")


@dataclass(frozen=True)
class AugmentParams:
    crop_scale_range: tuple[float, float] = (0.7, 1.0)
    flip_prob: float = 0.5
    fast_stride: int = 1
    slow_stride: int = 2
    out_frames: int = 8

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"crop_scale_range must satisfy 0 < lo <= hi <= 1, got {self.crop_scale_range}")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.fast_stride < 1 or self.slow_stride < 1 or self.out_frames < 1:
            raise ValueError("strides and out_frames must be >= 1")

    def check_length(self, L: int) -> None:
        need = self.out_frames * max(self.fast_stride, self.slow_stride)
        if need > L:
            raise ValueError(f"clip of {L} frames is too short: out_frames x stride needs {need}")


@dataclass(frozen=True)
class SpatialDraw:
    """One drawn spatial transform: crop box (in pixels) then optional flip."""

    top: int
    left: int
    height: int
    width: int
    flip: bool

    @classmethod
    def identity(cls, H: int, W: int) -> "SpatialDraw":
        return cls(0, 0, H, W, False)


def balanced_batch(train_labels: dict, n_c: int, n_v: int, rng: np.random.Generator) -> list[tuple]:
    """Pick n_c classes, then n_v distinct clips per class; returns (clip_id, class_id) pairs.

    ``train_labels`` maps clip_id -> class_id. Output is grouped by class.
    """
    by_class: dict[int, list] = {}
    for cid, k in train_labels.items():
        by_class.setdefault(int(k), []).append(cid)
    eligible = sorted(k for k, ids in by_class.items() if len(ids) >= n_v)
    if len(eligible) < n_c:
        deficient = sorted(k for k, ids in by_class.items() if len(ids) < n_v)
        raise ValueError(f"need {n_c} classes with >= {n_v} clips; only {len(eligible)} qualify "
                         f"(deficient classes: {deficient})")
    classes = rng.choice(eligible, size=n_c, replace=False)
    batch = []
    for k in classes:
        ids = sorted(by_class[int(k)])
        for j in rng.choice(len(ids), size=n_v, replace=False):
            batch.append((ids[j], int(k)))
    return batch


def draw_spatial(H: int, W: int, params: AugmentParams, rng: np.random.Generator) -> SpatialDraw:
    scale = rng.uniform(*params.crop_scale_range)
    h = max(1, int(round(scale * H)))
    w = max(1, int(round(scale * W)))
    top = int(rng.integers(0, H - h + 1))
    left = int(rng.integers(0, W - w + 1))
    flip = bool(rng.random() < params.flip_prob)
    return SpatialDraw(top, left, h, w, flip)


def spatial_augment(clip: torch.Tensor, draw: SpatialDraw, out_hw: tuple[int, int] | None = None) -> torch.Tensor:
    """Crop, resize back (bilinear) and optionally flip; same transform on every frame.

    ``clip`` is [3, L, H, W] (or with a leading batch axis).
    """
    clip = torch.as_tensor(clip)
    H, W = clip.shape[-2:]
    out_hw = out_hw or (H, W)
    if draw.height < 1 or draw.width < 1 or draw.top < 0 or draw.left < 0 \
            or draw.top + draw.height > H or draw.left + draw.width > W:
        raise ValueError(f"crop {draw} does not fit a {H}x{W} frame")
    x = clip[..., draw.top:draw.top + draw.height, draw.left:draw.left + draw.width]
    if (draw.height, draw.width) != tuple(out_hw):
        lead = x.shape[:-2]
        x = F.interpolate(x.reshape(-1, 1, draw.height, draw.width), size=out_hw,
                          mode="bilinear", align_corners=False).reshape(*lead, *out_hw)
    if draw.flip:
        x = x.flip(-1)
    return x


def temporal_sample(clip: torch.Tensor, start: int, stride: int, out_frames: int) -> torch.Tensor:
    idx = start + stride * np.arange(out_frames)
    return clip[..., idx, :, :]


def _draw_start(L: int, stride: int, out_frames: int, rng: np.random.Generator) -> int:
    span = stride * (out_frames - 1) + 1
    return int(rng.integers(0, L - span + 1))


def two_view(clip: torch.Tensor, params: AugmentParams, rng: np.random.Generator,
             variant: str = "both") -> tuple[torch.Tensor, torch.Tensor]:
    """Fast and slow views of one [3, L, H, W] clip.

    ``both``: different frame rates and independent spatial draws.
    ``spatial_only``: identical temporal sampling, independent spatial draws.
    ``temporal_only``: different frame rates, one spatial draw shared by both views.
    """
    if variant not in SSL_VARIANTS[1:]:
        raise ValueError(f"unknown two-view variant {variant!r}")
    clip = torch.as_tensor(clip)
    L, H, W = clip.shape[-3:]
    params.check_length(L)
    fast_start = _draw_start(L, params.fast_stride, params.out_frames, rng)
    if variant == "spatial_only":
        slow_stride, slow_start = params.fast_stride, fast_start
    else:
        slow_stride = params.slow_stride
        slow_start = _draw_start(L, slow_stride, params.out_frames, rng)
    d1 = draw_spatial(H, W, params, rng)
    d2 = d1 if variant == "temporal_only" else draw_spatial(H, W, params, rng)
    v1 = spatial_augment(temporal_sample(clip, fast_start, params.fast_stride, params.out_frames), d1)
    v2 = spatial_augment(temporal_sample(clip, slow_start, slow_stride, params.out_frames), d2)
    return v1, v2


__all__ = [
    "SSL_VARIANTS", "AugmentParams", "SpatialDraw", "balanced_batch", "draw_spatial",
    "spatial_augment", "temporal_sample", "two_view",
]

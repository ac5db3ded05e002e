"""Single-scale retinex enhancement and the gamma-correction baseline.

The illumination map is the per-pixel max over RGB smoothed by a box filter;
each frame is divided by ``max(T ** illum_gamma, epsilon)`` and clamped.
Frames are processed independently.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.ndimage import uniform_filter

from .clipgen import VideoClip

# Number of calls per operator. Used to prove that student code paths never
# build a retinex stream.
CALLS: Counter = Counter()


@dataclass(frozen=True)
class RetinexParams:
    smoothing_radius: int = 3
    illum_gamma: float = 0.8
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.smoothing_radius < 1:
            raise ValueError(f"smoothing_radius must be >= 1, got {self.smoothing_radius}")
        if not 0.0 < self.illum_gamma <= 1.0:
            raise ValueError(f"illum_gamma must be in (0, 1], got {self.illum_gamma}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def _smooth(x: np.ndarray, radius: int) -> np.ndarray:
    # Box filter over the last two axes only; "nearest" keeps constants constant.
    size = [1] * (x.ndim - 2) + [2 * radius + 1, 2 * radius + 1]
    return uniform_filter(x, size=size, mode="nearest")


def estimate_illumination(frame: np.ndarray, smoothing_radius: int = 3) -> np.ndarray:
    """Smoothed max-channel illumination map of a [3, H, W] frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ValueError(f"frame must have shape [3, H, W], got {frame.shape}")
    return np.clip(_smooth(frame.max(axis=0), smoothing_radius), 0.0, 1.0)


def retinex_array(data: np.ndarray, params: RetinexParams = RetinexParams()) -> np.ndarray:
    """Retinex on an array whose axis -4 is RGB, e.g. [3, L, H, W] or [N, 3, L, H, W]."""
    CALLS["retinex"] += 1
    x = np.asarray(data, dtype=np.float64)
    illum = np.clip(_smooth(x.max(axis=-4), params.smoothing_radius), 0.0, 1.0)
    denom = np.maximum(illum ** params.illum_gamma, params.epsilon)
    return np.clip(x / np.expand_dims(denom, -4), 0.0, 1.0).astype(np.asarray(data).dtype)


def retinex_tensor(data, params: RetinexParams = RetinexParams()):
    """Torch-in, torch-out wrapper around ``retinex_array`` (no gradient)."""
    return torch.from_numpy(retinex_array(data.detach().cpu().numpy(), params))


def retinex_enhance(clip: VideoClip, params: RetinexParams = RetinexParams()) -> VideoClip:
    return VideoClip(retinex_array(clip.data, params), clip.fps_tag)


def gamma_correct(clip: VideoClip, gamma: float) -> VideoClip:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    CALLS["gamma_correct"] += 1
    return VideoClip(np.power(clip.data, gamma).astype(clip.data.dtype), clip.fps_tag)


# Array dump: one ASCII header line "ARRAY <dtype> <d0>x<d1>x..." followed by
# the values in row-major order, little-endian.
_DUMP_MAGIC = b"ARRAY"


def write_array_dump(path, array: np.ndarray) -> Path:
    array = np.ascontiguousarray(array)
    dtype = array.dtype.newbyteorder("<")
    header = b"%s %s %s\n" % (_DUMP_MAGIC, dtype.str.encode(), "x".join(map(str, array.shape)).encode())
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.astype(dtype, copy=False).tobytes(order="C"))
    return path


def read_array_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != _DUMP_MAGIC:
            raise ValueError(f"{path} is not an array dump")
        dtype = np.dtype(header[1].decode())
        shape = tuple(int(d) for d in header[2].decode().split("x"))
        body = fh.read()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} bytes of data, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(shape)


__all__ = [
    "RetinexParams", "estimate_illumination", "retinex_enhance", "retinex_array", "retinex_tensor",
    "gamma_correct", "write_array_dump", "read_array_dump", "CALLS",
]

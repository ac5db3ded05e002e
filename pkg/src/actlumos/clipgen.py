"""Procedural low-light micro-videos with time-varying illumination.

Every clip is a bright primitive following one of a fixed set of motion
programs on a black background. Each frame is scaled by the illumination
level active at that frame, then additive Gaussian noise is applied and the
result is clamped to [0, 1]. A dataset is stored as a manifest of generation
parameters only; pixels are regenerated from the seeds on demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_VERSION = 1
MIN_FRAMES = 2
MIN_SIDE = 8
DEFAULT_DIMS = (16, 32, 32)

# Ordered motion programs; class k renders MOTION_PROGRAMS[k]. Every program is
# invariant under horizontal flips (direction is drawn per clip where it
# matters) so flip augmentation never turns one class into another.
MOTION_PROGRAMS = (
    "move_down",
    "move_up",
    "sweep_horizontal",
    "oscillate_horizontal",
    "oscillate_vertical",
    "pulse",
    "expand",
    "shrink",
    "orbit",
    "rotate_bar",
    "diagonal_down",
    "diagonal_up",
)


class ManifestError(ValueError):
    """Raised for unreadable, corrupt or incompatible dataset manifests."""


@dataclass
class VideoClip:
    data: np.ndarray  # [3, L, H, W] in [0, 1]
    fps_tag: float = 25.0

    def __post_init__(self):
        validate_clip_array(self.data)
        if not self.fps_tag > 0:
            raise ValueError(f"fps_tag must be positive, got {self.fps_tag}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape[1:])


def validate_clip_array(data: np.ndarray) -> None:
    if data.ndim != 4 or data.shape[0] != 3:
        raise ValueError(f"clip must have shape [3, L, H, W], got {data.shape}")
    validate_dims(data.shape[1:])
    if not np.all(np.isfinite(data)):
        raise ValueError("clip contains non-finite values")
    if data.min() < 0.0 or data.max() > 1.0:
        raise ValueError("clip values must lie in [0, 1]")


def validate_dims(dims) -> tuple[int, int, int]:
    if len(dims) != 3:
        raise ValueError(f"dims must be (L, H, W), got {dims!r}")
    L, H, W = (int(d) for d in dims)
    if L < MIN_FRAMES:
        raise ValueError(f"clip length L={L} is below the minimum of {MIN_FRAMES} frames")
    if H < MIN_SIDE or W < MIN_SIDE:
        raise ValueError(f"frame size {H}x{W} is below the minimum of {MIN_SIDE}x{MIN_SIDE}")
    return L, H, W


@dataclass
class IlluminationProfile:
    """Per-frame illumination: ``base_level`` everywhere except inside segments.

    Segments are ``(t_start, t_end, level)`` with ``t_end`` exclusive.
    """

    base_level: float = 1.0
    modulation: list[tuple[int, int, float]] = field(default_factory=list)
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.modulation = [(int(a), int(b), float(v)) for a, b, v in self.modulation]
        if not 0.0 < self.base_level <= 1.0:
            raise ValueError(f"base_level must be in (0, 1], got {self.base_level}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")
        prev_end = 0
        for t0, t1, level in self.modulation:
            if t0 < prev_end or t1 <= t0:
                raise ValueError(f"segments must be ordered and non-overlapping: {self.modulation}")
            if not 0.0 < level <= 1.0:
                raise ValueError(f"segment level must be in (0, 1], got {level}")
            prev_end = t1

    def levels(self, num_frames: int) -> np.ndarray:
        if self.modulation and self.modulation[-1][1] > num_frames:
            raise ValueError(f"segment {self.modulation[-1]} exceeds clip length {num_frames}")
        out = np.full(num_frames, self.base_level, dtype=np.float64)
        for t0, t1, level in self.modulation:
            out[t0:t1] = level
        return out

    @property
    def has_transition(self) -> bool:
        return any(level != self.base_level for _, _, level in self.modulation)

    def to_dict(self) -> dict:
        return {
            "base_level": self.base_level,
            "modulation": [list(s) for s in self.modulation],
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IlluminationProfile":
        return cls(float(d["base_level"]), [tuple(s) for s in d["modulation"]], float(d["noise_sigma"]))


def _soft_disk(dist: np.ndarray, radius, softness: float) -> np.ndarray:
    return np.clip((radius - dist) / softness + 0.5, 0.0, 1.0)


def _trajectory(program: str, u: np.ndarray, rng: np.random.Generator):
    """Return per-frame (cx, cy, radius, angle) for a program at times u in [0, 1]."""
    n = len(u)
    direction = rng.choice([-1.0, 1.0])
    r0 = rng.uniform(0.08, 0.12)
    cx = np.full(n, rng.uniform(0.35, 0.65))
    cy = np.full(n, rng.uniform(0.35, 0.65))
    radius = np.full(n, r0)
    angle = np.zeros(n)
    travel = rng.uniform(0.45, 0.6)
    phase = rng.uniform(0, 2 * math.pi)

    if program in ("move_down", "move_up"):
        start = rng.uniform(0.15, 0.25)
        path = start + travel * u
        cy = path if program == "move_down" else 1.0 - path
    elif program == "sweep_horizontal":
        path = rng.uniform(0.15, 0.25) + travel * u
        cx = path if direction > 0 else 1.0 - path
    elif program == "oscillate_horizontal":
        cx = 0.5 + rng.uniform(0.2, 0.28) * np.sin(2 * math.pi * 2 * u + phase)
    elif program == "oscillate_vertical":
        cy = 0.5 + rng.uniform(0.2, 0.28) * np.sin(2 * math.pi * 2 * u + phase)
    elif program == "pulse":
        radius = r0 * (1.0 + 0.7 * np.sin(2 * math.pi * 2 * u + phase))
    elif program == "expand":
        radius = 0.04 + rng.uniform(0.2, 0.26) * u
    elif program == "shrink":
        radius = 0.04 + rng.uniform(0.2, 0.26) * (1.0 - u)
    elif program == "orbit":
        rad = rng.uniform(0.2, 0.26)
        theta = phase + direction * 2 * math.pi * u
        cx = 0.5 + rad * np.cos(theta)
        cy = 0.5 + rad * np.sin(theta)
    elif program == "rotate_bar":
        angle = phase + direction * math.pi * u
    elif program in ("diagonal_down", "diagonal_up"):
        path = rng.uniform(0.15, 0.25) + travel * u
        cx = path if direction > 0 else 1.0 - path
        cy = path if program == "diagonal_down" else 1.0 - path
    else:  # pragma: no cover - guarded by MOTION_PROGRAMS
        raise ValueError(f"unknown motion program {program!r}")
    return cx, cy, radius, angle


def render_primitive(class_id: int, seed: int, dims) -> tuple[np.ndarray, np.random.Generator]:
    """Full-light render of the class's motion program, before illumination and noise.

    Returns the [3, L, H, W] render and the generator positioned after all
    geometry draws, so noise is drawn from the same stream.
    """
    L, H, W = validate_dims(dims)
    if not 0 <= class_id < len(MOTION_PROGRAMS):
        raise ValueError(f"class_id {class_id} out of range [0, {len(MOTION_PROGRAMS)})")
    program = MOTION_PROGRAMS[class_id]
    rng = np.random.default_rng(seed)
    color = rng.uniform(0.6, 1.0, size=3)
    u = np.linspace(0.0, 1.0, L)
    cx, cy, radius, angle = _trajectory(program, u, rng)

    ys = (np.arange(H) + 0.5) / H
    xs = (np.arange(W) + 0.5) / W
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    softness = 1.5 / min(H, W)
    dx = xx[None] - cx[:, None, None]
    dy = yy[None] - cy[:, None, None]
    if program == "rotate_bar":
        # distance to a segment of half-length 0.3 through the centre
        c, s = np.cos(angle)[:, None, None], np.sin(angle)[:, None, None]
        along = dx * c + dy * s
        across = np.abs(-dx * s + dy * c)
        mask = _soft_disk(across, 0.05, softness) * _soft_disk(np.abs(along), 0.3, softness)
    else:
        dist = np.sqrt(dx**2 + dy**2)
        mask = _soft_disk(dist, radius[:, None, None], softness)
    frames = color[:, None, None, None] * mask[None]
    return frames, rng


def generate_clip(class_id: int, profile: IlluminationProfile, seed: int,
                  dims=DEFAULT_DIMS, num_classes: int | None = None) -> VideoClip:
    """Render one dark clip; a pure function of its arguments."""
    if num_classes is not None and not 0 <= class_id < num_classes:
        raise ValueError(f"class_id {class_id} out of range [0, {num_classes})")
    frames, rng = render_primitive(class_id, seed, dims)
    levels = profile.levels(frames.shape[1])
    frames = frames * levels[None, :, None, None]
    if profile.noise_sigma > 0:
        frames = frames + rng.normal(0.0, profile.noise_sigma, size=frames.shape)
    return VideoClip(np.clip(frames, 0.0, 1.0).astype(np.float32))


# Profile families. "A" is the labelled benchmark domain; "B" is a second
# camera/noise regime used only to enlarge the unlabelled pretraining pool.
PROFILE_FAMILIES = {
    "A": dict(mild=(0.05, 0.3), extreme=(0.003, 0.01), noise=(0.003, 0.008), p_extreme_base=0.5,
              p_segment=0.8, p_flicker={"mild": 0.15, "extreme": 0.85}, flicker=1.5),
    "B": dict(mild=(0.04, 0.4), extreme=(0.002, 0.012), noise=(0.002, 0.01), p_extreme_base=0.5,
              p_segment=0.7, p_flicker={"mild": 0.25, "extreme": 0.75}, flicker=1.2),
}


def _log_uniform(rng: np.random.Generator, bounds) -> float:
    lo, hi = bounds
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_profile(rng: np.random.Generator, num_frames: int, family: str = "A") -> IlluminationProfile:
    """Draw one clip's lighting.

    The base level comes from the mild or the extreme regime. Independently,
    the clip may hold one segment lit from the other regime, and may flicker
    (with a probability that depends on the base regime):
    every frame rescaled by a log-uniform factor in exp(+-flicker).
    """
    fam = PROFILE_FAMILIES[family]
    regimes = ("extreme", "mild") if rng.random() < fam["p_extreme_base"] else ("mild", "extreme")
    base = _log_uniform(rng, fam[regimes[0]])
    noise = float(rng.uniform(*fam["noise"]))
    segments = []
    if num_frames >= 4 and rng.random() < fam["p_segment"]:
        length = int(rng.integers(max(2, num_frames // 4), max(3, num_frames // 2) + 1))
        start = int(rng.integers(0, num_frames - length + 1))
        segments.append((start, start + length, _log_uniform(rng, fam[regimes[1]])))
    profile = IlluminationProfile(base, segments, noise)
    if num_frames >= 4 and rng.random() < fam["p_flicker"][regimes[0]]:
        factors = np.exp(rng.uniform(-fam["flicker"], fam["flicker"], size=num_frames))
        levels = np.minimum(profile.levels(num_frames) * factors, 1.0)
        profile = IlluminationProfile(base, [(t, t + 1, float(v)) for t, v in enumerate(levels)], noise)
    return profile


@dataclass
class ClipRecord:
    clip_id: str
    class_id: int
    seed: int
    profile: IlluminationProfile


@dataclass
class SyntheticDataset:
    clips: list[ClipRecord]
    K: int
    dims: tuple[int, int, int]
    split_assignment: dict[str, str]
    family: str = "A"

    def __post_init__(self):
        self.dims = validate_dims(self.dims)
        self.validate()

    def validate(self, n_v: int = 2) -> None:
        ids = [c.clip_id for c in self.clips]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ManifestError(f"duplicate clip_id(s): {dup[:5]}")
        for c in self.clips:
            if not 0 <= c.class_id < self.K:
                raise ManifestError(f"clip {c.clip_id} has class_id {c.class_id} outside [0, {self.K})")
            if self.split_assignment.get(c.clip_id) not in ("train", "val", "test"):
                raise ManifestError(f"clip {c.clip_id} has no valid split")
        counts = np.bincount([c.class_id for c in self.clips if self.split_assignment[c.clip_id] == "train"],
                             minlength=self.K)
        short = [k for k in range(self.K) if counts[k] < n_v]
        if short:
            raise ManifestError(f"classes {short} have fewer than {n_v} training clips")

    def split(self, name: str) -> list[ClipRecord]:
        return [c for c in self.clips if self.split_assignment[c.clip_id] == name]

    def render(self, record: ClipRecord) -> VideoClip:
        return generate_clip(record.class_id, record.profile, record.seed, self.dims, self.K)

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "K": self.K,
            "dims": list(self.dims),
            "family": self.family,
            "clips": [
                {"id": c.clip_id, "class": c.class_id, "seed": c.seed,
                 "profile": c.profile.to_dict(), "split": self.split_assignment[c.clip_id]}
                for c in self.clips
            ],
        }

    def __eq__(self, other):
        if not isinstance(other, SyntheticDataset):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _split_sizes(n: int) -> tuple[int, int, int]:
    n_val = max(1, round(0.1 * n))
    n_test = max(1, round(0.2 * n))
    return n - n_val - n_test, n_val, n_test


def generate_dataset(K: int, clips_per_class: int, dims=DEFAULT_DIMS,
                     profile_sampler_seed: int = 0, family: str = "A") -> SyntheticDataset:
    """Balanced dataset with a stratified, seeded 70/10/20 train/val/test split."""
    if not 2 <= K <= len(MOTION_PROGRAMS):
        raise ValueError(f"K must be in [2, {len(MOTION_PROGRAMS)}], got {K}")
    if clips_per_class < 4:
        raise ValueError(f"clips_per_class={clips_per_class} is too small: need at least 4 "
                         "so every class has 2 train clips and one val and test clip")
    if family not in PROFILE_FAMILIES:
        raise ValueError(f"unknown profile family {family!r}")
    dims = validate_dims(dims)
    ss = np.random.SeedSequence(profile_sampler_seed)
    profile_rng = np.random.default_rng(ss.spawn(1)[0])
    split_rng = np.random.default_rng(ss.spawn(1)[0])
    clip_seeds = ss.generate_state(K * clips_per_class, dtype=np.uint32)

    clips, splits = [], {}
    for k in range(K):
        order = split_rng.permutation(clips_per_class)
        n_train, n_val, _ = _split_sizes(clips_per_class)
        for j in range(clips_per_class):
            idx = k * clips_per_class + j
            cid = f"{family.lower()}{k:02d}_{j:04d}"
            clips.append(ClipRecord(cid, k, int(clip_seeds[idx]), sample_profile(profile_rng, dims[0], family)))
            rank = order[j]
            splits[cid] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return SyntheticDataset(clips, K, dims, splits, family)


def save_dataset(dataset: SyntheticDataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dataset.to_dict(), indent=1, sort_keys=True))
    return path


def load_dataset(path) -> SyntheticDataset:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(raw, dict) or "version" not in raw:
        raise ManifestError(f"manifest {path} has no format version")
    if raw["version"] != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {raw['version']!r} (expected {MANIFEST_VERSION})")
    try:
        clips = [ClipRecord(str(c["id"]), int(c["class"]), int(c["seed"]), IlluminationProfile.from_dict(c["profile"]))
                 for c in raw["clips"]]
        splits = {str(c["id"]): c["split"] for c in raw["clips"]}
        return SyntheticDataset(clips, int(raw["K"]), tuple(raw["dims"]), splits, raw.get("family", "A"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"corrupt manifest {path}: {exc}") from exc


def render_array(dataset: SyntheticDataset, records=None) -> np.ndarray:
    """Stack rendered clips into an [N, 3, L, H, W] float32 array."""
    records = dataset.clips if records is None else records
    return np.stack([dataset.render(r).data for r in records])


__all__ = [
    "MOTION_PROGRAMS", "VideoClip", "IlluminationProfile", "ClipRecord", "SyntheticDataset",
    "ManifestError", "generate_clip", "generate_dataset", "save_dataset", "load_dataset",
    "sample_profile", "render_primitive", "render_array",
]

"""Training stages: dual-stream teacher, student SSL pretraining, student distillation.

Every stage is a deterministic function of its config (including the seed)
and inputs on one platform. Checkpoints carry parameters, optimizer state,
the sampling RNG state and the per-epoch metric history, so a run can be
resumed and reproduces the uninterrupted result exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from . import enhance
from .checkpoint import Checkpoint, CheckpointError, flatten_optimizer, restore_optimizer
from .clipgen import SyntheticDataset, render_array
from .encoder import Encoder, EncoderConfig, clip_embedding
from .fusion import FUSION_VARIANTS, TemporalHeadConfig
from .models import InputNorm, ProbeModel, StudentModel, TeacherModel
from .objectives import ssl_loss, student_loss, teacher_loss, ce_loss
from .sampler import SSL_VARIANTS, AugmentParams, balanced_batch, draw_spatial, spatial_augment, two_view

STAGES = ("teacher", "ssl", "distill")
PAPER_LR = 1e-5


@dataclass
class TrainConfig:
    stage: str = "teacher"
    epochs: int = 30
    n_c: int = 4
    n_v: int = 2
    B_u: int = 16
    B_kd: int = 16
    optimizer: str = "adamw"
    lr: float = 1e-3
    weight_decay: float = 0.01
    tau_supcon: float = 0.1
    tau_ssl: float = 0.1
    tau_kd: float = 4.0
    lambda_sup: float = 0.1
    lambda_ce: float = 1.0
    lambda_kd: float = 1.0
    seed: int = 0
    fusion_variant: str = "dff"
    ssl_variant: str = "both"
    channels: int = 32
    stage_strides: tuple = ((2, 4), (1, 2), (1, 1))
    head_layers: int = 2
    head_heads: int = 4
    crop_scale_range: tuple = (0.7, 1.0)
    flip_prob: float = 0.5
    fast_stride: int = 1
    slow_stride: int = 2
    out_frames: int = 8
    probe_steps: int = 300
    probe_lr: float = 0.05
    grad_clip: float = 1.0
    train_augment: bool = True

    def __post_init__(self):
        self.stage_strides = tuple(tuple(s) for s in self.stage_strides)
        self.crop_scale_range = tuple(self.crop_scale_range)
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.fusion_variant not in FUSION_VARIANTS:
            raise ValueError(f"fusion_variant must be one of {FUSION_VARIANTS}, got {self.fusion_variant!r}")
        if self.ssl_variant not in SSL_VARIANTS:
            raise ValueError(f"ssl_variant must be one of {SSL_VARIANTS}, got {self.ssl_variant!r}")
        if self.optimizer != "adamw":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        for name in ("epochs", "n_c", "n_v", "B_u", "B_kd", "channels", "out_frames"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda_sup", "lambda_ce", "lambda_kd", "lr", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig.from_dict({**self.to_dict(), **kw})

    def fingerprint(self) -> str:
        # epochs is the stopping horizon, not part of the recipe: a 2-epoch run
        # can be resumed to 4 epochs under the same fingerprint
        d = self.to_dict()
        d.pop("epochs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.channels, self.stage_strides)

    @property
    def augment(self) -> AugmentParams:
        return AugmentParams(self.crop_scale_range, self.flip_prob, self.fast_stride, self.slow_stride,
                             self.out_frames)

    def head_config(self, num_classes: int, seq_len: int) -> TemporalHeadConfig:
        return TemporalHeadConfig(self.channels, self.head_layers, self.head_heads, num_classes, seq_len)


@dataclass
class Metrics:
    top1: float
    top5: float
    per_class: list
    n: int
    loss: float = float("nan")

    def __post_init__(self):
        if self.top5 + 1e-12 < self.top1:
            raise AssertionError("top5 must be >= top1")

    def to_dict(self) -> dict:
        return asdict(self)


class ClipBank:
    """Rendered clips of one or more datasets held as tensors.

    The retinex stream is computed lazily on first access and every access
    is counted in ``retinex_reads``.
    """

    def __init__(self, dark: torch.Tensor, labels: torch.Tensor, ids: list[str], splits: list[str], K: int,
                 retinex_params: enhance.RetinexParams = enhance.RetinexParams()):
        self.dark = dark
        self.labels = labels
        self.ids = list(ids)
        self.splits = list(splits)
        self.K = K
        self.index = {cid: i for i, cid in enumerate(self.ids)}
        self.retinex_params = retinex_params
        self._retinex = None
        self.retinex_reads = 0

    @classmethod
    def from_dataset(cls, dataset: SyntheticDataset, records=None, **kw) -> "ClipBank":
        records = dataset.clips if records is None else records
        dark = torch.from_numpy(render_array(dataset, records))
        labels = torch.tensor([r.class_id for r in records])
        splits = [dataset.split_assignment[r.clip_id] for r in records]
        return cls(dark, labels, [r.clip_id for r in records], splits, dataset.K, **kw)

    @classmethod
    def unlabeled_pool(cls, *banks: "ClipBank", split: str | None = "train") -> "ClipBank":
        """Concatenate clips (optionally one split of each bank) with labels replaced by -1."""
        parts = [(b, b.split_indices(split) if split else np.arange(len(b))) for b in banks]
        dark = torch.cat([b.dark[idx] for b, idx in parts])
        ids = [b.ids[i] for b, idx in parts for i in idx]
        return cls(dark, torch.full((len(ids),), -1), ids, ["pool"] * len(ids), 0)

    def __len__(self):
        return len(self.ids)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.dark.shape[2:])

    @property
    def retinex(self) -> torch.Tensor:
        self.retinex_reads += 1
        if self._retinex is None:
            self._retinex = torch.from_numpy(enhance.retinex_array(self.dark.numpy(), self.retinex_params))
        return self._retinex

    def stream_stats(self, stream: str = "dark", split: str | None = "train") -> tuple[float, float]:
        """Mean and std of one stream over a split (all clips when ``split`` is None)."""
        x = self.dark if stream == "dark" else self.retinex
        if split is not None:
            x = x[torch.as_tensor(self.split_indices(split))]
        if len(x) == 0:
            raise ValueError(f"split {split!r} is empty")
        std = float(x.std())
        return float(x.mean()), std if std > 0 else 1.0

    def split_indices(self, name: str) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.splits) if s == name], dtype=np.int64)

    def split_labels(self, name: str) -> dict[str, int]:
        return {self.ids[i]: int(self.labels[i]) for i in self.split_indices(name)}


Logger = Callable[[dict], None]


def _check_stage(config: TrainConfig, stage: str) -> None:
    if config.stage != stage:
        raise ValueError(f"config.stage is {config.stage!r}, expected {stage!r}")


def _clip(model: nn.Module, config: TrainConfig) -> None:
    if config.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)


def _make_optimizer(config: TrainConfig, params) -> torch.optim.Optimizer:
    return torch.optim.AdamW(params, lr=config.lr, weight_decay=config.weight_decay)


def _seq_len(config: TrainConfig, dims) -> int:
    return config.encoder_config.output_shape(dims)[1]


def _resume(ckpt: Checkpoint, config: TrainConfig, stage: str, model, optimizer) -> tuple[np.random.Generator, int, list]:
    if ckpt.stage != stage:
        raise CheckpointError(f"cannot resume {stage} from a {ckpt.stage} checkpoint")
    if ckpt.fingerprint != config.fingerprint():
        raise CheckpointError(f"config fingerprint mismatch on resume: checkpoint {ckpt.fingerprint}, "
                              f"config {config.fingerprint()}")
    model.load_state_dict(ckpt.subset("model"))
    restore_optimizer(optimizer, ckpt)
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.rng_state["numpy"]
    return rng, ckpt.epoch, list(ckpt.history)


def _checkpoint(stage, model, optimizer, config, rng, epoch, history, meta) -> Checkpoint:
    tensors = {f"model.{k}": v.detach().clone() for k, v in model.state_dict().items()}
    opt_tensors, groups = flatten_optimizer(optimizer)
    tensors.update(opt_tensors)
    meta = dict(meta, optim_param_groups=groups)
    return Checkpoint(stage, tensors, config.to_dict(), config.fingerprint(), meta, epoch, history,
                      {"numpy": rng.bit_generator.state})


def _epoch_record(stage, epoch, step_losses, val: Metrics | None, keep_steps: bool) -> dict:
    keys = step_losses[0].keys() if step_losses else []
    rec = {"stage": stage, "epoch": epoch + 1,
           "loss": {k: float(np.mean([s[k] for s in step_losses])) for k in keys}}
    if val is not None:
        rec["val_top1"], rec["val_top5"] = val.top1, val.top5
    if keep_steps:
        rec["step_losses"] = [s["total"] for s in step_losses]
    return rec


def _emit(record: dict, log: Logger | None, log_path) -> None:
    if log_path is not None:
        with open(log_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    if log is not None:
        log(record)


def _augment(clips: torch.Tensor, aug: AugmentParams, rng: np.random.Generator) -> torch.Tensor:
    """Independent crop/resize/flip per clip, shared by all frames of that clip."""
    H, W = clips.shape[-2:]
    return torch.stack([spatial_augment(c, draw_spatial(H, W, aug, rng)) for c in clips])


def _interleave(emb_dark, emb_ret, labels):
    """Table-1 row order: dark and retinex view of each clip adjacent."""
    present = [e for e in (emb_dark, emb_ret) if e is not None]
    emb = torch.stack(present, dim=1).reshape(-1, present[0].shape[-1])
    return emb, labels.repeat_interleave(len(present))


def build_teacher(config: TrainConfig, K: int, dims, stats: dict | None = None) -> TeacherModel:
    return TeacherModel(config.encoder_config, config.head_config(K, _seq_len(config, dims)),
                        config.fusion_variant, seed=config.seed, stats=stats)


def train_teacher(config: TrainConfig, bank: ClipBank, resume: Checkpoint | None = None,
                  log: Logger | None = None, log_path=None) -> Checkpoint:
    """Balanced batches, shared encoder over dark+retinex, fusion, CE + lambda_sup * SupCon."""
    _check_stage(config, "teacher")
    variant_streams = {"dark_only": ("dark",), "retinex_only": ("retinex",)}.get(config.fusion_variant,
                                                                              ("dark", "retinex"))
    stats = {s: bank.stream_stats(s) for s in variant_streams}
    model = build_teacher(config, bank.K, bank.dims, stats)
    opt = _make_optimizer(config, model.parameters())
    rng, start, history = np.random.default_rng(config.seed), 0, []
    if resume is not None:
        rng, start, history = _resume(resume, config, "teacher", model, opt)
    train_labels = bank.split_labels("train")
    batch_clips = config.n_c * config.n_v
    steps = math.ceil(len(train_labels) / batch_clips)
    streams = model.streams

    for epoch in range(start, config.epochs):
        model.train()
        step_losses = []
        for _ in range(steps):
            batch = balanced_batch(train_labels, config.n_c, config.n_v, rng)
            idx = torch.tensor([bank.index[cid] for cid, _ in batch])
            y = bank.labels[idx]
            if config.train_augment:
                # the retinex view is enhanced from the augmented dark clip
                dark = _augment(bank.dark[idx], config.augment, rng)
                ret = enhance.retinex_tensor(dark, bank.retinex_params) if "retinex" in streams else None
            else:
                dark = bank.dark[idx]
                ret = bank.retinex[idx] if "retinex" in streams else None
            logits, e_dark, e_ret = model(dark if "dark" in streams else None, ret)
            emb, emb_y = _interleave(e_dark, e_ret, y)
            loss = teacher_loss(logits, y, emb, emb_y, config.tau_supcon, config.lambda_sup)
            opt.zero_grad()
            loss.total.backward()
            _clip(model, config)
            opt.step()
            step_losses.append(loss.items())
        val = evaluate_model(model, bank, "val", "teacher") if len(bank.split_indices("val")) else None
        rec = _epoch_record("teacher", epoch, step_losses, val, keep_steps=epoch == 0)
        history.append(rec)
        _emit(rec, log, log_path)
    meta = {"K": bank.K, "dims": list(bank.dims), "fusion_variant": config.fusion_variant}
    return _checkpoint("teacher", model, opt, config, rng, config.epochs, history, meta)


def pretrain_student_ssl(config: TrainConfig, pool: ClipBank, resume: Checkpoint | None = None,
                         log: Logger | None = None, log_path=None) -> Checkpoint:
    """Two-view InfoNCE pretraining of the student encoder on unlabelled dark clips."""
    _check_stage(config, "ssl")
    if config.ssl_variant == "none":
        raise ValueError("ssl_variant 'none' has no pretraining stage")
    if config.B_u < 2:
        raise ValueError("B_u must be >= 2")
    aug = config.augment
    aug.check_length(pool.dims[0])
    encoder = Encoder(config.encoder_config, config.seed)
    norm = InputNorm(*pool.stream_stats("dark", split=None))
    opt = _make_optimizer(config, encoder.parameters())
    rng, start, history = np.random.default_rng(config.seed), 0, []
    if resume is not None:
        rng, start, history = _resume(resume, config, "ssl", encoder, opt)

    for epoch in range(start, config.epochs):
        encoder.train()
        perm = rng.permutation(len(pool))
        step_losses = []
        for b in range(0, len(perm) - 1, config.B_u):
            chunk = perm[b:b + config.B_u]
            if len(chunk) < 2:
                continue
            views = [two_view(pool.dark[i], aug, rng, config.ssl_variant) for i in chunk]
            fast = torch.stack([v[0] for v in views])
            slow = torch.stack([v[1] for v in views])
            emb = clip_embedding(encoder(norm(torch.cat([fast, slow]))))
            loss = ssl_loss(emb[:len(chunk)], emb[len(chunk):], config.tau_ssl)
            opt.zero_grad()
            loss.backward()
            _clip(encoder, config)
            opt.step()
            step_losses.append({"ssl": float(loss.detach()), "total": float(loss.detach())})
        rec = _epoch_record("ssl", epoch, step_losses, None, keep_steps=epoch == 0)
        history.append(rec)
        _emit(rec, log, log_path)
    meta = {"dims": list(pool.dims), "pool_size": len(pool), "ssl_variant": config.ssl_variant,
            "student_retinex_reads": 0}
    ckpt = _checkpoint("ssl", encoder, opt, config, rng, config.epochs, history, meta)
    ckpt.tensors.update({f"input_norm.{k}": v.clone() for k, v in norm.state_dict().items()})
    return ckpt


def load_teacher(ckpt: Checkpoint) -> TeacherModel:
    if ckpt.stage != "teacher":
        raise CheckpointError(f"expected a teacher checkpoint, got stage {ckpt.stage!r}")
    config = TrainConfig.from_dict(ckpt.config)
    model = build_teacher(config, ckpt.meta["K"], tuple(ckpt.meta["dims"]))
    model.load_state_dict(ckpt.subset("model"))
    return model


@torch.no_grad()
def _batched_logits(fn, n: int, chunk: int = 64) -> torch.Tensor:
    return torch.cat([fn(slice(i, min(i + chunk, n))) for i in range(0, n, chunk)])


def teacher_logits(teacher: TeacherModel, bank: ClipBank, idx: np.ndarray) -> torch.Tensor:
    idx = torch.as_tensor(idx)
    streams = teacher.streams

    def fn(sl):
        j = idx[sl]
        dark = bank.dark[j] if "dark" in streams else None
        ret = bank.retinex[j] if "retinex" in streams else None
        return teacher(dark, ret)[0]

    teacher.eval()
    return _batched_logits(fn, len(idx))


def build_student(config: TrainConfig, K: int, dims, ssl_ckpt: Checkpoint | None = None,
                  dark_stats: tuple[float, float] = (0.0, 1.0)) -> StudentModel:
    """Fresh student; with ``ssl_ckpt`` the encoder and its input standardisation come from SSL."""
    model = StudentModel(config.encoder_config, config.head_config(K, _seq_len(config, dims)), seed=config.seed,
                         dark_stats=dark_stats)
    if ssl_ckpt is not None:
        if ssl_ckpt.stage != "ssl":
            raise CheckpointError(f"expected an ssl checkpoint, got stage {ssl_ckpt.stage!r}")
        ssl_cfg = TrainConfig.from_dict(ssl_ckpt.config)
        if ssl_cfg.encoder_config != config.encoder_config:
            raise CheckpointError("SSL checkpoint encoder architecture differs from the distillation config")
        model.encoder.load_state_dict(ssl_ckpt.subset("model"))
        model.input_norm.load_state_dict(ssl_ckpt.subset("input_norm"))
    return model


def distill_student(config: TrainConfig, bank: ClipBank, teacher_ckpt: Checkpoint,
                    ssl_ckpt: Checkpoint | None = None, resume: Checkpoint | None = None,
                    log: Logger | None = None, log_path=None) -> Checkpoint:
    """Fine-tune a dark-only student with lambda_ce * CE + lambda_kd * tau^2 KL(teacher || student).

    The teacher is frozen, so its logits on the (unaugmented) training clips
    are computed once up front; the student loop then never reads the retinex
    stream, which is recorded in ``meta["student_retinex_reads"]``.
    """
    _check_stage(config, "distill")
    teacher = load_teacher(teacher_ckpt)
    if teacher_ckpt.meta["K"] != bank.K:
        raise ValueError(f"teacher head has {teacher_ckpt.meta['K']} classes, dataset has {bank.K}")
    teacher.requires_grad_(False)
    train_idx = bank.split_indices("train")
    z_teacher = teacher_logits(teacher, bank, train_idx)

    reads0, calls0 = bank.retinex_reads, enhance.CALLS["retinex"]
    model = build_student(config, bank.K, bank.dims, ssl_ckpt, bank.stream_stats("dark"))
    opt = _make_optimizer(config, model.parameters())
    rng, start, history = np.random.default_rng(config.seed), 0, []
    if resume is not None:
        rng, start, history = _resume(resume, config, "distill", model, opt)
    pos = {int(i): j for j, i in enumerate(train_idx)}

    for epoch in range(start, config.epochs):
        model.train()
        perm = train_idx[rng.permutation(len(train_idx))]
        step_losses = []
        for b in range(0, len(perm), config.B_kd):
            idx = torch.as_tensor(perm[b:b + config.B_kd])
            z_t = z_teacher[[pos[int(i)] for i in idx]]
            dark = bank.dark[idx]
            z_s = model(_augment(dark, config.augment, rng) if config.train_augment else dark)
            loss = student_loss(z_t, z_s, bank.labels[idx], config.tau_kd, config.lambda_ce, config.lambda_kd)
            opt.zero_grad()
            loss.total.backward()
            _clip(model, config)
            opt.step()
            step_losses.append(loss.items())
        val = evaluate_model(model, bank, "val", "distill") if len(bank.split_indices("val")) else None
        rec = _epoch_record("distill", epoch, step_losses, val, keep_steps=epoch == 0)
        history.append(rec)
        _emit(rec, log, log_path)

    reads = (bank.retinex_reads - reads0) + (enhance.CALLS["retinex"] - calls0)
    meta = {"K": bank.K, "dims": list(bank.dims), "teacher_fingerprint": teacher_ckpt.fingerprint,
            "ssl_fingerprint": ssl_ckpt.fingerprint if ssl_ckpt else None, "student_retinex_reads": reads}
    return _checkpoint("distill", model, opt, config, rng, config.epochs, history, meta)


def linear_probe(config: TrainConfig, bank: ClipBank, ssl_ckpt: Checkpoint) -> Checkpoint:
    """SSL-only baseline: frozen SSL encoder, linear classifier on clip embeddings (full batch)."""
    if ssl_ckpt.stage != "ssl":
        raise CheckpointError(f"expected an ssl checkpoint, got stage {ssl_ckpt.stage!r}")
    cfg = TrainConfig.from_dict(ssl_ckpt.config)
    model = ProbeModel(cfg.encoder_config, bank.K, seed=config.seed)
    model.encoder.load_state_dict(ssl_ckpt.subset("model"))
    model.input_norm.load_state_dict(ssl_ckpt.subset("input_norm"))
    model.encoder.requires_grad_(False)
    train_idx = torch.as_tensor(bank.split_indices("train"))
    with torch.no_grad():
        emb = _batched_logits(lambda sl: model.embed(bank.dark[train_idx[sl]]), len(train_idx))
    y = bank.labels[train_idx]
    opt = torch.optim.AdamW(model.linear.parameters(), lr=config.probe_lr, weight_decay=0.0)
    for _ in range(config.probe_steps):
        loss = ce_loss(model.linear(emb), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
    history = [{"stage": "probe", "epoch": 1, "loss": {"ce": float(loss.detach())}}]
    meta = {"K": bank.K, "dims": list(bank.dims), "ssl_fingerprint": ssl_ckpt.fingerprint,
            "student_retinex_reads": 0}
    tensors = {f"model.{k}": v.detach().clone() for k, v in model.state_dict().items()}
    return Checkpoint("probe", tensors, cfg.to_dict(), ssl_ckpt.fingerprint, meta, 1, history, None)


def load_model(ckpt: Checkpoint) -> torch.nn.Module:
    config = TrainConfig.from_dict(ckpt.config)
    K, dims = ckpt.meta.get("K"), tuple(ckpt.meta["dims"])
    if ckpt.stage == "teacher":
        return load_teacher(ckpt)
    if ckpt.stage == "distill":
        model = build_student(config, K, dims)
    elif ckpt.stage == "probe":
        model = ProbeModel(config.encoder_config, K)
    else:
        raise CheckpointError(f"{ckpt.stage} checkpoints have no classifier head")
    model.load_state_dict(ckpt.subset("model"))
    return model


def topk_metrics(logits: torch.Tensor, labels: torch.Tensor, K: int) -> Metrics:
    """Top-1/top-5; ties rank the lower class index first."""
    order = torch.sort(logits, dim=1, descending=True, stable=True).indices
    hit1 = order[:, 0] == labels
    hit5 = (order[:, :5] == labels[:, None]).any(1)
    per_class = [float(hit1[labels == k].double().mean()) if bool((labels == k).any()) else float("nan")
                 for k in range(K)]
    loss = float(ce_loss(logits, labels)) if len(labels) else float("nan")
    return Metrics(float(hit1.double().mean()), float(hit5.double().mean()), per_class, len(labels), loss)


@torch.no_grad()
def evaluate_model(model: torch.nn.Module, bank: ClipBank, split: str, stage: str) -> Metrics:
    idx = torch.as_tensor(bank.split_indices(split))
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")
    was_training = model.training
    model.eval()
    if stage == "teacher":
        logits = teacher_logits(model, bank, idx.numpy())
    else:
        logits = _batched_logits(lambda sl: model(bank.dark[idx[sl]]), len(idx))
    model.train(was_training)
    return topk_metrics(logits, bank.labels[idx], bank.K)


def evaluate(ckpt: Checkpoint | str | Path, bank: ClipBank, split: str = "test") -> Metrics:
    """Single-stream for students (dark frames only); dual stream for teachers."""
    if not isinstance(ckpt, Checkpoint):
        ckpt = Checkpoint.load(ckpt)
    return evaluate_model(load_model(ckpt), bank, split, ckpt.stage)


__all__ = [
    "TrainConfig", "Metrics", "ClipBank", "train_teacher", "pretrain_student_ssl", "distill_student",
    "linear_probe", "evaluate", "evaluate_model", "load_model", "load_teacher", "build_student",
    "build_teacher", "teacher_logits", "topk_metrics", "PAPER_LR",
]

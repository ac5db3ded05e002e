"""Finite-difference gradient checks for every loss and both end-to-end networks.

Each check builds a seeded float64 micro-instance, takes the autograd
gradient, and compares it entry by entry with central differences at step
``STEP``. The relative error of one entry is

    |g_auto - g_fd| / max(|g_auto|, |g_fd|, 1e-3 * max|g_auto|, 1e-6)

so entries that are tiny compared with the rest of the gradient are judged
against the gradient's overall scale rather than against themselves.

Rectifiers are piecewise linear, and a 1e-4 nudge of one weight can push
some pre-activation across zero, where a central difference is no longer a
derivative of anything. During the finite-difference passes the rectifier
masks recorded at the base point are replayed, so both routes differentiate
the same linear piece. Everything else (convolutions, attention, layer norm,
softmax, the losses) is evaluated afresh on every perturbed pass.
"""

from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass

import torch

from . import encoder as _encoder
from . import objectives as O
from .encoder import DegenerateEmbeddingError, EncoderConfig
from .enhance import RetinexParams, retinex_tensor
from .fusion import TemporalHeadConfig
from .models import StudentModel, TeacherModel

STEP = 1e-4
TOLERANCE = 1e-4
LOSS_NAMES = ("supcon", "ssl", "ce", "kd", "teacher_total", "student_total",
              "end_to_end_teacher", "end_to_end_student")


@dataclass
class GradReport:
    loss_name: str
    instance_seed: int
    max_rel_error: float
    n_checked: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} grad_check {self.loss_name} seed={self.instance_seed} "
                f"max_rel_err={self.max_rel_error:.2e} n={self.n_checked}")


class _MaskReplay:
    """Records rectifier masks on the base pass, replays them on perturbed passes."""

    def __init__(self):
        self.masks: list[torch.Tensor] = []
        self.replaying = False
        self._i = 0

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if not self.replaying:
            self.masks.append((x > 0).detach())
            return torch.relu(x)
        mask = self.masks[self._i]
        self._i += 1
        return x * mask

    def rewind(self) -> None:
        self.replaying, self._i = True, 0


@contextlib.contextmanager
def _rectifier(hook):
    prev = _encoder._rectifier_hook
    _encoder._rectifier_hook = hook
    try:
        yield hook
    finally:
        _encoder._rectifier_hook = prev


def relative_error(auto, fd) -> float:
    """Max entrywise relative error; tensors or lists of tensors (one gradient, one scale)."""
    if isinstance(auto, torch.Tensor):
        auto, fd = [auto], [fd]
    auto = torch.cat([a.flatten() for a in auto])
    fd = torch.cat([n.flatten() for n in fd])
    if not auto.numel():
        return 0.0
    scale = max(1e-3 * float(auto.abs().max()), 1e-6)
    denom = torch.maximum(torch.maximum(auto.abs(), fd.abs()), torch.full_like(auto, scale))
    return float(((auto - fd).abs() / denom).max())


def finite_difference(f, tensors: list[torch.Tensor], step: float = STEP) -> list[torch.Tensor]:
    """Central differences of scalar ``f()`` w.r.t. every entry of every tensor (modified in place, restored)."""
    grads = []
    with torch.no_grad():
        for t in tensors:
            g = torch.zeros_like(t)
            flat, gflat = t.view(-1), g.view(-1)
            for i in range(flat.numel()):
                v = float(flat[i])
                flat[i] = v + step
                fp = float(f())
                flat[i] = v - step
                fm = float(f())
                flat[i] = v
                gflat[i] = (fp - fm) / (2 * step)
            grads.append(g)
    return grads


def _compare(f, tensors) -> tuple[float, int]:
    """Autograd vs central differences for scalar ``f()`` over leaf ``tensors``."""
    replay = _MaskReplay()
    with _rectifier(replay):
        for t in tensors:
            t.grad = None
        f().backward()
        auto = [t.grad.detach().clone() for t in tensors]

        def f_replay():
            replay.rewind()
            return f()

        fd = finite_difference(f_replay, tensors)
    err = relative_error(auto, fd)
    return err, sum(t.numel() for t in tensors)


def _leaf(g: torch.Generator, *shape, scale: float = 1.0) -> torch.Tensor:
    return (scale * torch.randn(*shape, generator=g, dtype=torch.float64)).requires_grad_(True)


def _unit(x: torch.Tensor) -> torch.Tensor:
    return x / x.norm(dim=1, keepdim=True)


def _micro_models():
    enc = EncoderConfig(channels=3, stage_strides=((1, 2), (2, 1), (1, 1)))
    head = TemporalHeadConfig(model_dim=3, num_layers=1, num_heads=1, num_classes=3, seq_len=2, ff_mult=2)
    return enc, head


def _unit_rms_convs(model, inputs) -> None:
    """Rescale each encoder convolution, in order, so its output has unit RMS on ``inputs``."""
    for block in model.encoder.blocks:
        for conv in (block.spatial, block.temporal):
            out = []
            hook = conv.register_forward_hook(lambda mod, inp, o: out.append(o))
            try:
                model(*inputs)
            finally:
                hook.remove()
            rms = float(out[0].pow(2).mean().sqrt())
            conv.weight.div_(rms)
            conv.bias.div_(rms)


def _live_model(build, seed: int, *inputs):
    """float64 micro-model from ``build(seed')``, conditioned so that 1e-4 steps stay in the linear regime.

    Token parameters are drawn at unit scale (a zero CLS token sits where layer
    norm has slope ~1/sqrt(eps)) and every convolution is rescaled to unit
    output RMS, since a 1e-4 bias step on features of size 1e-2 is already a
    large relative change once the embedding is normalised. Seeds whose
    encoder comes out all dead are re-drawn.
    """
    for attempt in range(100):
        s = seed + 1000 * attempt
        model = build(s).double()
        g = torch.Generator().manual_seed(s)
        with torch.no_grad():
            model.head.cls_token.copy_(torch.randn(model.head.cls_token.shape, generator=g, dtype=torch.float64))
            model.head.pos_embedding.copy_(torch.randn(model.head.pos_embedding.shape, generator=g, dtype=torch.float64))
            try:
                _unit_rms_convs(model, inputs)
                model(*inputs)
            except DegenerateEmbeddingError:
                continue
        return model
    raise RuntimeError("no live micro-network found")


def _instance(loss_name: str, seed: int):
    """(f, leaf tensors) for one seeded micro-instance."""
    g = torch.Generator().manual_seed(10_000 * (LOSS_NAMES.index(loss_name) + 1) + seed)

    if loss_name == "supcon":
        z = _leaf(g, 4, 3)
        labels = torch.tensor([0, 0, 1, 1])
        return (lambda: O.supcon_loss(_unit(z), labels)), [z]
    if loss_name == "ssl":
        fast, slow = _leaf(g, 4, 3), _leaf(g, 4, 3)
        return (lambda: O.ssl_loss(fast, slow)), [fast, slow]
    if loss_name == "ce":
        logits = _leaf(g, 4, 5, scale=2.0)
        labels = torch.randint(0, 5, (4,), generator=g)
        return (lambda: O.ce_loss(logits, labels)), [logits]
    if loss_name == "kd":
        z_t = torch.randn(4, 5, generator=g, dtype=torch.float64) * 3
        z_s = _leaf(g, 4, 5, scale=3.0)
        return (lambda: O.kd_loss(z_t, z_s)), [z_s]
    if loss_name == "teacher_total":
        logits = _leaf(g, 4, 5, scale=2.0)
        emb = _leaf(g, 8, 3)
        labels = torch.tensor([0, 0, 1, 1])
        return (lambda: O.teacher_loss(logits, labels, _unit(emb), labels.repeat_interleave(2)).total), [logits, emb]
    if loss_name == "student_total":
        z_t = torch.randn(4, 5, generator=g, dtype=torch.float64) * 3
        z_s = _leaf(g, 4, 5, scale=3.0)
        labels = torch.randint(0, 5, (4,), generator=g)
        return (lambda: O.student_loss(z_t, z_s, labels).total), [z_s]

    enc, head = _micro_models()
    dark = torch.rand(4, 3, 4, 8, 8, generator=g, dtype=torch.float64)
    labels = torch.tensor([0, 0, 1, 2])
    if loss_name == "end_to_end_teacher":
        ret = retinex_tensor(dark, RetinexParams(smoothing_radius=1))
        model = _live_model(lambda s: TeacherModel(enc, head, "dff", seed=s), seed, dark, ret)

        def f():
            logits, e_d, e_r = model(dark, ret)
            emb = torch.stack([e_d, e_r], 1).reshape(-1, e_d.shape[-1])
            return O.teacher_loss(logits, labels, emb, labels.repeat_interleave(2)).total

        return f, list(model.parameters())
    if loss_name == "end_to_end_student":
        model = _live_model(lambda s: StudentModel(enc, head, seed=s), seed, dark)
        z_t = torch.randn(4, 3, generator=g, dtype=torch.float64) * 3
        return (lambda: O.student_loss(z_t, model(dark), labels).total), list(model.parameters())
    raise ValueError(f"unknown loss_name {loss_name!r}; expected one of {LOSS_NAMES}")


def grad_check(loss_name: str, instance_seed: int = 0) -> GradReport:
    if loss_name not in LOSS_NAMES:
        raise ValueError(f"unknown loss_name {loss_name!r}; expected one of {LOSS_NAMES}")
    t0 = time.perf_counter()
    f, tensors = _instance(loss_name, instance_seed)
    err, n = _compare(f, tensors)
    return GradReport(loss_name, instance_seed, err, n, time.perf_counter() - t0)


def grad_suite(n_instances: int = 20, names=LOSS_NAMES) -> list[GradReport]:
    return [grad_check(name, s) for name in names for s in range(n_instances)]


__all__ = ["GradReport", "grad_check", "grad_suite", "finite_difference", "relative_error",
           "LOSS_NAMES", "STEP", "TOLERANCE"]

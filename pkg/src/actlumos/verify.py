"""Release gate: loss oracles, gradient checks, sampler/fusion/retinex properties and pipeline contracts.

``run_checks`` returns one ``CheckResult`` per named check. Loss references
here are written independently of ``objectives`` (plain Python/numpy loops
over the defining sums), and every loss call goes through the
``objectives`` module so a patched loss is what gets checked.
"""

from __future__ import annotations

import contextlib
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import enhance, gradcheck
from . import objectives as O
from .checkpoint import Checkpoint
from .clipgen import IlluminationProfile, generate_clip, generate_dataset, load_dataset, save_dataset
from .encoder import Encoder, EncoderConfig
from .fusion import DFFGate, dff_fuse
from .sampler import AugmentParams, balanced_batch, two_view
from .trainer import ClipBank, TrainConfig, distill_student, evaluate, load_model, train_teacher


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


# independent references


def ref_supcon(z: np.ndarray, labels, tau: float) -> float:
    B = len(labels)
    total = 0.0
    for i in range(B):
        denom = sum(math.exp(z[i] @ z[a] / tau) for a in range(B) if a != i)
        pos = [p for p in range(B) if p != i and labels[p] == labels[i]]
        total += -sum(math.log(math.exp(z[i] @ z[p] / tau) / denom) for p in pos) / len(pos)
    return total / B


def ref_ssl(fast: np.ndarray, slow: np.ndarray, tau: float) -> float:
    f = fast / np.linalg.norm(fast, axis=1, keepdims=True)
    s = slow / np.linalg.norm(slow, axis=1, keepdims=True)
    B = len(f)
    total = 0.0
    for i in range(B):
        p = lambda u, v: math.exp(u @ v / tau)  # noqa: E731
        num = p(f[i], s[i])
        denom = num + sum(p(f[i], f[q]) + p(f[i], s[q]) for q in range(B) if q != i)
        total += -math.log(num / denom)
    return total / B


def ref_kd(z_t, z_s, tau: float) -> float:
    def soft(z):
        e = [math.exp(v / tau) for v in z]
        return [v / sum(e) for v in e]

    pt, ps = soft(z_t), soft(z_s)
    return tau * tau * sum(a * math.log(a / b) for a, b in zip(pt, ps))


def _t(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _unit(rng, B, C) -> np.ndarray:
    z = rng.standard_normal((B, C))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _close(a, b, tol) -> tuple[bool, str]:
    err = abs(float(a) - float(b))
    return err <= tol, f"value={float(a):.12g} expected={float(b):.12g} err={err:.1e}"


# loss oracles


def check_supcon_uniform():
    z = np.tile([[1.0, 0.0, 0.0]], (16, 1))
    labels = np.repeat(np.arange(4), 4)
    return _close(O.supcon_loss(_t(z), torch.as_tensor(labels)), math.log(15), 1e-9)


def check_supcon_two_class():
    z = _t([[1, 0], [1, 0], [0, 1], [0, 1]])
    return _close(O.supcon_loss(z, torch.tensor([0, 0, 1, 1]), 0.1), math.log(1 + 2 * math.exp(-10)), 1e-9)


def check_supcon_reference():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        z = _unit(rng, 16, 5)
        labels = np.repeat(rng.permutation(8)[:4], 4)
        worst = max(worst, abs(float(O.supcon_loss(_t(z), torch.as_tensor(labels))) - ref_supcon(z, labels, 0.1)))
    return worst < 1e-9, f"max |impl - reference| over 20 batches = {worst:.1e}"


def check_supcon_grad_reference():
    """Autograd of the implementation vs central differences of the independent reference."""
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(5):
        z = _unit(rng, 8, 3)
        labels = [0, 0, 1, 1, 2, 2, 3, 3]
        zt = _t(z).requires_grad_(True)
        O.supcon_loss(zt, torch.as_tensor(labels)).backward()
        fd = np.zeros_like(z)
        for idx in np.ndindex(*z.shape):
            zp, zm = z.copy(), z.copy()
            zp[idx] += 1e-5
            zm[idx] -= 1e-5
            fd[idx] = (ref_supcon(zp, labels, 0.1) - ref_supcon(zm, labels, 0.1)) / 2e-5
        worst = max(worst, gradcheck.relative_error(zt.grad, _t(fd)))
    return worst < 1e-4, f"max relative error = {worst:.1e}"


def check_supcon_tau_limit():
    z = _unit(np.random.default_rng(2), 8, 4)
    return _close(O.supcon_loss(_t(z), torch.tensor([0, 0, 1, 1, 2, 2, 3, 3]), 1e6), math.log(7), 1e-5)


def check_ssl_micro():
    z = _t([[1, 0], [0, 1]])
    return _close(O.ssl_loss(z, z, 0.5), math.log(1 + 2 * math.exp(-2)), 1e-9)


def check_ssl_orthogonal():
    B, tau = 6, 0.3
    z = _t(np.eye(B))
    return _close(O.ssl_loss(z, z, tau), math.log(1 + 2 * (B - 1) * math.exp(-1 / tau)), 1e-9)


def check_ssl_reference():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        f, s = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
        worst = max(worst, abs(float(O.ssl_loss(_t(f), _t(s), 0.1)) - ref_ssl(f, s, 0.1)))
    return worst < 1e-9, f"max |impl - reference| over 20 batches = {worst:.1e}"


def check_ssl_invariances():
    rng = np.random.default_rng(4)
    f, s = _t(rng.standard_normal((5, 3))), _t(rng.standard_normal((5, 3)))
    base = O.ssl_per_anchor(f, s)
    scale = _t(rng.uniform(0.1, 10, (5, 1)))
    perm = torch.as_tensor(rng.permutation(5))
    e1 = float((O.ssl_per_anchor(f * scale, s) - base).abs().max())
    e2 = float((O.ssl_per_anchor(f[perm], s[perm]) - base[perm]).abs().max())
    return max(e1, e2) < 1e-9, f"row-scale err={e1:.1e} permutation err={e2:.1e}"


def check_kd_example():
    value = float(O.kd_loss(_t([[4.0, 0.0]]), _t([[0.0, 0.0]]), 4.0))
    return _close(value, ref_kd([4, 0], [0, 0], 4.0), 1e-3)


def check_kd_stationary():
    z = _t(np.random.default_rng(5).standard_normal((3, 5)))
    zs = z.clone().requires_grad_(True)
    O.kd_loss(z, zs).backward()
    fd = gradcheck.finite_difference(lambda: O.kd_loss(z, zs), [zs])[0]
    a, n = float(zs.grad.abs().max()), float(fd.abs().max())
    return a < 1e-6 and n < 1e-6, f"max|autograd|={a:.1e} max|fd|={n:.1e}"


def check_kd_teacher_detached():
    zt = _t([[1.0, 2.0, 0.5]]).requires_grad_(True)
    zs = _t([[0.0, 1.0, 0.0]]).requires_grad_(True)
    O.kd_loss(zt, zs).backward()
    return zt.grad is None and zs.grad is not None, f"teacher grad={zt.grad}"


def check_ce_uniform():
    K = 7
    return _close(O.ce_loss(torch.zeros(3, K, dtype=torch.float64), torch.tensor([0, 3, 6])), math.log(K), 1e-9)


def check_composites():
    rng = np.random.default_rng(6)
    logits, labels = _t(rng.standard_normal((4, 3))), torch.tensor([0, 1, 2, 1])
    z = _t(_unit(rng, 8, 3))
    emb_labels = torch.tensor([0, 0, 1, 1, 2, 2, 1, 1])
    t = O.teacher_loss(logits, labels, z, emb_labels, lambda_sup=0.1)
    e1 = abs(float(t.total) - float(O.ce_loss(logits, labels)) - 0.1 * float(O.supcon_loss(z, emb_labels)))
    e0 = abs(float(O.teacher_loss(logits, labels, z, emb_labels, lambda_sup=0.0).total)
             - float(O.ce_loss(logits, labels)))
    zt = _t(rng.standard_normal((4, 3)))
    s = O.student_loss(zt, logits, labels)
    e2 = abs(float(s.total) - float(O.ce_loss(logits, labels)) - float(O.kd_loss(zt, logits)))
    return max(e0, e1, e2) < 1e-12, f"teacher err={e1:.1e} lambda0 err={e0:.1e} student err={e2:.1e}"


# sampler, fusion, retinex, encoder


def check_batch_construction():
    labels = {f"c{k}_{j}": k for k in range(10) for j in range(28)}
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(10_000):
        batch = balanced_batch(labels, 4, 2, rng)
        rows = [k for _, k in batch for _view in range(2)]
        counts = np.bincount(rows)
        pos = counts[rows] - 1
        neg = len(rows) - counts[rows]
        bad += int(np.any(pos != 3) or np.any(neg != 12) or len({c for c, _ in batch}) != 8)
    return bad == 0, f"violations={bad} over 10000 batches"


def check_gate_simplex():
    g = torch.Generator().manual_seed(8)
    gate = DFFGate(6).double()
    worst = 0.0
    for _ in range(1000):
        d = torch.randn(5, 6, generator=g, dtype=torch.float64) * 3
        r = torch.randn(5, 6, generator=g, dtype=torch.float64) * 3
        with torch.no_grad():
            w = gate(d, r)
        worst = max(worst, float((w.sum(-1) - 1).abs().max()), float((-w).clamp(min=0).max()))
    return worst < 1e-6, f"max simplex violation={worst:.1e} over 1000 evaluations"


def check_fusion_endpoints_bounds():
    g = torch.Generator().manual_seed(9)
    d, r = torch.randn(4, 5, 6, generator=g), torch.randn(4, 5, 6, generator=g)
    one, zero = torch.ones(4, 5, 1), torch.zeros(4, 5, 1)
    exact = torch.equal(dff_fuse(d, r, torch.cat([one, zero], -1)), d) and \
        torch.equal(dff_fuse(d, r, torch.cat([zero, one], -1)), r)
    w = torch.softmax(torch.randn(4, 5, 2, generator=g), -1)
    f = dff_fuse(d, r, w)
    within = bool(((f >= torch.minimum(d, r) - 1e-6) & (f <= torch.maximum(d, r) + 1e-6)).all())
    return exact and within, f"endpoints exact={exact} within bounds={within}"


def check_retinex_properties():
    rng = np.random.default_rng(10)
    clips = rng.uniform(0, 1, (1000, 3, 2, 8, 8)) * rng.uniform(0, 1, (1000, 1, 1, 1, 1))
    out = enhance.retinex_array(clips)
    finite = bool(np.isfinite(out).all())
    monotone = bool((out >= clips - 1e-12).all())
    uniform = enhance.retinex_array(np.full((3, 1, 8, 8), 0.2), enhance.RetinexParams(illum_gamma=1.0))
    err = float(np.abs(uniform - 1.0).max())
    return finite and monotone and err < 1e-6, f"finite={finite} output>=input={monotone} uniform-0.2 err={err:.1e}"


def check_encoder_contract():
    cfg = EncoderConfig(channels=4)
    enc = Encoder(cfg, seed=0)
    g = torch.Generator().manual_seed(0)
    with torch.no_grad():
        fm = enc(torch.rand(2, 3, 16, 32, 32, generator=g))
        for p in enc.parameters():
            p.zero_()
        zero = float(enc(torch.rand(1, 3, 16, 32, 32, generator=g)).abs().max())
    shape_ok = tuple(fm.shape) == (2, 4, 8, 4, 4)
    return shape_ok and zero == 0.0, f"shape={tuple(fm.shape)} zero-weight max|out|={zero}"


def check_two_view_identity():
    clip = torch.rand(3, 8, 16, 16, generator=torch.Generator().manual_seed(0))
    p = AugmentParams(crop_scale_range=(1.0, 1.0), flip_prob=0.0, fast_stride=1, slow_stride=1, out_frames=8)
    v1, v2 = two_view(clip, p, np.random.default_rng(0))
    ok = torch.equal(v1, clip) and torch.equal(v2, clip)
    return ok, f"identity augmentation reproduces the clip: {ok}"


# pipeline contracts (tiny configs)


_TINY = dict(epochs=1, channels=4, head_layers=1, head_heads=1, B_kd=8, B_u=4)


def _tiny_bank() -> ClipBank:
    return ClipBank.from_dataset(generate_dataset(4, 5, (16, 16, 16), 0))


def check_clipgen():
    prof = IlluminationProfile(0.3, [(4, 8, 0.05)], 0.01)
    a, b = generate_clip(0, prof, 5, (8, 16, 16)), generate_clip(0, prof, 5, (8, 16, 16))
    c = generate_clip(1, prof, 5, (8, 16, 16))
    frac = float(np.mean(a.data != c.data))
    same = np.array_equal(a.data, b.data)
    return same and frac >= 0.01, f"deterministic={same} class0 vs class1 differing voxels={frac:.3f}"


def check_manifest_roundtrip():
    d = generate_dataset(10, 40, (16, 32, 32), 1)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_dataset(d, Path(tmp) / "data.json")
        back = load_dataset(path)
    return back == d and len(d.clips) == 400, f"clips={len(d.clips)} round-trip equal={back == d}"


def check_frozen_teacher_single_stream():
    bank = _tiny_bank()
    teacher = train_teacher(TrainConfig(stage="teacher", seed=0, **_TINY), bank)
    before = {k: v.numpy().tobytes() for k, v in teacher.tensors.items()}
    student = distill_student(TrainConfig(stage="distill", seed=0, **_TINY), bank, teacher)
    same = before == {k: v.numpy().tobytes() for k, v in teacher.tensors.items()}
    reads = student.meta["student_retinex_reads"]
    return same and reads == 0, f"teacher bytes unchanged={same} student retinex reads={reads}"


def check_determinism_and_roundtrip():
    bank = _tiny_bank()
    cfg = TrainConfig(stage="teacher", seed=3, **_TINY)
    a, b = train_teacher(cfg, bank), train_teacher(cfg, bank)
    same_trace = a.history[0]["step_losses"] == b.history[0]["step_losses"]
    same_hash = a.sha256() == b.sha256()
    with tempfile.TemporaryDirectory() as tmp:
        back = Checkpoint.load(a.save(Path(tmp) / "t.ckpt"))
    x = bank.dark[:2]
    with torch.no_grad():
        m1, m2 = load_model(a), load_model(back)
        l1, l2 = m1(x, bank.retinex[:2])[0], m2(x, bank.retinex[:2])[0]
    bitwise = torch.equal(l1, l2)
    return same_trace and same_hash and bitwise, \
        f"loss trace equal={same_trace} ckpt hash equal={same_hash} reload logits bit-identical={bitwise}"


def check_evaluate_topk():
    bank = _tiny_bank()
    m = evaluate(train_teacher(TrainConfig(stage="teacher", seed=1, **_TINY), bank), bank, "test")
    return m.top5 >= m.top1, f"top1={m.top1:.3f} top5={m.top5:.3f}"


def _grad_check(name: str, n: int):
    def run():
        reports = [gradcheck.grad_check(name, s) for s in range(n)]
        worst = max(r.max_rel_error for r in reports)
        return worst < gradcheck.TOLERANCE, f"max relative error={worst:.1e} over {n} instances"
    return run


def all_checks(grad_instances: int = 20) -> list[tuple[str, Callable]]:
    checks = [
        ("loss.supcon_uniform_log15", check_supcon_uniform),
        ("loss.supcon_two_class_micro", check_supcon_two_class),
        ("loss.supcon_vs_reference", check_supcon_reference),
        ("loss.supcon_grad_vs_reference", check_supcon_grad_reference),
        ("loss.supcon_tau_limit", check_supcon_tau_limit),
        ("loss.ssl_micro", check_ssl_micro),
        ("loss.ssl_orthogonal_closed_form", check_ssl_orthogonal),
        ("loss.ssl_vs_reference", check_ssl_reference),
        ("loss.ssl_scale_and_permutation", check_ssl_invariances),
        ("loss.kd_example", check_kd_example),
        ("loss.kd_stationary_point", check_kd_stationary),
        ("loss.kd_teacher_detached", check_kd_teacher_detached),
        ("loss.ce_uniform_logK", check_ce_uniform),
        ("loss.composites", check_composites),
    ]
    checks += [(f"grad.{name}", _grad_check(name, grad_instances)) for name in gradcheck.LOSS_NAMES]
    checks += [
        ("sampler.batch_construction", check_batch_construction),
        ("sampler.two_view_identity", check_two_view_identity),
        ("fusion.gate_simplex", check_gate_simplex),
        ("fusion.endpoints_and_bounds", check_fusion_endpoints_bounds),
        ("enhance.retinex_properties", check_retinex_properties),
        ("encoder.shape_and_zero_weights", check_encoder_contract),
        ("clipgen.determinism_and_class_difference", check_clipgen),
        ("clipgen.manifest_roundtrip", check_manifest_roundtrip),
        ("trainer.frozen_teacher_single_stream", check_frozen_teacher_single_stream),
        ("trainer.determinism_and_checkpoint_roundtrip", check_determinism_and_roundtrip),
        ("trainer.evaluate_top5_ge_top1", check_evaluate_topk),
    ]
    return checks


def _supcon_without_self_exclusion(embeddings, labels, tau=O.SUPCON_TAU):
    """SupCon with the anchor left in its own denominator (a != i dropped)."""
    z = embeddings
    labels = torch.as_tensor(labels, device=z.device)
    B = z.shape[0]
    self_mask = torch.eye(B, dtype=torch.bool, device=z.device)
    pos_mask = (labels[:, None] == labels[None, :]) & ~self_mask
    sim = z @ z.T / tau
    log_prob = (sim - torch.logsumexp(sim, dim=1, keepdim=True)).masked_fill(~pos_mask, 0.0)
    return (-log_prob.sum(1) / pos_mask.sum(1)).mean()


MUTATIONS = {"supcon_self_exclusion": ("supcon_loss", _supcon_without_self_exclusion)}


@contextlib.contextmanager
def mutated(name: str | None):
    if name is None:
        yield
        return
    if name not in MUTATIONS:
        raise ValueError(f"unknown mutation {name!r}; choose from {sorted(MUTATIONS)}")
    attr, fn = MUTATIONS[name]
    orig = getattr(O, attr)
    setattr(O, attr, fn)
    try:
        yield
    finally:
        setattr(O, attr, orig)


def run_checks(only=None, grad_instances: int = 20, mutation: str | None = None,
               emit: Callable[[str], None] | None = None) -> list[CheckResult]:
    """Run the named checks (all by default); exceptions count as failures."""
    results = []
    with mutated(mutation):
        for name, fn in all_checks(grad_instances):
            if only is not None and not any(name.startswith(p) for p in only):
                continue
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashing check is a failed check
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            res = CheckResult(name, bool(ok), detail, time.perf_counter() - t0)
            results.append(res)
            if emit is not None:
                emit(res.line())
    return results


__all__ = ["CheckResult", "run_checks", "all_checks", "mutated", "MUTATIONS", "ref_supcon", "ref_ssl", "ref_kd"]

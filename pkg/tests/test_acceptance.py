"""One test per acceptance criterion; each prints a single PASS/FAIL line.

The ordering benchmark trains every ablation cell for seeds 1, 2, 3 at desk
scale (about 45 CPU-minutes from scratch on one core). Trained cells are
cached under ``$ACTLUMOS_ACCEPTANCE_DIR`` (default ``<repo>/acceptance_runs``)
and reused on later runs; the budget check reads the CPU time recorded when
each cell was trained.
"""

import math
import os
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
import torch

from actlumos import ablation, enhance, gradcheck
from actlumos.fusion import DFFGate, dff_fuse
from actlumos.objectives import ce_loss, kd_loss, positive_negative_sets, ssl_loss, supcon_loss
from actlumos.sampler import balanced_batch
from actlumos.trainer import ClipBank, TrainConfig, distill_student, pretrain_student_ssl, train_teacher
from actlumos.verify import ref_kd

from conftest import ACCEPTANCE_LINES, TINY

SEEDS = (1, 2, 3)
RUN_DIR = Path(os.environ.get("ACTLUMOS_ACCEPTANCE_DIR", Path(__file__).resolve().parents[1] / "acceptance_runs"))
MARGIN_TOL = 1e-9  # float slack on point differences


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{name}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_headline_numbers_not_reproducible():
    # the real-dataset accuracies need data and a pretrained backbone that are out of
    # scope; the substitutes are the property and ordering suites in this file
    substitutes = {"kd", "fusion", "ssl", "supcon"}
    ok = substitutes <= set(ablation.SUITES) and len(gradcheck.LOSS_NAMES) == 8
    report("headline", ok, "real-dataset headline accuracies not reproducible at desk scale; "
                           "substituted by property, gradient and ordering suites (no values asserted)")


def test_gradient_suite():
    t0 = time.process_time()
    reports = gradcheck.grad_suite(20)
    cpu = time.process_time() - t0
    worst = {}
    for r in reports:
        worst[r.loss_name] = max(worst.get(r.loss_name, 0.0), r.max_rel_error)
    counts = Counter(r.loss_name for r in reports)
    ok = all(v < 1e-4 for v in worst.values()) and set(counts.values()) == {20} and len(counts) == 8 \
        and cpu < 120
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report("gradient suite", ok, f"{detail}; 8x20 instances in {cpu:.1f} CPU-s (limit 120)")


def test_loss_oracles():
    D = torch.float64
    labels16 = torch.tensor([k for k in range(4) for _ in range(4)])
    z = torch.zeros(16, 4, dtype=D)
    z[:, 0] = 1
    e1 = abs(float(supcon_loss(z, labels16)) - math.log(15))
    micro = torch.tensor([[1.0, 0], [1, 0], [0, 1], [0, 1]], dtype=D)
    e2 = abs(float(supcon_loss(micro, torch.tensor([0, 0, 1, 1]), 0.1)) - math.log(1 + 2 * math.exp(-10)))
    s = torch.tensor([[1.0, 0], [0, 1]], dtype=D)
    e3 = abs(float(ssl_loss(s, s, 0.5)) - math.log(1 + 2 * math.exp(-2)))
    kd = float(kd_loss(torch.tensor([4.0, 0], dtype=D), torch.tensor([0.0, 0], dtype=D), 4.0))
    e4 = abs(kd - ref_kd([4.0, 0.0], [0.0, 0.0], 4.0))
    e5 = abs(float(ce_loss(torch.zeros(10, dtype=D), 0)) - math.log(10))
    ok = max(e1, e2, e3, e5) < 1e-9 and e4 < 1e-3
    report("loss oracles", ok, f"supcon log15 err={e1:.1e}; supcon micro err={e2:.1e}; ssl micro err={e3:.1e}; "
                               f"kd={kd:.6f} vs reference err={e4:.1e}; ce logK err={e5:.1e}")


def test_batch_construction():
    labels = {f"c{k}_{j}": k for k in range(10) for j in range(28)}
    rng = np.random.default_rng(0)
    violations = 0
    for _ in range(10_000):
        batch = balanced_batch(labels, 4, 2, rng)
        # two views per clip, Table-1 order
        rows = [k for _, k in batch for _ in range(2)]
        for i in range(len(rows)):
            P, N = positive_negative_sets(rows, i)
            violations += (len(P), len(N)) != (3, 12)
    report("batch construction", violations == 0, f"10000 batches (n_c=4, n_v=2), violations={violations}")


def test_fusion_properties():
    g = torch.Generator().manual_seed(0)
    gate = DFFGate(8).double()
    simplex = endpoint = bound = 0.0
    with torch.no_grad():
        for _ in range(1000):
            d = torch.randn(8, 8, generator=g, dtype=torch.float64) * 3
            r = torch.randn(8, 8, generator=g, dtype=torch.float64) * 3
            w = gate(d, r)
            simplex = max(simplex, float((w.sum(-1) - 1).abs().max()), float((-w).clamp(min=0).max()))
            fused = dff_fuse(d, r, w)
            lo, hi = torch.minimum(d, r), torch.maximum(d, r)
            bound = max(bound, float((lo - fused).clamp(min=0).max()), float((fused - hi).clamp(min=0).max()))
            one, zero = torch.ones(8, 1, dtype=torch.float64), torch.zeros(8, 1, dtype=torch.float64)
            endpoint = max(endpoint, float((dff_fuse(d, r, torch.cat([one, zero], 1)) - d).abs().max()),
                           float((dff_fuse(d, r, torch.cat([zero, one], 1)) - r).abs().max()))
    ok = simplex <= 1e-6 and endpoint == 0.0 and bound <= 1e-12
    report("fusion properties", ok, f"1000 gate evaluations: simplex violation={simplex:.1e}, "
                                    f"endpoint error={endpoint:.1e}, bound violation={bound:.1e}")


@pytest.fixture(scope="module")
def small_run(tiny_bank):
    cfg = lambda stage: TrainConfig.from_dict({**TINY, "stage": stage})  # noqa: E731
    teacher = train_teacher(cfg("teacher"), tiny_bank)
    ssl = pretrain_student_ssl(cfg("ssl"), ClipBank.unlabeled_pool(tiny_bank))
    return cfg, teacher, ssl


def test_frozen_teacher_single_stream(tiny_bank, small_run):
    cfg, teacher, ssl = small_run
    before = teacher.sha256()
    student = distill_student(cfg("distill"), tiny_bank, teacher, ssl)
    reads = tiny_bank.retinex_reads
    calls = enhance.CALLS["retinex"]
    from actlumos.trainer import evaluate
    evaluate(student, tiny_bank, "test")
    eval_reads = (tiny_bank.retinex_reads - reads) + (enhance.CALLS["retinex"] - calls)
    ok = teacher.sha256() == before and student.meta["student_retinex_reads"] == 0 and eval_reads == 0
    report("frozen teacher / single stream", ok,
           f"teacher bytes unchanged={teacher.sha256() == before}; student retinex reads: "
           f"train={student.meta['student_retinex_reads']} eval={eval_reads}")


def test_determinism(tiny_bank, small_run):
    cfg, teacher, ssl = small_run
    t2 = train_teacher(cfg("teacher"), tiny_bank)
    s2 = pretrain_student_ssl(cfg("ssl"), ClipBank.unlabeled_pool(tiny_bank))
    d1 = distill_student(cfg("distill"), tiny_bank, teacher, ssl)
    d2 = distill_student(cfg("distill"), tiny_bank, t2, s2)
    traces = all(a.history[0]["step_losses"] == b.history[0]["step_losses"] for a, b in
                 ((teacher, t2), (ssl, s2), (d1, d2)))
    hashes = teacher.sha256() == t2.sha256() and ssl.sha256() == s2.sha256() and d1.sha256() == d2.sha256()
    report("determinism", traces and hashes,
           f"first-epoch loss traces identical={traces}; checkpoint hashes identical={hashes} (teacher, ssl, distill)")


def test_retinex_properties():
    rng = np.random.default_rng(0)
    bad = below = 0
    for _ in range(1000):
        # mix of uniform-random, dark and all-zero frames
        x = rng.random((3, 4, 16, 16)) * rng.choice([1.0, 0.05, 0.0])
        out = enhance.retinex_array(x)
        bad += int(not np.all(np.isfinite(out)))
        below += int(np.any(out < x))
    uni = enhance.retinex_array(np.full((3, 1, 16, 16), 0.2), enhance.RetinexParams(illum_gamma=1.0))
    err = float(np.abs(uni - 1.0).max())
    ok = bad == 0 and below == 0 and err <= 1e-6
    report("retinex properties", ok, f"1000 clips: non-finite={bad}, output<input={below}; uniform 0.2 -> 1 err={err:.1e}")


# ordering benchmark


@pytest.fixture(scope="module")
def suites():
    bench = ablation.Benchmark()
    results = {name: ablation.run_suite(name, SEEDS, RUN_DIR, bench) for name in ("fusion", "kd", "ssl", "supcon")}
    tables = RUN_DIR / "tables"
    for res in results.values():
        ablation.write_tables(res, tables)
    return bench, results


def _pts(res, label):
    return 100 * res.median(label)


def test_ordering_budget(suites):
    bench, _ = suites
    total = sum(sum(ablation.Runner(bench, s, RUN_DIR).train_cpu_seconds().values()) for s in SEEDS)
    minutes = total / 60
    ok = 0 < minutes <= 90
    report("ordering budget", ok, f"K={bench.classes}, {bench.classes * bench.per_class} clips, L={bench.dims[0]}, "
                                  f"{bench.dims[1]}x{bench.dims[2]}, 30 epochs, seeds {SEEDS}: "
                                  f"{minutes:.1f} CPU-min training (limit 90)")


def test_ordering_a_fusion(suites):
    f = suites[1]["fusion"]
    dff, static = _pts(f, "Teacher: DFF"), _pts(f, "Teacher: static fusion")
    dark, ret = _pts(f, "Teacher: dark only"), _pts(f, "Teacher: retinex only")
    ok = dff >= static - MARGIN_TOL and static >= max(dark, ret) - MARGIN_TOL and dff - dark >= 5 - MARGIN_TOL
    report("ordering (a) fusion", ok, f"test top-1 medians: DFF={dff:.2f} static={static:.2f} dark={dark:.2f} "
                                      f"retinex={ret:.2f}; DFF-dark={dff - dark:.2f} (need >= 5)")


def test_ordering_b_students(suites):
    kd, ssl = suites[1]["kd"], suites[1]["ssl"]
    both = _pts(kd, "Student: SSL + KD")
    kd_only = _pts(ssl, "Student: KD only (no SSL)")
    ssl_only = _pts(kd, "Student: SSL only (linear probe)")
    ok = both >= kd_only - MARGIN_TOL and kd_only >= ssl_only - MARGIN_TOL and both - ssl_only >= 3 - MARGIN_TOL
    report("ordering (b) students", ok, f"test top-1 medians: SSL+KD={both:.2f} KD-only={kd_only:.2f} "
                                        f"SSL-only={ssl_only:.2f}; SSL+KD - SSL-only={both - ssl_only:.2f} (need >= 3)")


def test_ordering_c_supcon(suites):
    s = suites[1]["supcon"]
    with_, without = _pts(s, "Teacher with SupCon"), _pts(s, "Teacher without SupCon")
    report("ordering (c) supcon", with_ >= without - MARGIN_TOL,
           f"test top-1 medians: with={with_:.2f} without={without:.2f}")


def test_ordering_d_two_view(suites):
    s = suites[1]["ssl"]
    both, sp, tm = _pts(s, "SSL: spatial + temporal"), _pts(s, "SSL: spatial only"), _pts(s, "SSL: temporal only")
    ok = both >= sp - MARGIN_TOL and both >= tm - MARGIN_TOL
    report("ordering (d) two-view", ok, f"test top-1 medians: both={both:.2f} spatial={sp:.2f} temporal={tm:.2f}")

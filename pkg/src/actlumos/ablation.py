"""Ablation suites: teacher fusion, SupCon, SSL view construction and distillation.

Each suite is a list of rows; each row names one *cell* (a trained and
evaluated model) per seed. Cells are memoised on disk under
``<out>/cells`` keyed by the cell description and a hash of the benchmark
settings, so suites that share cells (the DFF teacher appears in all four)
train them once.

Per seed ``s`` the labelled benchmark is ``generate_dataset(K, per_class,
dims, s)`` from profile family A; the unlabelled SSL pool is that
dataset's train split plus a family-B dataset generated from seed
``s + POOL_SEED_OFFSET``. Model seeds equal the data seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .checkpoint import Checkpoint
from .clipgen import generate_dataset
from .trainer import (ClipBank, Metrics, TrainConfig, distill_student, evaluate, linear_probe,
                      pretrain_student_ssl, train_teacher)

POOL_SEED_OFFSET = 1000
SPLITS = ("val", "test")


@dataclass(frozen=True)
class Cell:
    kind: str  # teacher | distill | probe
    fusion: str = "dff"
    lambda_sup: float | None = None  # None: config default
    ssl_variant: str = "both"  # distill: "none" means no SSL initialisation

    @property
    def key(self) -> str:
        if self.kind == "teacher":
            sup = "default" if self.lambda_sup is None else f"{self.lambda_sup:g}"
            return f"teacher-{self.fusion}-sup{sup}"
        if self.kind == "distill":
            return f"distill-{self.fusion}-ssl{self.ssl_variant}"
        if self.kind == "probe":
            return f"probe-ssl{self.ssl_variant}"
        raise ValueError(f"unknown cell kind {self.kind!r}")


@dataclass(frozen=True)
class Row:
    label: str
    cell: Cell


SUITES: dict[str, tuple[Row, ...]] = {
    "kd": (
        Row("Teacher: DFF + SupCon", Cell("teacher")),
        Row("Student: SSL only (linear probe)", Cell("probe")),
        Row("Student: SSL + KD", Cell("distill")),
    ),
    "fusion": (
        Row("Teacher: dark only", Cell("teacher", "dark_only")),
        Row("Teacher: retinex only", Cell("teacher", "retinex_only")),
        Row("Teacher: static fusion", Cell("teacher", "static")),
        Row("Teacher: DFF", Cell("teacher", "dff")),
        Row("Student from dark-only teacher", Cell("distill", "dark_only")),
        Row("Student from retinex-only teacher", Cell("distill", "retinex_only")),
        Row("Student from static teacher", Cell("distill", "static")),
        Row("Student from DFF teacher", Cell("distill", "dff")),
    ),
    "ssl": (
        Row("Student: KD only (no SSL)", Cell("distill", ssl_variant="none")),
        Row("SSL: spatial only", Cell("distill", ssl_variant="spatial_only")),
        Row("SSL: temporal only", Cell("distill", ssl_variant="temporal_only")),
        Row("SSL: spatial + temporal", Cell("distill", ssl_variant="both")),
    ),
    "supcon": (
        Row("Teacher without SupCon", Cell("teacher", lambda_sup=0.0)),
        Row("Teacher with SupCon", Cell("teacher")),
    ),
}


@dataclass
class Benchmark:
    classes: int = 10
    per_class: int = 40
    dims: tuple = (16, 32, 32)
    pool_per_class: int = 40
    overrides: dict = field(default_factory=dict)  # TrainConfig fields shared by every stage
    # SSL stage only, unless overrides set "lr"; picked on validation over seeds disjoint from the reported ones
    ssl_lr: float = 3e-4

    def config(self, stage: str, seed: int, **kw) -> TrainConfig:
        staged = {"lr": self.ssl_lr} if stage == "ssl" and "lr" not in self.overrides else {}
        return TrainConfig.from_dict({**self.overrides, **staged, **kw, "stage": stage, "seed": seed})

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def worker_count(n_tasks: int) -> int:
    """Parallel workers, capped by ACTLUMOS_THREADS (default 1)."""
    raw = os.environ.get("ACTLUMOS_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"ACTLUMOS_THREADS must be a positive integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError(f"ACTLUMOS_THREADS must be a positive integer, got {raw!r}")
    return max(1, min(cap, n_tasks))


class Runner:
    """Trains and evaluates cells for one seed, memoising checkpoints and metrics."""

    def __init__(self, bench: Benchmark, seed: int, out_dir, log: Callable[[str], None] | None = None):
        self.bench, self.seed = bench, seed
        self.dir = Path(out_dir) / "cells" / bench.digest() / f"seed{seed}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.log = log or (lambda msg: None)
        self._bank: ClipBank | None = None
        self._pool: ClipBank | None = None

    @property
    def bank(self) -> ClipBank:
        if self._bank is None:
            b = self.bench
            self._bank = ClipBank.from_dataset(generate_dataset(b.classes, b.per_class, b.dims, self.seed))
        return self._bank

    @property
    def pool(self) -> ClipBank:
        if self._pool is None:
            b = self.bench
            extra = generate_dataset(b.classes, b.pool_per_class, b.dims, self.seed + POOL_SEED_OFFSET, family="B")
            labelled = ClipBank.unlabeled_pool(self.bank, split="train")
            self._pool = ClipBank.unlabeled_pool(labelled, ClipBank.from_dataset(extra), split=None)
        return self._pool

    def _cached_ckpt(self, name: str, build: Callable[[], Checkpoint]) -> Checkpoint:
        """Load ``name`` or train it; ``build`` must not train other cells (resolve those first)."""
        path = self.dir / f"{name}.ckpt"
        if path.exists():
            return Checkpoint.load(path)
        t0 = time.process_time()
        ckpt = build()
        ckpt.save(path)
        seconds = time.process_time() - t0
        self._record_time(name, seconds)
        self.log(f"seed={self.seed} trained {name} in {seconds:.1f} CPU-s")
        return ckpt

    def _record_time(self, name: str, seconds: float) -> None:
        path = self.dir / "train_cpu_seconds.json"
        times = json.loads(path.read_text()) if path.exists() else {}
        times[name] = seconds
        path.write_text(json.dumps(times, indent=1, sort_keys=True))

    def train_cpu_seconds(self) -> dict[str, float]:
        """CPU seconds spent training each cached checkpoint of this seed."""
        path = self.dir / "train_cpu_seconds.json"
        return json.loads(path.read_text()) if path.exists() else {}

    def teacher(self, fusion: str = "dff", lambda_sup: float | None = None) -> Checkpoint:
        kw = {"fusion_variant": fusion}
        if lambda_sup is not None:
            kw["lambda_sup"] = lambda_sup
        cfg = self.bench.config("teacher", self.seed, **kw)
        return self._cached_ckpt(Cell("teacher", fusion, lambda_sup).key, lambda: train_teacher(cfg, self.bank))

    def ssl(self, variant: str = "both") -> Checkpoint:
        cfg = self.bench.config("ssl", self.seed, ssl_variant=variant)
        return self._cached_ckpt(f"ssl-{variant}", lambda: pretrain_student_ssl(cfg, self.pool))

    def model(self, cell: Cell) -> Checkpoint:
        if cell.kind == "teacher":
            return self.teacher(cell.fusion, cell.lambda_sup)
        if cell.kind == "probe":
            cfg = self.bench.config("ssl", self.seed, ssl_variant=cell.ssl_variant)
            ssl = self.ssl(cell.ssl_variant)
            return self._cached_ckpt(cell.key, lambda: linear_probe(cfg, self.bank, ssl))
        if cell.kind == "distill":
            ssl = None if cell.ssl_variant == "none" else self.ssl(cell.ssl_variant)
            teacher = self.teacher(cell.fusion)
            cfg = self.bench.config("distill", self.seed, ssl_variant=cell.ssl_variant)
            return self._cached_ckpt(cell.key, lambda: distill_student(cfg, self.bank, teacher, ssl))
        raise ValueError(f"unknown cell kind {cell.kind!r}")

    def metrics(self, cell: Cell) -> dict:
        path = self.dir / f"{cell.key}.json"
        if path.exists():
            return json.loads(path.read_text())
        ckpt = self.model(cell)
        out = {}
        for split in SPLITS:
            m: Metrics = evaluate(ckpt, self.bank, split)
            out[split] = {"top1": m.top1, "top5": m.top5}
        out["student_retinex_reads"] = ckpt.meta.get("student_retinex_reads")
        path.write_text(json.dumps(out, sort_keys=True))
        return out


def _run_seed(args) -> tuple[int, dict]:
    bench, seed, cells, out_dir = args
    torch.set_num_threads(1)
    runner = Runner(bench, seed, out_dir, log=lambda m: print(m, flush=True))
    return seed, {c.key: runner.metrics(c) for c in cells}


def run_cells(cells, seeds, out_dir, bench: Benchmark | None = None) -> dict[int, dict]:
    """Metrics for every (cell, seed); seeds run in parallel up to ACTLUMOS_THREADS workers."""
    bench = bench or Benchmark()
    cells = list(dict.fromkeys(cells))
    tasks = [(bench, s, cells, str(out_dir)) for s in seeds]
    n = worker_count(len(tasks))
    if n == 1:
        results = [_run_seed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(_run_seed, tasks))
    return dict(results)


@dataclass
class SuiteResult:
    suite: str
    seeds: list
    rows: list  # [{"label", "cell", "median": {split: {top1, top5}}, "per_seed": {seed: ...}}]

    def row(self, label: str) -> dict:
        for r in self.rows:
            if r["label"] == label:
                return r
        raise KeyError(label)

    def median(self, label: str, split: str = "test", metric: str = "top1") -> float:
        return self.row(label)["median"][split][metric]


def run_suite(name: str, seeds, out_dir, bench: Benchmark | None = None) -> SuiteResult:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    seeds = [int(s) for s in seeds]
    rows = SUITES[name]
    per_seed = run_cells([r.cell for r in rows], seeds, out_dir, bench)
    out_rows = []
    for r in rows:
        raw = {s: per_seed[s][r.cell.key] for s in seeds}
        med = {sp: {m: float(np.median([raw[s][sp][m] for s in seeds])) for m in ("top1", "top5")}
               for sp in SPLITS}
        out_rows.append({"label": r.label, "cell": r.cell.key, "median": med, "per_seed": raw})
    return SuiteResult(name, seeds, out_rows)


_COLUMNS = [f"{sp}_{m}" for sp in SPLITS for m in ("top1", "top5")]


def write_tables(result: SuiteResult, out_dir) -> dict[str, Path]:
    """``<suite>.csv`` (medians), ``<suite>.txt`` (aligned) and ``<suite>_raw.json`` (per seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = [[100 * r["median"][c.split("_")[0]][c.split("_")[1]] for c in _COLUMNS] for r in result.rows]

    csv_path = out / f"{result.suite}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *_COLUMNS])
        for r, vals in zip(result.rows, values):
            w.writerow([r["label"], *(f"{v:.2f}" for v in vals)])

    width = max(len(r["label"]) for r in result.rows)
    lines = [f"suite={result.suite} seeds={','.join(map(str, result.seeds))} (median top-k %, n={len(result.seeds)})",
             f"{'row':<{width}}  " + "  ".join(f"{c:>10}" for c in _COLUMNS)]
    for r, vals in zip(result.rows, values):
        lines.append(f"{r['label']:<{width}}  " + "  ".join(f"{v:>10.2f}" for v in vals))
    txt_path = out / f"{result.suite}.txt"
    txt_path.write_text("\n".join(lines) + "\n")

    raw_path = out / f"{result.suite}_raw.json"
    raw_path.write_text(json.dumps(asdict(result), indent=1, sort_keys=True))
    return {"csv": csv_path, "txt": txt_path, "raw": raw_path}


__all__ = ["SUITES", "Cell", "Row", "Benchmark", "Runner", "SuiteResult", "run_cells", "run_suite",
           "write_tables", "worker_count", "POOL_SEED_OFFSET"]

"""Command-line entry point: gen-data, enhance, train, evaluate, ablate, verify.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 missing artifact.
Every command writes one ``<command>.manifest.json`` (a RunManifest) into its
output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from . import ablation, enhance
from .checkpoint import Checkpoint, CheckpointError
from .clipgen import ManifestError, generate_dataset, load_dataset, save_dataset
from .trainer import (ClipBank, TrainConfig, distill_student, evaluate, linear_probe, pretrain_student_ssl,
                      train_teacher)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_MISSING = 0, 1, 2, 3


class MissingArtifact(Exception):
    pass


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    output_hashes: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        self.output_hashes = {k: content_hash(v) for k, v in self.outputs.items()}
        path = Path(out_dir) / f"{self.command}.manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True))
        return path


def content_hash(path) -> str:
    """sha256 of a file, or of a directory's (relative name, file hash) listing."""
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(str(p.relative_to(path)).encode() + b"\0" + content_hash(p).encode())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"{what} not found: {p}")
    return p


def _dims(text: str) -> tuple[int, int, int]:
    try:
        L, H, W = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like LxHxW, got {text!r}") from None
    return L, H, W


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a comma-separated integer list, got {text!r}") from None


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    raw = _require(path, "config file").read_text()
    try:
        d = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return d


def _load_data(path) -> ClipBank:
    return ClipBank.from_dataset(load_dataset(_require(path, "dataset manifest")))


def _load_ckpt(path, what: str) -> Checkpoint:
    return Checkpoint.load(_require(path, what))


def epoch_line(rec: dict) -> str:
    loss = rec["loss"].get("total", next(iter(rec["loss"].values()), float("nan")))
    top1 = rec.get("val_top1")
    return (f"epoch={rec['epoch']} stage={rec['stage']} loss={loss:.4f} "
            f"top1={'na' if top1 is None else f'{top1:.4f}'}")


def _print_epoch(rec: dict) -> None:
    print(epoch_line(rec), flush=True)


# commands


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    t0 = time.time()
    ds = generate_dataset(args.classes, args.per_class, args.dims, args.seed, family=args.family)
    path = save_dataset(ds, out / "dataset.json")
    print(f"wrote {len(ds.clips)} clips (K={ds.K}, dims={'x'.join(map(str, ds.dims))}) to {path}")
    RunManifest("gen-data", {"classes": args.classes, "per_class": args.per_class, "seed": args.seed,
                             "dims": list(args.dims), "family": args.family},
                outputs={"dataset": str(path)}, wall_clock_s=time.time() - t0).write(out)
    return EXIT_OK


def cmd_enhance(args) -> int:
    out = Path(args.out)
    t0 = time.time()
    ds = load_dataset(_require(args.input, "dataset manifest"))
    if args.mode == "gamma" and args.gamma is None:
        raise UsageError("--mode gamma needs --gamma")
    clip_dir = out / "clips"
    clip_dir.mkdir(parents=True, exist_ok=True)
    for rec in ds.clips:
        clip = ds.render(rec)
        res = enhance.retinex_enhance(clip) if args.mode == "retinex" else enhance.gamma_correct(clip, args.gamma)
        enhance.write_array_dump(clip_dir / f"{rec.clip_id}.arr", res.data)
    print(f"wrote {len(ds.clips)} {args.mode}-enhanced clips to {clip_dir}")
    RunManifest("enhance", {"mode": args.mode, "gamma": args.gamma}, inputs={"dataset": str(args.input)},
                outputs={"clips": str(clip_dir)}, wall_clock_s=time.time() - t0).write(out)
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    d = _load_config_file(args.config)
    d.update(stage=args.stage, seed=args.seed)
    if args.fusion is not None:
        d["fusion_variant"] = args.fusion
    if args.ssl_variant is not None:
        d["ssl_variant"] = args.ssl_variant
    if args.epochs is not None:
        d["epochs"] = args.epochs
    return TrainConfig.from_dict(d)


def cmd_train(args) -> int:
    if args.stage == "distill" and args.teacher_ckpt is None:
        raise UsageError("train --stage distill requires --teacher-ckpt")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    config = _train_config(args)
    bank = _load_data(args.data)
    log_path = out / f"{args.stage}.history.jsonl"
    log_path.unlink(missing_ok=True)
    inputs = {"dataset": str(args.data)}
    if args.stage == "teacher":
        ckpt = train_teacher(config, bank, log=_print_epoch, log_path=log_path)
    elif args.stage == "ssl":
        pools = [ClipBank.unlabeled_pool(bank, split="train")]
        for extra in args.pool_data or []:
            pools.append(_load_data(extra))
            inputs.setdefault("pool_data", []).append(str(extra))
        pool = ClipBank.unlabeled_pool(*pools, split=None) if len(pools) > 1 else pools[0]
        ckpt = pretrain_student_ssl(config, pool, log=_print_epoch, log_path=log_path)
    else:
        teacher = _load_ckpt(args.teacher_ckpt, "teacher checkpoint")
        ssl = _load_ckpt(args.ssl_ckpt, "SSL checkpoint") if args.ssl_ckpt else None
        inputs["teacher_ckpt"] = str(args.teacher_ckpt)
        if args.ssl_ckpt:
            inputs["ssl_ckpt"] = str(args.ssl_ckpt)
        ckpt = distill_student(config, bank, teacher, ssl, log=_print_epoch, log_path=log_path)
    path = ckpt.save(out / f"{args.stage}.ckpt")
    outputs = {"checkpoint": str(path), "history": str(log_path)}
    if args.stage == "ssl" and args.probe:
        probe = linear_probe(config, bank, ckpt).save(out / "probe.ckpt")
        outputs["probe"] = str(probe)
    print(f"wrote {path} (fingerprint {ckpt.fingerprint})")
    RunManifest("train", config.to_dict(), inputs, outputs, time.time() - t0).write(out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    t0 = time.time()
    ckpt = _load_ckpt(args.ckpt, "checkpoint")
    bank = _load_data(args.data)
    m = evaluate(ckpt, bank, args.split)
    result = {"stage": ckpt.stage, "split": args.split, "top1": m.top1, "top5": m.top5, "n": m.n,
              "per_class": m.per_class}
    print(f"stage={ckpt.stage} split={args.split} top1={m.top1:.4f} top5={m.top5:.4f} n={m.n}")
    out = Path(args.out) if args.out else Path(args.ckpt).parent
    path = out / f"metrics_{Path(args.ckpt).stem}_{args.split}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result, indent=1, sort_keys=True))
    RunManifest("evaluate", {"split": args.split}, {"checkpoint": str(args.ckpt), "dataset": str(args.data)},
                {"metrics": str(path)}, time.time() - t0).write(out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    out = Path(args.out)
    t0 = time.time()
    bench = ablation.Benchmark(overrides=_load_config_file(args.config))
    inputs = {}
    if args.data is not None:
        ds = load_dataset(_require(args.data, "dataset manifest"))
        per_class = len(ds.clips) // ds.K
        bench = ablation.Benchmark(ds.K, per_class, tuple(ds.dims), per_class, bench.overrides)
        inputs["dataset"] = str(args.data)
    suites = list(ablation.SUITES) if args.suite == "all" else [args.suite]
    outputs = {}
    for name in suites:
        result = ablation.run_suite(name, args.seeds, out, bench)
        paths = ablation.write_tables(result, out / "tables")
        print(paths["txt"].read_text(), end="")
        outputs.update({f"{name}_{k}": str(v) for k, v in paths.items()})
    RunManifest("ablate", {"suites": suites, "seeds": args.seeds, "benchmark": asdict(bench)}, inputs, outputs,
                time.time() - t0).write(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    t0 = time.time()
    results = run_checks(grad_instances=args.grad_instances, mutation=args.mutation,
                         emit=lambda line: print(line, flush=True))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.out:
        out = Path(args.out)
        report = out / "verify_report.json"
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(json.dumps([asdict(r) for r in results], indent=1))
        RunManifest("verify", {"grad_instances": args.grad_instances, "mutation": args.mutation},
                    outputs={"report": str(report)}, wall_clock_s=time.time() - t0).write(out)
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="actlumos", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dark-video dataset manifest")
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--per-class", type=int, default=40)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dims", type=_dims, default=(16, 32, 32), help="LxHxW")
    g.add_argument("--family", choices=["A", "B"], default="A", help="illumination profile family")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    e = sub.add_parser("enhance", help="write enhanced clips as array dumps")
    e.add_argument("--in", dest="input", required=True, help="dataset manifest")
    e.add_argument("--out", required=True)
    e.add_argument("--mode", choices=["retinex", "gamma"], default="retinex")
    e.add_argument("--gamma", type=float)
    e.set_defaults(func=cmd_enhance)

    t = sub.add_parser("train", help="train one stage")
    t.add_argument("--stage", choices=["teacher", "ssl", "distill"], required=True)
    t.add_argument("--data", required=True, help="dataset manifest")
    t.add_argument("--fusion", choices=["dff", "static", "dark_only", "retinex_only"])
    t.add_argument("--ssl-variant", choices=["none", "spatial_only", "temporal_only", "both"])
    t.add_argument("--teacher-ckpt")
    t.add_argument("--ssl-ckpt")
    t.add_argument("--pool-data", action="append", help="extra unlabeled manifest for the SSL pool (repeatable)")
    t.add_argument("--probe", action="store_true", help="after SSL, also fit the linear probe")
    t.add_argument("--config", help="JSON file of TrainConfig overrides")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("evaluate", help="top-1/top-5 of a checkpoint on a split")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--split", choices=["train", "val", "test"], default="test")
    v.add_argument("--out")
    v.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="run an ablation suite over seeds")
    a.add_argument("--suite", choices=[*ablation.SUITES, "all"], required=True)
    a.add_argument("--seeds", type=_seeds, default=[1, 2, 3])
    a.add_argument("--data", help="dataset manifest whose K, clips per class and dims set the benchmark")
    a.add_argument("--config", help="JSON file of TrainConfig overrides for every stage")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("verify", help="run the invariant, oracle and gradient-check suite")
    r.add_argument("--grad-instances", type=int, default=20)
    r.add_argument("--mutation", choices=["supcon_self_exclusion"], help="run against a deliberately broken loss")
    r.add_argument("--out")
    r.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    threads = os.environ.get("ACTLUMOS_THREADS")
    try:
        if threads is not None:
            torch.set_num_threads(ablation.worker_count(os.cpu_count() or 1))
        return args.func(args)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (UsageError, ManifestError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


__all__ = ["main", "build_parser", "RunManifest", "content_hash", "epoch_line",
           "EXIT_OK", "EXIT_VERIFY", "EXIT_USAGE", "EXIT_MISSING"]

"""Checkpoint container.

Layout::

    b"ACTLUMOS-CKPT\\n"
    uint64 little-endian header length
    header: UTF-8 JSON (format_version, stage, fingerprint, config, meta,
            epoch, history, rng_state, tensors=[{name, dtype, shape, offset, nbytes}])
    raw little-endian tensor bytes, row-major, in header order

The header is serialised with sorted keys and no wall-clock data, so two
identical runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

MAGIC = b"ACTLUMOS-CKPT\n"
FORMAT_VERSION = 1
STAGES = ("teacher", "ssl", "distill", "probe")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    stage: str
    tensors: dict[str, torch.Tensor]
    config: dict
    fingerprint: str
    meta: dict = field(default_factory=dict)
    epoch: int = 0
    history: list = field(default_factory=list)
    rng_state: dict | None = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise CheckpointError(f"unknown stage {self.stage!r}")

    def subset(self, prefix: str) -> dict[str, torch.Tensor]:
        """State dict of the tensors under ``prefix.`` with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}

    def to_bytes(self) -> bytes:
        entries, blobs, offset = [], [], 0
        for name in sorted(self.tensors):
            arr = self.tensors[name].detach().cpu().contiguous().numpy()
            arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            blob = arr.tobytes(order="C")
            entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                            "offset": offset, "nbytes": len(blob)})
            blobs.append(blob)
            offset += len(blob)
        header = {
            "format_version": FORMAT_VERSION, "stage": self.stage, "fingerprint": self.fingerprint,
            "config": self.config, "meta": self.meta, "epoch": self.epoch, "history": self.history,
            "rng_state": self.rng_state, "tensors": entries,
        }
        hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(blobs)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if not raw.startswith(MAGIC):
            raise CheckpointError("not a checkpoint file (bad magic)")
        pos = len(MAGIC)
        try:
            (hlen,) = struct.unpack("<Q", raw[pos:pos + 8])
            header = json.loads(raw[pos + 8:pos + 8 + hlen])
        except (struct.error, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {header.get('format_version')!r}")
        body = raw[pos + 8 + hlen:]
        tensors = {}
        for e in header["tensors"]:
            chunk = body[e["offset"]:e["offset"] + e["nbytes"]]
            if len(chunk) != e["nbytes"]:
                raise CheckpointError(f"truncated data for tensor {e['name']}")
            arr = np.frombuffer(chunk, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
            tensors[e["name"]] = torch.from_numpy(arr)
        return cls(header["stage"], tensors, header["config"], header["fingerprint"], header["meta"],
                   header["epoch"], header["history"], header["rng_state"])

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_bytes(raw)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def flatten_optimizer(optimizer: torch.optim.Optimizer) -> tuple[dict[str, torch.Tensor], list]:
    sd = optimizer.state_dict()
    tensors = {}
    for idx, st in sd["state"].items():
        for key, val in st.items():
            tensors[f"optim.{idx}.{key}"] = torch.as_tensor(val)
    return tensors, sd["param_groups"]


def restore_optimizer(optimizer: torch.optim.Optimizer, ckpt: Checkpoint) -> None:
    state: dict = {}
    for name, val in ckpt.subset("optim").items():
        idx, key = name.split(".", 1)
        state.setdefault(int(idx), {})[key] = val.clone()
    optimizer.load_state_dict({"state": state, "param_groups": ckpt.meta["optim_param_groups"]})


__all__ = ["Checkpoint", "CheckpointError", "MAGIC", "FORMAT_VERSION", "flatten_optimizer", "restore_optimizer"]

"""Seed derivation, trial records, and CSV/JSON emission.

Nothing in this package consumes ambient randomness: every stream flows from
``derive_stream``, whose mixing function is frozen here so archived manifests
replay forever.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TrialRecord",
    "RunManifest",
    "splitmix64",
    "derive_seed",
    "derive_stream",
    "emit",
    "parse_records",
    "manifest_path_for",
]

_MASK64 = (1 << 64) - 1

# splitmix64 constants (Steele, Lea & Flood mixing; frozen, do not change)
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One splitmix64 step: add the golden-ratio increment, then finalize."""
    x = (x + _GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


def _tag_hash(experiment: str) -> int:
    digest = hashlib.blake2b(experiment.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master_seed: int, experiment: str, trial_index: int) -> int:
    """Mix (master seed, experiment tag, trial index) into one 64-bit stream seed.

    Tags are hashed with blake2b so the mapping is stable across processes
    and Python versions; the chain of splitmix64 steps keeps distinct inputs
    collision-free in practice (scanned over 10^6 consecutive indices).
    """
    s = splitmix64(master_seed & _MASK64)
    s = splitmix64(s ^ _tag_hash(experiment))
    s = splitmix64(s ^ (trial_index & _MASK64))
    return s


def derive_seeds(master_seed: int, experiment: str, trial_indices) -> np.ndarray:
    """Vectorized ``derive_seed`` over an array of trial indices (uint64)."""
    idx = np.asarray(trial_indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        s = np.uint64(splitmix64(master_seed & _MASK64))
        s = np.uint64(splitmix64(int(s) ^ _tag_hash(experiment)))
        x = s ^ idx
        x = (x + np.uint64(_GAMMA)) & np.uint64(_MASK64)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(_MIX2)
        x = x ^ (x >> np.uint64(31))
    return x


def derive_stream(master_seed: int, experiment: str, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, experiment, trial_index)))


_BASE_FIELDS = ("experiment", "dim", "epsilon", "n_samples", "trial_index", "seed")


@dataclass(frozen=True)
class TrialRecord:
    """One Monte Carlo outcome; (experiment, trial_index, master seed) pins everything."""

    experiment: str
    dim: int
    epsilon: float
    n_samples: int
    trial_index: int
    seed: int
    metrics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key in self.metrics:
            if key in _BASE_FIELDS:
                raise ValueError(f"metric name {key!r} collides with a base column")


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def emit(records, fmt: str, sink) -> None:
    """Write records as CSV or JSON with a fixed, documented column order.

    CSV columns are the base fields followed by the union of metric names
    sorted by name; reals carry 17 significant digits; a record missing a
    metric leaves that cell empty.  A NaN anywhere is refused outright --
    NaNs indicate an upstream bug, not data.
    """
    records = list(records)
    if not records:
        raise ValueError("refusing to emit zero records")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    for rec in records:
        for key, value in rec.metrics.items():
            if math.isnan(value):
                raise ValueError(
                    f"metric {key!r} of trial {rec.trial_index} ({rec.experiment}) is NaN; "
                    "refusing to emit"
                )
    metric_names = sorted({name for rec in records for name in rec.metrics})
    path = Path(sink)
    if fmt == "csv":
        lines = [",".join(_BASE_FIELDS + tuple(metric_names))]
        for rec in records:
            cells = [
                rec.experiment,
                str(rec.dim),
                _fmt(rec.epsilon),
                str(rec.n_samples),
                str(rec.trial_index),
                str(rec.seed),
            ]
            for name in metric_names:
                cells.append(_fmt(rec.metrics[name]) if name in rec.metrics else "")
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n")
    else:
        payload = []
        for rec in records:
            obj = {
                "experiment": rec.experiment,
                "dim": rec.dim,
                "epsilon": rec.epsilon,
                "n_samples": rec.n_samples,
                "trial_index": rec.trial_index,
                "seed": rec.seed,
            }
            obj.update({name: rec.metrics[name] for name in metric_names if name in rec.metrics})
            payload.append(obj)
        path.write_text(json.dumps(payload, indent=2) + "\n")


def parse_records(source, fmt: str) -> list[TrialRecord]:
    """Inverse of ``emit``; round-trips exactly."""
    text = Path(source).read_text()
    out: list[TrialRecord] = []
    if fmt == "csv":
        lines = [ln for ln in text.split("\n") if ln]
        header = lines[0].split(",")
        if tuple(header[: len(_BASE_FIELDS)]) != _BASE_FIELDS:
            raise ValueError("unexpected CSV header")
        metric_names = header[len(_BASE_FIELDS):]
        for line in lines[1:]:
            cells = line.split(",")
            metrics = {
                name: float(cell)
                for name, cell in zip(metric_names, cells[len(_BASE_FIELDS):])
                if cell != ""
            }
            out.append(
                TrialRecord(
                    experiment=cells[0],
                    dim=int(cells[1]),
                    epsilon=float(cells[2]),
                    n_samples=int(cells[3]),
                    trial_index=int(cells[4]),
                    seed=int(cells[5]),
                    metrics=metrics,
                )
            )
    elif fmt == "json":
        for obj in json.loads(text):
            base = {name: obj.pop(name) for name in _BASE_FIELDS}
            out.append(TrialRecord(**base, metrics={k: float(v) for k, v in obj.items()}))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return out


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to replay one output file exactly."""

    master_seed: int
    experiment: str
    config: dict
    tool_version: str
    outputs: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "master_seed": self.master_seed,
                "experiment": self.experiment,
                "config": self.config,
                "tool_version": self.tool_version,
                "outputs": list(self.outputs),
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        obj = json.loads(text)
        return cls(
            master_seed=obj["master_seed"],
            experiment=obj["experiment"],
            config=obj["config"],
            tool_version=obj["tool_version"],
            outputs=tuple(obj["outputs"]),
        )

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def manifest_path_for(output_path) -> Path:
    return Path(str(output_path) + ".manifest.json")

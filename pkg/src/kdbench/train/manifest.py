"""Run manifests and append-only metrics telemetry.

Run directory layout: ``runs/<run_id>/manifest`` (JSON, written once),
``runs/<run_id>/metrics.jsonl`` (one record per line), checkpoints as
``ckpt-<epoch>``. Metrics schema per line: run_id, epoch, split, top1,
top5, loss_total, loss_hard, loss_soft, lr, wall_time_s.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import torch

from .. import __version__
from ..config_io import job_to_dict
from ..errors import ParseError
from ..recipes import DistillJobSpec

METRIC_FIELDS = (
    "run_id", "epoch", "split", "top1", "top5",
    "loss_total", "loss_hard", "loss_soft", "lr", "wall_time_s",
)


@dataclass
class MetricsRecord:
    run_id: str
    epoch: int
    split: str
    top1: float
    top5: float
    loss_total: float
    loss_hard: float
    loss_soft: float
    lr: float
    wall_time_s: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def spec_hash(spec: DistillJobSpec) -> str:
    payload = json.dumps(job_to_dict(spec), sort_keys=True)
    return hashlib.sha1(payload.encode()).hexdigest()


@dataclass
class RunManifest:
    run_id: str
    spec: dict
    spec_sha1: str
    version: str
    environment: dict
    start_time: str
    stages: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def create(cls, run_id: str, spec: DistillJobSpec, device: str) -> "RunManifest":
        return cls(
            run_id=run_id,
            spec=job_to_dict(spec),
            spec_sha1=spec_hash(spec),
            version=__version__,
            environment={
                "python": platform.python_version(),
                "torch": torch.__version__,
                "device": device,
                "platform": platform.platform(),
            },
            start_time=time.strftime("%Y-%m-%dT%H:%M:%S"),
        )

    def write(self, run_dir: Path) -> Path:
        """Write once; an existing manifest is immutable and left untouched."""
        path = run_dir / "manifest"
        if not path.exists():
            run_dir.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True))
        return path


def read_manifest(run_dir: str | Path) -> dict:
    path = Path(run_dir) / "manifest"
    if not path.exists():
        raise ParseError("manifest not found", path=str(path), line=0)
    return json.loads(path.read_text())


def append_metrics(run_dir: Path, record: MetricsRecord) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "metrics.jsonl", "a") as fh:
        fh.write(record.to_json() + "\n")


def read_metrics(path: str | Path) -> list[MetricsRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / "metrics.jsonl"
    records: list[MetricsRecord] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                records.append(MetricsRecord(**{k: raw[k] for k in METRIC_FIELDS}))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"bad metrics line ({exc})", path=str(path), line=lineno) from None
    return records

"""Metrics and manifest serialization shared by the trainer and the CLI.

The metrics contract is one CSV row per epoch with exactly these columns:

    epoch,objective,residual_norm,train_acc,test_acc,wall_ms,aa_accepted,eps

Floats are written with shortest round-trip formatting, so identical runs
yield byte-identical files; wall_ms is the one measured quantity, and callers
that need reproducible bytes zero it via fixed_timing.  A JSON-lines mirror of
the same records is available for consumers that prefer it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .trainer import EpochMetrics

METRICS_COLUMNS = ("epoch", "objective", "residual_norm", "train_acc",
                   "test_acc", "wall_ms", "aa_accepted", "eps")
METRICS_HEADER = ",".join(METRICS_COLUMNS)


def _fmt(x: float) -> str:
    return repr(float(x))


def metrics_row(m: EpochMetrics, fixed_timing: bool = False) -> str:
    wall = 0.0 if fixed_timing else m.wall_ms
    return ",".join([
        str(m.epoch),
        _fmt(m.objective),
        _fmt(m.residual_norm),
        _fmt(m.train_acc),
        _fmt(m.test_acc),
        _fmt(wall),
        "1" if m.aa_accepted else "0",
        _fmt(m.eps),
    ])


def write_metrics_csv(path: str | Path, metrics: Iterable[EpochMetrics],
                      fixed_timing: bool = False) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for m in metrics:
            fh.write(metrics_row(m, fixed_timing) + "\n")


def write_metrics_jsonl(path: str | Path, metrics: Iterable[EpochMetrics],
                        fixed_timing: bool = False) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for m in metrics:
            rec = {
                "epoch": m.epoch,
                "objective": m.objective,
                "residual_norm": m.residual_norm,
                "train_acc": m.train_acc,
                "test_acc": m.test_acc,
                "wall_ms": 0.0 if fixed_timing else m.wall_ms,
                "aa_accepted": bool(m.aa_accepted),
                "eps": m.eps,
            }
            fh.write(json.dumps(rec) + "\n")


def read_metrics_csv(path: str | Path) -> list[dict]:
    """Parse a metrics CSV back into dicts (schema-checked)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise ValueError(f"{path}: unexpected metrics header")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        out.append({
            "epoch": int(parts[0]),
            "objective": float(parts[1]),
            "residual_norm": float(parts[2]),
            "train_acc": float(parts[3]),
            "test_acc": float(parts[4]),
            "wall_ms": float(parts[5]),
            "aa_accepted": parts[6] == "1",
            "eps": float(parts[7]),
        })
    return out


def weights_checksum(W: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> str:
    """Stable hex digest of the packed parameter bytes; used to confirm that
    runs with the same seed start from identical weights."""
    h = hashlib.sha256()
    for w in W:
        h.update(np.ascontiguousarray(w, dtype=np.float64).tobytes())
    for v in b:
        h.update(np.ascontiguousarray(v, dtype=np.float64).tobytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_snapshot: dict
    dataset_name: str
    seed: int
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    outputs: list[str] = field(default_factory=list)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        for out in self.outputs:
            if not (path.parent / out).exists() and not Path(out).exists():
                raise FileNotFoundError(f"manifest lists missing output {out}")
        payload = {
            "command": self.command,
            "config_snapshot": self.config_snapshot,
            "dataset_name": self.dataset_name,
            "seed": self.seed,
            "started_at": self.started_at,
            "outputs": self.outputs,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

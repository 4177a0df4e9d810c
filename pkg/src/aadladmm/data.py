"""Dataset ingestion, synthetic blobs, splits, and feature normalization.

The on-disk format is plain CSV: one row per sample, decimal feature columns,
and a final integer class-label column; a single header row is optional.  All
randomized operations run on numpy's PCG64 generator keyed by an explicit
seed, so every generator and split is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

NORMALIZE_MODES = ("none", "unit_rows", "standardize")


class DataFormatError(ValueError):
    """A dataset file failed to parse; the message carries row/column info."""


@dataclass(frozen=True)
class Dataset:
    """Features are stored feature-major: shape (d, N); labels has length N."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DataFormatError("features must be a 2-D array")
        if self.labels.shape != (self.features.shape[1],):
            raise DataFormatError("label count must match sample count")
        if self.features.shape[1] < 2:
            raise DataFormatError("need at least 2 samples")
        if not np.all(np.isfinite(self.features)):
            raise DataFormatError("features contain NaN or infinity")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataFormatError("labels out of range")

    @property
    def num_features(self) -> int:
        return self.features.shape[0]

    @property
    def num_samples(self) -> int:
        return self.features.shape[1]


def load_csv(path: str | Path, has_header: bool = False, name: str | None = None) -> Dataset:
    """Read a samples-by-rows CSV whose last column is an integer label."""
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if has_header and lineno == 1:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
                if width < 2:
                    raise DataFormatError(f"{path}: row {lineno}: need >= 2 columns")
            elif len(parts) != width:
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {width} columns, got {len(parts)}")
            vals = []
            for col, tok in enumerate(parts[:-1], start=1):
                try:
                    vals.append(float(tok))
                except ValueError:
                    raise DataFormatError(f"{path}: row {lineno}, column {col}: bad float {tok!r}") from None
            tok = parts[-1].strip()
            try:
                lab = int(tok)
            except ValueError:
                raise DataFormatError(f"{path}: row {lineno}, column {width}: bad label {tok!r}") from None
            if lab < 0:
                raise DataFormatError(f"{path}: row {lineno}: negative label {lab}")
            rows.append(vals)
            labels.append(lab)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64).T
    y = np.asarray(labels, dtype=np.int64)
    return Dataset(features, y, int(y.max()) + 1, name or path.stem)


def write_csv(ds: Dataset, path: str | Path, header: bool = False) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        if header:
            cols = [f"f{i}" for i in range(ds.num_features)] + ["label"]
            fh.write(",".join(cols) + "\n")
        for j in range(ds.num_samples):
            vals = [repr(float(v)) for v in ds.features[:, j]]
            fh.write(",".join(vals + [str(int(ds.labels[j]))]) + "\n")


def synth_blobs(n_per_class: int, d: int, classes: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs around well-separated random centers.

    Centers are drawn on a radius-4 sphere so that any spread well below the
    inter-center distance keeps the classes separable.
    """
    if n_per_class < 1 or d < 1 or classes < 1:
        raise ValueError("counts must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = rng.normal(size=(classes, d))
    centers *= 4.0 / np.maximum(np.linalg.norm(centers, axis=1, keepdims=True), 1e-12)
    feats = np.empty((d, classes * n_per_class))
    labels = np.empty(classes * n_per_class, dtype=np.int64)
    for c in range(classes):
        block = centers[c][:, None] + spread * rng.normal(size=(d, n_per_class))
        feats[:, c * n_per_class:(c + 1) * n_per_class] = block
        labels[c * n_per_class:(c + 1) * n_per_class] = c
    return Dataset(feats, labels, classes, name=f"synth_blobs(c={classes},d={d},s={spread})")


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified disjoint split; both sides keep every class when possible."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = ds.num_samples
    target = int(train_fraction * n)
    by_class = [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]
    takes = [int(train_fraction * len(idx)) for idx in by_class]
    # hand out the remainder by largest fractional part, class index breaking ties
    fracs = sorted(
        range(ds.num_classes),
        key=lambda c: (-(train_fraction * len(by_class[c]) - takes[c]), c),
    )
    i = 0
    while sum(takes) < target and i < len(fracs):
        c = fracs[i]
        if takes[c] < len(by_class[c]):
            takes[c] += 1
        i += 1
    train_idx: list[int] = []
    test_idx: list[int] = []
    for c, idx in enumerate(by_class):
        perm = rng.permutation(len(idx))
        shuffled = idx[perm]
        train_idx.extend(shuffled[: takes[c]])
        test_idx.extend(shuffled[takes[c]:])
    train_idx = np.sort(np.asarray(train_idx, dtype=np.int64))
    test_idx = np.sort(np.asarray(test_idx, dtype=np.int64))
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ValueError("split produced an empty side")
    mk = lambda idx, tag: Dataset(
        ds.features[:, idx].copy(), ds.labels[idx].copy(), ds.num_classes, f"{ds.name}/{tag}")
    return mk(train_idx, "train"), mk(test_idx, "test")


def normalize_features(ds: Dataset, mode: str = "none") -> Dataset:
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    if mode == "none":
        return ds
    f = ds.features.copy()
    if mode == "unit_rows":
        norms = np.linalg.norm(f, axis=0, keepdims=True)
        f = np.divide(f, norms, out=np.zeros_like(f), where=norms > 0)
    else:  # standardize
        mean = f.mean(axis=1, keepdims=True)
        std = f.std(axis=1, keepdims=True)
        f = np.divide(f - mean, std, out=np.zeros_like(f), where=std > 0)
    return Dataset(f, ds.labels, ds.num_classes, ds.name)

"""Class-labeled manifests, stratified splitting and deterministic batching.

Directory contract: the dataset root holds one subdirectory per class
("covid/", "healthy/") of binary PGM files. Manifests serialize as JSON
Lines sorted by path, one record per line:

    {"path": "covid/a.pgm", "label": "covid", "split": "train"}

``split`` is null until a split has been assigned. Paths are stored
relative to the dataset root.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .arch import CLASS_LABELS
from .errors import ManifestError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Record:
    path: str
    label: str
    split: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[Record, ...]
    balance_warning: str | None = None

    def count(self, label: str | None = None, split: str | None = None) -> int:
        return sum(
            1
            for r in self.records
            if (label is None or r.label == label) and (split is None or r.split == split)
        )


def label_index(label: str) -> int:
    try:
        return CLASS_LABELS.index(label)
    except ValueError:
        raise ManifestError(f"unknown label {label!r}; expected one of {CLASS_LABELS}") from None


def build_manifest(root_dir: str | Path) -> DatasetManifest:
    """One record per PGM file, labeled by its class subdirectory."""
    root = Path(root_dir)
    records = []
    counts = {}
    for label in CLASS_LABELS:
        class_dir = root / label
        if not class_dir.is_dir():
            raise ManifestError(f"missing class directory {class_dir}")
        files = sorted(p for p in class_dir.iterdir() if p.suffix.lower() == ".pgm")
        if not files:
            raise ManifestError(f"class {label} has zero images")
        counts[label] = len(files)
        records.extend(Record((Path(label) / p.name).as_posix(), label) for p in files)
    records.sort(key=lambda r: r.path)
    warning = None
    if len(set(counts.values())) > 1:
        pairs = ", ".join(f"{label}={n}" for label, n in counts.items())
        warning = f"class imbalance: {pairs}"
    return DatasetManifest(tuple(records), warning)


def largest_remainder_counts(total: int, fractions: tuple[float, ...]) -> list[int]:
    """Integer allocation of ``total`` by fractions; remainders round the
    largest first, earlier entries winning ties."""
    exact = [total * f for f in fractions]
    counts = [int(np.floor(e)) for e in exact]
    leftovers = total - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:leftovers]:
        counts[i] += 1
    return counts


def split_manifest(
    manifest: DatasetManifest,
    train_frac: float = 0.7,
    val_frac: float = 0.15,
    test_frac: float = 0.15,
    seed: int = 0,
) -> DatasetManifest:
    """Stratified split: each class is shuffled with the seed and assigned by
    cumulative fraction with largest-remainder rounding."""
    fractions = (train_frac, val_frac, test_frac)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ManifestError(f"split fractions {fractions} do not sum to 1")
    assigned = {}
    for label_idx, label in enumerate(CLASS_LABELS):
        class_records = [r for r in manifest.records if r.label == label]
        if not class_records:
            continue
        counts = largest_remainder_counts(len(class_records), fractions)
        if counts[0] < 1:
            raise ManifestError(f"train split for class {label} would be empty")
        rng = np.random.default_rng((seed, label_idx))
        order = rng.permutation(len(class_records))
        bounds = np.cumsum(counts)
        for pos, rec_idx in enumerate(order):
            split = SPLITS[int(np.searchsorted(bounds, pos, side="right"))]
            assigned[class_records[rec_idx].path] = split
    new_records = tuple(replace(r, split=assigned.get(r.path, r.split)) for r in manifest.records)
    return DatasetManifest(new_records, manifest.balance_warning)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic permutation of range(n) keyed by (seed, epoch)."""
    return np.random.default_rng((seed, epoch)).permutation(n)


def batches(
    manifest: DatasetManifest,
    split: str,
    batch_size: int,
    seed: int,
    epoch: int,
) -> list[tuple[list[str], list[int]]]:
    """Shuffled (paths, label indices) batches; the final partial batch is kept."""
    if batch_size < 1:
        raise ManifestError("batch size must be positive")
    records = [r for r in manifest.records if r.split == split]
    if not records:
        raise ManifestError(f"split {split!r} is empty")
    order = epoch_order(len(records), seed, epoch)
    out = []
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start : start + batch_size]]
        out.append(([r.path for r in chunk], [label_index(r.label) for r in chunk]))
    return out


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in sorted(manifest.records, key=lambda r: r.path):
            fh.write(json.dumps({"path": rec.path, "label": rec.label, "split": rec.split}))
            fh.write("\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{line_no}: bad JSON: {exc}") from None
            rec_path, label = obj.get("path"), obj.get("label")
            split = obj.get("split")
            if not rec_path or label not in CLASS_LABELS:
                raise ManifestError(f"{path}:{line_no}: bad record {obj!r}")
            if split is not None and split not in SPLITS:
                raise ManifestError(f"{path}:{line_no}: bad split {split!r}")
            if rec_path in seen:
                raise ManifestError(f"{path}:{line_no}: duplicate path {rec_path!r}")
            seen.add(rec_path)
            records.append(Record(rec_path, label, split))
    return DatasetManifest(tuple(records))

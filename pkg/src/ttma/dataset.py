"""Synthetic Gaussian datasets, the manifest/blob on-disk format and stratified splits.

Manifest layout (UTF-8 text)::

    # ttma dataset manifest
    version = 1
    blob = dataset.bin
    modality = vector
    shape = 2
    classes = 4
    count = 400
    ---
    id,label,offset
    0,0,0
    ...

The blob holds one little-endian float32 record per row at the given byte offset.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, RngStream

MANIFEST_VERSION = 1
BLOB_DTYPE = np.dtype("<f4")


class DatasetError(ValueError):
    pass


class ManifestError(DatasetError):
    pass


class BlobReadError(DatasetError):
    pass


class ShapeMismatchError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


@dataclass
class SyntheticSpec:
    means: Sequence[Sequence[float]]
    scales: Sequence[float]
    samples_per_class: int = 100
    seed: int = 0
    name: str = "custom"

    @property
    def class_count(self) -> int:
        return len(self.means)

    @property
    def dim(self) -> int:
        return len(self.means[0]) if self.means else 0

    def validate(self) -> None:
        if self.class_count < 2:
            raise ValueError("synthetic spec needs at least 2 classes")
        if len(self.scales) != self.class_count:
            raise ValueError("one covariance scale per class is required")
        means = np.asarray(self.means, dtype=np.float64)
        if means.ndim != 2:
            raise ValueError("all class means must have the same dimension")
        if not np.all(np.isfinite(means)):
            raise ValueError("non-finite class mean")
        scales = np.asarray(self.scales, dtype=np.float64)
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise ValueError("covariance scales must be positive")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "class_count": self.class_count,
            "dim": self.dim,
            "means": [list(map(float, m)) for m in self.means],
            "scales": [float(s) for s in self.scales],
            "samples_per_class": int(self.samples_per_class),
            "seed": int(self.seed),
        }


def preset(name: str, samples_per_class: int = 100, seed: int = 7) -> SyntheticSpec:
    """Built-in class geometries.

    ``blobs``
        two well separated classes.
    ``confusion-similarity``
        A and B overlap heavily, C sits next to A but is separable, D is far from everything.
    ``noisy-overlap``
        two classes whose Bayes error is about 15% (means 2*1.0364 apart, unit scale).
    """
    if name == "blobs":
        means = [[-2.0, 0.0], [2.0, 0.0]]
        scales = [0.7, 0.7]
    elif name == "confusion-similarity":
        means = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.5], [-5.0, -5.0]]
        scales = [0.5, 0.5, 0.5, 0.5]
    elif name == "noisy-overlap":
        # Phi(-1.0364) == 0.15
        means = [[-1.0364, 0.0], [1.0364, 0.0]]
        scales = [1.0, 1.0]
    else:
        raise ValueError(f"unknown preset {name!r}")
    return SyntheticSpec(means=means, scales=scales, samples_per_class=samples_per_class,
                         seed=seed, name=name)


PRESETS = ("blobs", "confusion-similarity", "noisy-overlap")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw ``samples_per_class`` isotropic Gaussian points per class, class-major order.

    Values are rounded through float32 so a save/load round trip is exact.
    """
    spec.validate()
    rng = RngStream(spec.seed, 0)
    means = np.asarray(spec.means, dtype=np.float64)
    n = spec.samples_per_class
    blocks = []
    for c in range(spec.class_count):
        noise = rng.standard_normal((n, spec.dim))
        blocks.append(means[c] + spec.scales[c] * noise)
    data = np.concatenate(blocks).astype(BLOB_DTYPE).astype(np.float64)
    labels = np.repeat(np.arange(spec.class_count), n)
    return Dataset(data=data, labels=labels, ids=np.arange(labels.size),
                   class_count=spec.class_count, modality="vector")


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split; both halves keep the original sample order."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = RngStream(seed, 1)
    test_positions = []
    for c in range(ds.class_count):
        positions = np.flatnonzero(ds.labels == c)
        if positions.size < 2:
            raise ValueError("class too small to split")
        n_test = min(max(int(round(positions.size * test_fraction)), 1), positions.size - 1)
        test_positions.append(rng.permutation(positions)[:n_test])
    test_mask = np.zeros(len(ds), dtype=bool)
    if test_positions:
        test_mask[np.concatenate(test_positions)] = True
    return ds.subset(np.flatnonzero(~test_mask)), ds.subset(np.flatnonzero(test_mask))


def save_dataset(ds: Dataset, manifest_path, blob_name: Optional[str] = None) -> Path:
    """Write ``ds`` as manifest + float32 blob next to it. Returns the blob path."""
    manifest_path = Path(manifest_path)
    blob_name = blob_name or manifest_path.with_suffix(".bin").name
    blob_path = manifest_path.parent / blob_name
    record_bytes = int(np.prod(ds.sample_shape, dtype=np.int64)) * BLOB_DTYPE.itemsize
    with open(blob_path, "wb") as fh:
        fh.write(np.ascontiguousarray(ds.data, dtype=BLOB_DTYPE).tobytes())
    lines = [
        "# ttma dataset manifest",
        f"version = {MANIFEST_VERSION}",
        f"blob = {blob_name}",
        f"modality = {ds.modality}",
        "shape = " + "x".join(str(s) for s in ds.sample_shape),
        f"classes = {ds.class_count}",
        f"count = {len(ds)}",
        "---",
        "id,label,offset",
    ]
    lines += [f"{int(i)},{int(y)},{p * record_bytes}" for p, (i, y) in enumerate(zip(ds.ids, ds.labels))]
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return blob_path


@dataclass
class DatasetManifest:
    path: Path
    blob: Path
    modality: str
    shape: tuple
    class_count: int
    rows: list = field(default_factory=list)  # (id, label, offset)

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        header, sep, body = text.partition("\n---\n")
        if not sep:
            raise ManifestError("manifest has no '---' separator")
        meta = {}
        for line in header.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ManifestError(f"bad header line {line!r}")
            meta[key.strip()] = value.strip()
        try:
            if int(meta.get("version", MANIFEST_VERSION)) != MANIFEST_VERSION:
                raise ManifestError(f"unsupported manifest version {meta['version']}")
            shape = tuple(int(s) for s in meta["shape"].split("x"))
            class_count = int(meta["classes"])
            count = int(meta["count"])
            blob = path.parent / meta["blob"]
            modality = meta["modality"]
        except (KeyError, ValueError) as exc:
            raise ManifestError(f"bad manifest header: {exc}") from exc
        reader = csv.reader(body.strip().splitlines())
        columns = next(reader, None)
        if columns != ["id", "label", "offset"]:
            raise ManifestError("manifest rows must have columns id,label,offset")
        try:
            rows = [(int(a), int(b), int(c)) for a, b, c in reader]
        except ValueError as exc:
            raise ManifestError(f"bad manifest row: {exc}") from exc
        if len(rows) != count:
            raise ManifestError(f"manifest declares {count} rows but lists {len(rows)}")
        return cls(path=path, blob=blob, modality=modality, shape=shape,
                   class_count=class_count, rows=rows)


def load_dataset(manifest) -> Dataset:
    """Load a dataset from a manifest path (or parsed :class:`DatasetManifest`)."""
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.read(manifest)
    if manifest.class_count < 2:
        raise ManifestError("manifest declares fewer than 2 classes")
    if manifest.modality == "vector" and len(manifest.shape) != 1:
        raise ShapeMismatchError("vector modality requires a 1-d shape")
    if manifest.modality == "image" and len(manifest.shape) not in (2, 3):
        raise ShapeMismatchError("image modality requires an HxW or HxWxC shape")
    try:
        blob = manifest.blob.read_bytes()
    except OSError as exc:
        raise BlobReadError(f"cannot read blob {manifest.blob}: {exc}") from exc
    n_values = int(np.prod(manifest.shape, dtype=np.int64))
    record_bytes = n_values * BLOB_DTYPE.itemsize
    data = np.empty((len(manifest.rows),) + manifest.shape, dtype=np.float64)
    ids, labels = [], []
    for p, (sample_id, label, offset) in enumerate(manifest.rows):
        if not 0 <= label < manifest.class_count:
            raise LabelRangeError("label out of range")
        if offset < 0 or offset + record_bytes > len(blob):
            raise ShapeMismatchError(
                f"record {sample_id} at offset {offset} does not fit shape {manifest.shape}")
        record = np.frombuffer(blob, dtype=BLOB_DTYPE, count=n_values, offset=offset)
        data[p] = record.reshape(manifest.shape)
        ids.append(sample_id)
        labels.append(label)
    return Dataset(data=data, labels=np.array(labels, dtype=np.int64),
                   ids=np.array(ids, dtype=np.int64), class_count=manifest.class_count,
                   modality=manifest.modality)


def export_labels_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label"])
        for i, y in zip(ds.ids, ds.labels):
            writer.writerow([int(i), int(y)])


def stratification_error(ds: Dataset, test: Dataset, test_fraction: float) -> int:
    """Largest per-class deviation of the test count from round(n_c * fraction)."""
    worst = 0
    for c in range(ds.class_count):
        expected = round(int(np.sum(ds.labels == c)) * test_fraction)
        worst = max(worst, abs(int(np.sum(test.labels == c)) - expected))
    return worst


def ensure_dir(path) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"output directory {path} does not exist")
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path


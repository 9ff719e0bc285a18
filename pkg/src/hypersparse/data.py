"""Datasets: seeded Gaussian blobs, IDX files, deterministic splits and batching.

Every random stream comes from numpy's PCG64 bit generator, seeded explicitly,
so a seed reproduces identical data on every platform numpy supports.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConsistencyError, ContractError, FormatError, TruncatedFileError
from .nn import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray  # (n, dims) float32
    labels: np.ndarray  # (n,) int64
    num_classes: int
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ConsistencyError("inputs and labels differ in length")
        if self.ids is None:
            self.ids = np.arange(len(self.labels))

    def __len__(self):
        return len(self.labels)

    @property
    def dims(self):
        return self.inputs.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index], self.num_classes, self.ids[index])


@dataclass(frozen=True)
class BlobSpec:
    dims: int = 16
    classes: int = 8
    samples_per_class: int = 500
    center_spread: float = 5.0
    noise_sigma: float = 1.0
    seed: int = 0


def generate_blobs(spec: BlobSpec) -> Dataset:
    """Isotropic Gaussian clusters around random centres.

    Centres are N(0, spread^2/dims) per coordinate, so a typical centre has norm
    ``center_spread`` regardless of ``dims``. Samples are ordered by class.
    """
    if spec.dims < 1 or spec.classes < 2 or spec.samples_per_class < 1:
        raise ContractError("blobs need dims >= 1, classes >= 2, samples_per_class >= 1")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    centers = rng.normal(0.0, spec.center_spread / np.sqrt(spec.dims), (spec.classes, spec.dims))
    noise = rng.normal(0.0, 1.0, (spec.classes, spec.samples_per_class, spec.dims))
    x = centers[:, None, :] + spec.noise_sigma * noise
    y = np.repeat(np.arange(spec.classes), spec.samples_per_class)
    return Dataset(x.reshape(-1, spec.dims).astype(np.float32), y.astype(np.int64), spec.classes)


# --- IDX -------------------------------------------------------------------

def _read_header(f, path, expected_magic):
    head = f.read(4)
    if len(head) < 4:
        raise TruncatedFileError(f"{path}: file too short for IDX magic")
    (magic,) = struct.unpack(">I", head)
    if magic != expected_magic:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    raw = f.read(4 * ndim)
    if len(raw) < 4 * ndim:
        raise TruncatedFileError(f"{path}: truncated IDX header")
    return struct.unpack(f">{ndim}I", raw)


def _read_payload(f, path, count):
    data = f.read(count)
    if len(data) < count:
        raise TruncatedFileError(f"{path}: expected {count} data bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8)


def read_idx(images_path, labels_path, num_classes: Optional[int] = None) -> Dataset:
    """Load an IDX image/label pair. Pixels are scaled to [0, 1] and flattened row-major."""
    with open(images_path, "rb") as f:
        n, rows, cols = _read_header(f, images_path, IDX_IMAGES_MAGIC)
        pixels = _read_payload(f, images_path, n * rows * cols)
    with open(labels_path, "rb") as f:
        (m,) = _read_header(f, labels_path, IDX_LABELS_MAGIC)
        labels = _read_payload(f, labels_path, m)
    if n != m:
        raise ConsistencyError(f"{n} images but {m} labels")
    x = pixels.reshape(n, rows * cols).astype(np.float32) / np.float32(255)
    y = labels.astype(np.int64)
    if num_classes is None:
        num_classes = max(int(y.max()) + 1 if n else 2, 2)
    return Dataset(x, y, num_classes)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


# --- splits ----------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ContractError("split fractions must be nonnegative and sum to 1")


_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def splitmix64(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return (z ^ (z >> np.uint64(31))) & _M64


def split_uniform(ids: np.ndarray, seed: int) -> np.ndarray:
    """A uniform [0, 1) draw that depends only on (sample_id, seed)."""
    key = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.asarray(ids, dtype=np.uint64)
    return (splitmix64(key) >> np.uint64(11)).astype(np.float64) / float(1 << 53)


@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset


def split_dataset(ds: Dataset, plan: SplitPlan, normalize: bool = True) -> Splits:
    """Partition by per-sample hash, then z-score with train statistics only."""
    u = split_uniform(ds.ids, plan.seed)
    t1 = plan.train_fraction
    t2 = t1 + plan.val_fraction
    parts = [ds.subset(u < t1), ds.subset((u >= t1) & (u < t2)), ds.subset(u >= t2)]
    if normalize and len(parts[0]):
        mean = parts[0].inputs.mean(axis=0, dtype=np.float64)
        std = parts[0].inputs.std(axis=0, dtype=np.float64)
        std[std == 0] = 1.0
        for p in parts:
            p.inputs = ((p.inputs - mean) / std).astype(np.float32)
    return Splits(*parts)


def epoch_seed(run_seed: int, epoch: int) -> int:
    key = (run_seed * 1_000_003 + epoch) & 0xFFFFFFFFFFFFFFFF
    return int(splitmix64(np.uint64(key)))


def batches(ds: Dataset, batch_size: int, seed: int):
    """Shuffled mini-batches for one epoch; the last batch may be short."""
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    if len(ds) == 0:
        raise ContractError("cannot batch an empty split")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(len(ds))
    out = []
    for start in range(0, len(ds), batch_size):
        idx = perm[start:start + batch_size]
        out.append(Batch(ds.inputs[idx], ds.labels[idx], ds.ids[idx]))
    return out

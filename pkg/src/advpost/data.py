"""Dataset ingestion and generation.

Covers IDX image/label file parsing, synthetic 2-D Gaussian-cluster tasks
with controllable boundary geometry, class-indexed storage, and seeded
samplers used by the per-input fine-tuning loop.
"""

import struct
from dataclasses import dataclass
from itertools import chain
from pathlib import Path

import numpy as np

from .nn import numeric_array
from .rng import make_rng

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# Margin (in standard deviations) around the cluster centers that the affine
# map sends into [0,1]^2; draws beyond it are clipped to the square.
_MAP_MARGIN_STDS = 4.0


class IdxParseError(ValueError):
    """Malformed IDX file; the message names the offending byte offset."""


@dataclass(frozen=True)
class LabeledExample:
    """One input vector with pixels in [0,1] and an integer class label."""

    pixels: np.ndarray
    label: int

    def __post_init__(self):
        pixels = numeric_array(self.pixels)
        if pixels.size == 0:
            raise ValueError("example must have at least one pixel")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        label = int(self.label)
        if label < 0:
            raise ValueError(f"label must be non-negative, got {label}")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "label", label)


class ClassIndexedDataset:
    """Examples bucketed by label, D_0 .. D_{n-1}; immutable once built."""

    def __init__(self, n_classes: int, examples):
        n_classes = int(n_classes)
        if n_classes < 2:
            raise ValueError("need at least two classes")
        buckets = [[] for _ in range(n_classes)]
        for ex in examples:
            if ex.label >= n_classes:
                raise ValueError(f"label {ex.label} outside [0, {n_classes})")
            buckets[ex.label].append(ex)
        self.n_classes = n_classes
        self._buckets = buckets

    def by_class(self, label: int) -> list:
        if not 0 <= label < self.n_classes:
            raise ValueError(f"class {label} outside [0, {self.n_classes})")
        return self._buckets[label]

    def class_counts(self) -> list[int]:
        return [len(b) for b in self._buckets]

    def merged(self) -> list:
        """All examples in bucket order; recovers the source multiset."""
        return list(chain.from_iterable(self._buckets))

    def __len__(self) -> int:
        return sum(len(b) for b in self._buckets)

    @property
    def input_dim(self) -> int:
        for bucket in self._buckets:
            if bucket:
                return bucket[0].pixels.shape[0]
        raise ValueError("dataset is empty")


def _read_u32(buf: bytes, offset: int, path) -> int:
    if offset + 4 > len(buf):
        raise IdxParseError(
            f"{path}: truncated header at offset {offset}: need 4 bytes, "
            f"have {len(buf) - offset}"
        )
    return struct.unpack_from(">I", buf, offset)[0]


def _check_payload(buf: bytes, header_len: int, expected: int, path):
    have = len(buf) - header_len
    if have < expected:
        raise IdxParseError(
            f"{path}: truncated payload at offset {len(buf)}: expected "
            f"{header_len + expected} bytes total, found {len(buf)}"
        )
    if have > expected:
        raise IdxParseError(
            f"{path}: trailing data at offset {header_len + expected}: "
            f"{have - expected} unexpected bytes"
        )


def load_idx(images_path, labels_path, n_classes: int | None = None) -> ClassIndexedDataset:
    """Parse an IDX image/label file pair into a class-indexed dataset.

    Layout (big endian): u32 magic, u32 count [, u32 rows, u32 cols], then an
    unsigned-byte payload. Pixels are scaled to [0,1] by dividing by 255;
    file order is preserved inside each class bucket.
    """
    img_buf = Path(images_path).read_bytes()
    magic = _read_u32(img_buf, 0, images_path)
    if magic != IMAGES_MAGIC:
        raise IdxParseError(
            f"{images_path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IMAGES_MAGIC:08x}"
        )
    n_images = _read_u32(img_buf, 4, images_path)
    rows = _read_u32(img_buf, 8, images_path)
    cols = _read_u32(img_buf, 12, images_path)
    _check_payload(img_buf, 16, n_images * rows * cols, images_path)

    lbl_buf = Path(labels_path).read_bytes()
    magic = _read_u32(lbl_buf, 0, labels_path)
    if magic != LABELS_MAGIC:
        raise IdxParseError(
            f"{labels_path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{LABELS_MAGIC:08x}"
        )
    n_labels = _read_u32(lbl_buf, 4, labels_path)
    _check_payload(lbl_buf, 8, n_labels, labels_path)

    if n_images != n_labels:
        raise IdxParseError(
            f"{labels_path}: label count {n_labels} at offset 4 does not match "
            f"image count {n_images}"
        )

    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=16).astype(np.float64)
    pixels = (pixels / 255.0).reshape(n_images, rows * cols)
    labels = np.frombuffer(lbl_buf, dtype=np.uint8, offset=8)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if n_images else 2
    examples = [LabeledExample(pixels[i], int(labels[i])) for i in range(n_images)]
    return ClassIndexedDataset(n_classes, examples)


def write_idx(images: np.ndarray, labels, images_path, labels_path):
    """Write byte images (n, rows, cols) and labels as an IDX file pair."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"images must be (n, rows, cols), got {images.shape}")
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.shape != (images.shape[0],):
        raise ValueError(
            f"label count {labels.shape} does not match image count {images.shape[0]}"
        )
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, n))
        f.write(labels.tobytes())


@dataclass(frozen=True)
class SyntheticSpec:
    """Isotropic Gaussian clusters in the plane, one per class.

    Samples are affinely mapped into [0,1]^2 (the same coordinate convention
    as image pixels, so one epsilon-ball attack implementation serves both).
    """

    n_classes: int
    centers: tuple
    std: float
    samples_per_class: int
    seed: int

    def __post_init__(self):
        centers = tuple(tuple(float(c) for c in center) for center in self.centers)
        object.__setattr__(self, "centers", centers)
        if len(centers) != self.n_classes:
            raise ValueError(
                f"{len(centers)} centers given for {self.n_classes} classes"
            )
        if any(len(c) != 2 for c in centers):
            raise ValueError("centers must be 2-D points")
        if len(set(centers)) != len(centers):
            raise ValueError("centers must be pairwise distinct")
        if not self.std > 0:
            raise ValueError("std must be positive")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def unit_square_transform(spec: SyntheticSpec):
    """Offset and span of the affine map onto [0,1]^2 for this spec."""
    centers = np.array(spec.centers, dtype=np.float64)
    lo = centers.min(axis=0) - _MAP_MARGIN_STDS * spec.std
    hi = centers.max(axis=0) + _MAP_MARGIN_STDS * spec.std
    span = np.maximum(hi - lo, 1e-12)
    return lo, span


def mapped_centers(spec: SyntheticSpec) -> np.ndarray:
    lo, span = unit_square_transform(spec)
    return (np.array(spec.centers, dtype=np.float64) - lo) / span


def generate_synthetic(spec: SyntheticSpec) -> ClassIndexedDataset:
    """Draw the spec's clusters; deterministic under the spec seed."""
    rng = make_rng(spec.seed)
    lo, span = unit_square_transform(spec)
    examples = []
    for label, center in enumerate(spec.centers):
        pts = np.asarray(center) + spec.std * rng.standard_normal(
            (spec.samples_per_class, 2)
        )
        mapped = np.clip((pts - lo) / span, 0.0, 1.0)
        examples.extend(LabeledExample(row, label) for row in mapped)
    return ClassIndexedDataset(spec.n_classes, examples)


def sample_class(dataset: ClassIndexedDataset, label: int, count: int, seed: int) -> list:
    """Seeded uniform draw from one class bucket.

    Without replacement when the bucket holds at least ``count`` examples,
    with replacement otherwise.
    """
    bucket = dataset.by_class(label)
    if not bucket:
        raise ValueError(f"class {label} has no examples to sample")
    if count == 0:
        return []
    rng = make_rng(seed)
    idx = rng.choice(len(bucket), size=count, replace=count > len(bucket))
    return [bucket[i] for i in idx]


def sample_uniform(dataset: ClassIndexedDataset, count: int, seed: int) -> list:
    """Seeded uniform draw from the whole dataset, ignoring classes."""
    pool = dataset.merged()
    if not pool:
        raise ValueError("dataset has no examples to sample")
    if count == 0:
        return []
    rng = make_rng(seed)
    idx = rng.choice(len(pool), size=count, replace=count > len(pool))
    return [pool[i] for i in idx]

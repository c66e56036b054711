"""Procedural 10-class digit glyphs at 28x28.

A deterministic, file-free stand-in for handwritten-digit data: each class is
a seven-segment digit prototype, and each sample applies a random shift,
intensity scale and pixel noise. Several class pairs (5/6, 8/9, 3/9) differ
by a single segment, which keeps the task attackable at realistic epsilon.

``python -m advpost.glyphs OUTDIR`` writes the dataset as IDX file pairs.
"""

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import ClassIndexedDataset, LabeledExample, write_idx
from .rng import derive_seed, make_rng

SIZE = 28

# Segment boxes (row0, row1, col0, col1), half-open, inside a margin that
# keeps max_shift=3 translations on the canvas.
_SEGMENTS = {
    "A": (4, 7, 8, 20),
    "B": (4, 14, 17, 20),
    "C": (14, 24, 17, 20),
    "D": (21, 24, 8, 20),
    "E": (14, 24, 8, 11),
    "F": (4, 14, 8, 11),
    "G": (12, 16, 8, 20),
}

_DIGIT_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGECD",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}


def glyph_prototype(digit: int) -> np.ndarray:
    """Binary 28x28 prototype for one digit class."""
    if digit not in _DIGIT_SEGMENTS:
        raise ValueError(f"digit must be 0..9, got {digit}")
    img = np.zeros((SIZE, SIZE))
    for name in _DIGIT_SEGMENTS[digit]:
        r0, r1, c0, c1 = _SEGMENTS[name]
        img[r0:r1, c0:c1] = 1.0
    return img


@dataclass(frozen=True)
class GlyphSpec:
    """Sampling recipe for the glyph dataset."""

    samples_per_class: int
    seed: int
    noise_std: float = 0.15
    intensity_range: tuple = (0.5, 0.9)
    max_shift: int = 3

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        lo, hi = self.intensity_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("intensity_range must satisfy 0 < lo <= hi <= 1")
        if not 0 <= self.max_shift <= 3:
            raise ValueError("max_shift must lie in [0, 3] to stay on canvas")


def _sample_images(spec: GlyphSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = make_rng(spec.seed)
    protos = [glyph_prototype(d) for d in range(10)]
    lo, hi = spec.intensity_range
    images = np.empty((10 * spec.samples_per_class, SIZE, SIZE))
    labels = np.empty(10 * spec.samples_per_class, dtype=np.int64)
    k = 0
    for digit in range(10):
        for _ in range(spec.samples_per_class):
            dr, dc = rng.integers(-spec.max_shift, spec.max_shift + 1, size=2)
            img = np.roll(protos[digit], (dr, dc), axis=(0, 1))
            img = img * rng.uniform(lo, hi)
            img = img + rng.normal(0.0, spec.noise_std, (SIZE, SIZE))
            images[k] = np.clip(img, 0.0, 1.0)
            labels[k] = digit
            k += 1
    return images, labels


def generate_glyphs(spec: GlyphSpec) -> ClassIndexedDataset:
    """Materialise the glyph dataset with flattened 784-d pixel vectors."""
    images, labels = _sample_images(spec)
    examples = [
        LabeledExample(img.reshape(-1), int(lbl)) for img, lbl in zip(images, labels)
    ]
    return ClassIndexedDataset(10, examples)


def write_glyph_idx(out_dir, train_per_class: int, test_per_class: int, seed: int) -> dict:
    """Write train/test glyph IDX file pairs; returns the four paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split, per_class, child in (
        ("train", train_per_class, 0),
        ("test", test_per_class, 1),
    ):
        spec = GlyphSpec(samples_per_class=per_class, seed=derive_seed(seed, child))
        images, labels = _sample_images(spec)
        img_path = out / f"{split}-images-idx3-ubyte"
        lbl_path = out / f"{split}-labels-idx1-ubyte"
        write_idx(np.round(images * 255.0).astype(np.uint8), labels, img_path, lbl_path)
        paths[f"{split}_images"] = img_path
        paths[f"{split}_labels"] = lbl_path
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Write the procedural digit-glyph dataset as IDX files."
    )
    parser.add_argument("out_dir", help="directory for the four IDX files")
    parser.add_argument("--train-per-class", type=int, default=500)
    parser.add_argument("--test-per-class", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    paths = write_glyph_idx(
        args.out_dir, args.train_per_class, args.test_per_class, args.seed
    )
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

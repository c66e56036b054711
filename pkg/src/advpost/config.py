"""Flat key=value run configuration shared by all CLI commands.

Resolution order: per-dataset defaults, then the config file, then CLI flag
overrides. Unknown keys are rejected. ``data_dir`` falls back to the
ADVPOST_DATA_DIR environment variable.
"""

import os
from dataclasses import dataclass
from pathlib import Path

from .attacks import AttackConfig
from .data import SyntheticSpec
from .defense import NEIGHBOR_METHODS, VARIANTS, PostTrainConfig
from .glyphs import GlyphSpec
from .harness import TRAIN_METHODS, ExperimentConfig, IdxSource, TrainRecipe
from .rng import derive_seed


class RunConfigError(ValueError):
    """Bad configuration key, value, or combination."""


# key -> (default factory given dataset kind, documentation)
KEY_DOCS = {
    "dataset": "dataset kind: synthetic2 | synthetic3 | glyphs | idx",
    "data_dir": "root directory for idx files (default: $ADVPOST_DATA_DIR or '.')",
    "train_images": "idx only: training images file name",
    "train_labels": "idx only: training labels file name",
    "test_images": "idx only: test images file name",
    "test_labels": "idx only: test labels file name",
    "n_classes": "idx only: number of classes",
    "train_per_class": "generated datasets: training examples per class",
    "test_per_class": "generated datasets: test examples per class",
    "seed": "global seed; every derived stream hashes off it",
    "hidden": "comma-separated hidden layer sizes",
    "epochs": "base-training epochs",
    "batch_size": "base-training minibatch size",
    "train_method": "base-training perturbation: none | fgsm | pgd",
    "train_lr": "base-training learning rate",
    "train_momentum": "base-training momentum",
    "eps": "evaluation attack epsilon (also the adaptation attack epsilon)",
    "alpha": "evaluation attack step size",
    "steps": "evaluation attack step count",
    "pt_variant": "adaptation variant: " + " | ".join(VARIANTS),
    "pt_iters": "adaptation iteration count over the sampled batch",
    "pt_batch": "adaptation batch size (half per class)",
    "pt_lr": "adaptation learning rate",
    "pt_momentum": "adaptation momentum",
    "pt_neighbor": "neighbor search method: untargeted | targeted",
    "subset": "number of test inputs evaluated",
    "threads": "worker threads for per-input evaluation",
    "n_images": "gradient-consistency: number of eligible images",
    "grad_method": "gradient-consistency: true | zoo | opt_attack",
    "static": "gradient-consistency: yes disables adaptation between queries",
}

DATASETS = ("synthetic2", "synthetic3", "glyphs", "idx")

_COMMON_DEFAULTS = {
    "data_dir": "",
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "test-images-idx3-ubyte",
    "test_labels": "test-labels-idx1-ubyte",
    "n_classes": "10",
    "seed": "0",
    "train_momentum": "0.9",
    "pt_momentum": "0.9",
    "pt_neighbor": "untargeted",
    "threads": "1",
    "n_images": "100",
    "grad_method": "true",
    "static": "no",
}

# Image-scale defaults (28x28, 10 classes): 40-step eps=0.3 evaluation attack.
_IMAGE_DEFAULTS = {
    "train_per_class": "400",
    "test_per_class": "200",
    "hidden": "256,256",
    "epochs": "12",
    "batch_size": "64",
    "train_method": "fgsm",
    "train_lr": "0.02",
    "eps": "0.3",
    "alpha": "0.01",
    "steps": "40",
    "pt_variant": "fast",
    "pt_iters": "50",
    "pt_batch": "32",
    "pt_lr": "0.002",
    "subset": "500",
}

# Planar-task defaults: 20-step eps=0.05 attack inside the confusion band.
_PLANAR_DEFAULTS = {
    "train_per_class": "500",
    "test_per_class": "500",
    "hidden": "32,32",
    "epochs": "40",
    "batch_size": "32",
    "train_method": "fgsm",
    "train_lr": "0.05",
    "eps": "0.05",
    "alpha": "0.01",
    "steps": "20",
    "pt_variant": "fast",
    "pt_iters": "30",
    "pt_batch": "32",
    "pt_lr": "0.01",
    "subset": "500",
}

# Cluster geometry in raw coordinates, before the affine map onto [0,1]^2.
SYNTHETIC2_CENTERS = ((-1.0, 0.0), (1.0, 0.0))
SYNTHETIC3_CENTERS = ((0.0, 1.0), (-0.8660254037844386, -0.5), (0.8660254037844386, -0.5))
SYNTHETIC_STD = 0.45


def dataset_defaults(dataset: str) -> dict:
    if dataset not in DATASETS:
        raise RunConfigError(f"unknown dataset {dataset!r}, expected one of {DATASETS}")
    values = {"dataset": dataset}
    values.update(_COMMON_DEFAULTS)
    values.update(_PLANAR_DEFAULTS if dataset.startswith("synthetic") else _IMAGE_DEFAULTS)
    return values


def parse_config_file(path) -> dict:
    """Read key=value lines; '#' starts a comment, blank lines are ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RunConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_DOCS:
            raise RunConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _as_int(values: dict, key: str, minimum: int | None = None) -> int:
    try:
        out = int(values[key])
    except ValueError as exc:
        raise RunConfigError(f"{key}: expected an integer, got {values[key]!r}") from exc
    if minimum is not None and out < minimum:
        raise RunConfigError(f"{key}: must be at least {minimum}, got {out}")
    return out


def _as_float(values: dict, key: str) -> float:
    try:
        return float(values[key])
    except ValueError as exc:
        raise RunConfigError(f"{key}: expected a number, got {values[key]!r}") from exc


def _as_choice(values: dict, key: str, choices) -> str:
    if values[key] not in choices:
        raise RunConfigError(
            f"{key}: expected one of {', '.join(choices)}, got {values[key]!r}"
        )
    return values[key]


def _as_bool(values: dict, key: str) -> bool:
    mapping = {"yes": True, "no": False, "true": True, "false": False}
    if values[key] not in mapping:
        raise RunConfigError(f"{key}: expected yes/no, got {values[key]!r}")
    return mapping[values[key]]


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration; ``echo`` reproduces it verbatim."""

    values: dict

    @property
    def dataset(self) -> str:
        return self.values["dataset"]

    def echo(self) -> dict:
        return dict(self.values)

    def seed(self) -> int:
        return _as_int(self.values, "seed", minimum=0)

    def _hidden(self) -> tuple:
        raw = self.values["hidden"].strip()
        try:
            sizes = tuple(int(s) for s in raw.split(",") if s.strip())
        except ValueError as exc:
            raise RunConfigError(f"hidden: expected comma-separated ints, got {raw!r}") from exc
        if not sizes:
            raise RunConfigError("hidden: at least one hidden layer size required")
        return sizes

    def _dims(self) -> tuple[int, int]:
        if self.dataset.startswith("synthetic"):
            return 2, (2 if self.dataset == "synthetic2" else 3)
        if self.dataset == "glyphs":
            return 784, 10
        return 784, _as_int(self.values, "n_classes", minimum=2)

    def data_dir(self) -> Path:
        raw = self.values["data_dir"] or os.environ.get("ADVPOST_DATA_DIR", ".")
        return Path(raw)

    def train_source(self):
        return self._source(train=True)

    def test_source(self):
        return self._source(train=False)

    def _source(self, train: bool):
        seed = derive_seed(self.seed(), 0 if train else 1)
        per_class = _as_int(
            self.values, "train_per_class" if train else "test_per_class", minimum=1
        )
        if self.dataset.startswith("synthetic"):
            centers = (
                SYNTHETIC2_CENTERS if self.dataset == "synthetic2" else SYNTHETIC3_CENTERS
            )
            return SyntheticSpec(
                n_classes=len(centers),
                centers=centers,
                std=SYNTHETIC_STD,
                samples_per_class=per_class,
                seed=seed,
            )
        if self.dataset == "glyphs":
            return GlyphSpec(samples_per_class=per_class, seed=seed)
        root = self.data_dir()
        prefix = "train" if train else "test"
        return IdxSource(
            images_path=str(root / self.values[f"{prefix}_images"]),
            labels_path=str(root / self.values[f"{prefix}_labels"]),
            n_classes=_as_int(self.values, "n_classes", minimum=2),
        )

    def attack(self) -> AttackConfig:
        return AttackConfig(
            epsilon=_as_float(self.values, "eps"),
            alpha=_as_float(self.values, "alpha"),
            steps=_as_int(self.values, "steps", minimum=0),
        )

    def recipe(self) -> TrainRecipe:
        in_dim, out_dim = self._dims()
        method = _as_choice(self.values, "train_method", TRAIN_METHODS)
        return TrainRecipe(
            layer_sizes=(in_dim, *self._hidden(), out_dim),
            epochs=_as_int(self.values, "epochs", minimum=0),
            batch_size=_as_int(self.values, "batch_size", minimum=1),
            method=method,
            attack=None if method == "none" else self.attack(),
            learning_rate=_as_float(self.values, "train_lr"),
            momentum=_as_float(self.values, "train_momentum"),
            seed=derive_seed(self.seed(), 2),
        )

    def post_config(self) -> PostTrainConfig:
        return PostTrainConfig(
            variant=_as_choice(self.values, "pt_variant", VARIANTS),
            iterations=_as_int(self.values, "pt_iters", minimum=0),
            batch_size=_as_int(self.values, "pt_batch", minimum=2),
            learning_rate=_as_float(self.values, "pt_lr"),
            momentum=_as_float(self.values, "pt_momentum"),
            attack=self.attack(),
            neighbor_method=_as_choice(self.values, "pt_neighbor", NEIGHBOR_METHODS),
            seed=self.seed(),
        )

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            train_source=self.train_source(),
            test_source=self.test_source(),
            recipe=self.recipe(),
            attack=self.attack(),
            post=self.post_config(),
            subset=_as_int(self.values, "subset", minimum=1),
            seed=self.seed(),
        )

    def subset(self) -> int:
        return _as_int(self.values, "subset", minimum=1)

    def threads(self) -> int:
        return _as_int(self.values, "threads", minimum=1)

    def n_images(self) -> int:
        return _as_int(self.values, "n_images", minimum=1)

    def grad_method(self) -> str:
        return _as_choice(self.values, "grad_method", ("true", "zoo", "opt_attack"))

    def static(self) -> bool:
        return _as_bool(self.values, "static")


def build_runconfig(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Layer defaults, the optional config file, and flag overrides."""
    file_values = parse_config_file(file_path) if file_path else {}
    overrides = dict(overrides or {})
    for key in overrides:
        if key not in KEY_DOCS:
            raise RunConfigError(f"unknown key {key!r}")
    dataset = overrides.get("dataset") or file_values.get("dataset") or "synthetic3"
    values = dataset_defaults(dataset)
    values.update(file_values)
    values.update(overrides)
    rc = RunConfig(values)
    rc.seed()
    return rc

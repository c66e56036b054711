"""Experiment pipelines and metrics.

Base-model adversarial training, robust/natural accuracy evaluation with
frozen adversarial inputs, the neighbor-accuracy metric, the data-composition
ablation, and per-image timing. All runs are pure functions of their configs
and seeds; accuracy fields are bit-reproducible.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .attacks import AttackConfig, fgsm, pgd
from .data import ClassIndexedDataset, SyntheticSpec, generate_synthetic
from .defense import PostTrainConfig, PostTrainPipeline, find_neighbor, find_neighbor_targeted, post_train
from .glyphs import GlyphSpec, generate_glyphs
from .nn import Classifier, LayerGradients, SgdState, init_classifier, sgd_step
from .rng import derive_seed, make_rng

TRAIN_METHODS = ("none", "fgsm", "pgd")


class TrainingError(RuntimeError):
    """Raised when base training diverges (non-finite loss)."""


@dataclass(frozen=True)
class TrainRecipe:
    """How to train a base model: architecture, schedule, adversarial method."""

    layer_sizes: tuple
    epochs: int
    batch_size: int
    method: str = "none"
    attack: AttackConfig | None = None
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("layer_sizes needs input and output dimensions")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.method not in TRAIN_METHODS:
            raise ValueError(f"unknown training method {self.method!r}")
        if self.method != "none" and self.attack is None:
            raise ValueError(f"method {self.method!r} requires an attack config")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class IdxSource:
    """An IDX image/label file pair on disk."""

    images_path: str
    labels_path: str
    n_classes: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: datasets, base recipe, evaluation attack, adaptation."""

    train_source: object
    test_source: object
    recipe: TrainRecipe
    attack: AttackConfig
    post: PostTrainConfig | None
    subset: int
    seed: int

    def __post_init__(self):
        if self.subset < 1:
            raise ValueError("subset must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def materialize_dataset(source) -> ClassIndexedDataset:
    if isinstance(source, SyntheticSpec):
        return generate_synthetic(source)
    if isinstance(source, GlyphSpec):
        return generate_glyphs(source)
    if isinstance(source, IdxSource):
        from .data import load_idx

        return load_idx(source.images_path, source.labels_path, source.n_classes)
    raise TypeError(f"unknown dataset source {type(source).__name__}")


def test_subset(source, subset: int, seed: int) -> list:
    """Seeded fixed-size draw of test examples from a dataset source."""
    examples = materialize_dataset(source).merged()
    if subset > len(examples):
        raise ValueError(f"subset {subset} exceeds test size {len(examples)}")
    order = make_rng(seed, 7).permutation(len(examples))
    return [examples[i] for i in order[:subset]]


def _zero_grads(model: Classifier) -> list[LayerGradients]:
    return [
        LayerGradients(np.zeros_like(l.weights), np.zeros_like(l.bias))
        for l in model.layers
    ]


def train_base(dataset: ClassIndexedDataset, recipe: TrainRecipe) -> Classifier:
    """Minibatch SGD over (optionally adversarially perturbed) examples.

    Adversarial inputs are regenerated against the current parameters for
    every batch; plain training uses the examples as-is. Returns the seeded
    initialization untouched when epochs == 0.
    """
    model = init_classifier(recipe.layer_sizes, recipe.seed)
    if recipe.epochs == 0:
        return model
    examples = dataset.merged()
    if not examples:
        raise ValueError("cannot train on an empty dataset")
    state = SgdState(model, recipe.learning_rate, recipe.momentum)
    shuffle_rng = make_rng(recipe.seed, 1)
    for epoch in range(recipe.epochs):
        order = shuffle_rng.permutation(len(examples))
        epoch_loss = 0.0
        for start in range(0, len(examples), recipe.batch_size):
            batch = [examples[i] for i in order[start:start + recipe.batch_size]]
            grads = _zero_grads(model)
            batch_loss = 0.0
            for example in batch:
                if recipe.method == "fgsm":
                    x = fgsm(model, example.pixels, example.label, recipe.attack.epsilon)
                elif recipe.method == "pgd":
                    x = pgd(model, example.pixels, example.label, recipe.attack)
                else:
                    x = example.pixels
                result = model.loss_and_gradients(x, example.label)
                batch_loss += result.loss
                for g, r in zip(grads, result.parameter_gradients):
                    g.weights += r.weights
                    g.bias += r.bias
            scale = 1.0 / len(batch)
            for g in grads:
                g.weights *= scale
                g.bias *= scale
            sgd_step(model, grads, state)
            epoch_loss += batch_loss
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"loss diverged at epoch {epoch}")
    return model


@dataclass(frozen=True)
class TimingStats:
    """Per-image wall-clock statistics in seconds."""

    n: int
    mean_seconds: float | None
    median_seconds: float | None
    p95_seconds: float | None


def timing_stats(samples) -> TimingStats:
    samples = list(samples)
    if not samples:
        return TimingStats(0, None, None, None)
    arr = np.asarray(samples, dtype=np.float64)
    return TimingStats(
        n=len(samples),
        mean_seconds=float(arr.mean()),
        median_seconds=float(np.median(arr)),
        p95_seconds=float(np.percentile(arr, 95)),
    )


@dataclass
class VariantResult:
    """Metrics for one defense variant over a fixed test subset."""

    name: str
    n_inputs: int
    natural_accuracy: float | None = None
    robust_accuracy: float | None = None
    neighbor_accuracy: float | None = None
    skip_rate_adversarial: float | None = None
    skip_rate_natural: float | None = None
    timing: TimingStats | None = None

    def __post_init__(self):
        for value in (
            self.natural_accuracy,
            self.robust_accuracy,
            self.neighbor_accuracy,
            self.skip_rate_adversarial,
            self.skip_rate_natural,
        ):
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"rate {value} outside [0, 1]")


REPORT_HEADER = [
    "variant",
    "n_inputs",
    "natural_accuracy",
    "robust_accuracy",
    "neighbor_accuracy",
    "skip_rate_adversarial",
    "skip_rate_natural",
    "mean_seconds_per_image",
    "median_seconds_per_image",
    "p95_seconds_per_image",
]


@dataclass
class EvalReport:
    """One row per variant plus the fully resolved configuration echo."""

    rows: list
    config: dict

    def table(self) -> tuple[list[str], list[list]]:
        out = []
        for r in self.rows:
            t = r.timing or TimingStats(0, None, None, None)
            out.append([
                r.name,
                r.n_inputs,
                r.natural_accuracy,
                r.robust_accuracy,
                r.neighbor_accuracy,
                r.skip_rate_adversarial,
                r.skip_rate_natural,
                t.mean_seconds,
                t.median_seconds,
                t.p95_seconds,
            ])
        return REPORT_HEADER, out

    def row(self, name: str) -> VariantResult:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def _frozen_adversarial(model: Classifier, examples, attack: AttackConfig) -> list:
    """Attack every test input once against the base model."""
    return [pgd(model, ex.pixels, ex.label, attack) for ex in examples]


def evaluate(model_or_pipeline, examples, attack: AttackConfig,
             post_config: PostTrainConfig | None = None, *,
             dataset: ClassIndexedDataset | None = None, seed: int = 0,
             threads: int = 1, config_echo: dict | None = None) -> EvalReport:
    """Score the base model and, optionally, the per-input adapted defense.

    Adversarial test inputs are generated once against the base model and
    replayed to every variant. Natural and adversarial versions of each input
    are submitted as independent queries, each adapting its own clone with a
    per-input derived seed.
    """
    if not examples:
        raise ValueError("test set must be non-empty")
    if isinstance(model_or_pipeline, PostTrainPipeline):
        base = model_or_pipeline.base_model
        post_config = post_config or model_or_pipeline.config
        dataset = dataset or model_or_pipeline.dataset
    else:
        base = model_or_pipeline

    n = len(examples)
    adversarial = _frozen_adversarial(base, examples, attack)

    base_nat = 0
    base_rob = 0
    base_times = []
    for example, x_adv in zip(examples, adversarial):
        base_nat += int(base.predict(example.pixels) == example.label)
        t0 = time.perf_counter()
        pred = base.predict(x_adv)
        base_times.append(time.perf_counter() - t0)
        base_rob += int(pred == example.label)

    rows = [
        VariantResult(
            name="base",
            n_inputs=n,
            natural_accuracy=base_nat / n,
            robust_accuracy=base_rob / n,
            timing=timing_stats(base_times),
        )
    ]

    if post_config is not None:
        if dataset is None:
            raise ValueError("post-training evaluation needs the training dataset")

        def run_one(idx: int):
            example, x_adv = examples[idx], adversarial[idx]
            adv_cfg = replace(post_config, seed=derive_seed(seed, idx, 0))
            t0 = time.perf_counter()
            out_adv = post_train(base, x_adv, dataset, adv_cfg)
            dt = time.perf_counter() - t0
            nat_cfg = replace(post_config, seed=derive_seed(seed, idx, 1))
            out_nat = post_train(base, example.pixels, dataset, nat_cfg)
            return out_adv, out_nat, dt

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run_one, range(n)))
        else:
            results = [run_one(i) for i in range(n)]

        rob = nat = neigh = skip_adv = skip_nat = 0
        times = []
        for example, (out_adv, out_nat, dt) in zip(examples, results):
            rob += int(out_adv.prediction == example.label)
            nat += int(out_nat.prediction == example.label)
            neigh += int(
                example.label
                in (out_adv.neighbor.original_class, out_adv.neighbor.neighbor_class)
            )
            skip_adv += int(out_adv.skipped)
            skip_nat += int(out_nat.skipped)
            times.append(dt)
        rows.append(
            VariantResult(
                name=f"post_{post_config.variant}",
                n_inputs=n,
                natural_accuracy=nat / n,
                robust_accuracy=rob / n,
                neighbor_accuracy=neigh / n,
                skip_rate_adversarial=skip_adv / n,
                skip_rate_natural=skip_nat / n,
                timing=timing_stats(times),
            )
        )

    return EvalReport(rows=rows, config=dict(config_echo or {}))


def neighbor_accuracy(model: Classifier, examples, attack: AttackConfig,
                      method: str = "untargeted") -> float:
    """P(truth is the original or the neighbor class) over attacked inputs."""
    if not examples:
        raise ValueError("test set must be non-empty")
    finder = find_neighbor_targeted if method == "targeted" else find_neighbor
    hits = 0
    for example in examples:
        x_adv = pgd(model, example.pixels, example.label, attack)
        result = finder(model, x_adv, attack)
        hits += int(example.label in (result.original_class, result.neighbor_class))
    return hits / len(examples)


ABLATION_VARIANTS = ("ablation_random", "ablation_traindata")


def ablation_suite(config: ExperimentConfig, model: Classifier | None = None,
                   threads: int = 1, config_echo: dict | None = None) -> EvalReport:
    """Compare post-training data compositions under shared seeds.

    Rows: the base model, the configured two-class composition, a random
    second class, and class-agnostic draws from the whole training set. The
    frozen adversarial inputs and all per-input seeds are identical across
    rows, so differences isolate the data composition.
    """
    if config.post is None:
        raise ValueError("ablation needs a post-training config")
    train_ds = materialize_dataset(config.train_source)
    examples = test_subset(config.test_source, config.subset, config.seed)
    if model is None:
        model = train_base(train_ds, config.recipe)

    report = evaluate(
        model, examples, config.attack, config.post,
        dataset=train_ds, seed=config.seed, threads=threads,
        config_echo=config_echo,
    )
    for variant in ABLATION_VARIANTS:
        alt = evaluate(
            model, examples, config.attack, replace(config.post, variant=variant),
            dataset=train_ds, seed=config.seed, threads=threads,
        )
        report.rows.append(alt.row(f"post_{variant}"))
    return report


def timing_report(pipeline, examples) -> TimingStats:
    """Wall-clock per answered input, including any per-input adaptation."""
    times = []
    for example in examples:
        t0 = time.perf_counter()
        pipeline.predict(example.pixels)
        times.append(time.perf_counter() - t0)
    return timing_stats(times)

"""Inference-stage adaptation: neighbor-class discovery and post-training.

Given a submitted input, the defense re-attacks it to find the "neighbor"
class (the other plausible candidate for the truth), then fine-tunes a clone
of the base model on fresh training data from just those two classes before
answering. The base model is never mutated; every call starts from a fresh
clone with its own seeded sampler.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .attacks import AttackConfig, fgsm, pgd
from .data import ClassIndexedDataset, sample_class, sample_uniform
from .nn import Classifier, SgdState, cross_entropy, sgd_step, softmax
from .rng import derive_seed, make_rng

VARIANTS = (
    "fast",
    "pgd",
    "fixed",
    "normal",
    "ablation_random",
    "ablation_traindata",
)

NEIGHBOR_METHODS = ("untargeted", "targeted")


@dataclass(frozen=True)
class NeighborResult:
    """Original class, neighbor class, and the re-attacked input that found it."""

    original_class: int
    neighbor_class: int
    neighbor_input: np.ndarray
    valid: bool

    def __post_init__(self):
        if self.valid != (self.neighbor_class != self.original_class):
            raise ValueError("valid flag must equal (neighbor != original)")


@dataclass(frozen=True)
class PostTrainConfig:
    """Hyperparameters for one per-input adaptation.

    ``variant`` selects how training inputs are perturbed and which classes
    are sampled; ``attack`` drives both the neighbor search and the inner
    adversarial generation (same epsilon for both).
    """

    variant: str = "fast"
    iterations: int = 50
    batch_size: int = 256
    learning_rate: float = 0.001
    momentum: float = 0.9
    attack: AttackConfig = AttackConfig(epsilon=0.3, alpha=0.01, steps=40)
    seed: int = 0
    neighbor_method: str = "untargeted"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ValueError("batch_size must be even and at least 2")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.neighbor_method not in NEIGHBOR_METHODS:
            raise ValueError(f"unknown neighbor method {self.neighbor_method!r}")


@dataclass
class PostTrainOutcome:
    """Adapted clone plus bookkeeping for one submitted input."""

    model: Classifier
    neighbor: NeighborResult
    skipped: bool
    prediction: int
    seconds: float
    fixed_perturbation: np.ndarray | None = None


def find_neighbor(model: Classifier, x_prime, attack_config: AttackConfig) -> NeighborResult:
    """Re-attack the submitted input against its own predicted class.

    The neighbor class is whatever the attacked point is classified as; the
    result is valid only when that differs from the original prediction.
    """
    untargeted = replace(attack_config, targeted=False, target_class=None)
    y_prime = model.predict(x_prime)
    x_second = pgd(model, x_prime, y_prime, untargeted)
    y_second = model.predict(x_second)
    return NeighborResult(y_prime, y_second, x_second, y_second != y_prime)


def find_neighbor_targeted(model: Classifier, x_prime, attack_config: AttackConfig) -> NeighborResult:
    """Targeted neighbor search over every class other than the prediction.

    Runs one targeted attack per candidate class and keeps the candidate with
    the highest softmax probability at its attacked point; ties break toward
    the lowest class index.
    """
    if model.n_classes < 2:
        raise ValueError("targeted neighbor search needs at least two classes")
    targeted = replace(attack_config, targeted=True, target_class=None)
    y_prime = model.predict(x_prime)
    best_class = None
    best_conf = -1.0
    best_input = None
    for candidate in range(model.n_classes):
        if candidate == y_prime:
            continue
        x_cand = pgd(model, x_prime, candidate, targeted)
        conf = float(softmax(model.forward(x_cand))[candidate])
        if conf > best_conf:
            best_class, best_conf, best_input = candidate, conf, x_cand
    return NeighborResult(y_prime, best_class, best_input, True)


def fixed_delta(x_prime, x_second) -> np.ndarray:
    """Perturbation that carries the submitted input onto its neighbor input."""
    x_prime = np.asarray(x_prime, dtype=np.float64)
    x_second = np.asarray(x_second, dtype=np.float64)
    if x_prime.shape != x_second.shape:
        raise ValueError(
            f"shape mismatch: {x_prime.shape} vs {x_second.shape}"
        )
    return x_second - x_prime


def _draw_batch(dataset: ClassIndexedDataset, config: PostTrainConfig,
                y_prime: int, y_second: int) -> list:
    """Sample the adaptation batch according to the variant's composition."""
    half = config.batch_size // 2
    if config.variant == "ablation_traindata":
        batch = sample_uniform(dataset, config.batch_size, derive_seed(config.seed, 0))
    elif config.variant == "ablation_random":
        rng = make_rng(config.seed, 3)
        others = [c for c in range(dataset.n_classes) if c != y_prime]
        second = int(rng.choice(others))
        batch = sample_class(dataset, y_prime, half, derive_seed(config.seed, 1))
        batch += sample_class(dataset, second, half, derive_seed(config.seed, 2))
    else:
        batch = sample_class(dataset, y_prime, half, derive_seed(config.seed, 1))
        batch += sample_class(dataset, y_second, half, derive_seed(config.seed, 2))
    order = make_rng(config.seed, 4).permutation(len(batch))
    return [batch[i] for i in order]


def post_train(base_model: Classifier, x_prime, dataset: ClassIndexedDataset,
               config: PostTrainConfig) -> PostTrainOutcome:
    """Adapt a clone of the base model to one submitted input.

    Finds the neighbor class; if none is found the untouched clone is
    returned (skipped outcome). Otherwise runs ``iterations`` passes over the
    sampled two-class batch, perturbing each example per the variant and
    applying one momentum-SGD step per example. Adversarial examples for the
    fast/pgd variants are regenerated against the current parameters at every
    step; the fixed variant reuses one frozen perturbation throughout.
    """
    start = time.perf_counter()
    x_prime = np.asarray(x_prime, dtype=np.float64)
    model = base_model.clone()

    finder = (
        find_neighbor_targeted
        if config.neighbor_method == "targeted"
        else find_neighbor
    )
    neighbor = finder(base_model, x_prime, config.attack)
    if not neighbor.valid:
        return PostTrainOutcome(
            model=model,
            neighbor=neighbor,
            skipped=True,
            prediction=model.predict(x_prime),
            seconds=time.perf_counter() - start,
        )

    batch = _draw_batch(dataset, config, neighbor.original_class, neighbor.neighbor_class)

    delta_fix = None
    if config.variant == "fixed":
        delta_fix = fixed_delta(x_prime, neighbor.neighbor_input)

    inner_attack = replace(config.attack, targeted=False, target_class=None)
    state = SgdState(model, config.learning_rate, config.momentum)
    for _ in range(config.iterations):
        for example in batch:
            if config.variant == "pgd":
                x_i = pgd(model, example.pixels, example.label, inner_attack)
            elif config.variant == "fixed":
                x_i = np.clip(example.pixels + delta_fix, 0.0, 1.0)
            elif config.variant == "normal":
                x_i = example.pixels
            else:  # fast, ablation_random, ablation_traindata
                x_i = fgsm(model, example.pixels, example.label, inner_attack.epsilon)
            result = model.loss_and_gradients(x_i, example.label)
            sgd_step(model, result.parameter_gradients, state)

    return PostTrainOutcome(
        model=model,
        neighbor=neighbor,
        skipped=False,
        prediction=model.predict(x_prime),
        seconds=time.perf_counter() - start,
        fixed_perturbation=delta_fix,
    )


class PostTrainPipeline:
    """Query surface over (base model, training data, adaptation config).

    Each query adapts a fresh clone with its own derived seed, so repeated
    queries see stochastically different models; that stochasticity is what
    the gradient-consistency experiments measure. With ``enabled=False`` the
    pipeline answers from the base model and is fully deterministic.
    """

    def __init__(self, base_model: Classifier, dataset: ClassIndexedDataset,
                 config: PostTrainConfig, enabled: bool = True):
        self.base_model = base_model
        self.dataset = dataset
        self.config = config
        self.enabled = enabled
        self._queries = 0

    @property
    def queries(self) -> int:
        return self._queries

    def reset(self):
        """Rewind the query counter; replays the exact same model sequence."""
        self._queries = 0

    def adapt(self, x) -> PostTrainOutcome | None:
        """Run one adaptation query; None when post-training is disabled."""
        if not self.enabled:
            return None
        seed = derive_seed(self.config.seed, self._queries)
        self._queries += 1
        return post_train(self.base_model, x, self.dataset, replace(self.config, seed=seed))

    def adapted_model(self, x) -> Classifier:
        outcome = self.adapt(x)
        return self.base_model if outcome is None else outcome.model

    def loss(self, x, y: int) -> float:
        """Scalar cross-entropy of the (possibly adapted) model at the query."""
        return cross_entropy(self.adapted_model(x).forward(x), y)

    def predict(self, x) -> int:
        return self.adapted_model(x).predict(x)

"""White-box l-infinity attacks: single-step FGSM and multi-step PGD.

Both attacks operate on pixel vectors in [0,1]^d. PGD clamps the accumulated
perturbation to the epsilon box after every step and applies the pixel-range
clamp once at the end, so a single saturated step reproduces FGSM bitwise.
sign(0) is 0: coordinates with a dead gradient are never perturbed.
"""

from dataclasses import dataclass

import numpy as np

from .nn import Classifier
from .rng import make_rng


@dataclass(frozen=True)
class AttackConfig:
    """l-infinity attack description.

    ``targeted`` switches the step direction from loss ascent on the given
    label to loss descent toward it. ``target_class`` optionally records a
    fixed target for config-driven targeted attacks.
    """

    epsilon: float
    alpha: float
    steps: int
    targeted: bool = False
    target_class: int | None = None
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.target_class is not None and self.target_class < 0:
            raise ValueError("target_class must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _check_pixel_range(x: np.ndarray):
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("attack input must lie in [0, 1]")


def fgsm(model: Classifier, x, y: int, epsilon: float) -> np.ndarray:
    """One ascent step of size epsilon along the input-gradient sign."""
    x = np.asarray(x, dtype=np.float64)
    _check_pixel_range(x)
    grad = model.loss_and_gradients(x, y).input_gradient
    return np.clip(x + epsilon * np.sign(grad), 0.0, 1.0)


def pgd(model: Classifier, x, y_or_target: int, config: AttackConfig) -> np.ndarray:
    """Iterative sign-gradient attack inside the epsilon box around x.

    Untargeted mode ascends the loss against ``y_or_target``; targeted mode
    descends it. With ``steps == 0`` the input is returned unchanged (up to
    the final pixel clamp, which is a no-op for valid inputs).
    """
    x = np.asarray(x, dtype=np.float64)
    _check_pixel_range(x)
    eps = config.epsilon
    if config.random_start:
        delta = make_rng(config.seed).uniform(-eps, eps, size=x.shape)
    else:
        delta = np.zeros_like(x)
    sign = -1.0 if config.targeted else 1.0
    for _ in range(config.steps):
        grad = model.loss_and_gradients(x + delta, y_or_target).input_gradient
        delta = delta + sign * config.alpha * np.sign(grad)
        delta = np.clip(delta, -eps, eps)
    return np.clip(x + delta, 0.0, 1.0)


def attack_success(model: Classifier, x, x_adv, y_true: int) -> bool:
    """True iff the attacked input is no longer classified as ``y_true``."""
    return model.predict(x_adv) != int(y_true)

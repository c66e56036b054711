"""Gradient consistency probes against an adapting prediction pipeline.

An attacker estimating gradients from queries sees a different model every
time an adaptive pipeline answers. These probes quantify that: the true
(analytic) input gradient, a symmetric finite-difference estimate from two
soft-label queries, and a directional estimate built from decision-boundary
distances, each computed twice and compared by sign.
"""

import math
from dataclasses import dataclass

import numpy as np

from .defense import PostTrainPipeline, find_neighbor
from .nn import Classifier
from .rng import make_rng

ZOO_STEP = 1e-4
OPT_BETA = 0.005
DISTANCE_TOL = 1e-3

METHODS = ("true", "zoo", "opt_attack")


@dataclass(frozen=True)
class GradientProbe:
    """What was probed for one image: a coordinate or a direction."""

    method: str
    coordinate: int | None = None
    direction: np.ndarray | None = None
    h: float = ZOO_STEP
    beta: float = OPT_BETA

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.method in ("true", "zoo"):
            if self.coordinate is None or self.coordinate < 0:
                raise ValueError("true/zoo probes need a coordinate index")
        else:
            if self.direction is None or not np.linalg.norm(self.direction) > 0:
                raise ValueError("opt_attack probes need a nonzero direction")


@dataclass(frozen=True)
class ConsistencyReport:
    """Sign-disagreement rate of repeated gradient queries."""

    method: str
    disagreement_rate: float
    n_images: int
    n_comparisons: int
    n_invalid: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.disagreement_rate <= 1.0:
            raise ValueError("disagreement rate must lie in [0, 1]")


def true_gradient(pipeline: PostTrainPipeline, x, y: int, i: int) -> float:
    """Analytic input-gradient coordinate of the pipeline's adapted model."""
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= i < x.shape[0]:
        raise ValueError(f"coordinate {i} out of range [0, {x.shape[0]})")
    model = pipeline.adapted_model(x)
    return float(model.loss_and_gradients(x, y).input_gradient[i])


def zoo_gradient(pipeline: PostTrainPipeline, x, y: int, i: int, h: float = ZOO_STEP) -> float:
    """Symmetric finite difference of the pipeline's scalar loss output.

    Two soft-label queries per call; with adaptation enabled each query may
    be answered by a freshly fine-tuned model.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= i < x.shape[0]:
        raise ValueError(f"coordinate {i} out of range [0, {x.shape[0]})")
    e_i = np.zeros_like(x)
    e_i[i] = 1.0
    return (pipeline.loss(x + h * e_i, y) - pipeline.loss(x - h * e_i, y)) / (2.0 * h)


def boundary_distance(model: Classifier, x, v, tol: float = DISTANCE_TOL) -> float:
    """Distance to the nearest prediction flip along the unit direction v.

    Doubling search then bisection; returns ``math.inf`` when no flip occurs
    within sqrt(d), the diameter of the unit hypercube.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise ValueError("direction must be nonzero")
    vhat = v / norm
    base = model.predict(x)
    lam_max = math.sqrt(x.shape[0])

    lo = 0.0
    hi = None
    lam = tol
    while lam < lam_max:
        if model.predict(x + lam * vhat) != base:
            hi = lam
            break
        lo = lam
        lam *= 2.0
    if hi is None:
        if model.predict(x + lam_max * vhat) != base:
            hi = lam_max
        else:
            return math.inf

    while hi - lo > 0.5 * tol:
        mid = 0.5 * (lo + hi)
        if model.predict(x + mid * vhat) != base:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def opt_attack_gradient(pipeline: PostTrainPipeline, x, v, beta: float = OPT_BETA,
                        seed: int = 0, tol: float = DISTANCE_TOL) -> np.ndarray | None:
    """Directional estimate from boundary distances under a Gaussian nudge.

    Each distance evaluation queries the pipeline once for an adapted model
    and runs the whole search against it. Returns None when either distance
    is unbounded (no boundary within range), flagging the sample invalid.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not np.linalg.norm(v) > 0:
        raise ValueError("direction must be nonzero")
    u = make_rng(seed).standard_normal(v.shape)
    d_nudged = boundary_distance(pipeline.adapted_model(x), x, v + beta * u, tol)
    d_base = boundary_distance(pipeline.adapted_model(x), x, v, tol)
    if not (math.isfinite(d_nudged) and math.isfinite(d_base)):
        return None
    return (d_nudged - d_base) / beta * u


def sign_consistency_experiment(pipeline: PostTrainPipeline, examples, n_images: int,
                                method: str, seed: int = 0, h: float = ZOO_STEP,
                                beta: float = OPT_BETA,
                                tol: float = DISTANCE_TOL) -> ConsistencyReport:
    """Compute each eligible image's gradient twice and compare signs.

    Eligible images are those the pipeline can actually adapt to (a neighbor
    class exists); the first ``n_images`` of them are used. true/zoo compare
    one scalar per image at a seeded random coordinate; opt_attack compares
    the estimate vector per coordinate, with the same probe noise on both
    calls so only the adaptation randomness differs.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if n_images < 1:
        raise ValueError("n_images must be at least 1")

    eligible = []
    for idx, example in enumerate(examples):
        result = find_neighbor(pipeline.base_model, example.pixels, pipeline.config.attack)
        if result.valid:
            eligible.append((idx, example))
            if len(eligible) == n_images:
                break
    if len(eligible) < n_images:
        raise ValueError(
            f"only {len(eligible)} eligible images available, need {n_images}"
        )

    disagreements = 0
    comparisons = 0
    invalid = 0
    for idx, example in eligible:
        rng = make_rng(seed, idx)
        x, y = example.pixels, example.label
        if method == "true":
            i = int(rng.integers(x.shape[0]))
            g1 = true_gradient(pipeline, x, y, i)
            g2 = true_gradient(pipeline, x, y, i)
            disagreements += int(np.sign(g1) != np.sign(g2))
            comparisons += 1
        elif method == "zoo":
            i = int(rng.integers(x.shape[0]))
            g1 = zoo_gradient(pipeline, x, y, i, h)
            g2 = zoo_gradient(pipeline, x, y, i, h)
            disagreements += int(np.sign(g1) != np.sign(g2))
            comparisons += 1
        else:
            v = rng.standard_normal(x.shape)
            probe_seed = int(rng.integers(2**32))
            g1 = opt_attack_gradient(pipeline, x, v, beta, probe_seed, tol)
            g2 = opt_attack_gradient(pipeline, x, v, beta, probe_seed, tol)
            if g1 is None or g2 is None:
                invalid += 1
                continue
            disagreements += int(np.sum(np.sign(g1) != np.sign(g2)))
            comparisons += g1.shape[0]

    rate = disagreements / comparisons if comparisons else 0.0
    return ConsistencyReport(
        method=method,
        disagreement_rate=rate,
        n_images=len(eligible),
        n_comparisons=comparisons,
        n_invalid=invalid,
        seed=seed,
    )

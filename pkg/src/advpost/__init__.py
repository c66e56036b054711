"""Inference-stage post-training defense for adversarially trained classifiers.

Library surface: dense classifiers with exact backprop (:mod:`advpost.nn`),
datasets (:mod:`advpost.data`, :mod:`advpost.glyphs`), l-infinity attacks
(:mod:`advpost.attacks`), the per-input adaptation defense
(:mod:`advpost.defense`), black-box gradient probes (:mod:`advpost.blackbox`),
experiment pipelines (:mod:`advpost.harness`), and checkpoint/config/CLI
plumbing. See README.md for the experiment walkthrough.
"""

from .attacks import AttackConfig, attack_success, fgsm, pgd
from .data import (
    ClassIndexedDataset,
    IdxParseError,
    LabeledExample,
    SyntheticSpec,
    generate_synthetic,
    load_idx,
    sample_class,
)
from .defense import (
    NeighborResult,
    PostTrainConfig,
    PostTrainOutcome,
    PostTrainPipeline,
    find_neighbor,
    find_neighbor_targeted,
    fixed_delta,
    post_train,
)
from .glyphs import GlyphSpec, generate_glyphs
from .nn import (
    BackpropResult,
    Classifier,
    DenseLayer,
    SgdState,
    cross_entropy,
    init_classifier,
    numeric_array,
    sgd_step,
    softmax,
)

__all__ = [
    "AttackConfig",
    "BackpropResult",
    "ClassIndexedDataset",
    "Classifier",
    "DenseLayer",
    "GlyphSpec",
    "IdxParseError",
    "LabeledExample",
    "NeighborResult",
    "PostTrainConfig",
    "PostTrainOutcome",
    "PostTrainPipeline",
    "SgdState",
    "SyntheticSpec",
    "attack_success",
    "cross_entropy",
    "fgsm",
    "find_neighbor",
    "find_neighbor_targeted",
    "fixed_delta",
    "generate_glyphs",
    "generate_synthetic",
    "init_classifier",
    "load_idx",
    "numeric_array",
    "pgd",
    "post_train",
    "sample_class",
    "sgd_step",
    "softmax",
]

"""Gradient-sign adversarial examples and their robustness to image
transformations, at desk scale."""

__version__ = "0.1.0"

from .attacks import (  # noqa: E402
    AttackConfig,
    GradientSignAttack,
    basic_iterative,
    clip_eps,
    default_iterations,
    fast,
    least_likely_class_attack,
    least_likely_label,
)
from .classifier import ModelParams, SoftmaxMLPClassifier, TrainConfig  # noqa: E402
from .core import linf_distance, netpbm_read, netpbm_write  # noqa: E402
from .data import Dataset, load_idx, synth_shapes  # noqa: E402
from .metrics import EvalRecord, UndefinedDestructionRate, destruction_rate  # noqa: E402
from .transforms import ImageTransformer, TransformSpec  # noqa: E402

__all__ = [
    "AttackConfig",
    "GradientSignAttack",
    "basic_iterative",
    "clip_eps",
    "default_iterations",
    "fast",
    "least_likely_class_attack",
    "least_likely_label",
    "ModelParams",
    "SoftmaxMLPClassifier",
    "TrainConfig",
    "linf_distance",
    "netpbm_read",
    "netpbm_write",
    "Dataset",
    "load_idx",
    "synth_shapes",
    "EvalRecord",
    "UndefinedDestructionRate",
    "destruction_rate",
    "ImageTransformer",
    "TransformSpec",
]

"""Continual object-centric representation learning via hypernetwork weight
generation, with a procedural scene simulator and experiment harnesses."""

from .numerics import AdamState, Tensor, adam_step, grad_check
from .objectives import QualityConfig, dice_score, expected_quality, l1_norm
from .pursuit import PursuitEvent, PursuitState, pretrain_warmup, pursue_one
from .scenesim import (MarginalDataset, ObjectSpec, SceneSample,
                       make_object_library, render_sample, sample_marginal)

__all__ = [
    "AdamState", "Tensor", "adam_step", "grad_check",
    "QualityConfig", "dice_score", "expected_quality", "l1_norm",
    "PursuitEvent", "PursuitState", "pretrain_warmup", "pursue_one",
    "MarginalDataset", "ObjectSpec", "SceneSample",
    "make_object_library", "render_sample", "sample_marginal",
]

__version__ = "0.1.0"

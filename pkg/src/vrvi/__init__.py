"""Variance-reduced extra-point methods for finite-sum variational inequalities.

The operator is ``F = sum_i H_i + sum_i grad g_i`` over a closed convex set.
:mod:`vrvi.savrep` handles strongly monotone ``H``, :mod:`vrvi.savrep_m` the
merely monotone case; :mod:`vrvi.constrained` and :mod:`vrvi.zeroth_order`
turn finite-sum constrained programs into such VIs.
"""
from .core import (
    Ball,
    Box,
    ConfigurationError,
    ConstraintSet,
    CustomSet,
    DivergenceError,
    GapEvaluator,
    Monitor,
    NonnegOrthant,
    Product,
    Reference,
    StaleCacheError,
    TraceRecord,
    VRVIError,
    Whole,
    natural_residual,
    project,
    q_gap,
    residual_norm,
)
from .oracle import CallCounter, ComponentFamily, CompositeVIProblem, NoiseModel

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "CallCounter",
    "ComponentFamily",
    "CompositeVIProblem",
    "ConfigurationError",
    "ConstraintSet",
    "CustomSet",
    "DivergenceError",
    "GapEvaluator",
    "Monitor",
    "NoiseModel",
    "NonnegOrthant",
    "Product",
    "Reference",
    "StaleCacheError",
    "TraceRecord",
    "VRVIError",
    "Whole",
    "natural_residual",
    "project",
    "q_gap",
    "residual_norm",
]

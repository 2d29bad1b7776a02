"""Evaluation harness for visual counterfactual explanations."""

from .data import EvaluationBundle, validate_bundle
from .errors import CfevalError, DomainError, FileFormatError
from .metrics import MetricConfig
from .stats import evaluate_bundle, normalization_audit, rank_methods

__version__ = "0.1.0"

__all__ = [
    "CfevalError",
    "DomainError",
    "FileFormatError",
    "EvaluationBundle",
    "MetricConfig",
    "evaluate_bundle",
    "normalization_audit",
    "rank_methods",
    "validate_bundle",
]

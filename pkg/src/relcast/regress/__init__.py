"""Regression engines and evaluation metrics for compact models."""

from .engines import Engine, RegressorSpec, TrainedModel, fit, predict
from .kernels import Kernel, kernel_matrix
from .metrics import ComparisonRow, MetricsReport, compare_engines, evaluate, metrics, metrics_csv, metrics_table

__all__ = [
    "Engine",
    "Kernel",
    "RegressorSpec",
    "TrainedModel",
    "ComparisonRow",
    "MetricsReport",
    "fit",
    "predict",
    "evaluate",
    "metrics",
    "compare_engines",
    "metrics_csv",
    "metrics_table",
    "kernel_matrix",
]

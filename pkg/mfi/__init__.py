"""
Feature Importance Package
Measure-of-feature-importance explanations for black-box predictors on
sequences and images, with evaluation and convergence studies.
"""

__version__ = "1.0.0"
__author__ = "MFI Team"

from .core import (
    AlphabetSpec, ConditionSpec, ExplanationMode, FunctionPredictor, ImportanceMap, MFIError,
    Predictor, SampleSet,
)
from .estimator import MFIEstimator
from .evaluation import MorfEvaluator, PerturbationStrategy, area_over_curve
from .kernels import KernelSpec, gram, hsic
from .runner import ExplanationStudy, run_study

__all__ = [
    "AlphabetSpec", "ConditionSpec", "ExplanationMode", "ExplanationStudy", "FunctionPredictor",
    "ImportanceMap", "KernelSpec", "MFIError", "MFIEstimator", "MorfEvaluator",
    "PerturbationStrategy", "Predictor", "SampleSet", "area_over_curve", "gram", "hsic",
    "run_study",
]

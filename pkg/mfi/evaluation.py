"""
Explanation evaluation module.
Most-Relevant-First perturbation curves, random-order baselines and the
area-over-curve summary.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage
from scipy.integrate import trapezoid

from .core import (
    GRID, POSITIONAL, ConfigError, ImageSample, ImportanceMap, Predictor, Sample, SampleSet,
    SequenceSample, ShapeMismatchError,
)

logger = logging.getLogger(__name__)

DATASET_MEAN = 'dataset-mean'
LOCAL_MEAN = 'local-mean'
ZERO = 'zero'
UNIFORM_SYMBOL = 'uniform-symbol'

IMAGE_STRATEGIES = (DATASET_MEAN, LOCAL_MEAN, ZERO)

RELEVANCE = 'relevance'
RANDOM = 'random'

MORF_COLUMNS = ['step', 'perturbed_count', 'accuracy', 'ordering', 'seed']


@dataclass(frozen=True)
class PerturbationStrategy:
    kind: str = DATASET_MEAN
    radius: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in IMAGE_STRATEGIES + (UNIFORM_SYMBOL,):
            raise ConfigError(f"unknown perturbation strategy: {self.kind}")
        if self.kind == LOCAL_MEAN and self.radius < 1:
            raise ConfigError(f"local-mean radius must be >= 1, got {self.radius}")

    def describe(self) -> str:
        return f"{self.kind}({self.radius})" if self.kind == LOCAL_MEAN else self.kind


@dataclass(frozen=True)
class MorfCurve:
    """Performance after perturbing 0, step, 2*step, ... coordinates."""

    steps: Tuple[Tuple[int, float], ...]
    ordering: str
    perturbation: str
    seed: Optional[int] = None

    @property
    def baseline(self) -> float:
        return self.steps[0][1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{'step': idx, 'perturbed_count': count, 'accuracy': acc,
              'ordering': self.ordering, 'seed': self.seed}
             for idx, (count, acc) in enumerate(self.steps)],
            columns=MORF_COLUMNS,
        )


def sign_accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples where sign(score) matches the +/-1 label (score 0 counts as -1)."""
    predicted = np.where(np.asarray(scores) > 0, 1.0, -1.0)
    return float(np.count_nonzero(predicted == np.asarray(labels)) / len(predicted))


def outcome_class(score: float, label: float) -> str:
    """TP, FN, TN or FP from the sign prediction against a +/-1 label."""
    predicted_positive = score > 0
    if label > 0:
        return 'TP' if predicted_positive else 'FN'
    return 'FP' if predicted_positive else 'TN'


def area_over_curve(curve: MorfCurve) -> float:
    """
    Trapezoidal area between the baseline level and the curve, divided by
    the number of steps. Larger means faster degradation.
    """
    if len(curve.steps) < 2:
        raise ConfigError("area over curve needs at least 2 curve points")
    accuracies = np.array([acc for _, acc in curve.steps])
    drops = curve.baseline - accuracies
    return float(trapezoid(drops, dx=1.0) / (len(accuracies) - 1))


class MorfEvaluator:
    """Perturbs test samples in relevance order and tracks performance."""

    def __init__(self, reference: SampleSet, strategy: Optional[PerturbationStrategy] = None,
                 metric: Callable[[np.ndarray, np.ndarray], float] = sign_accuracy):
        self.reference = reference
        self.strategy = strategy or (PerturbationStrategy(UNIFORM_SYMBOL) if reference.is_sequence
                                     else PerturbationStrategy(DATASET_MEAN))
        self.metric = metric
        if reference.is_sequence and self.strategy.kind != UNIFORM_SYMBOL:
            raise ConfigError(f"{self.strategy.kind} perturbation needs image samples")
        if not reference.is_sequence and self.strategy.kind == UNIFORM_SYMBOL:
            raise ConfigError("uniform-symbol perturbation needs sequence samples")

    def fill_values(self, samples: SampleSet) -> np.ndarray:
        """Replacement value for every coordinate of every sample."""
        kind = self.strategy.kind
        if kind == ZERO:
            return np.zeros(samples.data.shape)
        if kind == DATASET_MEAN:
            mean = self.reference.data.mean(axis=0)
            return np.broadcast_to(mean, samples.data.shape).copy()
        if kind == LOCAL_MEAN:
            width = 2 * self.strategy.radius + 1
            return ndimage.uniform_filter(samples.data, size=(1, width, width), mode='nearest')
        rng = np.random.default_rng(self.strategy.seed)
        return rng.integers(0, samples.alphabet.size, size=samples.data.shape)

    def _flat_indices(self, shape: Tuple[int, ...], coords: Sequence[tuple]) -> np.ndarray:
        flat = []
        for coord in coords:
            coord = tuple(coord)
            if len(coord) != len(shape) or any(not 1 <= c <= d for c, d in zip(coord, shape)):
                raise ShapeMismatchError(f"coordinate {coord} outside sample shape {shape}")
            flat.append(np.ravel_multi_index(tuple(c - 1 for c in coord), shape))
        return np.asarray(flat, dtype=int)

    def perturb_batch(self, samples: SampleSet, flat_indices: np.ndarray,
                      fill: Optional[np.ndarray] = None) -> SampleSet:
        """Replace the given (0-based, flat) coordinates in every sample."""
        if fill is None:
            fill = self.fill_values(samples)
        data = np.array(samples.data).reshape(samples.n, -1)
        data[:, flat_indices] = fill.reshape(samples.n, -1)[:, flat_indices]
        return samples.with_data(data.reshape(samples.data.shape))

    def perturb(self, x: Sample, coords: Sequence[tuple]) -> Sample:
        """
        Replace the listed 1-based coordinates of one sample.

        Coordinates not listed are left untouched.
        """
        single = self.reference.single(x)
        flat = self._flat_indices(self.reference.shape, coords)
        perturbed = self.perturb_batch(single, flat)
        return perturbed.sample(0)

    def ordering(self, shape: Tuple[int, ...], relevance: Optional[ImportanceMap],
                 seed: Optional[int]) -> np.ndarray:
        total = int(np.prod(shape))
        if relevance is None:
            return np.random.default_rng(seed).permutation(total)
        expected = GRID if len(shape) == 2 else POSITIONAL
        if relevance.layout != expected or relevance.shape != tuple(shape):
            raise ShapeMismatchError(
                f"relevance layout {relevance.layout}{relevance.shape} does not match samples {shape}"
            )
        return relevance.ranking()

    def morf_curve(self, test: SampleSet, labels: np.ndarray, predictor: Predictor,
                   relevance: Optional[ImportanceMap] = None, seed: Optional[int] = None,
                   step: int = 1, steps: Optional[int] = None) -> MorfCurve:
        """
        Perturb test samples cumulatively, `step` coordinates at a time.

        Args:
            test: Test samples
            labels: +/-1 labels for the test samples
            predictor: Model being evaluated
            relevance: Importance map giving the order; None means random order
            seed: Seed for the random order
            step: Coordinates perturbed per step
            steps: Number of steps (default: until every coordinate is perturbed)

        Returns:
            MorfCurve starting at the unperturbed baseline
        """
        if step < 1:
            raise ConfigError(f"MoRF step must be >= 1, got {step}")
        labels = np.asarray(labels, dtype=float)
        if labels.shape != (test.n,):
            raise ShapeMismatchError(f"expected {test.n} labels, got {labels.size}")

        order = self.ordering(test.shape, relevance, seed)
        total = order.size
        if steps is None:
            steps = int(np.ceil(total / step))
        fill = self.fill_values(test)

        points = [(0, self.metric(predictor.score_batch(test), labels))]
        for s in range(1, steps + 1):
            count = min(s * step, total)
            perturbed = self.perturb_batch(test, order[:count], fill)
            points.append((count, self.metric(predictor.score_batch(perturbed), labels)))
            if count == total:
                break

        ordering = RELEVANCE if relevance is not None else RANDOM
        logger.debug("MoRF %s curve: %d points, final accuracy %.3f", ordering, len(points), points[-1][1])
        return MorfCurve(tuple(points), ordering, self.strategy.describe(),
                         seed=None if relevance is not None else seed)

    def compare(self, test: SampleSet, labels: np.ndarray, predictor: Predictor,
                relevance: ImportanceMap, seeds: Sequence[int], step: int = 1,
                steps: Optional[int] = None) -> Tuple[MorfCurve, List[MorfCurve]]:
        """Relevance-ordered curve plus one random-order curve per seed."""
        ranked = self.morf_curve(test, labels, predictor, relevance, step=step, steps=steps)
        randoms = [self.morf_curve(test, labels, predictor, None, seed=seed, step=step, steps=steps)
                   for seed in seeds]
        return ranked, randoms

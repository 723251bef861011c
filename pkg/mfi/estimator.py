"""
Feature importance estimation module.
Conditional sampling, the MFI estimator, kernel MFI via HSIC, instance- and
model-based drivers, and the POIM and FIRM special cases.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .core import (
    CONSTANT, EPSILON, EXACT, GRID, IDENTITY_IMAGE, INTERVENE, KMER, PIXEL, PO_MATRIX,
    POSITIONAL, SPARSE_PWM, UNIT, ConditionSpec, ConfigError, EmptyConditionedSetError,
    ExplanationMode, ImportanceMap, IncompatibleKernelError, Predictor, Sample, SampleSet,
    ShapeMismatchError,
)
from .kernels import DELTA, LINEAR, RBF, WD, KernelSpec, center_gram, cross_gram, gram, hsic, hsic_centered_k

logger = logging.getLogger(__name__)

GLOBAL = 'global'
NONE = 'none'


@dataclass(frozen=True)
class ConditionedSet:
    """
    Samples selected (or intervened on) for f(z) = t.

    Indices point into the originating SampleSet; weights are uniform and
    sum to 1. For the intervene strategy every sample is kept and the
    conditioned coordinates are overwritten only when materialized.
    """

    indices: np.ndarray
    weights: np.ndarray
    strategy: str
    spec: ConditionSpec

    @property
    def m(self) -> int:
        return int(self.indices.size)

    def materialize(self, samples: SampleSet) -> SampleSet:
        subset = samples.subset(self.indices)
        if self.strategy != INTERVENE or self.spec.selector == CONSTANT:
            return subset
        data = np.array(subset.data)
        if self.spec.selector == PIXEL:
            data[:, self.spec.i - 1, self.spec.j - 1] = self.spec.target
        else:
            start = self.spec.i - 1
            data[:, start:start + self.spec.k] = samples.alphabet.encode(self.spec.target)
        return subset.with_data(data)


@dataclass(frozen=True)
class FirmScore:
    """Standard deviation over t of the conditional mean score E[s | f = t]."""

    value: float
    conditional_means: Dict[Any, float] = field(default_factory=dict)
    degenerate: bool = False


def kmer_codes(data: np.ndarray, k: int, alphabet_size: int) -> np.ndarray:
    """(n, L - k + 1) array of k-mer indices, first symbol most significant."""
    positions = data.shape[1] - k + 1
    codes = np.zeros((data.shape[0], positions), dtype=np.int64)
    for offset in range(k):
        codes = codes * alphabet_size + data[:, offset:offset + positions]
    return codes


def condition(samples: SampleSet, spec: ConditionSpec) -> ConditionedSet:
    """
    Select the samples satisfying f(z) = t under the condition's matching strategy.

    Raises:
        EmptyConditionedSetError: exact or epsilon-band matching found nothing
    """
    if spec.selector != CONSTANT and spec.target is None:
        raise ConfigError(f"{spec.selector} condition needs a target value")
    spec.validate(samples.shape, samples.alphabet)
    n = samples.n
    everything = np.arange(n)

    if spec.selector == CONSTANT or spec.strategy == INTERVENE:
        return ConditionedSet(everything, np.full(n, 1.0 / n), spec.strategy, spec)

    if spec.selector == PIXEL:
        values = samples.data[:, spec.i - 1, spec.j - 1]
        if spec.strategy == EXACT:
            mask = values == spec.target
        else:
            mask = np.abs(values - spec.target) <= spec.epsilon
    else:
        if spec.strategy == EPSILON:
            raise ConfigError("epsilon-band conditioning needs a real-valued pixel selector")
        window = samples.data[:, spec.i - 1:spec.i - 1 + spec.k]
        mask = np.all(window == samples.alphabet.encode(spec.target)[None, :], axis=1)

    indices = np.flatnonzero(mask)
    if indices.size == 0:
        raise EmptyConditionedSetError(f"no sample satisfies {spec.describe()}")
    return ConditionedSet(indices, np.full(indices.size, 1.0 / indices.size), spec.strategy, spec)


def conditional_covariance(scores: np.ndarray, features: np.ndarray, weights: np.ndarray,
                           uncentered: bool = False) -> np.ndarray:
    """
    Weighted E[s phi] - E[s] E[phi] along the sample axis (axis 0).

    With uncentered=True only E[s phi] is returned.
    """
    scores = np.asarray(scores, dtype=float)
    features = np.asarray(features, dtype=float)
    weights = np.asarray(weights, dtype=float)
    e_s_phi = np.tensordot(weights * scores, features, axes=(0, 0))
    if uncentered:
        return e_s_phi
    mu_s = float(np.dot(weights, scores))
    mu_phi = np.tensordot(weights, features, axes=(0, 0))
    return e_s_phi - mu_s * mu_phi


class MFIEstimator:
    """
    Sampling estimator of feature importance for a black-box predictor.

    Holds the empirical sample collection Z and the predictor s; predictor
    scores on Z are computed once and cached.
    """

    def __init__(self, samples: SampleSet, predictor: Predictor, threads: int = 1):
        self.samples = samples
        self.predictor = predictor
        self.threads = max(1, int(threads))
        self._scores = None

    def scores(self) -> np.ndarray:
        if self._scores is None:
            self._scores = np.asarray(self.predictor.score_batch(self.samples), dtype=float)
            self._scores.setflags(write=False)
        return self._scores

    def _map(self, fn: Callable, items: Sequence) -> List:
        # results come back in item order regardless of worker count
        if self.threads == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def _metadata(self, mode: str, condition_text: str, **extra) -> Dict[str, Any]:
        return {'mode': mode, 'condition': condition_text, 'seed': self.samples.seed,
                'n': self.samples.n, 'extra': extra}

    def condition(self, spec: ConditionSpec) -> ConditionedSet:
        return condition(self.samples, spec)

    def _conditioned_scores(self, conditioned: ConditionedSet):
        """Scores and samples of a conditioned set, intervening when required."""
        if conditioned.strategy == INTERVENE and conditioned.spec.selector != CONSTANT:
            materialized = conditioned.materialize(self.samples)
            return self.predictor.score_batch(materialized), materialized
        return self.scores()[conditioned.indices], self.samples.subset(conditioned.indices)

    def mfi_estimate(self, mode: ExplanationMode, spec: ConditionSpec,
                     uncentered: bool = False) -> Union[ImportanceMap, float]:
        """
        Sampling estimate of E[s(X) phi(X) | f(X) = t] - mu_s mu_phi.

        Args:
            mode: Explanation mode phi
            spec: Condition f(X) = t
            uncentered: Return the plain conditional expectation instead

        Returns:
            float for the unit mode, otherwise an ImportanceMap
                (grid for identity-image, po-matrix for sparse-pwm)
        """
        mode.validate(self.samples.shape)
        conditioned = self.condition(spec)
        scores, members = self._conditioned_scores(conditioned)
        weights = conditioned.weights
        meta = self._metadata(mode.describe(), spec.describe(), m=conditioned.m,
                              centered=not uncentered)

        if mode.variant == UNIT:
            return float(conditional_covariance(scores, np.ones(len(scores)), weights, uncentered))

        if mode.variant == IDENTITY_IMAGE:
            values = conditional_covariance(scores, members.data, weights, uncentered)
            return ImportanceMap(GRID, values, **meta)

        values = self._sparse_pwm_covariance(members, scores, weights, mode.k, uncentered)
        return ImportanceMap(PO_MATRIX, values, alphabet=self.samples.alphabet, k=mode.k, **meta)

    def _sparse_pwm_covariance(self, members: SampleSet, scores: np.ndarray, weights: np.ndarray,
                               k: int, uncentered: bool) -> np.ndarray:
        # phi(z) is one-hot per position, so E[s phi] and E[phi] are weighted k-mer counts
        size = members.alphabet.size ** k
        codes = kmer_codes(members.data, k, members.alphabet.size)
        ws = weights * scores
        mu_s = float(np.dot(weights, scores))
        values = np.empty((size, codes.shape[1]))
        for j in range(codes.shape[1]):
            e_s_phi = np.bincount(codes[:, j], weights=ws, minlength=size)
            if uncentered:
                values[:, j] = e_s_phi
            else:
                mu_phi = np.bincount(codes[:, j], weights=weights, minlength=size)
                values[:, j] = e_s_phi - mu_s * mu_phi
        return values

    def instance_importance(self, target: Sample, window: int = 1, strategy: Optional[str] = None,
                            epsilon: float = 0.05, centering: str = GLOBAL) -> ImportanceMap:
        """
        Importance of each pixel or k-mer window of one sample g.

        For every coordinate, importance = E[s(X) | f(X) = t] - E[s(X)] with
        t read from g. Coordinates whose conditioned set is empty are missing.

        Args:
            target: The sample g to explain
            window: k-mer length for sequences (ignored for images)
            strategy: exact, epsilon or intervene; defaults to intervene for
                images and exact for sequences
            epsilon: Band half-width for epsilon conditioning
            centering: 'global' subtracts E[s] over Z, 'none' keeps E[s | f = t]

        Returns:
            ImportanceMap with grid(d1, d2) or positional(L - k + 1) layout
        """
        if centering not in (GLOBAL, NONE):
            raise ConfigError(f"unknown centering: {centering}")
        single = self.samples.single(target)
        g = single.data[0]
        baseline = float(np.mean(self.scores())) if centering == GLOBAL else 0.0

        if self.samples.is_sequence:
            strategy = strategy or EXACT
            L = self.samples.shape[0]
            if not 1 <= window <= L:
                raise ShapeMismatchError(f"window k={window} must satisfy 1 <= k <= L={L}")
            specs = [ConditionSpec(KMER, i=i, k=window,
                                   target=self.samples.alphabet.decode(g[i - 1:i - 1 + window]),
                                   strategy=strategy)
                     for i in range(1, L - window + 2)]
            layout, shape = POSITIONAL, (len(specs),)
        else:
            strategy = strategy or INTERVENE
            d1, d2 = self.samples.shape
            specs = [ConditionSpec.pixel(i, j, g[i - 1, j - 1], strategy=strategy, epsilon=epsilon)
                     for i in range(1, d1 + 1) for j in range(1, d2 + 1)]
            layout, shape = GRID, (d1, d2)

        def conditional_mean(spec: ConditionSpec) -> float:
            try:
                conditioned = self.condition(spec)
            except EmptyConditionedSetError:
                return np.nan
            scores, _ = self._conditioned_scores(conditioned)
            return float(np.dot(conditioned.weights, scores))

        means = np.array(self._map(conditional_mean, specs))
        values = (means - baseline).reshape(shape)
        missing = int(np.isnan(values).sum())
        if missing:
            logger.info("Instance explanation: %d of %d coordinates had empty conditioned sets",
                        missing, values.size)

        score = float(self.predictor.score_batch(single)[0])
        meta = self._metadata(UNIT, f"instance[{strategy}]", window=window, centering=centering,
                              score=score)
        return ImportanceMap(layout, values, **meta)

    def model_importance(self, mode: ExplanationMode, uncentered: bool = False) -> ImportanceMap:
        """Model-based map: the MFI estimate under a constant selector."""
        if mode.variant == UNIT:
            raise ConfigError("model-based explanation needs identity-image or sparse-pwm mode")
        return self.mfi_estimate(mode, ConditionSpec.constant(), uncentered=uncentered)

    def _phi_features(self, members: SampleSet, mode: ExplanationMode) -> np.ndarray:
        if mode.variant == UNIT:
            return np.ones((members.n, 1))
        if mode.variant == IDENTITY_IMAGE:
            return members.features()
        return kmer_codes(members.data, mode.k, members.alphabet.size)

    def kernel_mfi(self, mode: ExplanationMode, spec: ConditionSpec,
                   score_kernel: Optional[KernelSpec] = None,
                   feature_kernel: Optional[KernelSpec] = None,
                   per_feature: bool = False) -> Union[ImportanceMap, float]:
        """
        Kernel MFI on the conditioned set, estimated through HSIC.

        The scalar form is hsic(K, L) with K from score_kernel on scores and L
        from feature_kernel on phi outputs. The per-feature form computes one
        HSIC value between the scores and each single coordinate of phi.

        Defaults: rbf(1) on scores; rbf(1) on real features and delta on
        discrete phi outputs (unit and sparse-pwm).
        """
        mode.validate(self.samples.shape)
        score_kernel = score_kernel or KernelSpec.rbf(1.0)
        if feature_kernel is None:
            feature_kernel = KernelSpec.rbf(1.0) if mode.variant == IDENTITY_IMAGE else KernelSpec.delta()
        if score_kernel.kind == WD or feature_kernel.kind == WD:
            raise IncompatibleKernelError("wd kernel does not apply to scores or phi outputs")
        if mode.variant == SPARSE_PWM and feature_kernel.kind not in (DELTA, LINEAR, RBF):
            raise IncompatibleKernelError(f"{feature_kernel.kind} kernel does not apply to sparse-pwm features")

        conditioned = self.condition(spec)
        if conditioned.m < 2:
            raise EmptyConditionedSetError(
                f"kernel MFI needs at least 2 conditioned samples, got {conditioned.m}"
            )
        scores, members = self._conditioned_scores(conditioned)
        Kc = center_gram(gram(np.asarray(scores, dtype=float), score_kernel))
        phi = self._phi_features(members, mode)

        if not per_feature:
            if mode.variant == SPARSE_PWM and feature_kernel.kind == LINEAR:
                # <B(x), B(x')> counts positions sharing the same k-mer
                L = np.zeros((members.n, members.n))
                for j in range(phi.shape[1]):
                    L += phi[:, j][:, None] == phi[:, j][None, :]
                return hsic_centered_k(Kc.entries, L)
            if mode.variant == SPARSE_PWM and feature_kernel.kind == RBF:
                raise IncompatibleKernelError("rbf kernel on whole sparse-pwm outputs is not supported")
            return hsic(Kc, gram(phi, feature_kernel))

        meta = self._metadata(mode.describe(), spec.describe(), m=conditioned.m,
                              estimator='kernel-mfi', score_kernel=score_kernel.describe(),
                              feature_kernel=feature_kernel.describe())

        if mode.variant == IDENTITY_IMAGE:
            def pixel_hsic(p: int) -> float:
                column = phi[:, p:p + 1]
                return hsic_centered_k(Kc.entries, cross_gram(column, column, feature_kernel))

            values = np.array(self._map(pixel_hsic, list(range(phi.shape[1]))))
            return ImportanceMap(GRID, values.reshape(self.samples.shape), **meta)

        if mode.variant == SPARSE_PWM:
            values = self._binary_feature_hsic(Kc.entries, phi, mode.k, feature_kernel)
            return ImportanceMap(PO_MATRIX, values, alphabet=self.samples.alphabet, k=mode.k, **meta)

        raise ConfigError("per-feature kernel MFI needs identity-image or sparse-pwm mode")

    def _binary_feature_hsic(self, Kc: np.ndarray, codes: np.ndarray, k: int,
                             feature_kernel: KernelSpec) -> np.ndarray:
        # For a 0/1 feature a and centered K: delta gives 2 a'Ka, linear a'Ka,
        # rbf 2 (1 - exp(-1 / 2 sigma^2)) a'Ka.
        if feature_kernel.kind == DELTA:
            factor = 2.0
        elif feature_kernel.kind == LINEAR:
            factor = 1.0
        else:
            factor = 2.0 * (1.0 - np.exp(-1.0 / (2.0 * feature_kernel.sigma ** 2)))

        size = self.samples.alphabet.size ** k
        n = Kc.shape[0]

        def position_hsic(j: int) -> np.ndarray:
            onehot = np.zeros((n, size))
            onehot[np.arange(n), codes[:, j]] = 1.0
            quad = np.sum((Kc @ onehot) * onehot, axis=0)
            return factor * quad / (n - 1) ** 2

        columns = self._map(position_hsic, list(range(codes.shape[1])))
        return np.column_stack(columns)

    def kernel_importance(self, mode: ExplanationMode, score_kernel: Optional[KernelSpec] = None,
                          feature_kernel: Optional[KernelSpec] = None) -> ImportanceMap:
        """Model-based per-feature kernel MFI map."""
        return self.kernel_mfi(mode, ConditionSpec.constant(), score_kernel=score_kernel,
                               feature_kernel=feature_kernel, per_feature=True)

    def poim(self, k: int) -> ImportanceMap:
        """
        Centered conditional means E[s | X_{j:j+k} = y] - E[s] over exact matches.

        Returns:
            po-matrix ImportanceMap; (y, j) entries with no match are missing
        """
        if not self.samples.is_sequence:
            raise ShapeMismatchError("POIM needs sequence samples")
        ExplanationMode.sparse_pwm(k).validate(self.samples.shape)

        scores = self.scores()
        size = self.samples.alphabet.size ** k
        codes = kmer_codes(self.samples.data, k, self.samples.alphabet.size)
        mu = float(np.mean(scores))
        values = np.empty((size, codes.shape[1]))
        for j in range(codes.shape[1]):
            sums = np.bincount(codes[:, j], weights=scores, minlength=size)
            counts = np.bincount(codes[:, j], minlength=size)
            with np.errstate(invalid='ignore', divide='ignore'):
                values[:, j] = np.where(counts > 0, sums / counts - mu, np.nan)

        meta = self._metadata(f"poim({k})", 'constant', estimator='poim')
        return ImportanceMap(PO_MATRIX, values, alphabet=self.samples.alphabet, k=k, **meta)

    def _feature_values(self, selector: ConditionSpec) -> np.ndarray:
        selector.validate(self.samples.shape)
        if selector.selector == KMER:
            start = selector.i - 1
            window = self.samples.data[:, start:start + selector.k]
            return kmer_codes(window, selector.k, self.samples.alphabet.size)[:, 0]
        if selector.selector == PIXEL:
            return self.samples.data[:, selector.i - 1, selector.j - 1]
        return np.zeros(self.samples.n)

    def firm(self, selector: ConditionSpec, values: Optional[np.ndarray] = None) -> FirmScore:
        """
        FIRM score: standard deviation over observed t of E[s | f = t].

        t is weighted by its empirical frequency in Z. A single observed value
        gives 0 and sets the degenerate flag.
        """
        if values is None:
            values = self._feature_values(selector)
        scores = self.scores()
        levels, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
        inverse = np.asarray(inverse).ravel()
        means = np.bincount(inverse, weights=scores, minlength=levels.size) / counts

        if selector.selector == KMER:
            keys = [self.samples.alphabet.kmers(selector.k)[int(v)] for v in levels]
        else:
            keys = [float(v) for v in levels]
        conditional_means = dict(zip(keys, (float(m) for m in means)))

        if levels.size < 2:
            logger.warning("FIRM for %s: single observed value, variance taken as 0",
                           selector.describe())
            return FirmScore(0.0, conditional_means, degenerate=True)

        p = counts / counts.sum()
        centre = float(np.dot(p, means))
        variance = float(np.dot(p, (means - centre) ** 2))
        return FirmScore(float(np.sqrt(max(variance, 0.0))), conditional_means)

    def firm_map(self, k: int = 1, bins: int = 10) -> ImportanceMap:
        """
        FIRM score for every k-mer window (sequences) or pixel (images).

        Pixel intensities are binned to `bins` equal-width levels on [0, 1].
        """
        if self.samples.is_sequence:
            L = self.samples.shape[0]
            ExplanationMode.sparse_pwm(k).validate(self.samples.shape)
            selectors = [ConditionSpec(KMER, i=i, k=k) for i in range(1, L - k + 2)]
            scores = self._map(lambda sel: self.firm(sel).value, selectors)
            values = np.array(scores)
            layout = POSITIONAL
        else:
            if bins < 2:
                raise ConfigError("firm_map needs at least 2 bins")
            d1, d2 = self.samples.shape
            binned = np.minimum((self.samples.data * bins).astype(int), bins - 1)

            def pixel_firm(p):
                i, j = divmod(p, d2)
                selector = ConditionSpec(PIXEL, i=i + 1, j=j + 1)
                return self.firm(selector, values=binned[:, i, j]).value

            values = np.array(self._map(pixel_firm, list(range(d1 * d2)))).reshape(d1, d2)
            layout = GRID

        meta = self._metadata('firm', 'constant', estimator='firm', window=k)
        return ImportanceMap(layout, values, **meta)

    def convergence_curve(self, sizes: Sequence[int], mode: ExplanationMode,
                          spec: Optional[ConditionSpec] = None,
                          kernel: bool = False) -> pd.DataFrame:
        """
        Frobenius distance between maps estimated on consecutive prefix sizes.

        Each prefix of Z is re-scored and re-estimated from scratch, so the
        recorded wall time covers the whole estimate at that size.

        Returns:
            DataFrame with one row per consecutive pair: n, previous_n,
            frobenius_distance, map_norm, seconds (this size) and
            previous_seconds (the previous size)
        """
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("convergence sizes must be strictly increasing with at least 2 entries")
        if sizes[0] < 1 or sizes[-1] > self.samples.n:
            raise ConfigError(f"convergence sizes must lie in 1..{self.samples.n}")
        if mode.variant == UNIT:
            raise ConfigError("convergence needs a map-valued mode (identity-image or sparse-pwm)")
        spec = spec or ConditionSpec.constant()

        rows = []
        previous = None
        for size in sizes:
            estimator = MFIEstimator(self.samples.prefix(size), self.predictor, threads=self.threads)
            started = time.perf_counter()
            if kernel:
                current = estimator.kernel_mfi(mode, spec, per_feature=True)
            else:
                current = estimator.mfi_estimate(mode, spec)
            seconds = time.perf_counter() - started
            logger.info("Converge: n=%d estimated in %.2fs", size, seconds)
            if previous is not None:
                rows.append({
                    'n': size,
                    'previous_n': previous[0],
                    'frobenius_distance': current.frobenius_distance(previous[1]),
                    'map_norm': current.frobenius_norm(),
                    'seconds': seconds,
                    'previous_seconds': previous[2],
                })
            previous = (size, current, seconds)

        return pd.DataFrame(rows, columns=['n', 'previous_n', 'frobenius_distance', 'map_norm', 'seconds',
                                           'previous_seconds'])

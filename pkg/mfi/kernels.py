"""
Kernel functions module.
RBF, linear, delta and weighted-degree string kernels, Gram matrices,
centering and the empirical HSIC estimate.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .core import (
    DimensionMismatchError, ConfigError, ImageSample, IncompatibleKernelError,
    SampleSet, SequenceSample, ShapeMismatchError,
)

logger = logging.getLogger(__name__)

RBF = 'rbf'
LINEAR = 'linear'
DELTA = 'delta'
WD = 'wd'

KERNEL_KINDS = (RBF, LINEAR, DELTA, WD)

# rows of the first operand processed per block in the WD kernel
_WD_BLOCK = 64


@dataclass(frozen=True)
class KernelSpec:
    kind: str = RBF
    sigma: float = 1.0
    degree: int = 1

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind: {self.kind}")
        if self.kind == RBF and not self.sigma > 0:
            raise ConfigError(f"rbf bandwidth sigma must be > 0, got {self.sigma}")
        if self.kind == WD and self.degree < 1:
            raise ConfigError(f"wd degree must be >= 1, got {self.degree}")

    @classmethod
    def rbf(cls, sigma: float = 1.0) -> 'KernelSpec':
        return cls(RBF, sigma=float(sigma))

    @classmethod
    def linear(cls) -> 'KernelSpec':
        return cls(LINEAR)

    @classmethod
    def delta(cls) -> 'KernelSpec':
        return cls(DELTA)

    @classmethod
    def wd(cls, degree: int) -> 'KernelSpec':
        return cls(WD, degree=int(degree))

    def params(self) -> Dict[str, Any]:
        if self.kind == RBF:
            return {'sigma': self.sigma}
        if self.kind == WD:
            return {'degree': self.degree}
        return {}

    @classmethod
    def from_params(cls, kind: str, params: Dict[str, Any]) -> 'KernelSpec':
        if kind == RBF:
            return cls.rbf(params['sigma'])
        if kind == WD:
            return cls.wd(params['degree'])
        return cls(kind)

    def describe(self) -> str:
        params = ','.join(f"{k}={v}" for k, v in self.params().items())
        return f"{self.kind}({params})" if params else self.kind


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    kernel: Optional[KernelSpec] = None
    centered: bool = False

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatchError(f"Gram matrix must be square, got {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def rbf_eval(x: Sequence[float], y: Sequence[float], sigma: float) -> float:
    """exp(-||x - y||^2 / (2 sigma^2))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionMismatchError(f"rbf operands differ in dimension: {x.shape} vs {y.shape}")
    if not sigma > 0:
        raise ConfigError(f"rbf bandwidth sigma must be > 0, got {sigma}")
    diff = x - y
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma ** 2)))


def linear_eval(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionMismatchError(f"linear operands differ in dimension: {x.shape} vs {y.shape}")
    return float(np.dot(x, y))


def delta_eval(a: Any, b: Any) -> float:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return 1.0 if np.array_equal(a, b) else 0.0
    return 1.0 if a == b else 0.0


def wd_weights(degree: int) -> np.ndarray:
    """beta_d = 2 (D - d + 1) / (D (D + 1)) for d = 1..D."""
    d = np.arange(1, degree + 1, dtype=float)
    return 2.0 * (degree - d + 1.0) / (degree * (degree + 1.0))


def wd_eval(x: SequenceSample, y: SequenceSample, degree: int) -> float:
    """
    Weighted-degree kernel between two sequences of equal length.

    Counts, for each substring length d up to the degree, the positions i
    where x[i:i+d] == y[i:i+d], weighted by beta_d.
    """
    if x.length != y.length:
        raise ShapeMismatchError(f"wd kernel needs equal lengths, got {x.length} and {y.length}")
    if not 1 <= degree <= x.length:
        raise ConfigError(f"wd degree {degree} must satisfy 1 <= D <= L={x.length}")
    a = x.alphabet.encode(x.chars)[None, :]
    b = y.alphabet.encode(y.chars)[None, :]
    return float(_wd_cross(a, b, degree)[0, 0])


def _wd_cross(A: np.ndarray, B: np.ndarray, degree: int) -> np.ndarray:
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatchError(f"wd kernel needs equal lengths, got {A.shape[1]} and {B.shape[1]}")
    if not 1 <= degree <= A.shape[1]:
        raise ConfigError(f"wd degree {degree} must satisfy 1 <= D <= L={A.shape[1]}")

    weights = wd_weights(degree)
    out = np.empty((A.shape[0], B.shape[0]))
    for start in range(0, A.shape[0], _WD_BLOCK):
        stop = min(start + _WD_BLOCK, A.shape[0])
        match = A[start:stop, None, :] == B[None, :, :]
        run = match
        total = weights[0] * match.sum(axis=2)
        for d in range(2, degree + 1):
            # run[..., i] is true when x[i:i+d] == y[i:i+d]
            run = run[:, :, :-1] & match[:, :, d - 1:]
            total = total + weights[d - 1] * run.sum(axis=2)
        out[start:stop] = total
    return out


def _delta_cross(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[1:] != B.shape[1:]:
        raise DimensionMismatchError(f"delta operands differ in dimension: {A.shape[1:]} vs {B.shape[1:]}")
    stacked = np.concatenate([A.reshape(len(A), -1), B.reshape(len(B), -1)])
    _, ids = np.unique(stacked, axis=0, return_inverse=True)
    ids = np.asarray(ids).ravel()
    return (ids[:len(A), None] == ids[None, len(A):]).astype(float)


def kernel_features(samples: Union[SampleSet, np.ndarray, Sequence], kernel: KernelSpec) -> np.ndarray:
    """
    Flat 2-D feature array for a kernel, checking compatibility.

    Sequence sample sets only pair with wd or delta kernels; real-valued
    inputs (images, scores, feature columns) pair with rbf, linear or delta.
    """
    if isinstance(samples, SampleSet):
        if samples.is_sequence and kernel.kind not in (WD, DELTA):
            raise IncompatibleKernelError(f"{kernel.kind} kernel cannot be applied to sequences")
        if not samples.is_sequence and kernel.kind == WD:
            raise IncompatibleKernelError("wd kernel needs sequence samples")
        return samples.features()

    if len(samples) and isinstance(samples[0], SequenceSample):
        if kernel.kind not in (WD, DELTA):
            raise IncompatibleKernelError(f"{kernel.kind} kernel cannot be applied to sequences")
        return np.vstack([s.alphabet.encode(s.chars) for s in samples])
    if len(samples) and isinstance(samples[0], ImageSample):
        if kernel.kind == WD:
            raise IncompatibleKernelError("wd kernel needs sequence samples")
        return np.vstack([s.pixels.ravel() for s in samples])

    array = np.asarray(samples)
    if array.ndim == 1:
        array = array[:, None]
    elif array.ndim > 2:
        array = array.reshape(array.shape[0], -1)
    if kernel.kind == WD and not np.issubdtype(array.dtype, np.integer):
        raise IncompatibleKernelError("wd kernel needs symbol-index arrays")
    return array


def cross_gram(A: np.ndarray, B: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """Kernel matrix between the rows of two feature arrays."""
    if kernel.kind == WD:
        return _wd_cross(A, B, kernel.degree)
    if kernel.kind == DELTA:
        return _delta_cross(A, B)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(f"operands differ in dimension: {A.shape[1]} vs {B.shape[1]}")
    A = A.astype(float)
    B = B.astype(float)
    if kernel.kind == LINEAR:
        return A @ B.T
    return np.exp(-cdist(A, B, 'sqeuclidean') / (2.0 * kernel.sigma ** 2))


def gram(samples: Union[SampleSet, np.ndarray, Sequence], kernel: KernelSpec) -> GramMatrix:
    """
    Gram matrix entries[i][j] = kernel(samples[i], samples[j]).

    Args:
        samples: SampleSet, list of samples, or array of real features (one row per sample)
        kernel: Kernel specification

    Returns:
        Symmetric GramMatrix
    """
    X = kernel_features(samples, kernel)

    if kernel.kind == RBF:
        if X.shape[0] == 1:
            entries = np.ones((1, 1))
        else:
            sq = squareform(pdist(X.astype(float), 'sqeuclidean'))
            entries = np.exp(-sq / (2.0 * kernel.sigma ** 2))
    else:
        entries = cross_gram(X, X, kernel)
        if kernel.kind == LINEAR:
            entries = 0.5 * (entries + entries.T)

    logger.debug("Built %dx%d %s Gram matrix", X.shape[0], X.shape[0], kernel.describe())
    return GramMatrix(entries, kernel, centered=False)


def center_gram(g: GramMatrix) -> GramMatrix:
    """H G H with H = I - (1/n) 1 1^T, computed from row and column means."""
    G = g.entries
    row_mean = G.mean(axis=1, keepdims=True)
    col_mean = G.mean(axis=0, keepdims=True)
    centered = G - row_mean - col_mean + G.mean()
    centered = 0.5 * (centered + centered.T)
    return GramMatrix(centered, g.kernel, centered=True)


def hsic(gK: GramMatrix, gL: GramMatrix) -> float:
    """
    Biased empirical HSIC, tr(K H L H) / (n - 1)^2.

    Args:
        gK: Gram matrix of the first variable
        gL: Gram matrix of the second variable

    Returns:
        HSIC estimate (0 for a single sample)
    """
    if gK.n != gL.n:
        raise DimensionMismatchError(f"Gram matrices differ in size: {gK.n} vs {gL.n}")
    n = gK.n
    if n < 2:
        return 0.0
    Kc = gK if gK.centered else center_gram(gK)
    Lc = gL if gL.centered else center_gram(gL)
    # tr(Kc Lc) for symmetric matrices is the elementwise product sum
    return float(np.sum(Kc.entries * Lc.entries) / (n - 1) ** 2)


def hsic_centered_k(Kc: np.ndarray, L: np.ndarray) -> float:
    """HSIC when K is already centered: tr(Kc L) = tr(Kc H L H)."""
    n = Kc.shape[0]
    if n < 2:
        return 0.0
    return float(np.sum(Kc * L) / (n - 1) ** 2)

"""
Core domain types module.
Samples, sample sets, the predictor interface, condition specs, explanation
modes and importance maps shared by every other module.
"""

import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np


DNA_SYMBOLS = ('A', 'C', 'G', 'T')

SEQUENCE = 'sequence'
IMAGE = 'image'


class MFIError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class ConfigError(MFIError, ValueError):
    exit_code = 2


class MissingInputError(MFIError, FileNotFoundError):
    exit_code = 3


class ShapeMismatchError(MFIError, ValueError):
    exit_code = 4


class SymbolNotInAlphabetError(MFIError, ValueError):
    exit_code = 5


class NonFinitePixelError(MFIError, ValueError):
    exit_code = 6


class EmptyConditionedSetError(MFIError, ValueError):
    exit_code = 7


class MalformedFileError(MFIError, ValueError):
    exit_code = 8


class VersionMismatchError(MFIError, ValueError):
    exit_code = 9


class PredictorProcessError(MFIError, RuntimeError):
    exit_code = 10


class PredictorTimeoutError(MFIError, TimeoutError):
    exit_code = 11


class UnparseableResponseError(MFIError, ValueError):
    exit_code = 12


class IncompatibleKernelError(MFIError, ValueError):
    exit_code = 13


class DimensionMismatchError(MFIError, ValueError):
    exit_code = 14


@dataclass(frozen=True)
class AlphabetSpec:
    """Ordered set of distinct single-character symbols."""

    symbols: Tuple[str, ...] = DNA_SYMBOLS

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, 'symbols', symbols)
        if len(symbols) < 2:
            raise ConfigError("alphabet needs at least 2 symbols")
        if len(set(symbols)) != len(symbols):
            raise ConfigError(f"alphabet has duplicate symbols: {''.join(symbols)}")
        if any(len(s) != 1 for s in symbols):
            raise ConfigError("alphabet symbols must be single characters")
        object.__setattr__(self, '_lookup', {s: i for i, s in enumerate(symbols)})

    @classmethod
    def from_string(cls, text: str) -> 'AlphabetSpec':
        return cls(tuple(text))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self._lookup[symbol]
        except KeyError:
            raise SymbolNotInAlphabetError(
                f"symbol {symbol!r} not in alphabet {''.join(self.symbols)}"
            ) from None

    def symbol(self, index: int) -> str:
        return self.symbols[index]

    def encode(self, chars: str) -> np.ndarray:
        """Map a string to its symbol indices."""
        return np.fromiter((self.index(c) for c in chars), dtype=np.int8, count=len(chars))

    def decode(self, indices: Sequence[int]) -> str:
        return ''.join(self.symbols[int(i)] for i in indices)

    def kmers(self, k: int) -> List[str]:
        """All k-mers in index order (first symbol most significant)."""
        return [''.join(p) for p in itertools.product(self.symbols, repeat=k)]

    def kmer_index(self, kmer: str) -> int:
        code = 0
        for c in kmer:
            code = code * self.size + self.index(c)
        return code


@dataclass(frozen=True)
class SequenceSample:
    chars: str
    alphabet: AlphabetSpec = field(default_factory=AlphabetSpec)

    @property
    def length(self) -> int:
        return len(self.chars)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (len(self.chars),)


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=float)
        pixels.setflags(write=False)
        object.__setattr__(self, 'pixels', pixels)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.pixels.shape)


Sample = Union[SequenceSample, ImageSample]


def validate_sample(sample: Sample, shape: Tuple[int, ...]) -> bool:
    """
    Check a sample against its type invariants and an expected shape.

    Returns:
        True when the sample is well formed

    Raises:
        ShapeMismatchError, SymbolNotInAlphabetError, NonFinitePixelError
    """
    if isinstance(sample, SequenceSample):
        if len(shape) != 1 or sample.length != shape[0]:
            raise ShapeMismatchError(f"sequence length {sample.length} does not match shape {shape}")
        sample.alphabet.encode(sample.chars)
        return True

    if isinstance(sample, ImageSample):
        if sample.shape != tuple(shape):
            raise ShapeMismatchError(f"image shape {sample.shape} does not match shape {tuple(shape)}")
        if not np.all(np.isfinite(sample.pixels)):
            raise NonFinitePixelError("image contains non-finite pixel values")
        if sample.pixels.min() < 0.0 or sample.pixels.max() > 1.0:
            raise NonFinitePixelError("image intensities outside [0, 1]")
        return True

    raise ShapeMismatchError(f"unsupported sample type {type(sample).__name__}")


class SampleSet:
    """
    Homogeneous, immutable collection of samples.

    Sequences are stored as an (n, L) array of symbol indices and images as
    an (n, d1, d2) float array. Optional labels are kept alongside.
    """

    def __init__(self, data: np.ndarray, kind: str, seed: int = 0,
                 alphabet: Optional[AlphabetSpec] = None,
                 labels: Optional[np.ndarray] = None):
        if kind not in (SEQUENCE, IMAGE):
            raise ShapeMismatchError(f"unknown sample kind: {kind}")
        data = np.array(data, dtype=np.int8 if kind == SEQUENCE else float)
        if kind == SEQUENCE and data.ndim != 2:
            raise ShapeMismatchError("sequence data must be a 2-D index array")
        if kind == IMAGE and data.ndim != 3:
            raise ShapeMismatchError("image data must be a 3-D array")
        if data.shape[0] < 1:
            raise ShapeMismatchError("sample set must contain at least one sample")
        if kind == IMAGE and not np.all(np.isfinite(data)):
            raise NonFinitePixelError("image set contains non-finite pixel values")

        data.setflags(write=False)
        self.data = data
        self.kind = kind
        self.seed = int(seed)
        self.alphabet = alphabet if alphabet is not None else (AlphabetSpec() if kind == SEQUENCE else None)

        if labels is not None:
            labels = np.array(labels, dtype=float)
            if labels.shape != (data.shape[0],):
                raise ShapeMismatchError(f"expected {data.shape[0]} labels, got {labels.shape}")
            labels.setflags(write=False)
        self.labels = labels

    @classmethod
    def from_sequences(cls, sequences: Sequence[str], alphabet: Optional[AlphabetSpec] = None,
                       seed: int = 0, labels: Optional[Sequence[float]] = None) -> 'SampleSet':
        alphabet = alphabet or AlphabetSpec()
        if len(sequences) == 0:
            raise ShapeMismatchError("sample set must contain at least one sample")
        lengths = {len(s) for s in sequences}
        if len(lengths) != 1:
            raise ShapeMismatchError(f"sequences have differing lengths: {sorted(lengths)}")
        data = np.vstack([alphabet.encode(s) for s in sequences])
        return cls(data, SEQUENCE, seed=seed, alphabet=alphabet, labels=labels)

    @classmethod
    def from_images(cls, images: np.ndarray, seed: int = 0,
                    labels: Optional[Sequence[float]] = None) -> 'SampleSet':
        return cls(np.asarray(images, dtype=float), IMAGE, seed=seed, labels=labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape[1:])

    @property
    def is_sequence(self) -> bool:
        return self.kind == SEQUENCE

    def sample(self, i: int) -> Sample:
        if self.is_sequence:
            return SequenceSample(self.alphabet.decode(self.data[i]), self.alphabet)
        return ImageSample(self.data[i])

    def sequences(self) -> List[str]:
        return [self.alphabet.decode(row) for row in self.data]

    def features(self) -> np.ndarray:
        """Flat (n, p) view used by kernels: symbol indices or pixel vectors."""
        return self.data.reshape(self.n, -1)

    def with_data(self, data: np.ndarray) -> 'SampleSet':
        """New set of the same kind, alphabet and seed around modified data."""
        return SampleSet(data, self.kind, seed=self.seed, alphabet=self.alphabet, labels=self.labels)

    def subset(self, indices: Sequence[int]) -> 'SampleSet':
        indices = np.asarray(indices, dtype=int)
        labels = self.labels[indices] if self.labels is not None else None
        return SampleSet(self.data[indices], self.kind, seed=self.seed,
                         alphabet=self.alphabet, labels=labels)

    def prefix(self, m: int) -> 'SampleSet':
        return self.subset(np.arange(min(m, self.n)))

    def concat(self, other: 'SampleSet') -> 'SampleSet':
        if other.kind != self.kind or other.shape != self.shape:
            raise ShapeMismatchError("cannot concatenate sample sets of different shape")
        if self.labels is not None and other.labels is not None:
            labels = np.concatenate([self.labels, other.labels])
        else:
            labels = None
        return SampleSet(np.concatenate([self.data, other.data]), self.kind,
                         seed=self.seed, alphabet=self.alphabet, labels=labels)

    def single(self, sample: Sample) -> 'SampleSet':
        """Wrap one sample as a set compatible with this one."""
        validate_sample(sample, self.shape)
        if isinstance(sample, SequenceSample):
            if sample.alphabet != self.alphabet:
                raise SymbolNotInAlphabetError("sample alphabet differs from sample-set alphabet")
            data = self.alphabet.encode(sample.chars)[None, :]
        else:
            data = sample.pixels[None, :, :]
        return SampleSet(data, self.kind, seed=self.seed, alphabet=self.alphabet)


class Predictor(ABC):
    """Black-box scoring function s: sample -> real. Must be deterministic."""

    @abstractmethod
    def score_batch(self, samples: SampleSet) -> np.ndarray:
        """Scores for every sample, in order."""

    def score(self, sample: Sample, like: SampleSet) -> float:
        return float(self.score_batch(like.single(sample))[0])


class FunctionPredictor(Predictor):
    """Wraps a vectorised callable taking the raw (n, ...) data array."""

    def __init__(self, fn, name: str = 'function'):
        self.fn = fn
        self.name = name

    def score_batch(self, samples: SampleSet) -> np.ndarray:
        return np.asarray(self.fn(samples.data), dtype=float).reshape(samples.n)


PIXEL = 'pixel'
KMER = 'kmer'
CONSTANT = 'constant'

EXACT = 'exact'
EPSILON = 'epsilon'
INTERVENE = 'intervene'

STRATEGIES = (EXACT, EPSILON, INTERVENE)


@dataclass(frozen=True)
class ConditionSpec:
    """
    Feature selector f, target value t and matching strategy.

    Positions are 1-based: pixel (i, j) is row i, column j; a k-mer window
    starts at i and covers i..i+k-1.
    """

    selector: str = CONSTANT
    i: int = 0
    j: int = 0
    k: int = 0
    target: Any = None
    strategy: str = EXACT
    epsilon: float = 0.05

    @classmethod
    def pixel(cls, i: int, j: int, target: float, strategy: str = INTERVENE,
              epsilon: float = 0.05) -> 'ConditionSpec':
        return cls(PIXEL, i=i, j=j, target=float(target), strategy=strategy, epsilon=epsilon)

    @classmethod
    def kmer(cls, i: int, target: str, strategy: str = EXACT) -> 'ConditionSpec':
        return cls(KMER, i=i, k=len(target), target=target, strategy=strategy)

    @classmethod
    def constant(cls) -> 'ConditionSpec':
        return cls(CONSTANT)

    def validate(self, shape: Tuple[int, ...], alphabet: Optional[AlphabetSpec] = None):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy: {self.strategy}")
        if self.strategy == EPSILON and not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0 for epsilon-band conditioning")

        if self.selector == CONSTANT:
            return
        if self.selector == PIXEL:
            if len(shape) != 2:
                raise ShapeMismatchError("pixel selector needs image samples")
            if not (1 <= self.i <= shape[0] and 1 <= self.j <= shape[1]):
                raise ShapeMismatchError(f"pixel ({self.i},{self.j}) outside image {shape}")
            return
        if self.selector == KMER:
            if len(shape) != 1:
                raise ShapeMismatchError("k-mer selector needs sequence samples")
            if self.k < 1 or self.i < 1 or self.i + self.k - 1 > shape[0]:
                raise ShapeMismatchError(
                    f"k-mer window {self.i}..{self.i + self.k - 1} outside sequence length {shape[0]}"
                )
            # a bare selector (no target) is valid for FIRM
            if self.target is not None and (not isinstance(self.target, str) or len(self.target) != self.k):
                raise ShapeMismatchError(f"k-mer target {self.target!r} must have length {self.k}")
            if alphabet is not None and self.target is not None:
                alphabet.encode(self.target)
            return
        raise ConfigError(f"unknown selector: {self.selector}")

    def describe(self) -> str:
        if self.selector == PIXEL:
            return f"pixel({self.i},{self.j})={self.target:g} [{self.strategy}]"
        if self.selector == KMER:
            return f"kmer({self.i},{self.k})={self.target} [{self.strategy}]"
        return 'constant'


UNIT = 'unit'
IDENTITY_IMAGE = 'identity-image'
SPARSE_PWM = 'sparse-pwm'


@dataclass(frozen=True)
class ExplanationMode:
    """The explanation map phi: unit, identity-image or sparse-pwm(k)."""

    variant: str = UNIT
    k: int = 0

    @classmethod
    def unit(cls) -> 'ExplanationMode':
        return cls(UNIT)

    @classmethod
    def identity_image(cls) -> 'ExplanationMode':
        return cls(IDENTITY_IMAGE)

    @classmethod
    def sparse_pwm(cls, k: int) -> 'ExplanationMode':
        return cls(SPARSE_PWM, k=k)

    def validate(self, shape: Tuple[int, ...]):
        if self.variant == UNIT:
            return
        if self.variant == IDENTITY_IMAGE:
            if len(shape) != 2:
                raise ShapeMismatchError("identity-image mode needs image samples")
            return
        if self.variant == SPARSE_PWM:
            if len(shape) != 1:
                raise ShapeMismatchError("sparse-pwm mode needs sequence samples")
            if not 1 <= self.k <= shape[0]:
                raise ShapeMismatchError(f"k-mer length k={self.k} must satisfy 1 <= k <= L={shape[0]}")
            return
        raise ConfigError(f"unknown explanation mode: {self.variant}")

    def output_shape(self, shape: Tuple[int, ...], alphabet: Optional[AlphabetSpec] = None) -> Tuple[int, ...]:
        self.validate(shape)
        if self.variant == UNIT:
            return ()
        if self.variant == IDENTITY_IMAGE:
            return tuple(shape)
        return (alphabet.size ** self.k, shape[0] - self.k + 1)

    def describe(self) -> str:
        return f"{self.variant}({self.k})" if self.variant == SPARSE_PWM else self.variant


def enumerate_pos(mode: ExplanationMode, shape: Tuple[int, ...],
                  alphabet: Optional[AlphabetSpec] = None,
                  window: Optional[int] = None) -> List[tuple]:
    """
    List every feature coordinate a mode explains, 1-based.

    Args:
        mode: Explanation mode
        shape: (L,) for sequences or (d1, d2) for images
        alphabet: Needed for sparse-pwm
        window: k-mer window length for positional conditioning (unit mode on sequences)

    Returns:
        grid -> (i, j) row-major; positional -> (i,); sparse-pwm -> (kmer, j) position-major
    """
    if mode.variant == SPARSE_PWM:
        mode.validate(shape)
        alphabet = alphabet or AlphabetSpec()
        kmers = alphabet.kmers(mode.k)
        return [(y, j) for j in range(1, shape[0] - mode.k + 2) for y in kmers]

    if len(shape) == 2:
        return [(i, j) for i in range(1, shape[0] + 1) for j in range(1, shape[1] + 1)]

    k = window or 1
    if not 1 <= k <= shape[0]:
        raise ShapeMismatchError(f"window k={k} must satisfy 1 <= k <= L={shape[0]}")
    return [(i,) for i in range(1, shape[0] - k + 2)]


GRID = 'grid'
POSITIONAL = 'positional'
PO_MATRIX = 'po-matrix'


class ImportanceMap:
    """
    Output of an explanation: per-pixel grid, per-position vector or a
    (k-mer x position) matrix. Missing entries are NaN.
    """

    def __init__(self, layout: str, values: np.ndarray, mode: str = '',
                 condition: str = '', seed: int = 0, n: int = 0,
                 alphabet: Optional[AlphabetSpec] = None, k: int = 0,
                 extra: Optional[Dict[str, Any]] = None):
        values = np.array(values, dtype=float)
        expected_ndim = 1 if layout == POSITIONAL else 2
        if layout not in (GRID, POSITIONAL, PO_MATRIX):
            raise ConfigError(f"unknown layout: {layout}")
        if values.ndim != expected_ndim:
            raise ShapeMismatchError(f"{layout} layout needs a {expected_ndim}-D array")
        if np.any(np.isinf(values)):
            raise NonFinitePixelError("importance values must be finite")
        if layout == PO_MATRIX:
            alphabet = alphabet or AlphabetSpec()
            if values.shape[0] != alphabet.size ** k:
                raise ShapeMismatchError(f"po-matrix needs {alphabet.size ** k} rows for k={k}")
        values.setflags(write=False)

        self.layout = layout
        self.values = values
        self.mode = mode
        self.condition = condition
        self.seed = int(seed)
        self.n = int(n)
        self.alphabet = alphabet
        self.k = int(k)
        self.extra = dict(extra or {})

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def metadata(self) -> Dict[str, Any]:
        meta = {
            'layout': self.layout,
            'mode': self.mode,
            'condition': self.condition,
            'seed': self.seed,
            'n': self.n,
        }
        if self.layout == PO_MATRIX:
            meta['k'] = self.k
            meta['alphabet'] = ''.join(self.alphabet.symbols)
        meta.update(self.extra)
        return meta

    def row_labels(self) -> List[str]:
        if self.layout == PO_MATRIX:
            return self.alphabet.kmers(self.k)
        return []

    def coordinate(self, flat_index: int) -> tuple:
        """1-based public coordinate of a flat (row-major) index."""
        idx = np.unravel_index(flat_index, self.values.shape)
        if self.layout == PO_MATRIX:
            return (self.alphabet.kmers(self.k)[idx[0]], int(idx[1]) + 1)
        return tuple(int(v) + 1 for v in idx)

    def argmax(self) -> tuple:
        if np.all(self.missing):
            raise EmptyConditionedSetError("importance map has no non-missing entries")
        return self.coordinate(int(np.nanargmax(self.values)))

    def ranking(self) -> np.ndarray:
        """
        Flat indices ordered by descending value.

        Ties keep ascending row-major order; missing entries rank last.
        """
        flat = self.values.ravel()
        keys = np.where(np.isnan(flat), -np.inf, flat)
        return np.argsort(-keys, kind='stable')

    def top_coordinates(self, fraction: float) -> List[tuple]:
        count = max(1, int(np.ceil(fraction * self.values.size)))
        return [self.coordinate(int(i)) for i in self.ranking()[:count]]

    def position_profile(self) -> 'ImportanceMap':
        """Per-position maximum over k-mers of a po-matrix."""
        if self.layout != PO_MATRIX:
            raise ShapeMismatchError("position profile needs a po-matrix")
        with np.errstate(all='ignore'):
            profile = np.nanmax(np.where(self.missing, -np.inf, self.values), axis=0)
        profile = np.where(np.isfinite(profile), profile, np.nan)
        return ImportanceMap(POSITIONAL, profile, mode=self.mode, condition=self.condition,
                             seed=self.seed, n=self.n, extra=self.extra)

    def frobenius_distance(self, other: 'ImportanceMap') -> float:
        """Frobenius distance over entries present in both maps."""
        if other.shape != self.shape:
            raise ShapeMismatchError(f"cannot compare maps of shape {self.shape} and {other.shape}")
        present = ~(self.missing | other.missing)
        diff = self.values[present] - other.values[present]
        return float(np.sqrt(np.sum(diff * diff)))

    def frobenius_norm(self) -> float:
        present = self.values[~self.missing]
        return float(np.sqrt(np.sum(present * present)))

    def __repr__(self):
        return f"ImportanceMap(layout={self.layout!r}, shape={self.shape}, mode={self.mode!r}, n={self.n})"

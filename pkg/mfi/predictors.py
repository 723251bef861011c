"""
Predictor implementations module.
Least-squares kernel machines, model files and the external-process
predictor that speaks a line-oriented text protocol.
"""

import json
import logging
import queue
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .core import (
    IMAGE, SEQUENCE, AlphabetSpec, ConfigError, MalformedFileError, MissingInputError,
    Predictor, PredictorProcessError, PredictorTimeoutError, Sample, SampleSet,
    ShapeMismatchError, UnparseableResponseError, VersionMismatchError,
)
from .kernels import KernelSpec, cross_gram, gram, kernel_features

logger = logging.getLogger(__name__)

MODEL_FILE_VERSION = 1

DEFAULT_RIDGE = 1e-3

# test samples scored per kernel block
_SCORE_BLOCK = 512


@dataclass(frozen=True)
class KernelMachineModel:
    """Decision function s(x) = sum_i alpha_i k(support_i, x) + b."""

    support: SampleSet
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=float)
        if alphas.shape != (self.support.n,):
            raise ShapeMismatchError(
                f"model has {alphas.size} coefficients for {self.support.n} support samples"
            )
        if not np.all(np.isfinite(alphas)) or not np.isfinite(self.bias):
            raise MalformedFileError("model coefficients must be finite")
        alphas.setflags(write=False)
        object.__setattr__(self, 'alphas', alphas)
        object.__setattr__(self, 'bias', float(self.bias))


class KernelMachinePredictor(Predictor):
    """Predictor interface over a trained kernel machine."""

    def __init__(self, model: KernelMachineModel):
        self.model = model
        self._support = kernel_features(model.support, model.kernel)

    def score_batch(self, samples: SampleSet) -> np.ndarray:
        support = self.model.support
        if samples.kind != support.kind or samples.shape != support.shape:
            raise ShapeMismatchError(
                f"samples of shape {samples.shape} do not match model support shape {support.shape}"
            )
        X = kernel_features(samples, self.model.kernel)
        scores = np.empty(samples.n)
        for start in range(0, samples.n, _SCORE_BLOCK):
            stop = min(start + _SCORE_BLOCK, samples.n)
            K = cross_gram(X[start:stop], self._support, self.model.kernel)
            scores[start:stop] = K @ self.model.alphas + self.model.bias
        return scores


def km_score(model: KernelMachineModel, x: Sample) -> float:
    return KernelMachinePredictor(model).score(x, model.support)


def train_ls(training: SampleSet, labels: Sequence[float], kernel: KernelSpec,
             ridge: float = DEFAULT_RIDGE) -> KernelMachineModel:
    """
    Least-squares kernel machine: solve (G + ridge I) alpha = y, bias 0.

    Args:
        training: Training samples
        labels: One +/-1 label per sample
        kernel: Kernel specification
        ridge: Positive regularization constant

    Returns:
        Trained KernelMachineModel
    """
    y = np.asarray(labels, dtype=float)
    if y.shape != (training.n,):
        raise ShapeMismatchError(f"expected {training.n} labels, got {y.size}")
    if not ridge > 0:
        raise ConfigError(f"ridge must be > 0, got {ridge}")

    G = gram(training, kernel).entries
    system = G + ridge * np.eye(training.n)
    alphas = linalg.solve(system, y, assume_a='pos')

    residual = np.max(np.abs(system @ alphas - y))
    logger.info("Trained %s kernel machine on %d samples (ridge=%g, residual=%.2e)",
                kernel.describe(), training.n, ridge, residual)

    support = SampleSet(training.data, training.kind, seed=training.seed, alphabet=training.alphabet)
    return KernelMachineModel(support, alphas, 0.0, kernel)


def _support_rows(support: SampleSet) -> list:
    if support.is_sequence:
        return support.sequences()
    return [','.join(repr(float(v)) for v in row) for row in support.features()]


def save_model(model: KernelMachineModel, path: str):
    """Write a model file; floats use the shortest round-trip representation."""
    support = model.support
    payload = {
        'version': MODEL_FILE_VERSION,
        'kernel': model.kernel.kind,
        'params': model.kernel.params(),
        'bias': model.bias,
        'alphas': [float(a) for a in model.alphas],
        'support': {
            'kind': support.kind,
            'shape': list(support.shape),
            'alphabet': ''.join(support.alphabet.symbols) if support.is_sequence else None,
            'seed': support.seed,
            'rows': _support_rows(support),
        },
    }
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(payload, f, indent=1)
        f.write('\n')


def load_model(path: str) -> KernelMachineModel:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise MissingInputError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: not a model file ({exc})") from None

    missing = [key for key in ('version', 'kernel', 'params', 'bias', 'alphas', 'support')
               if key not in payload]
    if missing:
        raise MalformedFileError(f"{path}: missing field(s) {', '.join(missing)}")
    if payload['version'] != MODEL_FILE_VERSION:
        raise VersionMismatchError(
            f"{path}: model file version {payload['version']} not supported (expected {MODEL_FILE_VERSION})"
        )

    try:
        kernel = KernelSpec.from_params(payload['kernel'], payload['params'])
        spec = payload['support']
        rows = spec['rows']
        if spec['kind'] == SEQUENCE:
            support = SampleSet.from_sequences(rows, AlphabetSpec.from_string(spec['alphabet']),
                                               seed=spec.get('seed', 0))
        elif spec['kind'] == IMAGE:
            d1, d2 = spec['shape']
            pixels = np.array([[float(v) for v in row.split(',')] for row in rows])
            support = SampleSet.from_images(pixels.reshape(len(rows), d1, d2), seed=spec.get('seed', 0))
        else:
            raise MalformedFileError(f"{path}: unknown support kind {spec['kind']!r}")
        return KernelMachineModel(support, np.array(payload['alphas'], dtype=float),
                                  float(payload['bias']), kernel)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedFileError):
            raise
        raise MalformedFileError(f"{path}: {exc}") from None


SEQUENCE_STRING = 'sequence-string'
IMAGE_CSV = 'image-csv'


@dataclass(frozen=True)
class ExternalPredictorSpec:
    command: Tuple[str, ...]
    timeout: float = 30.0
    serialization: str = SEQUENCE_STRING

    def __post_init__(self):
        object.__setattr__(self, 'command', tuple(self.command))
        if not self.command:
            raise ConfigError("external predictor command must not be empty")
        if not self.timeout > 0:
            raise ConfigError(f"external predictor timeout must be > 0, got {self.timeout}")
        if self.serialization not in (SEQUENCE_STRING, IMAGE_CSV):
            raise ConfigError(f"unknown serialization: {self.serialization}")


def serialize_row(samples: SampleSet, i: int) -> str:
    """One request line: raw sequence, or the image as a comma-separated row."""
    if samples.is_sequence:
        return samples.alphabet.decode(samples.data[i])
    return ','.join(repr(float(v)) for v in samples.data[i].ravel())


class ExternalPredictor(Predictor):
    """
    Scores samples with a long-running external process.

    Each request is one serialized sample on stdin; each response is one
    decimal score on stdout. A blank line ends the session. Calls are
    serialized, so one process serves one worker.
    """

    def __init__(self, spec: ExternalPredictorSpec):
        self.spec = spec
        self._process = None
        self._lines = None
        self._lock = threading.Lock()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    def start(self):
        if self._process is not None:
            return
        try:
            self._process = subprocess.Popen(
                list(self.spec.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding='utf-8', bufsize=1,
            )
        except OSError as exc:
            raise PredictorProcessError(f"cannot start predictor {self.spec.command[0]}: {exc}") from None

        self._lines = queue.Queue()
        reader = threading.Thread(target=self._read_stdout, args=(self._process.stdout, self._lines),
                                  daemon=True)
        reader.start()
        logger.debug("Started external predictor: %s", ' '.join(self.spec.command))

    @staticmethod
    def _read_stdout(stream, lines: queue.Queue):
        for line in stream:
            lines.put(line)
        lines.put(None)

    def close(self):
        if self._process is None:
            return
        process = self._process
        self._process = None
        try:
            process.stdin.write('\n')
            process.stdin.close()
        except (BrokenPipeError, OSError):
            pass
        try:
            process.wait(timeout=self.spec.timeout)
        except subprocess.TimeoutExpired:
            process.kill()
            process.wait()

    def _request(self, line: str) -> float:
        try:
            self._process.stdin.write(line + '\n')
            self._process.stdin.flush()
        except (BrokenPipeError, OSError):
            raise PredictorProcessError(
                f"predictor process exited (code {self._process.poll()})"
            ) from None

        try:
            response = self._lines.get(timeout=self.spec.timeout)
        except queue.Empty:
            self._process.kill()
            self._process.wait()
            self._process = None
            raise PredictorTimeoutError(
                f"predictor gave no response within {self.spec.timeout:g}s"
            ) from None
        if response is None:
            code = self._process.wait()
            self._process = None
            raise PredictorProcessError(f"predictor process exited (code {code})")

        text = response.strip()
        try:
            value = float(text)
        except ValueError:
            raise UnparseableResponseError(f"predictor response is not a number: {text!r}") from None
        if not np.isfinite(value):
            raise UnparseableResponseError(f"predictor response is not finite: {text!r}")
        return value

    def score_batch(self, samples: SampleSet) -> np.ndarray:
        with self._lock:
            self.start()
            return np.array([self._request(serialize_row(samples, i)) for i in range(samples.n)])


def external_score(spec: ExternalPredictorSpec, x: Sample, like: SampleSet) -> float:
    with ExternalPredictor(spec) as predictor:
        return predictor.score(x, like)

"""
Data generation and ingestion module.
Synthetic motif sequences, synthetic three/eight glyph images, and readers
for image CSV and FASTA-like sequence files.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .core import (
    AlphabetSpec, ConfigError, MalformedFileError, MissingInputError, SampleSet,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

DEFAULT_LENGTH = 45
DEFAULT_MUTATION_RATE = 0.1


@dataclass(frozen=True)
class MotifSpec:
    """Pattern planted at a 1-based start position, with per-character mutation."""

    pattern: str
    position: int
    mutation_rate: float = DEFAULT_MUTATION_RATE

    def validate(self, length: int, alphabet: AlphabetSpec):
        alphabet.encode(self.pattern)
        if not 0.0 <= self.mutation_rate < 1.0:
            raise ConfigError(f"mutation rate must lie in [0, 1), got {self.mutation_rate}")
        if self.position < 1 or self.position + len(self.pattern) - 1 > length:
            raise ConfigError(
                f"motif {self.pattern} at position {self.position} overflows sequence length {length}"
            )

    @classmethod
    def parse(cls, text: str, mutation_rate: float = DEFAULT_MUTATION_RATE) -> 'MotifSpec':
        """Parse 'PATTERN@POSITION'."""
        try:
            pattern, position = text.split('@')
            return cls(pattern.strip(), int(position), mutation_rate)
        except ValueError:
            raise ConfigError(f"motif must look like PATTERN@POSITION, got {text!r}") from None


DEFAULT_MOTIFS = (MotifSpec('GGCCGTAAA', 11), MotifSpec('TTTCACGTTGA', 24))


def gen_sequences(n: int, length: int = DEFAULT_LENGTH,
                  motifs: Sequence[MotifSpec] = DEFAULT_MOTIFS, seed: int = 0,
                  alphabet: Optional[AlphabetSpec] = None) -> Tuple[SampleSet, SampleSet]:
    """
    Generate n positive and n negative sequences.

    Negatives are uniform i.i.d. over the alphabet. Positives share the same
    background model with every motif written at its position; each motif
    character is replaced by a different, uniformly drawn symbol with
    probability equal to the motif's mutation rate.

    Returns:
        (positives labeled +1, negatives labeled -1)
    """
    alphabet = alphabet or AlphabetSpec()
    if n < 1:
        raise ConfigError(f"number of sequences per class must be >= 1, got {n}")
    for motif in motifs:
        motif.validate(length, alphabet)

    rng = np.random.default_rng(seed)
    size = alphabet.size
    negatives = rng.integers(0, size, size=(n, length))
    positives = rng.integers(0, size, size=(n, length))

    for motif in motifs:
        start = motif.position - 1
        pattern = alphabet.encode(motif.pattern).astype(np.int64)
        block = np.tile(pattern, (n, 1))
        mutate = rng.random(block.shape) < motif.mutation_rate
        # shift by 1..size-1 so a mutated character always changes
        shift = rng.integers(1, size, size=block.shape)
        block = np.where(mutate, (block + shift) % size, block)
        positives[:, start:start + len(pattern)] = block

    logger.info("Generated %d+%d sequences of length %d with %d motif(s)", n, n, length, len(motifs))
    return (SampleSet(positives, 'sequence', seed=seed, alphabet=alphabet, labels=np.ones(n)),
            SampleSet(negatives, 'sequence', seed=seed, alphabet=alphabet, labels=-np.ones(n)))


def gen_sequence_set(n: int, length: int = DEFAULT_LENGTH,
                     motifs: Sequence[MotifSpec] = DEFAULT_MOTIFS, seed: int = 0,
                     alphabet: Optional[AlphabetSpec] = None) -> SampleSet:
    """n positives and n negatives in one labeled set, shuffled with the same seed."""
    positives, negatives = gen_sequences(n, length, motifs, seed, alphabet)
    combined = positives.concat(negatives)
    order = np.random.default_rng(seed).permutation(combined.n)
    return combined.subset(order)


THREE = 'three'
EIGHT = 'eight'


@dataclass(frozen=True)
class GlyphSpec:
    """
    Synthetic digit glyphs. An eight is the three template plus the bridge
    pixels (1-based) closing its left side.
    """

    d1: int = 16
    d2: int = 16
    noise: float = 0.1
    bridge: Optional[Tuple[Tuple[int, int], ...]] = None

    def __post_init__(self):
        if self.d1 < 8 or self.d2 < 8:
            raise ConfigError(f"glyphs need at least 8x8 pixels, got {self.d1}x{self.d2}")
        if self.noise < 0:
            raise ConfigError(f"glyph noise must be >= 0, got {self.noise}")
        bridge = self.bridge if self.bridge is not None else _default_bridge(self.d1, self.d2)
        bridge = tuple(tuple(int(v) for v in p) for p in bridge)
        for i, j in bridge:
            if not (1 <= i <= self.d1 and 1 <= j <= self.d2):
                raise ConfigError(f"bridge pixel ({i},{j}) outside {self.d1}x{self.d2} glyph")
        object.__setattr__(self, 'bridge', bridge)


def _stroke_rows(d1: int) -> Tuple[int, int, int]:
    return 2, d1 // 2 - 1, d1 - 3


def _stroke_cols(d2: int) -> Tuple[int, int]:
    return d2 // 4, d2 - 5


def _default_bridge(d1: int, d2: int) -> Tuple[Tuple[int, int], ...]:
    top, mid, bottom = _stroke_rows(d1)
    left, _ = _stroke_cols(d2)
    rows = list(range(top + 1, mid)) + list(range(mid + 1, bottom))
    return tuple((r + 1, left + 1) for r in rows)


def glyph_templates(spec: GlyphSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free (three, eight) templates."""
    three = np.zeros((spec.d1, spec.d2))
    top, mid, bottom = _stroke_rows(spec.d1)
    left, right = _stroke_cols(spec.d2)
    for row in (top, mid, bottom):
        three[row, left:right + 1] = 1.0
    three[top:bottom + 1, right] = 1.0

    eight = three.copy()
    for i, j in spec.bridge:
        eight[i - 1, j - 1] = 1.0
    return three, eight


def gen_glyphs(n: int, spec: Optional[GlyphSpec] = None, seed: int = 0) -> SampleSet:
    """
    Generate n threes (label -1) and n eights (label +1) in shuffled order,
    with additive Gaussian noise clamped to [0, 1].
    """
    spec = spec or GlyphSpec()
    if n < 1:
        raise ConfigError(f"number of glyphs per class must be >= 1, got {n}")

    rng = np.random.default_rng(seed)
    three, eight = glyph_templates(spec)
    images = np.concatenate([np.broadcast_to(three, (n,) + three.shape),
                             np.broadcast_to(eight, (n,) + eight.shape)])
    labels = np.concatenate([-np.ones(n), np.ones(n)])
    if spec.noise > 0:
        images = images + rng.normal(0.0, spec.noise, size=images.shape)
    images = np.clip(images, 0.0, 1.0)

    order = rng.permutation(2 * n)
    logger.info("Generated %d+%d glyphs of %dx%d (noise %.3g)", n, n, spec.d1, spec.d2, spec.noise)
    return SampleSet.from_images(images[order], seed=seed, labels=labels[order])


def normalize_intensities(images: np.ndarray) -> np.ndarray:
    """
    Bring raw intensities into [0, 1]: unchanged if already there, divided by
    255 for 8-bit data, min-max scaled otherwise.
    """
    lo, hi = float(images.min()), float(images.max())
    if lo >= 0.0 and hi <= 1.0:
        return images
    if lo >= 0.0 and hi <= 255.0:
        logger.info("Scaling 8-bit intensities to [0, 1]")
        return images / 255.0
    logger.info("Min-max scaling intensities from [%g, %g] to [0, 1]", lo, hi)
    if hi == lo:
        return np.zeros_like(images)
    return (images - lo) / (hi - lo)


def _pixel_grid(columns: List[str]) -> Tuple[int, int]:
    coords = []
    for name in columns:
        parts = name.split('_')
        if len(parts) != 3 or parts[0] != 'p':
            raise MalformedFileError(f"unexpected pixel column {name!r}")
        coords.append((int(parts[1]), int(parts[2])))
    d1 = max(i for i, _ in coords) + 1
    d2 = max(j for _, j in coords) + 1
    expected = [(i, j) for i in range(d1) for j in range(d2)]
    if coords != expected:
        raise MalformedFileError(f"pixel columns do not form a row-major {d1}x{d2} grid")
    return d1, d2


def load_images_csv(path: str, seed: int = 0) -> SampleSet:
    """
    Read images written one per row under a `label,p_0_0,...` header.

    Raises:
        MalformedFileError: bad header, wrong column count or non-numeric field
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise MissingInputError(f"image file not found: {path}") from None
    except pd.errors.ParserError as exc:
        raise MalformedFileError(f"{path}: {exc}") from None

    if not len(frame.columns) or frame.columns[0] != 'label':
        raise MalformedFileError(f"{path}: header must start with 'label'")
    d1, d2 = _pixel_grid(list(frame.columns[1:]))

    values = np.empty((len(frame), len(frame.columns)))
    for row_idx, row in enumerate(frame.itertuples(index=False)):
        line = row_idx + 2
        # short rows are padded with NaN by the parser
        if any(not isinstance(field, str) or field == '' for field in row):
            raise MalformedFileError(f"{path}: line {line}: wrong column count or empty field")
        try:
            values[row_idx] = [float(field) for field in row]
        except ValueError:
            raise MalformedFileError(f"{path}: line {line}: non-numeric field") from None
    if len(frame) == 0:
        raise MalformedFileError(f"{path}: no image rows")

    pixels = values[:, 1:]
    if not np.all(np.isfinite(pixels)):
        raise MalformedFileError(f"{path}: non-finite pixel values")
    images = normalize_intensities(pixels).reshape(len(frame), d1, d2)
    return SampleSet.from_images(images, seed=seed, labels=values[:, 0])


def _parse_label(header: str) -> Optional[float]:
    for token in header.split()[1:]:
        if token.startswith('label='):
            return float(token[len('label='):])
    return None


def load_sequences_fasta(path: str, alphabet: Optional[AlphabetSpec] = None,
                         seed: int = 0) -> SampleSet:
    """
    Read FASTA-like records: `>name label=+1` then the sequence.

    Sequence lines may wrap; labels are kept only if every record has one.
    """
    alphabet = alphabet or AlphabetSpec()
    records = []
    try:
        with open(path, 'r', encoding='utf-8') as f:
            header, chunks = None, []
            for line_no, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith('>'):
                    if header is not None:
                        records.append((header, ''.join(chunks), line_no))
                    header, chunks = line, []
                elif header is None:
                    raise MalformedFileError(f"{path}: line {line_no}: sequence before first header")
                else:
                    chunks.append(line.upper())
            if header is not None:
                records.append((header, ''.join(chunks), line_no))
    except FileNotFoundError:
        raise MissingInputError(f"sequence file not found: {path}") from None

    if not records:
        raise MalformedFileError(f"{path}: no sequence records")
    length = len(records[0][1])
    for header, chars, line_no in records:
        if len(chars) != length:
            raise MalformedFileError(
                f"{path}: record ending before line {line_no} has length {len(chars)}, expected {length}"
            )

    labels = [_parse_label(header) for header, _, _ in records]
    labels = None if any(label is None for label in labels) else labels
    try:
        return SampleSet.from_sequences([chars for _, chars, _ in records], alphabet,
                                        seed=seed, labels=labels)
    except ShapeMismatchError as exc:
        raise MalformedFileError(f"{path}: {exc}") from None


def load_samples(path: str, alphabet: Optional[AlphabetSpec] = None, seed: int = 0) -> SampleSet:
    """Dispatch on extension: .csv for images, anything else is FASTA-like."""
    if str(path).lower().endswith('.csv'):
        return load_images_csv(path, seed=seed)
    return load_sequences_fasta(path, alphabet=alphabet, seed=seed)

"""
CSV, FASTA-like and PGM writers for samples, importance maps, MoRF
curves and convergence tables. Files are UTF-8 with LF line endings.
"""

import json
import logging
from typing import Iterable, Sequence, Tuple

import numpy as np
import pandas as pd

from .core import (
    GRID, PO_MATRIX, POSITIONAL, AlphabetSpec, ImportanceMap, MalformedFileError,
    MissingInputError, SampleSet, ShapeMismatchError,
)
from .evaluation import MORF_COLUMNS, MorfCurve

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def _to_csv(frame: pd.DataFrame, path: str):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n',
                 encoding='utf-8')


def save_images_csv(samples: SampleSet, path: str):
    """One image per row under a `label,p_0_0,...` header."""
    if samples.is_sequence:
        raise ShapeMismatchError("image CSV needs image samples")
    d1, d2 = samples.shape
    columns = [f"p_{i}_{j}" for i in range(d1) for j in range(d2)]
    frame = pd.DataFrame(samples.features(), columns=columns)
    labels = samples.labels if samples.labels is not None else np.zeros(samples.n)
    frame.insert(0, 'label', labels)
    _to_csv(frame, path)


def save_sequences_fasta(samples: SampleSet, path: str, prefix: str = 'seq'):
    if not samples.is_sequence:
        raise ShapeMismatchError("FASTA output needs sequence samples")
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for idx, chars in enumerate(samples.sequences()):
            header = f">{prefix}_{idx}"
            if samples.labels is not None:
                header += f" label={samples.labels[idx]:+g}"
            f.write(f"{header}\n{chars}\n")


def importance_frame(importance: ImportanceMap) -> pd.DataFrame:
    """Long-format table: grid i,j,value; positional position,value; po-matrix kmer,position,value."""
    values = importance.values
    if importance.layout == GRID:
        d1, d2 = values.shape
        ii, jj = np.meshgrid(np.arange(1, d1 + 1), np.arange(1, d2 + 1), indexing='ij')
        return pd.DataFrame({'i': ii.ravel(), 'j': jj.ravel(), 'value': values.ravel()})
    if importance.layout == POSITIONAL:
        return pd.DataFrame({'position': np.arange(1, values.size + 1), 'value': values})
    kmers = importance.row_labels()
    rows, positions = values.shape
    return pd.DataFrame({
        'kmer': np.repeat(kmers, positions),
        'position': np.tile(np.arange(1, positions + 1), rows),
        'value': values.ravel(),
    })


def write_importance(importance: ImportanceMap, path: str):
    """
    Write an importance map as CSV plus a `<path>.meta.json` sidecar with its
    metadata. Missing values are written as empty fields.
    """
    _to_csv(importance_frame(importance), path)
    with open(f"{path}.meta.json", 'w', encoding='utf-8', newline='\n') as f:
        json.dump(importance.metadata(), f, indent=1, sort_keys=True)
        f.write('\n')
    logger.debug("Wrote %s importance map to %s", importance.layout, path)


def write_instance_batch(explanations: Sequence[Tuple[int, str, ImportanceMap]], path: str):
    """
    Per-sample instance maps in one long table, each row prefixed with the
    1-based sample number, its outcome class and the model score.
    """
    frames = []
    for sample, outcome, importance in explanations:
        frame = importance_frame(importance)
        frame.insert(0, 'score', importance.extra.get('score', np.nan))
        frame.insert(0, 'outcome', outcome)
        frame.insert(0, 'sample', sample)
        frames.append(frame)
    _to_csv(pd.concat(frames, ignore_index=True), path)


def read_importance(path: str) -> ImportanceMap:
    try:
        frame = pd.read_csv(path, dtype={'kmer': str}, keep_default_na=False, na_values={'value': ['']})
    except FileNotFoundError:
        raise MissingInputError(f"importance file not found: {path}") from None

    meta = {}
    try:
        with open(f"{path}.meta.json", 'r', encoding='utf-8') as f:
            meta = json.load(f)
    except FileNotFoundError:
        pass
    common = {'mode': meta.get('mode', ''), 'condition': meta.get('condition', ''),
              'seed': meta.get('seed', 0), 'n': meta.get('n', 0)}

    columns = list(frame.columns)
    if columns == ['i', 'j', 'value']:
        d1, d2 = int(frame['i'].max()), int(frame['j'].max())
        if len(frame) != d1 * d2:
            raise MalformedFileError(f"{path}: grid rows do not cover {d1}x{d2}")
        values = np.full((d1, d2), np.nan)
        values[frame['i'].to_numpy() - 1, frame['j'].to_numpy() - 1] = frame['value'].to_numpy()
        return ImportanceMap(GRID, values, **common)
    if columns == ['position', 'value']:
        values = np.full(int(frame['position'].max()), np.nan)
        values[frame['position'].to_numpy() - 1] = frame['value'].to_numpy()
        return ImportanceMap(POSITIONAL, values, **common)
    if columns == ['kmer', 'position', 'value']:
        k = len(frame['kmer'].iloc[0])
        alphabet = AlphabetSpec.from_string(meta['alphabet']) if 'alphabet' in meta else AlphabetSpec()
        positions = int(frame['position'].max())
        values = np.full((alphabet.size ** k, positions), np.nan)
        rows = np.array([alphabet.kmer_index(y) for y in frame['kmer']])
        values[rows, frame['position'].to_numpy() - 1] = frame['value'].to_numpy()
        return ImportanceMap(PO_MATRIX, values, alphabet=alphabet, k=k, **common)
    raise MalformedFileError(f"{path}: unrecognised importance header {','.join(columns)}")


def write_pgm(importance: ImportanceMap, path: str):
    """8-bit binary PGM heatmap, min-max scaled; missing entries are black."""
    if importance.layout != GRID:
        raise ShapeMismatchError("PGM heatmaps need a grid importance map")
    values = importance.values
    present = values[~importance.missing]
    lo = float(present.min()) if present.size else 0.0
    hi = float(present.max()) if present.size else 0.0
    if hi > lo:
        scaled = np.round((values - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(values)
    pixels = np.nan_to_num(scaled, nan=0.0).astype(np.uint8)
    d1, d2 = pixels.shape
    with open(path, 'wb') as f:
        f.write(f"P5\n{d2} {d1}\n255\n".encode('ascii'))
        f.write(pixels.tobytes())


def morf_frame(curves: Iterable[MorfCurve]) -> pd.DataFrame:
    frames = [curve.to_frame() for curve in curves]
    if not frames:
        return pd.DataFrame(columns=MORF_COLUMNS)
    frame = pd.concat(frames, ignore_index=True)
    frame['seed'] = frame['seed'].astype('Int64')
    return frame


def write_morf_curves(curves: Iterable[MorfCurve], path: str):
    """MoRF curves as `step,perturbed_count,accuracy,ordering,seed`."""
    _to_csv(morf_frame(curves), path)


def write_convergence(table: pd.DataFrame, path: str):
    _to_csv(table, path)

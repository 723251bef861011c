"""Unit tests for CSV, PGM and Excel writers."""

import unittest
import sys
import os
import json
import tempfile
import numpy as np
import pandas as pd
from openpyxl import load_workbook

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from mfi.core import (
    GRID, PO_MATRIX, POSITIONAL, AlphabetSpec, ImportanceMap, MalformedFileError, SampleSet,
    ShapeMismatchError,
)
from mfi.data import load_images_csv, load_sequences_fasta
from mfi.evaluation import RANDOM, RELEVANCE, ZERO, MorfCurve
from mfi.writer_csv import (
    importance_frame, morf_frame, read_importance, save_images_csv, save_sequences_fasta,
    write_convergence, write_instance_batch, write_importance, write_morf_curves, write_pgm,
)
from mfi.writer_excel import StudyWorkbookWriter


class TestSampleFiles(unittest.TestCase):
    """Test sample set serialization."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_images_round_trip(self):
        rng = np.random.default_rng(0)
        samples = SampleSet.from_images(rng.random((5, 3, 4)), labels=[1, -1, 1, 1, -1])
        path = os.path.join(self.tmp.name, 'images.csv')
        save_images_csv(samples, path)
        loaded = load_images_csv(path)
        np.testing.assert_array_equal(loaded.data, samples.data)
        np.testing.assert_array_equal(loaded.labels, samples.labels)
        with open(path, 'rb') as f:
            self.assertTrue(f.readline().startswith(b'label,p_0_0,p_0_1,p_0_2,p_0_3,p_1_0'))

    def test_sequences_round_trip(self):
        samples = SampleSet.from_sequences(['ACGT', 'GGTA'], AlphabetSpec(), labels=[1, -1])
        path = os.path.join(self.tmp.name, 'seqs.fa')
        save_sequences_fasta(samples, path)
        with open(path, encoding='utf-8') as f:
            self.assertEqual(f.read(), '>seq_0 label=+1\nACGT\n>seq_1 label=-1\nGGTA\n')
        loaded = load_sequences_fasta(path)
        self.assertEqual(loaded.sequences(), samples.sequences())
        np.testing.assert_array_equal(loaded.labels, samples.labels)


class TestImportanceFiles(unittest.TestCase):
    """Test importance map CSV and PGM output."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'map.csv')

    def tearDown(self):
        self.tmp.cleanup()

    def test_po_matrix_row_count(self):
        importance = ImportanceMap(PO_MATRIX, np.zeros((2, 2)), alphabet=AlphabetSpec.from_string('AC'), k=1)
        frame = importance_frame(importance)
        self.assertEqual(len(frame), 4)
        self.assertEqual(list(frame.columns), ['kmer', 'position', 'value'])
        self.assertEqual(list(frame['kmer']), ['A', 'A', 'C', 'C'])

    def test_grid_round_trip_with_missing(self):
        values = np.array([[0.1, np.nan, -2.5e-7], [1.0 / 3.0, 0.0, 7.0]])
        importance = ImportanceMap(GRID, values, mode='identity-image', condition='constant', seed=3, n=10)
        write_importance(importance, self.path)
        with open(self.path, encoding='utf-8') as f:
            lines = f.read().split('\n')
        self.assertEqual(lines[0], 'i,j,value')
        self.assertEqual(lines[2], '1,2,')

        loaded = read_importance(self.path)
        self.assertEqual(loaded.layout, GRID)
        np.testing.assert_array_equal(loaded.missing, importance.missing)
        np.testing.assert_array_equal(loaded.values[~loaded.missing], values[~importance.missing])
        self.assertEqual((loaded.mode, loaded.seed, loaded.n), ('identity-image', 3, 10))

    def test_po_matrix_round_trip(self):
        alphabet = AlphabetSpec()
        values = np.random.default_rng(4).normal(size=(16, 3))
        values[5, 1] = np.nan
        importance = ImportanceMap(PO_MATRIX, values, alphabet=alphabet, k=2)
        write_importance(importance, self.path)
        with open(f"{self.path}.meta.json", encoding='utf-8') as f:
            self.assertEqual(json.load(f)['k'], 2)
        loaded = read_importance(self.path)
        self.assertEqual(loaded.k, 2)
        self.assertTrue(loaded.missing[5, 1])
        np.testing.assert_array_equal(loaded.values[~loaded.missing], values[~importance.missing])

    def test_kmer_spelled_like_missing_marker(self):
        alphabet = AlphabetSpec.from_string('AN')
        values = np.arange(8, dtype=float).reshape(4, 2)
        values[3, 0] = np.nan
        importance = ImportanceMap(PO_MATRIX, values, alphabet=alphabet, k=2)
        write_importance(importance, self.path)
        loaded = read_importance(self.path)
        self.assertEqual(loaded.row_labels(), ['AA', 'AN', 'NA', 'NN'])
        self.assertEqual(loaded.values[2, 1], 5.0)
        self.assertTrue(loaded.missing[3, 0])
        self.assertEqual(int(loaded.missing.sum()), 1)

    def test_positional_round_trip(self):
        importance = ImportanceMap(POSITIONAL, np.array([0.25, -1.0, 3.5]))
        write_importance(importance, self.path)
        np.testing.assert_array_equal(read_importance(self.path).values, importance.values)

    def test_unknown_header(self):
        with open(self.path, 'w', encoding='utf-8') as f:
            f.write('a,b\n1,2\n')
        with self.assertRaises(MalformedFileError):
            read_importance(self.path)

    def test_instance_batch_columns(self):
        first = ImportanceMap(POSITIONAL, np.array([0.1, 0.2]), extra={'score': 1.5})
        second = ImportanceMap(POSITIONAL, np.array([0.3, np.nan]), extra={'score': -0.5})
        write_instance_batch([(1, 'TP', first), (2, 'FN', second)], self.path)
        frame = pd.read_csv(self.path)
        self.assertEqual(list(frame.columns), ['sample', 'outcome', 'score', 'position', 'value'])
        self.assertEqual(list(frame['outcome']), ['TP', 'TP', 'FN', 'FN'])
        self.assertTrue(np.isnan(frame['value'].iloc[3]))

    def test_pgm_header_and_scaling(self):
        importance = ImportanceMap(GRID, np.array([[0.0, 1.0, np.nan], [0.5, 0.25, 1.0]]))
        pgm = os.path.join(self.tmp.name, 'map.pgm')
        write_pgm(importance, pgm)
        with open(pgm, 'rb') as f:
            content = f.read()
        header = b'P5\n3 2\n255\n'
        self.assertTrue(content.startswith(header))
        self.assertEqual(list(content[len(header):]), [0, 255, 0, 128, 64, 255])

    def test_pgm_needs_grid(self):
        with self.assertRaises(ShapeMismatchError):
            write_pgm(ImportanceMap(POSITIONAL, np.zeros(3)), os.path.join(self.tmp.name, 'x.pgm'))


class TestTables(unittest.TestCase):
    """Test MoRF and convergence tables."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.curves = [
            MorfCurve(((0, 1.0), (1, 0.5), (2, 0.5)), RELEVANCE, ZERO),
            MorfCurve(((0, 1.0), (1, 1.0), (2, 0.5)), RANDOM, ZERO, seed=0),
        ]
        self.convergence = pd.DataFrame({
            'n': [215, 500], 'previous_n': [100, 215], 'frobenius_distance': [0.4, 0.1],
            'map_norm': [2.0, 2.1], 'seconds': [0.01, 0.02],
        })

    def tearDown(self):
        self.tmp.cleanup()

    def test_morf_csv(self):
        path = os.path.join(self.tmp.name, 'morf.csv')
        write_morf_curves(self.curves, path)
        with open(path, encoding='utf-8') as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], 'step,perturbed_count,accuracy,ordering,seed')
        self.assertEqual(lines[1], '0,0,1,relevance,')
        self.assertEqual(lines[4], '0,0,1,random,0')
        self.assertEqual(len(morf_frame([])), 0)

    def test_convergence_csv(self):
        path = os.path.join(self.tmp.name, 'converge.csv')
        write_convergence(self.convergence, path)
        frame = pd.read_csv(path)
        self.assertEqual(len(frame), 2)
        self.assertEqual(list(frame['n']), [215, 500])

    def test_workbook_tabs(self):
        path = os.path.join(self.tmp.name, 'study.xlsx')
        importance = ImportanceMap(GRID, np.array([[0.1, 0.9], [np.nan, 0.3]]), mode='identity-image')
        writer = StudyWorkbookWriter({'command': 'explain', 'seed': 0, 'sizes': [1, 2]},
                                     ['run.seed = 0'], [], importance=importance,
                                     curves=self.curves, convergence=self.convergence)
        writer.write_workbook(path)
        wb = load_workbook(path)
        self.assertEqual(wb.sheetnames, ['Summary', 'Importance', 'MoRF', 'Convergence', 'Audit_Trace'])
        self.assertEqual(wb['Importance']['C2'].value, 0.9)
        self.assertIsNone(wb['Importance']['B3'].value)
        self.assertEqual(wb['Audit_Trace']['A4'].value, 'run.seed = 0')

    def test_workbook_po_matrix_without_curves(self):
        path = os.path.join(self.tmp.name, 'study.xlsx')
        importance = ImportanceMap(PO_MATRIX, np.ones((2, 3)), alphabet=AlphabetSpec.from_string('AC'), k=1)
        StudyWorkbookWriter({'command': 'explain'}, [], ['check alphabet'], importance=importance).write_workbook(path)
        wb = load_workbook(path)
        self.assertEqual(wb.sheetnames, ['Summary', 'Importance', 'Audit_Trace'])
        self.assertEqual(wb['Importance']['A1'].value, 'kmer')
        self.assertEqual(wb['Audit_Trace']['A4'].value, 'No defaults applied - all settings provided')


if __name__ == '__main__':
    unittest.main()

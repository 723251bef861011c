"""End-to-end tests for the command-line interface."""

import unittest
import sys
import os
import io
import json
import shlex
import tempfile
from contextlib import redirect_stderr, redirect_stdout

import pandas as pd

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from mfi.cli import main

SEQUENCE_FLAGS = ['--length', '12', '--motifs', 'ACGTAC@3']

COUNT_G_SCRIPT = """import sys
for line in sys.stdin:
    line = line.strip()
    if not line:
        break
    print(line.count('G') - 3, flush=True)
"""


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def run_cli(self, *argv):
        """Run the CLI; returns (exit code, stdout, stderr)."""
        stdout, stderr = io.StringIO(), io.StringIO()
        with redirect_stdout(stdout), redirect_stderr(stderr):
            code = main([argv[0], '-q', *argv[1:]])
        return code, stdout.getvalue(), stderr.getvalue()

    def read_bytes(self, name):
        with open(self.path(name), 'rb') as f:
            return f.read()


class TestSequencePipeline(CliTestCase):
    """Test gen, train and explain on motif sequences."""

    def setUp(self):
        super().setUp()
        code, _, _ = self.run_cli('gen', '--n', '30', '--seed', '1', *SEQUENCE_FLAGS, '--out', self.path('seqs.fa'))
        self.assertEqual(code, 0)
        code, _, _ = self.run_cli('train', '--data', self.path('seqs.fa'), '--degree', '3',
                                  '--out', self.path('model.json'))
        self.assertEqual(code, 0)

    def test_gen_writes_balanced_fasta(self):
        with open(self.path('seqs.fa'), encoding='utf-8') as f:
            headers = [line for line in f if line.startswith('>')]
        self.assertEqual(len(headers), 60)
        self.assertEqual(sum('label=+1' in h for h in headers), 30)

    def test_train_reports_accuracy(self):
        code, stdout, _ = self.run_cli('train', '--data', self.path('seqs.fa'), '--degree', '3',
                                       '--out', self.path('model2.json'))
        self.assertEqual(code, 0)
        result = json.loads(stdout)
        self.assertGreater(result['training_accuracy'], 0.9)

    def test_explain_model_po_matrix_rows(self):
        code, stdout, _ = self.run_cli('explain', '--mode', 'model', '--data', self.path('seqs.fa'),
                                       '--model', self.path('model.json'), '--k', '3', '--out', self.path('map.csv'))
        self.assertEqual(code, 0)
        frame = pd.read_csv(self.path('map.csv'))
        self.assertEqual(list(frame.columns), ['kmer', 'position', 'value'])
        self.assertEqual(len(frame), 4 ** 3 * (12 - 2))
        self.assertEqual(json.loads(stdout)['layout'], 'po-matrix')
        self.assertTrue(os.path.exists(self.path('map.csv.meta.json')))

    def test_explain_outputs_are_byte_identical(self):
        args = ['explain', '--mode', 'poim', '--data', self.path('seqs.fa'), '--model', self.path('model.json'),
                '--k', '2']
        self.assertEqual(self.run_cli(*args, '--out', self.path('a.csv'))[0], 0)
        self.assertEqual(self.run_cli(*args, '--out', self.path('b.csv'), '--threads', '3')[0], 0)
        self.assertEqual(self.read_bytes('a.csv'), self.read_bytes('b.csv'))

    def test_gen_is_reproducible(self):
        self.run_cli('gen', '--n', '30', '--seed', '1', *SEQUENCE_FLAGS, '--out', self.path('again.fa'))
        self.assertEqual(self.read_bytes('seqs.fa'), self.read_bytes('again.fa'))

    def test_instance_batch(self):
        code, stdout, _ = self.run_cli('explain', '--mode', 'instance', '--instances', '4', '--k', '2',
                                       '--data', self.path('seqs.fa'), '--model', self.path('model.json'),
                                       '--out', self.path('instances.csv'))
        self.assertEqual(code, 0)
        frame = pd.read_csv(self.path('instances.csv'))
        self.assertEqual(sorted(frame['sample'].unique()), [1, 2, 3, 4])
        self.assertEqual(len(frame), 4 * 11)
        self.assertEqual(sum(json.loads(stdout)['outcomes'].values()), 4)

    def test_firm_positional_map(self):
        code, _, _ = self.run_cli('explain', '--mode', 'firm', '--k', '1', '--data', self.path('seqs.fa'),
                                  '--model', self.path('model.json'), '--out', self.path('firm.csv'))
        self.assertEqual(code, 0)
        self.assertEqual(len(pd.read_csv(self.path('firm.csv'))), 12)

    def test_morf_on_sequences(self):
        code, stdout, _ = self.run_cli('morf', '--data', self.path('seqs.fa'), '--model', self.path('model.json'),
                                       '--seeds', '2', '--steps', '3', '--out', self.path('morf.csv'))
        self.assertEqual(code, 0)
        frame = pd.read_csv(self.path('morf.csv'))
        self.assertEqual(len(frame), 3 * 4)
        self.assertEqual(sorted(frame['ordering'].unique()), ['random', 'relevance'])
        self.assertEqual(len(json.loads(stdout)['random_areas']), 2)

    def test_external_predictor(self):
        script = self.path('count_g.py')
        with open(script, 'w', encoding='utf-8') as f:
            f.write(COUNT_G_SCRIPT)
        command = f"{shlex.quote(sys.executable)} {shlex.quote(script)}"
        code, _, stderr = self.run_cli('explain', '--mode', 'poim', '--k', '1', '--data', self.path('seqs.fa'),
                                       '--external', command, '--out', self.path('ext.csv'))
        self.assertEqual(code, 0, stderr)
        frame = pd.read_csv(self.path('ext.csv'))
        g_rows = frame[frame['kmer'] == 'G']
        self.assertTrue((g_rows['value'] > 0).all())

    def test_report_workbook(self):
        code, _, _ = self.run_cli('explain', '--data', self.path('seqs.fa'), '--model', self.path('model.json'),
                                  '--k', '1', '--out', self.path('map.csv'), '--report', self.path('study.xlsx'))
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(self.path('study.xlsx')))


class TestImagePipeline(CliTestCase):
    """Test the glyph pipeline with kernel MFI and MoRF."""

    def setUp(self):
        super().setUp()
        self.run_cli('gen', '--kind', 'image', '--n', '10', '--out', self.path('glyphs.csv'))
        self.run_cli('train', '--data', self.path('glyphs.csv'), '--kernel', 'rbf', '--sigma', '4',
                     '--out', self.path('model.json'))

    def test_kernel_map_with_pgm(self):
        code, stdout, _ = self.run_cli('explain', '--mode', 'kernel', '--data', self.path('glyphs.csv'),
                                       '--model', self.path('model.json'), '--out', self.path('map.csv'),
                                       '--pgm', self.path('map.pgm'))
        self.assertEqual(code, 0)
        self.assertEqual(len(pd.read_csv(self.path('map.csv'))), 256)
        self.assertTrue(self.read_bytes('map.pgm').startswith(b'P5\n16 16\n255\n'))
        self.assertEqual(json.loads(stdout)['shape'], [16, 16])

    def test_morf_curves(self):
        code, _, _ = self.run_cli('morf', '--data', self.path('glyphs.csv'), '--model', self.path('model.json'),
                                  '--steps', '5', '--seeds', '3', '--out', self.path('morf.csv'))
        self.assertEqual(code, 0)
        frame = pd.read_csv(self.path('morf.csv'))
        self.assertEqual(len(frame), 6 * 4)
        random_rows = frame[frame['ordering'] == 'random']
        self.assertEqual(sorted(random_rows['seed'].unique()), [0, 1, 2])


class TestConvergeCommand(CliTestCase):
    """Test the convergence study command."""

    def test_consecutive_pair_rows(self):
        code, _, _ = self.run_cli('converge', '--sizes', '100,215,500,1000', '--n', '100', '--k', '2',
                                  '--degree', '3', *SEQUENCE_FLAGS, '--out', self.path('converge.csv'))
        self.assertEqual(code, 0)
        frame = pd.read_csv(self.path('converge.csv'))
        self.assertEqual(len(frame), 3)
        self.assertEqual(list(frame['previous_n']), [100, 215, 500])
        self.assertIn('seconds', frame.columns)


class TestErrors(CliTestCase):
    """Test exit codes and diagnostics."""

    def test_missing_model_names_path(self):
        self.run_cli('gen', '--n', '5', *SEQUENCE_FLAGS, '--out', self.path('seqs.fa'))
        missing = self.path('absent.json')
        code, stdout, stderr = self.run_cli('explain', '--data', self.path('seqs.fa'), '--model', missing,
                                            '--out', self.path('map.csv'))
        self.assertEqual(code, 3)
        self.assertIn(missing, stderr)
        self.assertEqual(stdout, '')

    def test_missing_out_is_config_error(self):
        code, _, stderr = self.run_cli('gen', '--n', '5')
        self.assertEqual(code, 2)
        self.assertIn('needs --out', stderr)

    def test_motif_overflow(self):
        code, _, _ = self.run_cli('gen', '--length', '10', '--motifs', 'ACGTAC@8', '--out', self.path('x.fa'))
        self.assertEqual(code, 2)

    def test_symbol_outside_alphabet(self):
        path = self.path('bad.fa')
        with open(path, 'w', encoding='utf-8') as f:
            f.write('>a label=+1\nACGX\n>b label=-1\nACGT\n')
        code, _, _ = self.run_cli('train', '--data', path, '--out', self.path('m.json'))
        self.assertEqual(code, 5)


if __name__ == '__main__':
    unittest.main()

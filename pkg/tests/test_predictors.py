"""Unit tests for predictors module."""

import unittest
import sys
import os
import json
import tempfile
import itertools
import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from mfi.core import (
    AlphabetSpec, MalformedFileError, MissingInputError, PredictorProcessError,
    PredictorTimeoutError, SampleSet, UnparseableResponseError, VersionMismatchError,
)
from mfi.evaluation import sign_accuracy
from mfi.kernels import KernelSpec, gram, rbf_eval
from mfi.predictors import (
    ExternalPredictor, ExternalPredictorSpec, KernelMachineModel, KernelMachinePredictor,
    external_score, km_score, load_model, save_model, train_ls,
)

COUNT_A_SCRIPT = """
import sys
for line in sys.stdin:
    line = line.strip()
    if not line:
        break
    print(line.count('A'), flush=True)
"""

CONSTANT_SCRIPT = """
import sys
for line in sys.stdin:
    if not line.strip():
        break
    print({reply!r}, flush=True)
"""

SLEEP_SCRIPT = """
import sys, time
sys.stdin.readline()
time.sleep(5)
"""


def python_command(script):
    return (sys.executable, '-c', script)


class TestKernelMachine(unittest.TestCase):
    """Test kernel machine scoring and training."""

    def setUp(self):
        self.images = SampleSet.from_images(np.array([
            [[0.1, 0.2], [0.3, 0.4]],
            [[0.5, 0.1], [0.0, 0.9]],
            [[1.0, 0.0], [0.2, 0.2]],
        ]))
        self.binary = AlphabetSpec.from_string('AC')
        self.sequences = SampleSet.from_sequences(['AAC', 'ACA', 'CCA', 'CAC'], self.binary,
                                                  labels=[1, 1, -1, -1])

    def test_zero_coefficients_give_bias(self):
        model = KernelMachineModel(self.images, np.zeros(3), 0.75, KernelSpec.rbf())
        np.testing.assert_allclose(KernelMachinePredictor(model).score_batch(self.images), 0.75)

    def test_single_support_rbf(self):
        support = self.images.prefix(1)
        model = KernelMachineModel(support, np.array([1.0]), 0.0, KernelSpec.rbf(0.8))
        self.assertAlmostEqual(km_score(model, support.sample(0)), 1.0)
        expected = rbf_eval(support.data[0].ravel(), self.images.data[2].ravel(), 0.8)
        self.assertAlmostEqual(km_score(model, self.images.sample(2)), expected, places=12)

    def test_linear_kernel_matches_hand_sum(self):
        alphas = np.array([0.5, -1.0, 2.0])
        model = KernelMachineModel(self.images, alphas, 0.1, KernelSpec.linear())
        x = self.images.data[1].ravel()
        expected = sum(a * np.dot(s.ravel(), x) for a, s in zip(alphas, self.images.data)) + 0.1
        self.assertAlmostEqual(km_score(model, self.images.sample(1)), expected, places=12)

    def test_score_linear_in_alphas(self):
        rng = np.random.default_rng(3)
        a1, a2 = rng.normal(size=3), rng.normal(size=3)
        kernel = KernelSpec.rbf(0.5)

        def scores(alphas):
            return KernelMachinePredictor(KernelMachineModel(self.images, alphas, 0.0, kernel)).score_batch(self.images)

        np.testing.assert_allclose(scores(a1 + a2), scores(a1) + scores(a2), atol=1e-12)

    def test_train_single_sample(self):
        model = train_ls(self.images.prefix(1), [1.0], KernelSpec.rbf(), ridge=1.0)
        np.testing.assert_allclose(model.alphas, [0.5])
        self.assertEqual(model.bias, 0.0)

    def test_train_interpolates_with_small_ridge(self):
        model = train_ls(self.sequences, np.ones(4), KernelSpec.delta(), ridge=1e-9)
        np.testing.assert_allclose(KernelMachinePredictor(model).score_batch(self.sequences), 1.0, atol=1e-6)

    def test_train_sign_equivariance(self):
        kernel = KernelSpec.wd(2)
        positive = train_ls(self.sequences, self.sequences.labels, kernel)
        negative = train_ls(self.sequences, -self.sequences.labels, kernel)
        np.testing.assert_allclose(negative.alphas, -positive.alphas, atol=1e-12)

    def test_solution_residual_is_tiny(self):
        rng = np.random.default_rng(8)
        images = SampleSet.from_images(rng.random((20, 3, 3)))
        labels = np.where(rng.random(20) > 0.5, 1.0, -1.0)
        cases = [(self.sequences, self.sequences.labels, KernelSpec.wd(2)),
                 (images, labels, KernelSpec.rbf(0.7))]
        for samples, y, kernel in cases:
            model = train_ls(samples, y, kernel, ridge=1e-3)
            system = gram(samples, kernel).entries + 1e-3 * np.eye(samples.n)
            self.assertLessEqual(np.max(np.abs(system @ model.alphas - y)), 1e-8)

    def test_separable_training_set_fully_recovered(self):
        sequences = [''.join(s) for s in itertools.product('AC', repeat=6)]
        labels = [1.0 if s[0] == 'A' else -1.0 for s in sequences]
        training = SampleSet.from_sequences(sequences, self.binary, labels=labels)
        model = train_ls(training, labels, KernelSpec.wd(1), ridge=1e-3)
        scores = KernelMachinePredictor(model).score_batch(training)
        self.assertEqual(sign_accuracy(scores, np.array(labels)), 1.0)

    def test_ridge_must_be_positive(self):
        with self.assertRaises(ValueError):
            train_ls(self.sequences, self.sequences.labels, KernelSpec.wd(2), ridge=0.0)


class TestModelFiles(unittest.TestCase):
    """Test model save and load."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'model.json')
        sequences = SampleSet.from_sequences(['ACGT', 'TTGA', 'GGCA'], AlphabetSpec(), seed=4)
        self.model = train_ls(sequences, [1.0, -1.0, 1.0], KernelSpec.wd(3))

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_sequences(self):
        save_model(self.model, self.path)
        loaded = load_model(self.path)
        self.assertEqual(loaded.kernel, self.model.kernel)
        self.assertEqual(loaded.bias, self.model.bias)
        np.testing.assert_array_equal(loaded.alphas, self.model.alphas)
        self.assertEqual(loaded.support.sequences(), self.model.support.sequences())
        self.assertEqual(loaded.support.seed, 4)

    def test_round_trip_images(self):
        rng = np.random.default_rng(0)
        images = SampleSet.from_images(rng.random((4, 3, 2)))
        model = KernelMachineModel(images, rng.normal(size=4), 0.25, KernelSpec.rbf(1.7))
        save_model(model, self.path)
        loaded = load_model(self.path)
        np.testing.assert_array_equal(loaded.support.data, images.data)
        np.testing.assert_array_equal(loaded.alphas, model.alphas)
        self.assertEqual(loaded.kernel.sigma, 1.7)

    def test_missing_alphas(self):
        save_model(self.model, self.path)
        with open(self.path) as f:
            payload = json.load(f)
        del payload['alphas']
        with open(self.path, 'w') as f:
            json.dump(payload, f)
        with self.assertRaises(MalformedFileError):
            load_model(self.path)

    def test_version_mismatch(self):
        save_model(self.model, self.path)
        with open(self.path) as f:
            payload = json.load(f)
        payload['version'] = 99
        with open(self.path, 'w') as f:
            json.dump(payload, f)
        with self.assertRaises(VersionMismatchError):
            load_model(self.path)

    def test_missing_file_names_path(self):
        missing = os.path.join(self.tmp.name, 'absent.json')
        with self.assertRaises(MissingInputError) as ctx:
            load_model(missing)
        self.assertIn(missing, str(ctx.exception))


class TestExternalPredictor(unittest.TestCase):
    """Test the line-protocol external predictor."""

    def setUp(self):
        self.samples = SampleSet.from_sequences(['AAAA', 'ACGT', 'CCCC', 'AACC', 'GATA'], AlphabetSpec())

    def test_constant_reply(self):
        spec = ExternalPredictorSpec(python_command(CONSTANT_SCRIPT.format(reply='0.0')), timeout=10)
        self.assertEqual(external_score(spec, self.samples.sample(0), self.samples), 0.0)

    def test_batch_in_request_order(self):
        spec = ExternalPredictorSpec(python_command(COUNT_A_SCRIPT), timeout=10)
        with ExternalPredictor(spec) as predictor:
            np.testing.assert_array_equal(predictor.score_batch(self.samples), [4, 1, 0, 2, 2])
            # the same process serves a second batch
            np.testing.assert_array_equal(predictor.score_batch(self.samples.prefix(2)), [4, 1])

    def test_shuffled_batch_unshuffles_to_same_scores(self):
        spec = ExternalPredictorSpec(python_command(COUNT_A_SCRIPT), timeout=10)
        order = np.array([3, 0, 4, 2, 1])
        with ExternalPredictor(spec) as predictor:
            direct = predictor.score_batch(self.samples)
            shuffled = predictor.score_batch(self.samples.subset(order))
        np.testing.assert_array_equal(shuffled[np.argsort(order)], direct)

    def test_unparseable_response(self):
        spec = ExternalPredictorSpec(python_command(CONSTANT_SCRIPT.format(reply='abc')), timeout=10)
        with self.assertRaises(UnparseableResponseError):
            external_score(spec, self.samples.sample(0), self.samples)

    def test_process_exit(self):
        spec = ExternalPredictorSpec(python_command('pass'), timeout=10)
        with self.assertRaises(PredictorProcessError):
            external_score(spec, self.samples.sample(0), self.samples)

    def test_timeout(self):
        spec = ExternalPredictorSpec(python_command(SLEEP_SCRIPT), timeout=0.5)
        with self.assertRaises(PredictorTimeoutError):
            external_score(spec, self.samples.sample(0), self.samples)

    def test_missing_executable(self):
        spec = ExternalPredictorSpec(('/nonexistent/predictor',), timeout=1)
        with self.assertRaises(PredictorProcessError):
            external_score(spec, self.samples.sample(0), self.samples)


if __name__ == '__main__':
    unittest.main()

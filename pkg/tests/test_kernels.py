"""Unit tests for kernels module."""

import unittest
import sys
import os
import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from mfi.core import (
    AlphabetSpec, DimensionMismatchError, IncompatibleKernelError, SampleSet, SequenceSample,
)
from mfi.kernels import (
    GramMatrix, KernelSpec, center_gram, delta_eval, gram, hsic, linear_eval, rbf_eval,
    wd_eval, wd_weights,
)


def hsic_double_sum(K, L):
    """Biased HSIC written as the three expectation terms over all index pairs."""
    n = K.shape[0]
    first = sum(K[i, j] * L[i, j] for i in range(n) for j in range(n)) / n ** 2
    second = K.sum() * L.sum() / n ** 4
    third = sum(K[i, j] * L[i, q] for i in range(n) for j in range(n) for q in range(n)) / n ** 3
    return first + second - 2.0 * third


class TestKernelEvaluation(unittest.TestCase):
    """Test single kernel evaluations."""

    def test_rbf(self):
        self.assertAlmostEqual(rbf_eval([0.3, 0.1], [0.3, 0.1], 1.0), 1.0)
        self.assertAlmostEqual(rbf_eval([0.0], [1.0], 1.0), np.exp(-0.5), places=12)
        values = [rbf_eval([0.0], [1.0], sigma) for sigma in (1.0, 2.0, 10.0, 100.0)]
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])))
        self.assertLess(values[-1], 1.0)

    def test_rbf_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            rbf_eval([0.0, 1.0], [1.0], 1.0)

    def test_linear(self):
        self.assertAlmostEqual(linear_eval([1.0, 2.0], [3.0, -1.0]), 1.0)

    def test_wd_weights_sum_to_one(self):
        self.assertAlmostEqual(wd_weights(8).sum(), 1.0, places=12)
        np.testing.assert_allclose(wd_weights(2), [2.0 / 3.0, 1.0 / 3.0])

    def test_wd_examples(self):
        self.assertAlmostEqual(wd_eval(SequenceSample('ACG'), SequenceSample('ACG'), 2), 8.0 / 3.0)
        self.assertAlmostEqual(wd_eval(SequenceSample('ACG'), SequenceSample('ACT'), 2), 5.0 / 3.0)
        self.assertAlmostEqual(wd_eval(SequenceSample('AAAA'), SequenceSample('CCCC'), 3), 0.0)

    def test_wd_symmetric_and_maximal_on_self(self):
        rng = np.random.default_rng(17)
        dna = AlphabetSpec()
        sequences = [dna.decode(row) for row in rng.integers(0, 4, size=(12, 9))]
        for degree in (1, 3, 9):
            for a in sequences:
                x = SequenceSample(a)
                self_value = wd_eval(x, x, degree)
                for b in sequences:
                    y = SequenceSample(b)
                    self.assertEqual(wd_eval(x, y, degree), wd_eval(y, x, degree))
                    self.assertGreaterEqual(self_value, wd_eval(x, y, degree))

    def test_delta(self):
        self.assertEqual(delta_eval('AC', 'AC'), 1.0)
        self.assertEqual(delta_eval('AC', 'AG'), 0.0)
        self.assertEqual(delta_eval(0.5, 0.5), 1.0)


class TestGramAndHsic(unittest.TestCase):
    """Test Gram matrices, centering and HSIC."""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_single_sample_rbf(self):
        np.testing.assert_array_equal(gram(np.array([[0.2, 0.4]]), KernelSpec.rbf()).entries, [[1.0]])

    def test_identical_samples(self):
        entries = gram(np.array([[0.2, 0.4], [0.2, 0.4]]), KernelSpec.rbf(0.5)).entries
        self.assertTrue(np.all(entries == entries[0, 0]))

    def test_linear_matches_pairwise_dot_products(self):
        X = self.rng.normal(size=(3, 4))
        entries = gram(X, KernelSpec.linear()).entries
        for i in range(3):
            for j in range(3):
                self.assertAlmostEqual(entries[i, j], float(np.dot(X[i], X[j])), places=12)

    def test_wd_gram_matches_pairwise_evaluation(self):
        alphabet = AlphabetSpec()
        sequences = ['ACGTAC', 'ACGTTT', 'GGGTAC', 'ACCTAC']
        samples = SampleSet.from_sequences(sequences, alphabet)
        entries = gram(samples, KernelSpec.wd(3)).entries
        for i, x in enumerate(sequences):
            for j, y in enumerate(sequences):
                self.assertAlmostEqual(entries[i, j], wd_eval(SequenceSample(x), SequenceSample(y), 3))

    def test_gram_is_positive_semidefinite(self):
        X = self.rng.normal(size=(30, 5))
        sequences = SampleSet(self.rng.integers(0, 4, size=(30, 12)), 'sequence')
        for samples, kernel in ((X, KernelSpec.rbf(1.5)), (X, KernelSpec.linear()),
                                (sequences, KernelSpec.wd(4)), (sequences, KernelSpec.delta())):
            entries = gram(samples, kernel).entries
            self.assertGreaterEqual(np.linalg.eigvalsh(entries).min(), -1e-9)
            np.testing.assert_array_equal(entries, entries.T)

    def test_incompatible_kernel(self):
        sequences = SampleSet.from_sequences(['AC', 'CA'], AlphabetSpec.from_string('AC'))
        with self.assertRaises(IncompatibleKernelError):
            gram(sequences, KernelSpec.rbf())

    def test_centering_examples(self):
        constant = center_gram(GramMatrix(np.full((3, 3), 2.5)))
        np.testing.assert_allclose(constant.entries, np.zeros((3, 3)), atol=1e-15)

        a = 0.3
        centered = center_gram(GramMatrix(np.array([[1.0, a], [a, 1.0]])))
        np.testing.assert_allclose(centered.entries, (1 - a) / 2 * np.array([[1, -1], [-1, 1]]))

        G = gram(self.rng.normal(size=(6, 2)), KernelSpec.rbf()).entries
        once = center_gram(GramMatrix(G))
        twice = center_gram(GramMatrix(once.entries))
        np.testing.assert_allclose(twice.entries, once.entries, atol=1e-12)

    def test_hsic_two_samples(self):
        a, b = 0.2, 0.6
        K = GramMatrix(np.array([[1.0, a], [a, 1.0]]))
        L = GramMatrix(np.array([[1.0, b], [b, 1.0]]))
        self.assertAlmostEqual(hsic(K, L), (1 - a) * (1 - b), places=12)
        self.assertAlmostEqual(hsic(GramMatrix(np.ones((2, 2))), L), 0.0, places=15)

    def test_hsic_matches_double_sum_expansion(self):
        n = 7
        K = gram(self.rng.normal(size=(n, 3)), KernelSpec.rbf()).entries
        L = gram(self.rng.normal(size=(n, 1)), KernelSpec.rbf(0.7)).entries
        rescaled = hsic(GramMatrix(K), GramMatrix(L)) * (n - 1) ** 2 / n ** 2
        self.assertAlmostEqual(rescaled, hsic_double_sum(K, L), delta=1e-10)

    def test_hsic_symmetric_and_nonnegative(self):
        for _ in range(5):
            K = GramMatrix(gram(self.rng.normal(size=(10, 2)), KernelSpec.rbf()).entries)
            L = GramMatrix(gram(self.rng.normal(size=(10, 2)), KernelSpec.linear()).entries)
            self.assertAlmostEqual(hsic(K, L), hsic(L, K), places=12)
            self.assertGreaterEqual(hsic(K, L), -1e-12)

    def test_hsic_size_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            hsic(GramMatrix(np.eye(2)), GramMatrix(np.eye(3)))


if __name__ == '__main__':
    unittest.main()

"""Tests for the reliance module."""
import itertools
from unittest import TestCase

import numpy as np
import pytest

from tests.helpers import correlated_cov, running_binary, uncorrelated_cov
from vicloud.data import gen_gaussian
from vicloud.exceptions import DataError, ZeroLossError
from vicloud.models import Dataset, Variant
from vicloud.reliance import (LinearPredictor, LogisticPredictor,
                              TablePredictor, combine, mr_binary_exact,
                              mr_empirical_permute, mr_linear,
                              mr_linear_all, mr_linear_full, mr_vector,
                              pattern_codes, shuffled_loss_binary)


class TestAnalytic(TestCase):
    """Test the population reliance of linear models."""

    def test_zero_model(self):
        """Test that beta = 0 has no reliance."""
        for j in range(2):
            self.assertEqual(mr_linear([0.0, 0.0], correlated_cov(), j), 0.0)

    def test_uncorrelated_minimizer(self):
        """Test mr(beta*) = (0.32, 0.50) on the uncorrelated example."""
        mr = mr_vector(LinearPredictor([0.4, 0.5]), uncorrelated_cov())
        np.testing.assert_allclose(mr.values, [0.32, 0.50])
        self.assertEqual(mr.variant, Variant.DIFF)
        self.assertAlmostEqual(mr.model_loss, 0.59)

    def test_correlated_minimizer(self):
        """Test mr_1 at beta* = (0.3125, 0.4375) with rho_12 = 0.2."""
        self.assertAlmostEqual(mr_linear([0.3125, 0.4375], correlated_cov(),
                                         0), 0.1953125)

    def test_full_form_agrees(self):
        """Test that both closed forms agree."""
        rng = np.random.default_rng(1)
        cov = correlated_cov(0.4)
        for beta in rng.normal(size=(10, 2)):
            for j in range(2):
                self.assertAlmostEqual(mr_linear(beta, cov, j),
                                       mr_linear_full(beta, cov, j))

    def test_vectorised(self):
        """Test mr_linear_all against mr_linear."""
        betas = np.random.default_rng(2).normal(size=(4, 2))
        cov = correlated_cov()
        expected = [[mr_linear(beta, cov, j) for j in range(2)]
                    for beta in betas]
        np.testing.assert_allclose(mr_linear_all(betas, cov), expected)

    def test_index_out_of_range(self):
        """Test a feature index beyond p."""
        with self.assertRaises(DataError):
            mr_linear([0.1, 0.2], uncorrelated_cov(), 2)

    def test_ratio_variant(self):
        """Test that the ratio variant divides by the model loss."""
        mr = mr_vector(LinearPredictor([0.4, 0.5]), uncorrelated_cov(),
                       Variant.RATIO)
        np.testing.assert_allclose(mr.values, [1 + 0.32 / 0.59,
                                               1 + 0.50 / 0.59])

    def test_analytic_needs_linear(self):
        """Test that the analytic path refuses other model classes."""
        with self.assertRaises(DataError):
            mr_vector(LogisticPredictor([0.0, 1.0, 1.0]), uncorrelated_cov())


class TestCombine(TestCase):
    """Test combine and the exact binary shortcut."""

    def test_combine(self):
        """Test both variants and the zero-loss error."""
        self.assertEqual(combine(15.0, 12.0, Variant.DIFF), 3.0)
        self.assertEqual(combine(15.0, 12.0, Variant.RATIO), 1.25)
        with self.assertRaises(ZeroLossError):
            combine(1.0, 0.0, Variant.RATIO)

    def test_shuffled_loss_binary(self):
        """Test p_j = 0.5, L0 = 10, L1 = 20."""
        shuffled = shuffled_loss_binary(0.5, 10.0, 20.0)
        self.assertEqual(shuffled, 15.0)
        self.assertEqual(combine(shuffled, 12.0, Variant.RATIO), 1.25)

    def test_constant_in_feature(self):
        """Test that a table ignoring feature 1 has ratio 1 on it."""
        dataset = running_binary()
        table = TablePredictor([1], [1.0, -1.0])
        self.assertAlmostEqual(mr_binary_exact(table, dataset, 0), 1.0)

    def test_running_example(self):
        """Test the exact ratio of the best table on feature 2."""
        dataset = running_binary()
        table = TablePredictor([1], [1.0, -1.0])
        # 3 errors; forcing x2 to 0 gives 6, to 1 gives 5; p = 7/11
        expected = (7 / 11 * 5 + 4 / 11 * 6) / 3
        self.assertAlmostEqual(mr_binary_exact(table, dataset, 1), expected)

    def test_exact_equals_all_shuffles(self):
        """Test the shortcut against the mean over every permutation."""
        dataset = Dataset([[0, 1], [1, 0], [1, 1], [0, 0]],
                          [1, -1, 1, 1], kind=1)
        table = TablePredictor([0, 1], [1.0, -1.0, -1.0, 1.0])
        losses = []
        column = dataset.features[:, 0]
        for perm in itertools.permutations(range(4)):
            features = np.array(dataset.features)
            features[:, 0] = column[list(perm)]
            losses.append(table.loss(features, dataset.outcome))
        original = table.loss(dataset.features, dataset.outcome)
        self.assertAlmostEqual(mr_binary_exact(table, dataset, 0),
                               np.mean(losses) / original)

    def test_exact_equals_all_shuffles_random(self):
        """Test the shortcut on random datasets of at most 7 rows."""
        rng = np.random.default_rng(8)
        checked = 0
        while checked < 6:
            n = int(rng.integers(3, 8))
            dataset = Dataset(rng.integers(0, 2, (n, 3)),
                              rng.choice([-1, 1], n), kind=1)
            table = TablePredictor([0, 1, 2], rng.choice([-1.0, 1.0], 8))
            original = table.loss(dataset.features, dataset.outcome)
            if original == 0:
                continue
            for j in range(3):
                column = dataset.features[:, j]
                losses = []
                for perm in itertools.permutations(range(n)):
                    features = np.array(dataset.features)
                    features[:, j] = column[list(perm)]
                    losses.append(table.loss(features, dataset.outcome))
                self.assertAlmostEqual(mr_binary_exact(table, dataset, j),
                                       np.mean(losses) / original)
            checked += 1

    def test_exact_needs_binary(self):
        """Test that continuous data is refused."""
        dataset = Dataset([[0.5], [1.0]], [1.0, -1.0])
        with self.assertRaises(DataError):
            mr_binary_exact(TablePredictor([0], [1.0, -1.0]), dataset, 0)

    def test_pattern_codes(self):
        """Test that the first subset feature is the high bit."""
        features = np.array([[0, 1, 1], [1, 0, 1]])
        np.testing.assert_array_equal(pattern_codes(features, [0, 2]),
                                      [1, 3])
        np.testing.assert_array_equal(pattern_codes(features, []), [0, 0])


class TestPermutation(TestCase):
    """Test the permutation estimator."""

    def test_ignored_feature(self):
        """Test that shuffling an unused feature changes nothing."""
        dataset = gen_gaussian(np.eye(2), [0.4, 0.5], 100, 3)
        model = LinearPredictor([0.0, 0.5])
        self.assertAlmostEqual(mr_empirical_permute(model, dataset, 0, 5, 0,
                                                    Variant.DIFF), 0.0)
        self.assertAlmostEqual(mr_empirical_permute(model, dataset, 0, 5, 0,
                                                    Variant.RATIO), 1.0)

    def test_deterministic(self):
        """Test that the seed fixes the estimate."""
        dataset = gen_gaussian(np.eye(2), [0.4, 0.5], 200, 3)
        model = LinearPredictor([0.4, 0.5])
        self.assertEqual(mr_empirical_permute(model, dataset, 1, 4, 9),
                         mr_empirical_permute(model, dataset, 1, 4, 9))

    def test_needs_a_shuffle(self):
        """Test that zero shuffles are rejected."""
        dataset = gen_gaussian(np.eye(2), [0.4, 0.5], 20, 3)
        with self.assertRaises(DataError):
            mr_empirical_permute(LinearPredictor([0.4, 0.5]), dataset, 0, 0)

    @pytest.mark.medium
    def test_converges_to_population(self):
        """Test agreement with mr_linear on 10^5 Gaussian rows."""
        dataset = gen_gaussian(np.eye(2), [0.4, 0.5], 100000, 8)
        model = LinearPredictor([0.4, 0.5])
        for j, expected in enumerate([0.32, 0.50]):
            estimate = mr_empirical_permute(model, dataset, j, 5, 0,
                                            Variant.DIFF)
            self.assertAlmostEqual(estimate, expected, delta=0.02)

    @pytest.mark.medium
    def test_variance_halves(self):
        """Test that doubling shuffles roughly halves the variance."""
        dataset = gen_gaussian(np.eye(2), [0.4, 0.5], 200, 4)
        model = LinearPredictor([0.4, 0.5])
        few = [mr_empirical_permute(model, dataset, 0, 4, 1000 * rep)
               for rep in range(50)]
        many = [mr_empirical_permute(model, dataset, 0, 8, 1000 * rep)
                for rep in range(50)]
        ratio = np.var(many) / np.var(few)
        self.assertGreater(ratio, 0.2)
        self.assertLess(ratio, 0.9)

    def test_empirical_binary_path(self):
        """Test that mr_vector uses the exact shortcut on binary data."""
        dataset = running_binary()
        table = TablePredictor([1], [1.0, -1.0])
        mr = mr_vector(table, dataset)
        self.assertEqual(mr.variant, Variant.RATIO)
        self.assertAlmostEqual(mr.values[0], 1.0)
        self.assertAlmostEqual(mr.values[1],
                               mr_binary_exact(table, dataset, 1))

"""Tests for the logistic_rashomon module."""
import json
from unittest import TestCase

import numpy as np
import pytest

from vicloud.data import binarize_outcome, gen_gaussian
from vicloud.exceptions import (ConfigError, DegenerateEllipsoidError,
                                NoPlateauError, RashomonEmptyError,
                                SeparationError)
from vicloud.logistic_rashomon import (SamplerConfig, SamplerReport,
                                       calibrate_box_scale, cloud_reliance,
                                       fit_logistic, fit_pca_ellipsoid,
                                       logistic_gradient, logistic_loss,
                                       logistic_losses, plateau_start,
                                       sample_in_ellipsoid,
                                       sample_rashomon_logistic,
                                       standard_errors, tune_sampler)
from vicloud.models import Dataset, Ellipsoid, Variant
from vicloud.reliance import LogisticPredictor, mr_empirical_permute


def surrogate(n=2000, seed=1):
    """Return sign-thresholded Gaussian data with two features."""
    return binarize_outcome(gen_gaussian(np.eye(2), [0.4, 0.5], n, seed))


class TestLoss(TestCase):
    """Test the logistic loss and its derivatives."""

    def test_zero_model(self):
        """Test that beta = 0 costs log 2 per row."""
        dataset = surrogate(50)
        self.assertAlmostEqual(logistic_loss(np.zeros(3), dataset),
                               50 * np.log(2))

    def test_saturation(self):
        """Test a single confidently correct row."""
        dataset = Dataset([[1.0]], [1.0])
        self.assertLess(logistic_loss([0.0, 30.0], dataset), 1e-12)

    def test_separable_decreases(self):
        """Test that the loss falls along a separating direction."""
        dataset = Dataset([[-2.0], [-1.0], [1.0], [2.0]], [-1, -1, 1, 1])
        losses = [logistic_loss([0.0, scale], dataset)
                  for scale in (1.0, 2.0, 4.0, 8.0, 16.0)]
        self.assertTrue(np.all(np.diff(losses) < 0))
        self.assertLess(losses[-1], 1e-6)

    def test_vectorised(self):
        """Test logistic_losses against logistic_loss."""
        dataset = surrogate(100)
        betas = np.random.default_rng(0).normal(size=(6, 3))
        np.testing.assert_allclose(logistic_losses(betas, dataset),
                                   [logistic_loss(b, dataset) for b in betas])

    def test_gradient(self):
        """Test the gradient against central differences."""
        dataset = surrogate(200)
        beta = np.array([0.1, -0.3, 0.7])
        numeric = np.empty(3)
        for k in range(3):
            shift = np.zeros(3)
            shift[k] = 1e-6
            numeric[k] = (logistic_loss(beta + shift, dataset) -
                          logistic_loss(beta - shift, dataset)) / 2e-6
        np.testing.assert_allclose(logistic_gradient(beta, dataset), numeric,
                                   rtol=1e-5, atol=1e-6)

    def test_outcome_check(self):
        """Test that continuous outcomes are refused."""
        dataset = gen_gaussian(np.eye(2), [0.4, 0.5], 20, 0)
        with self.assertRaises(ValueError):
            logistic_loss(np.zeros(3), dataset)


class TestFit(TestCase):
    """Test fit_logistic."""

    def test_intercept_only(self):
        """Test that 75% positives in every group give log 3, slope 0."""
        dataset = Dataset([[0.0]] * 4 + [[1.0]] * 4,
                          [1, 1, 1, -1, 1, 1, 1, -1])
        beta = fit_logistic(dataset)
        self.assertAlmostEqual(beta[0], np.log(3), places=6)
        self.assertAlmostEqual(beta[1], 0.0, places=6)

    def test_null_model(self):
        """Test that unrelated features fit near zero."""
        rng = np.random.default_rng(4)
        features = rng.standard_normal((2000, 2))
        outcome = rng.choice([-1.0, 1.0], size=2000)
        dataset = Dataset(features, outcome)
        beta = fit_logistic(dataset)
        se = standard_errors(dataset, beta)
        self.assertTrue(np.all(np.abs(beta) < 3 * se))

    def test_separation(self):
        """Test that a separable set raises."""
        dataset = Dataset([[-2.0], [-1.0], [1.0], [2.0]], [-1, -1, 1, 1])
        with self.assertRaises(SeparationError):
            fit_logistic(dataset)

    def test_gradient_vanishes(self):
        """Test that the fit is a stationary point."""
        dataset = surrogate(500)
        beta = fit_logistic(dataset)
        self.assertLess(np.linalg.norm(logistic_gradient(beta, dataset)),
                        1e-6)


class TestSamplerConfig(TestCase):
    """Test SamplerConfig validation."""

    def test_r_must_exceed_one(self):
        """Test that r <= 1 names the field."""
        with self.assertRaises(ConfigError) as context:
            SamplerConfig(r=1.0)
        self.assertEqual(context.exception.field, 'sampler.r')

    def test_r_bar_bound(self):
        """Test that r may not exceed r_bar."""
        with self.assertRaises(ConfigError):
            SamplerConfig(r=1.6, r_bar=1.5)

    def test_unknown_field(self):
        """Test that unknown fields are rejected."""
        with self.assertRaises(ConfigError) as context:
            SamplerConfig.from_dict({'rounds': 3})
        self.assertEqual(context.exception.field, 'sampler.rounds')

    def test_replace(self):
        """Test replacing fields."""
        cfg = SamplerConfig(seed=3).replace(m_rounds=5)
        self.assertEqual((cfg.seed, cfg.m_rounds), (3, 5))
        self.assertEqual(SamplerConfig.from_dict(cfg.as_dict()).as_dict(),
                         cfg.as_dict())


class TestPCAEllipsoid(TestCase):
    """Test fit_pca_ellipsoid and sample_in_ellipsoid."""

    def test_axis_aligned(self):
        """Test a dense ellipse with a = 2, b = 1."""
        angles = np.linspace(0, 2 * np.pi, 720, endpoint=False)
        points = np.column_stack([2 * np.cos(angles), np.sin(angles)])
        ellipsoid = fit_pca_ellipsoid(points)
        np.testing.assert_allclose(ellipsoid.center, [0, 0], atol=1e-9)
        np.testing.assert_allclose(sorted(ellipsoid.radii), [1.0, 2.0],
                                   rtol=0.02)

    def test_rotated(self):
        """Test that a 45 degree ellipse has diagonal axes."""
        angles = np.linspace(0, 2 * np.pi, 720, endpoint=False)
        local = np.column_stack([2 * np.cos(angles), np.sin(angles)])
        rotation = np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2)
        ellipsoid = fit_pca_ellipsoid(local @ rotation.T)
        long_axis = ellipsoid.rotation[:, np.argmax(ellipsoid.radii)]
        short_axis = ellipsoid.rotation[:, np.argmin(ellipsoid.radii)]
        limit = np.cos(np.radians(2))
        self.assertGreater(abs(long_axis @ [1, 1]) / np.sqrt(2), limit)
        self.assertGreater(abs(short_axis @ [1, -1]) / np.sqrt(2), limit)

    def test_identical_points(self):
        """Test that a single repeated point is rank deficient."""
        with self.assertRaises(DegenerateEllipsoidError):
            fit_pca_ellipsoid(np.ones((10, 2)))

    def test_samples_inside(self):
        """Test that draws stay inside the ellipsoid."""
        ellipsoid = Ellipsoid([1.0, -1.0], [0.5, 2.0], np.eye(2))
        points = sample_in_ellipsoid(ellipsoid, 500,
                                     np.random.default_rng(0), 0.5)
        self.assertTrue(np.all(ellipsoid.level(points) <= 1 + 1e-12))


class TestSampler(TestCase):
    """Test sample_rashomon_logistic."""

    def setUp(self):
        """Initialize before tests are executed."""
        self.dataset = surrogate()
        self.cfg = SamplerConfig(n_per_round=500, seed=0,
                                 radial_exponent=1 / 3, n_shuffles=2)

    def test_epsilon_zero(self):
        """Test that epsilon = 0 empties the first round."""
        with self.assertRaises(RashomonEmptyError) as context:
            sample_rashomon_logistic(self.dataset, 0.0, self.cfg)
        self.assertEqual(context.exception.round_index, 1)

    def test_epsilon_zero_fixed_box(self):
        """Test the same with a fixed box."""
        with self.assertRaises(RashomonEmptyError) as context:
            sample_rashomon_logistic(self.dataset, 0.0,
                                     self.cfg.replace(box_scale=2.0))
        self.assertEqual(context.exception.round_index, 1)

    def test_calibration_target(self):
        """Test that the calibrated box keeps about 75% of draws."""
        scale = calibrate_box_scale(self.dataset, 0.05, self.cfg)
        self.assertGreater(scale, 0)

    @pytest.mark.medium
    def test_soundness_and_coverage(self):
        """Test that survivors are members and reach the boundary."""
        cloud, report = sample_rashomon_logistic(self.dataset, 0.05,
                                                 self.cfg, with_reliance=False)
        ratio = cloud.losses / report.loss_star
        self.assertLessEqual(ratio.max(), 1.05)
        self.assertGreaterEqual(np.mean(ratio >= 1.04), 0.10)
        self.assertEqual(len(report.rounds), self.cfg.m_rounds + 1)
        self.assertEqual(report.rounds[-1]['retained_count'], len(cloud))
        self.assertIsNotNone(report.survival_rate)
        self.assertEqual(cloud.beta_names, ('intercept', 'beta_x1',
                                            'beta_x2'))

    @pytest.mark.medium
    def test_midpoint_convexity(self):
        """Test that midpoints of 1000 survivor pairs survive."""
        cloud, report = sample_rashomon_logistic(self.dataset, 0.05,
                                                 self.cfg, with_reliance=False)
        betas = cloud.beta_matrix
        rng = np.random.default_rng(5)
        first = rng.integers(len(betas), size=1000)
        second = rng.integers(len(betas), size=1000)
        midpoints = (betas[first] + betas[second]) / 2
        self.assertTrue(np.all(logistic_losses(midpoints, self.dataset) <=
                               report.threshold))

    @pytest.mark.medium
    def test_deterministic(self):
        """Test that identical inputs give identical clouds."""
        first, _ = sample_rashomon_logistic(self.dataset, 0.05, self.cfg)
        second, _ = sample_rashomon_logistic(self.dataset, 0.05, self.cfg)
        np.testing.assert_array_equal(first.beta_matrix, second.beta_matrix)
        np.testing.assert_array_equal(first.mr_matrix, second.mr_matrix)
        self.assertEqual(first.variant, Variant.RATIO)

    def test_report_json(self):
        """Test that a report serializes to JSON."""
        report = SamplerReport([0.0, 1.0], 10.0, 10.5, 2.0)
        report.add_round(400)
        report.add_round(380, Ellipsoid([0.0, 1.0], [1.0, 1.0], np.eye(2)))
        payload = json.loads(json.dumps(report.as_dict()))
        self.assertIsNone(payload['rounds'][0]['ellipsoid'])
        self.assertEqual(payload['rounds'][1]['retained_count'], 380)


class TestReliance(TestCase):
    """Test cloud_reliance."""

    def test_matches_permutation_estimator(self):
        """Test agreement with mr_empirical_permute at the same seed."""
        dataset = surrogate(300)
        betas = np.array([[0.1, 0.5, 0.6], [0.0, 0.3, 0.9]])
        values = cloud_reliance(betas, dataset, 3, 11)
        for row, beta in enumerate(betas):
            for j in range(2):
                self.assertAlmostEqual(
                    values[row, j],
                    mr_empirical_permute(LogisticPredictor(beta), dataset, j,
                                         3, 11, Variant.RATIO))


class TestTuning(TestCase):
    """Test tune_sampler and plateau_start."""

    def test_plateau_start(self):
        """Test the first stable index."""
        self.assertEqual(plateau_start([0.9, 0.7, 0.6, 0.59, 0.595], 0.02), 2)
        self.assertEqual(plateau_start([0.5, 0.5], 0.02), 0)
        self.assertIsNone(plateau_start([0.9, 0.5, 0.1], 0.02))
        self.assertIsNone(plateau_start([0.5], 0.02))

    def test_unsorted_candidates(self):
        """Test that candidates must ascend."""
        with self.assertRaises(ConfigError):
            tune_sampler(surrogate(100), 0.05, [1.3, 1.2], [1], 1.5,
                         SamplerConfig())

    def test_r_bar_below_candidates(self):
        """Test that r_bar must cover every r."""
        with self.assertRaises(ConfigError):
            tune_sampler(surrogate(100), 0.05, [1.2, 1.6], [1], 1.5,
                         SamplerConfig())

    @pytest.mark.medium
    def test_table(self):
        """Test the survival table layout and the chosen pair."""
        cfg = SamplerConfig(n_per_round=2000, seed=0)
        try:
            r, m_rounds, table = tune_sampler(surrogate(500), 0.05,
                                              [1.1, 1.2, 1.3], [1, 2], 1.5,
                                              cfg, threshold=0.5)
        except NoPlateauError:
            self.fail('a threshold of 0.5 always finds a plateau')
        self.assertEqual(list(table.columns), ['r', 'M', 'survival_rate'])
        self.assertEqual(len(table), 6)
        self.assertIn(r, [1.1, 1.2, 1.3])
        self.assertIn(m_rounds, [1, 2])
        self.assertTrue(table['survival_rate'].between(0, 1).all())
        for m_rounds in (1, 2):
            rates = table[table['M'] == m_rounds]['survival_rate']
            self.assertTrue(np.all(np.diff(rates.to_numpy()) <= 0.02),
                            f'M={m_rounds}: {rates.tolist()}')

    @pytest.mark.medium
    def test_single_candidate(self):
        """Test that one r candidate cannot show a plateau."""
        with self.assertRaises(NoPlateauError):
            tune_sampler(surrogate(500), 0.05, [1.2], [1], 1.5,
                         SamplerConfig(n_per_round=200))

"""Model reliance: analytic linear formulas, permutation and exact shortcut.

A model's reliance on feature j compares its loss after column j has been
replaced by an independent copy (the shuffled loss) with its original loss,
either as a ratio or as a difference.
"""
import logging

import numpy as np

from vicloud.exceptions import DataError, ZeroLossError
from vicloud.models import (CovarianceStructure, Dataset, DatasetKind,
                            MRVector, Variant)
from vicloud.settings import N_SHUFFLES

log = logging.getLogger(__name__)


class Predictor:
    """Evaluates a fitted model's per-row loss contributions."""

    model_class = None
    default_variant = Variant.RATIO

    def __init__(self, params=None):
        """Create an instance of Predictor."""
        self.params = None if params is None else \
            np.asarray(params, dtype=float).ravel()

    def row_losses(self, features, outcome):
        """Return the loss contribution of every row."""
        raise NotImplementedError

    def loss(self, features, outcome):
        """Return the mean loss over the rows."""
        return float(np.mean(self.row_losses(features, outcome)))

    def as_dict(self):
        """Return the handle metadata."""
        return {'model_class': self.model_class,
                'params': None if self.params is None else
                self.params.tolist()}


class LinearPredictor(Predictor):
    """Linear model without intercept under squared loss."""

    model_class = 'linear'
    default_variant = Variant.DIFF

    def row_losses(self, features, outcome):
        return (outcome - features @ self.params) ** 2


class LogisticPredictor(Predictor):
    """Logistic model, intercept first, under logistic loss."""

    model_class = 'logistic'

    def row_losses(self, features, outcome):
        margin = outcome * (self.params[0] + features @ self.params[1:])
        return np.logaddexp(0.0, -margin)


class TablePredictor(Predictor):
    """Decision table over a feature subset under 0-1 loss.

    Args:
        feature_subset: dataset column indices the table splits on
        labels: array of +1/-1 indexed by pattern code, the first subset
            feature being the most significant bit
    """

    model_class = 'tree'

    def __init__(self, feature_subset, labels):
        """Create an instance of TablePredictor."""
        super().__init__()
        self.feature_subset = tuple(int(j) for j in feature_subset)
        self.labels = np.asarray(labels, dtype=float)
        if self.labels.shape != (2 ** len(self.feature_subset),):
            raise DataError('A decision table needs one label per pattern')

    def predict(self, features):
        """Return the +1/-1 predictions."""
        return self.labels[pattern_codes(features, self.feature_subset)]

    def row_losses(self, features, outcome):
        return (self.predict(features) != outcome).astype(float)

    def as_dict(self):
        return {'model_class': self.model_class,
                'feature_subset': list(self.feature_subset),
                'labels': self.labels.tolist()}


def pattern_codes(features, feature_subset):
    """Encode the 0/1 sub-rows of features as integers."""
    m = len(feature_subset)
    if m == 0:
        return np.zeros(features.shape[0], dtype=int)
    weights = 2 ** np.arange(m - 1, -1, -1)
    bits = np.asarray(features)[:, list(feature_subset)].astype(int)
    return bits @ weights


def _check_index(j, p):
    if not 0 <= j < p:
        raise DataError(f'Feature index {j} out of range for {p} features')


def mr_linear(beta, cov, j):
    """Return the population difference reliance of a linear model.

    mr_j = 2 sigma_jY beta_j - 2 beta_j sum_{i != j} sigma_ij beta_i
    """
    _check_index(j, cov.p)
    beta = np.asarray(beta, dtype=float).ravel()
    cross = cov.sigma_xx[j] @ beta - cov.sigma_xx[j, j] * beta[j]
    return float(2 * cov.sigma_xy[j] * beta[j] - 2 * beta[j] * cross)


def mr_linear_full(beta, cov, j):
    """Return the same reliance in its expanded form.

    2 sigma_jY beta_j - 2 beta^T Cov(X, X_j) beta_j + 2 Var(X_j) beta_j^2
    """
    _check_index(j, cov.p)
    beta = np.asarray(beta, dtype=float).ravel()
    return float(2 * cov.sigma_xy[j] * beta[j] -
                 2 * (beta @ cov.sigma_xx[:, j]) * beta[j] +
                 2 * cov.sigma_xx[j, j] * beta[j] ** 2)


def mr_linear_all(betas, cov):
    """Vectorised mr_linear over rows of betas and all features."""
    betas = np.atleast_2d(betas)
    off = cov.sigma_xx - np.diag(np.diag(cov.sigma_xx))
    return 2 * betas * (cov.sigma_xy - betas @ off)


def combine(shuffled_loss, original_loss, variant):
    """Compare a shuffled loss with the original loss."""
    if Variant(variant) == Variant.DIFF:
        return shuffled_loss - original_loss
    if original_loss == 0:
        raise ZeroLossError('Ratio reliance is undefined for a model with '
                            'zero loss')
    return shuffled_loss / original_loss


def _variant_for(model, variant):
    if variant is None:
        variant = model.default_variant
        log.debug(f'Using the {variant.name.lower()} variant for '
                  f'{model.model_class} models')
    return Variant(variant)


def permutation(n, seed):
    """Return the permutation used for a given derived seed."""
    return np.random.default_rng(seed).permutation(n)


def mr_empirical_permute(model, dataset, j, n_shuffles=N_SHUFFLES, seed=0,
                         variant=None):
    """Estimate reliance by averaging losses over shuffled copies of column j.

    The k-th shuffle uses seed + k, so the result does not depend on the
    order in which shuffles are evaluated.
    """
    if n_shuffles < 1:
        raise DataError('At least one shuffle is required')
    dataset.check_feature(j)
    variant = _variant_for(model, variant)
    features = np.array(dataset.features)
    outcome = np.asarray(dataset.outcome)
    column = features[:, j].copy()
    original = model.loss(features, outcome)
    shuffled = 0.0
    for k in range(n_shuffles):
        features[:, j] = column[permutation(dataset.n, seed + k)]
        shuffled += model.loss(features, outcome)
    return combine(shuffled / n_shuffles, original, variant)


def shuffled_loss_binary(p_j, loss_zero, loss_one):
    """Return the expected shuffled loss p_j L1 + (1 - p_j) L0."""
    return p_j * loss_one + (1 - p_j) * loss_zero


def mr_binary_exact(model, dataset, j, variant=Variant.RATIO):
    """Return the exact expected reliance over all shuffles of a 0/1 column.

    Column j is forced to 0 and to 1 on every row; the shuffled loss is the
    mixture of the two by the frequency of ones.
    """
    if dataset.kind != DatasetKind.BINARY_PM1:
        raise DataError('The exact shortcut needs a binary dataset')
    dataset.check_feature(j)
    features = np.array(dataset.features)
    outcome = np.asarray(dataset.outcome)
    original = model.loss(features, outcome)
    p_j = float(features[:, j].mean())
    features[:, j] = 0.0
    loss_zero = model.loss(features, outcome)
    features[:, j] = 1.0
    loss_one = model.loss(features, outcome)
    return combine(shuffled_loss_binary(p_j, loss_zero, loss_one), original,
                   variant)


def _population_loss(beta, cov):
    return float(beta @ cov.sigma_xx @ beta - 2 * cov.sigma_xy @ beta +
                 cov.sigma_yy)


def mr_vector(model, source, variant=None, n_shuffles=N_SHUFFLES, seed=0,
              exact_binary=True):
    """Return the reliance vector of a model.

    Args:
        model(Predictor): the model
        source: a CovarianceStructure (analytic path, linear models only) or
            a Dataset (empirical path)
        variant(Variant): defaults to the model class's convention
        n_shuffles: shuffles per feature on the permutation path
        seed: base seed on the permutation path
        exact_binary: use the exact shortcut on binary datasets
    """
    variant = _variant_for(model, variant)
    if isinstance(source, CovarianceStructure):
        if not isinstance(model, LinearPredictor):
            raise DataError('The analytic path needs a linear model')
        loss = _population_loss(model.params, source)
        diffs = [mr_linear(model.params, source, j) for j in range(source.p)]
        values = [combine(loss + diff, loss, variant) for diff in diffs]
        return MRVector(values, variant, loss)
    if not isinstance(source, Dataset):
        raise DataError('Reliance needs a covariance structure or a dataset')
    loss = model.loss(source.features, source.outcome)
    if exact_binary and source.kind == DatasetKind.BINARY_PM1:
        values = [mr_binary_exact(model, source, j, variant)
                  for j in range(source.p)]
    else:
        values = [mr_empirical_permute(model, source, j, n_shuffles,
                                       seed, variant)
                  for j in range(source.p)]
    return MRVector(values, variant, loss)

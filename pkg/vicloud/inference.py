"""Wald-type chi-square test of a linear model's reliance on one feature.

Data are centered internally, so the empirical second moments are sample
covariances and the least-squares fit needs no intercept.
"""
import logging

import numpy as np
import statsmodels.api as sm
from scipy.stats import chi2

from vicloud.data import center, covariance_of
from vicloud.exceptions import DegenerateStatisticError, SingularMatrixError
from vicloud.reliance import mr_linear_full
from vicloud.settings import SIGMA_HAT_MIN
from vicloud.vic_linear import jacobian_mr

log = logging.getLogger(__name__)


class RelianceTest:
    """Outcome of a test of H0: mr_j = null_value."""

    def __init__(self, j, mr_hat, sigma_hat, z_stat, p_value, n,
                 feature=None, null_value=0.0):
        """Create an instance of RelianceTest."""
        self.j = int(j)
        self.mr_hat = float(mr_hat)
        self.sigma_hat = float(sigma_hat)
        self.z_stat = float(z_stat)
        self.p_value = float(p_value)
        self.n = int(n)
        self.feature = feature if feature is not None else f'x{j + 1}'
        self.null_value = float(null_value)

    def as_dict(self):
        """Return the JSON record of this test."""
        return {'feature': self.feature, 'mr_hat': self.mr_hat,
                'sigma_hat': self.sigma_hat, 'z_stat': self.z_stat,
                'p_value': self.p_value, 'n': self.n,
                'null_value': self.null_value}


def empirical_mr_quadratic(beta, dataset, j):
    """Return the empirical difference reliance of beta on feature j."""
    dataset.check_feature(j)
    return mr_linear_full(beta, covariance_of(center(dataset)), j)


def mr_gradient_empirical(beta, dataset, j):
    """Return the gradient of empirical_mr_quadratic with respect to beta."""
    dataset.check_feature(j)
    cov = covariance_of(center(dataset))
    return jacobian_mr(beta, cov).matrix[j]


def _ols(dataset):
    centered = center(dataset)
    design = np.asarray(centered.features)
    if np.linalg.matrix_rank(design) < centered.p:
        raise SingularMatrixError('Feature covariance is singular: the rank '
                                  'condition fails')
    results = sm.OLS(np.asarray(centered.outcome), design).fit(
        cov_type='HC0')
    return centered, results


def sandwich_variance(dataset):
    """Return the robust asymptotic variance of the least-squares fit.

    Sigma_xx^{-1} S Sigma_xx^{-1} with S = mean of x_i x_i^T e_i^2. The HC0
    covariance of statsmodels is this matrix divided by n.
    """
    centered, results = _ols(dataset)
    return centered.n * np.asarray(results.cov_params())


def mr_wald_statistic(dataset, j, null_value=0.0):
    """Test H0: mr_j = null_value for the least-squares fit.

    Z = n (mr_hat - null_value)^2 / (g^T V g), where g is the gradient of the
    empirical reliance at the fit and V the sandwich variance; Z is
    asymptotically chi-square with one degree of freedom.
    """
    dataset.check_feature(j)
    centered, results = _ols(dataset)
    beta_hat = np.asarray(results.params)
    variance = centered.n * np.asarray(results.cov_params())
    cov = covariance_of(centered)
    mr_hat = mr_linear_full(beta_hat, cov, j)
    gradient = jacobian_mr(beta_hat, cov).matrix[j]
    sigma_hat = float(gradient @ variance @ gradient)
    if sigma_hat <= SIGMA_HAT_MIN:
        raise DegenerateStatisticError(f'Variance of the reliance estimate '
                                       f'vanished (sigma_hat={sigma_hat:.3g})')
    z_stat = centered.n * (mr_hat - null_value) ** 2 / sigma_hat
    p_value = float(chi2.sf(z_stat, df=1))
    log.info(f'Reliance test on {dataset.names[j]}: mr_hat={mr_hat:.6g}, '
             f'Z={z_stat:.4g}, p={p_value:.4g}')
    return RelianceTest(j, mr_hat, sigma_hat, z_stat, p_value, centered.n,
                        dataset.names[j], null_value)

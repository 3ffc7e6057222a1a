"""Exact geometry of the ridge-regression Rashomon set.

Losses are population losses computed from a CovarianceStructure, so the
empirical scale of a dataset only enters through its second moments. The
Rashomon threshold is multiplicative, which makes membership independent of
whether losses are summed or averaged.
"""
import logging

import numpy as np
from scipy import linalg

from vicloud.exceptions import (DataError, DegenerateEllipsoidError,
                                SingularMatrixError)
from vicloud.models import Ellipsoid
from vicloud.settings import BOUNDARY_TOL, PD_EIGEN_TOL

log = logging.getLogger(__name__)


def eigh_sorted(matrix):
    """Eigendecompose a symmetric matrix with a deterministic basis.

    Eigenvalues ascend; each eigenvector has its first nonzero component
    positive.
    """
    matrix = np.asarray(matrix, dtype=float)
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2)
    order = np.argsort(values, kind='stable')
    values, vectors = values[order], vectors[:, order]
    for k in range(vectors.shape[1]):
        nonzero = np.flatnonzero(np.abs(vectors[:, k]) > 1e-12)
        if nonzero.size and vectors[nonzero[0], k] < 0:
            vectors[:, k] = -vectors[:, k]
    return values, vectors


def _check_beta(beta, p):
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape != (p,):
        raise DataError(f'Coefficient vector has length {beta.shape[0]}, '
                        f'expected {p}')
    return beta


def ridge_loss(beta, spec):
    """Return E[(Y - X^T beta)^2] + c |beta|^2."""
    beta = _check_beta(beta, spec.cov.p)
    return float(beta @ spec.penalized_xx @ beta -
                 2 * spec.cov.sigma_xy @ beta + spec.cov.sigma_yy)


def ridge_losses(betas, spec):
    """Vectorised ridge_loss over the rows of betas."""
    betas = np.atleast_2d(betas)
    quadratic = np.einsum('ki,ij,kj->k', betas, spec.penalized_xx, betas)
    return quadratic - 2 * betas @ spec.cov.sigma_xy + spec.cov.sigma_yy


def _check_invertible(matrix, what):
    values = np.linalg.eigvalsh(matrix)
    if values[0] <= PD_EIGEN_TOL * max(1.0, abs(values[-1])):
        raise SingularMatrixError(f'{what} is singular (smallest eigenvalue '
                                  f'{values[0]:.3g})')


def best_ridge(cov, c=0.0):
    """Return the minimizer (sigma_xx + cI)^{-1} sigma_xy."""
    penalized = cov.sigma_xx + c * np.eye(cov.p)
    _check_invertible(penalized, 'sigma_xx + cI')
    return linalg.solve(penalized, cov.sigma_xy, assume_a='pos')


def benchmark_loss(spec):
    """Return the benchmark loss: the override if set, else the minimum."""
    if spec.benchmark_loss is not None:
        return float(spec.benchmark_loss)
    return ridge_loss(best_ridge(spec.cov, spec.c), spec)


def rashomon_threshold(spec):
    """Return (1 + epsilon) times the benchmark loss."""
    return (1 + spec.epsilon) * benchmark_loss(spec)


def _level(spec):
    """Return (beta*, L(beta*), allowed excess over L(beta*))."""
    beta_star = best_ridge(spec.cov, spec.c)
    loss_star = ridge_loss(beta_star, spec)
    level = rashomon_threshold(spec) - loss_star
    if level <= 0:
        raise DegenerateEllipsoidError(
            f'Rashomon set is degenerate: epsilon * L* = {level:.3g}')
    return beta_star, loss_star, level


def rashomon_ellipsoid_linear(spec):
    """Return the Rashomon set {beta : ridge_loss(beta) <= (1+eps) L*}.

    The set is (beta - beta*)^T (sigma_xx + cI)(beta - beta*) <= eps L*; its
    axes are the eigenvectors of sigma_xx + cI.
    """
    beta_star, loss_star, level = _level(spec)
    values, vectors = eigh_sorted(spec.penalized_xx)
    log.debug(f'Ridge Rashomon set: L*={loss_star:.6g}, level={level:.6g}')
    return Ellipsoid(beta_star, np.sqrt(level / values), vectors)


def contains_linear(beta, spec, tol=BOUNDARY_TOL):
    """Whether ridge_loss(beta) <= (1 + eps) L*, up to a relative tol."""
    threshold = rashomon_threshold(spec)
    return ridge_loss(beta, spec) <= threshold + tol * max(1.0, threshold)


def _unit_directions(rng, n, p):
    directions = rng.standard_normal((int(n), p))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def map_directions(spec, directions):
    """Map unit vectors u to beta* + sqrt(level) L^{-T} u.

    L is the Cholesky factor of sigma_xx + cI, so |u| = 1 lands on the
    boundary and |u| < 1 inside. The map commutes with feature rescaling.
    """
    beta_star, _, level = _level(spec)
    factor = np.linalg.cholesky(spec.penalized_xx)
    offsets = linalg.solve_triangular(factor, np.atleast_2d(directions).T,
                                      lower=True, trans='T').T
    return beta_star + np.sqrt(level) * offsets


def sample_ellipsoid_surface(spec, n, seed):
    """Draw n Rashomon boundary models, deterministic per seed."""
    rng = np.random.default_rng(seed)
    return map_directions(spec, _unit_directions(rng, n, spec.cov.p))


def sample_ellipsoid_interior(spec, n, seed):
    """Draw n models uniformly inside the Rashomon set."""
    rng = np.random.default_rng(seed)
    directions = _unit_directions(rng, n, spec.cov.p)
    radius = rng.uniform(size=int(n)) ** (1.0 / spec.cov.p)
    return map_directions(spec, directions * radius[:, None])

"""Variable Importance Clouds of ridge models.

The reliance map of a linear model is quadratic in its coefficients, so its
first-order expansion around any beta_bar is exact up to an explicit
second-order remainder. Linearising it turns the Rashomon ellipsoid into an
ellipsoid in reliance space.
"""
import logging

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from vicloud.exceptions import (DataError, DegenerateEllipsoidError,
                                NotPositiveDefiniteError, NumericError,
                                SingularMatrixError)
from vicloud.linear_rashomon import (benchmark_loss, best_ridge,
                                     contains_linear, eigh_sorted,
                                     map_directions, rashomon_ellipsoid_linear,
                                     rashomon_threshold, ridge_loss,
                                     ridge_losses, sample_ellipsoid_interior,
                                     sample_ellipsoid_surface)
from vicloud.models import (Ellipsoid, MRVector, ReliancePoint, RidgeSpec,
                            Variant, VICCloud)
from vicloud.reliance import mr_linear_all
from vicloud.settings import JACOBIAN_COND_MAX

log = logging.getLogger(__name__)


class JacobianMR:
    """Jacobian of the reliance map at an expansion point."""

    def __init__(self, matrix, expansion_point, base_mr):
        """Create an instance of JacobianMR.

        Args:
            matrix: p x p, row j is the gradient of mr_j
            expansion_point: beta_bar
            base_mr: MR(beta_bar)
        """
        self.matrix = np.asarray(matrix, dtype=float)
        self.expansion_point = np.asarray(expansion_point, dtype=float)
        self.base_mr = np.asarray(base_mr, dtype=float)
        if not np.all(np.isfinite(self.matrix)):
            raise NumericError('Jacobian has non-finite entries')

    def inverse(self):
        """Return J^{-1}, refusing singular or ill-conditioned matrices."""
        condition = np.linalg.cond(self.matrix)
        if not np.isfinite(condition) or condition >= JACOBIAN_COND_MAX:
            raise SingularMatrixError(f'Jacobian is singular or '
                                      f'ill-conditioned '
                                      f'(cond={condition:.3g})')
        if condition >= JACOBIAN_COND_MAX * 1e-4:
            log.warning(f'Jacobian condition number {condition:.3g}')
        return np.linalg.inv(self.matrix)


def vic_center_radii_uncorrelated(cov, c=0.0, epsilon=0.05):
    """Return the exact VIC of uncorrelated features (axis-aligned).

    center_j = 2 sigma_jY^2 / (Var(X_j) + c)
    radius_j = 2 |sigma_jY| sqrt(eps L* / (Var(X_j) + c))
    """
    offender, i, j = cov.max_off_diagonal()
    if offender > 1e-10:
        raise DataError(f'Features are correlated: |sigma_{i + 1}{j + 1}| = '
                        f'{offender:.3g}')
    zero = np.flatnonzero(cov.sigma_xy == 0)
    if zero.size:
        raise DegenerateEllipsoidError(
            f'sigma_jY = 0 for feature {zero[0] + 1}: zero VIC radius')
    spec = RidgeSpec(cov, c, epsilon)
    excess = epsilon * benchmark_loss(spec)
    variance = np.diag(cov.sigma_xx) + c
    center = 2 * cov.sigma_xy ** 2 / variance
    radii = 2 * np.abs(cov.sigma_xy) * np.sqrt(excess / variance)
    return Ellipsoid(center, radii, np.eye(cov.p))


def jacobian_mr(beta_bar, cov):
    """Return the Jacobian of the difference reliance map at beta_bar.

    J[j, j] = 2 (sigma_jY - sum_{i != j} sigma_ij beta_bar_i)
    J[j, i] = -2 sigma_ij beta_bar_j
    """
    beta_bar = np.asarray(beta_bar, dtype=float).ravel()
    if beta_bar.shape != (cov.p,):
        raise DataError(f'Expansion point has length {beta_bar.shape[0]}, '
                        f'expected {cov.p}')
    off = cov.sigma_xx - np.diag(np.diag(cov.sigma_xx))
    matrix = -2 * beta_bar[:, None] * off + \
        2 * np.diag(cov.sigma_xy - off @ beta_bar)
    base = mr_linear_all(beta_bar, cov)[0]
    return JacobianMR(matrix, beta_bar, base)


def second_order_term(beta_bar, beta, cov, j):
    """Return the exact remainder of the first-order expansion of mr_j.

    With b = beta - beta_bar the remainder is -2 b_j sum_{i != j} sigma_ij b_i.
    """
    delta = np.asarray(beta, dtype=float) - np.asarray(beta_bar, dtype=float)
    cross = cov.sigma_xx[j] @ delta - cov.sigma_xx[j, j] * delta[j]
    return float(-2 * delta[j] * cross)


def approx_error_bound(j, jac_radii, cov):
    """Bound the remainder over the box |b_k| <= l_k.

    Returns 2 l_j sum_{i != j} |sigma_ij| l_i.
    """
    radii = np.asarray(jac_radii, dtype=float)
    if np.any(radii < 0):
        raise DataError('Radii must be non-negative')
    weights = np.abs(cov.sigma_xx[j]) * radii
    return float(2 * radii[j] * (weights.sum() - weights[j]))


def rashomon_half_widths(spec):
    """Return the half-widths l of the Rashomon ellipsoid's bounding box."""
    return rashomon_ellipsoid_linear(spec).half_widths()


def mr_inverse_approx(mr, jac):
    """Return beta_bar + J^{-1} (mr - MR(beta_bar))."""
    mr = np.asarray(mr, dtype=float).ravel()
    return jac.expansion_point + jac.inverse() @ (mr - jac.base_mr)


def mr_inverse_newton(mr, spec, start=None, tol=1e-12, max_iter=50):
    """Solve MR(beta) = mr by Newton's method.

    Starts from the linearised inverse at beta* unless a start is given.
    Returns (beta, converged, in_rashomon); a solution need not exist.
    """
    mr = np.asarray(mr, dtype=float).ravel()
    cov = spec.cov
    if start is None:
        start = mr_inverse_approx(mr, jacobian_mr(best_ridge(cov, spec.c),
                                                  cov))
    beta = np.asarray(start, dtype=float).copy()
    converged = False
    for _ in range(max_iter):
        residual = mr_linear_all(beta, cov)[0] - mr
        if np.max(np.abs(residual)) <= tol * max(1.0, np.max(np.abs(mr))):
            converged = True
            break
        try:
            beta = beta - np.linalg.solve(jacobian_mr(beta, cov).matrix,
                                          residual)
        except np.linalg.LinAlgError:
            break
    return beta, converged, bool(converged and contains_linear(beta, spec))


def vic_ellipsoid_approx(beta_bar, spec):
    """Return the linearised VIC around beta_bar as an ellipsoid.

    With A = J^{-T}(sigma_xx + cI)J^{-1} = Q diag(lambda) Q^T and
    b = Q^T J^{-T}(sigma_xy - (sigma_xx + cI) beta_bar), the approximated VIC
    is sum_k lambda_k (m_k - b_k/lambda_k)^2 <= s + sum_k b_k^2/lambda_k in
    the rotated coordinates m = Q^T (mr - MR(beta_bar)), where the slack s is
    (1 + eps) L* - L(beta_bar). At beta_bar = beta* this is eps L* and b = 0.
    """
    if beta_bar is None:
        beta_bar = best_ridge(spec.cov, spec.c)
    jac = jacobian_mr(beta_bar, spec.cov)
    inverse = jac.inverse()
    penalized = spec.penalized_xx
    values, rotation = eigh_sorted(inverse.T @ penalized @ inverse)
    if values[0] <= 0:
        raise NotPositiveDefiniteError('J^-T (sigma_xx + cI) J^-1 is not '
                                       'positive definite')
    linear = rotation.T @ inverse.T @ (spec.cov.sigma_xy -
                                       penalized @ jac.expansion_point)
    slack = rashomon_threshold(spec) - ridge_loss(jac.expansion_point, spec)
    total = slack + np.sum(linear ** 2 / values)
    if total <= 0:
        raise DegenerateEllipsoidError('Approximated VIC is empty')
    center = jac.base_mr + rotation @ (linear / values)
    return Ellipsoid(center, np.sqrt(total / values), rotation)


def boundary_expansion_points(spec, k=4):
    """Return k Rashomon boundary points at the ends of the principal axes."""
    ellipsoid = rashomon_ellipsoid_linear(spec)
    points = []
    for axis in range(ellipsoid.dim):
        offset = ellipsoid.radii[axis] * ellipsoid.rotation[:, axis]
        points.extend([ellipsoid.center + offset, ellipsoid.center - offset])
    return np.array(points[:k])


def _circle(n):
    angles = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(angles), np.sin(angles)])


def approx_vic_boundary(ellipsoid, n, seed=0):
    """Return n points on an ellipsoid's surface, evenly spaced in 2-D."""
    if ellipsoid.dim == 2:
        directions = _circle(n)
    else:
        directions = np.random.default_rng(seed).standard_normal(
            (n, ellipsoid.dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return ellipsoid.boundary_points(directions)


def _cloud(spec, betas, kinds, names, provenance):
    losses = ridge_losses(betas, spec)
    threshold = rashomon_threshold(spec)
    worst = np.max(losses) if losses.size else 0.0
    if worst > threshold * (1 + 1e-9):
        raise NumericError(f'Sampled model outside the Rashomon set: loss '
                           f'{worst:.12g} > {threshold:.12g}')
    mr = mr_linear_all(betas, spec.cov)
    points = [ReliancePoint(beta, MRVector(values, Variant.DIFF, loss), loss,
                            {'kind': kind})
              for beta, values, loss, kind in zip(betas, mr, losses, kinds)]
    return VICCloud(points, names, provenance,
                    [f'beta_{name}' for name in names])


def vic_forward_map(spec, n_boundary, n_interior=0, seed=0, names=None):
    """Map Rashomon members through the reliance map.

    Boundary models are drawn with seed, interior models with seed + 1, so a
    rescaled problem with the same seed yields paired samples.
    """
    betas = [sample_ellipsoid_surface(spec, n_boundary, seed)]
    if n_interior:
        betas.append(sample_ellipsoid_interior(spec, n_interior, seed + 1))
    betas = np.vstack(betas)
    kinds = ['boundary'] * int(n_boundary) + ['interior'] * int(n_interior)
    names = list(names) if names else [f'x{j + 1}'
                                       for j in range(spec.cov.p)]
    provenance = {'model_class': 'linear', 'seed': int(seed),
                  'n_boundary': int(n_boundary),
                  'n_interior': int(n_interior),
                  'variant': int(Variant.DIFF), **spec.as_dict()}
    log.info(f'Forward-mapped {len(betas)} ridge models (eps={spec.epsilon},'
             f' c={spec.c})')
    return _cloud(spec, betas, kinds, names, provenance)


def approximation_gap(spec, beta_bar=None, n=2000, seed=0):
    """Symmetric Hausdorff distance between true and approximated VICs.

    Only the surfaces are compared: the true one by forward-mapping the
    Rashomon boundary, the approximated one by sampling its ellipsoid.
    """
    if spec.cov.p == 2:
        directions = _circle(n)
    else:
        directions = np.random.default_rng(seed).standard_normal(
            (n, spec.cov.p))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    true = mr_linear_all(map_directions(spec, directions), spec.cov)
    approx = approx_vic_boundary(vic_ellipsoid_approx(beta_bar, spec), n,
                                 seed)
    return max(directed_hausdorff(true, approx)[0],
               directed_hausdorff(approx, true)[0])

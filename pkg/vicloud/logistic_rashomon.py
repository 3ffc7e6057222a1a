"""Logistic loss, Newton fitting and the sample-eliminate-PCA sampler.

The logistic Rashomon set has no closed form but it is convex. The sampler
starts from a box around the maximum likelihood fit, keeps the draws whose
loss stays within the threshold, and then repeatedly fits an ellipsoid to the
survivors, inflates it and redraws.
"""
import json
import logging

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import expit

from vicloud.exceptions import (ConfigError, ConvergenceError, DataError,
                                DegenerateEllipsoidError, NoPlateauError,
                                NumericError, RashomonEmptyError,
                                SeparationError, SingularMatrixError)
from vicloud.linear_rashomon import eigh_sorted
from vicloud.models import (Ellipsoid, MRVector, ReliancePoint, Variant,
                            VICCloud)
from vicloud.reliance import combine, permutation
from vicloud.settings import (BOX_SCALE, LOGISTIC_MAX_ITER, LOGISTIC_TOL,
                              M_ROUNDS, N_PER_ROUND, N_SHUFFLES, PCA_RANK_TOL,
                              R_BAR, RADIAL_EXPONENT, SCALE_FACTOR_R,
                              SEPARATION_NORM, STABILITY_THRESHOLD,
                              SURVIVAL_SLACK, SURVIVAL_TARGET)

log = logging.getLogger(__name__)


def augment(features):
    """Prepend a column of ones for the intercept."""
    features = np.atleast_2d(features)
    return np.column_stack([np.ones(features.shape[0]), features])


def _check_outcome(dataset):
    if not np.all(np.isin(dataset.outcome, (-1.0, 1.0))):
        raise DataError('Logistic outcomes must be -1 or +1')


def _check_beta(beta, dataset):
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape != (dataset.p + 1,):
        raise DataError(f'Coefficient vector has length {beta.shape[0]}, '
                        f'expected {dataset.p + 1} (intercept first)')
    return beta


def logistic_loss(beta, dataset):
    """Return sum_i log(1 + exp(-y_i beta^T x_i)), intercept first."""
    _check_outcome(dataset)
    beta = _check_beta(beta, dataset)
    margins = dataset.outcome * (augment(dataset.features) @ beta)
    return float(np.sum(np.logaddexp(0.0, -margins)))


def logistic_losses(betas, dataset, features=None):
    """Vectorised logistic_loss over the rows of betas.

    Args:
        betas: k x (p+1) coefficients
        dataset(Dataset): outcome source
        features: optional replacement feature matrix (shuffled copies)
    """
    _check_outcome(dataset)
    features = dataset.features if features is None else features
    margins = dataset.outcome[:, None] * (augment(features) @
                                          np.atleast_2d(betas).T)
    return np.sum(np.logaddexp(0.0, -margins), axis=0)


def logistic_gradient(beta, dataset):
    """Return the gradient of logistic_loss."""
    design = augment(dataset.features)
    margins = dataset.outcome * (design @ beta)
    return -design.T @ (dataset.outcome * expit(-margins))


def logistic_hessian(beta, dataset):
    """Return the Hessian of logistic_loss."""
    design = augment(dataset.features)
    margins = dataset.outcome * (design @ beta)
    weights = expit(margins) * expit(-margins)
    return design.T @ (design * weights[:, None])


def fit_logistic(dataset, tol=LOGISTIC_TOL, max_iter=LOGISTIC_MAX_ITER):
    """Minimize the logistic loss by Newton's method with backtracking.

    Separation is detected when every margin is positive, or when the
    coefficient norm runs past SEPARATION_NORM.
    """
    _check_outcome(dataset)
    design = augment(dataset.features)
    beta = np.zeros(design.shape[1])
    loss = logistic_loss(beta, dataset)
    for iteration in range(max_iter):
        gradient = logistic_gradient(beta, dataset)
        if np.linalg.norm(gradient) < tol:
            log.info(f'Logistic fit converged after {iteration} iterations '
                     f'(loss={loss:.6g})')
            return beta
        if np.all(dataset.outcome * (design @ beta) > 0):
            raise SeparationError('Outcome is perfectly separated by the '
                                  'features')
        try:
            step = linalg.solve(logistic_hessian(beta, dataset), gradient,
                                assume_a='pos')
        except linalg.LinAlgError as error:
            raise SingularMatrixError(f'Logistic Hessian is singular: '
                                      f'{error}')
        decrement = float(gradient @ step)
        size = 1.0
        while size > 1e-12:
            candidate = beta - size * step
            candidate_loss = logistic_loss(candidate, dataset)
            if candidate_loss <= loss - 1e-4 * size * decrement:
                break
            size /= 2
        else:
            log.debug('Line search stalled; keeping the current iterate')
            if np.linalg.norm(gradient) < tol * 1e3:
                return beta
            raise ConvergenceError('Logistic line search stalled')
        beta, loss = candidate, candidate_loss
        log.debug(f'Newton iteration {iteration + 1}: loss={loss:.10g}, '
                  f'step={size:g}')
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationError(f'Coefficient norm exceeded '
                                  f'{SEPARATION_NORM:g}: outcome is '
                                  f'separated')
    raise ConvergenceError(f'Logistic fit did not converge in {max_iter} '
                           f'iterations')


def standard_errors(dataset, beta):
    """Return the square roots of the inverse Hessian's diagonal."""
    hessian = logistic_hessian(_check_beta(beta, dataset), dataset)
    try:
        covariance = linalg.inv(hessian)
    except linalg.LinAlgError as error:
        raise SingularMatrixError(f'Logistic Hessian is singular: {error}')
    return np.sqrt(np.diag(covariance))


class SamplerConfig:
    """Parameters of the logistic Rashomon sampler.

    A box_scale of None asks the sampler to calibrate it so that about
    SURVIVAL_TARGET of the initial draws survive.
    """

    def __init__(self, n_per_round=N_PER_ROUND, box_scale=None,
                 r=SCALE_FACTOR_R, m_rounds=M_ROUNDS, r_bar=R_BAR, seed=0,
                 radial_exponent=RADIAL_EXPONENT, n_shuffles=N_SHUFFLES):
        """Create an instance of SamplerConfig."""
        if int(n_per_round) < 10:
            raise ConfigError('sampler.n_per_round', 'must be at least 10')
        if box_scale is not None and box_scale <= 0:
            raise ConfigError('sampler.box_scale', 'must be positive')
        if r <= 1:
            raise ConfigError('sampler.r', 'must be greater than 1')
        if r > r_bar:
            raise ConfigError('sampler.r', f'must not exceed r_bar={r_bar}')
        if int(m_rounds) < 1:
            raise ConfigError('sampler.m_rounds', 'must be at least 1')
        if radial_exponent <= 0:
            raise ConfigError('sampler.radial_exponent', 'must be positive')
        if int(n_shuffles) < 1:
            raise ConfigError('sampler.n_shuffles', 'must be at least 1')
        self.n_per_round = int(n_per_round)
        self.box_scale = None if box_scale is None else float(box_scale)
        self.r = float(r)
        self.m_rounds = int(m_rounds)
        self.r_bar = float(r_bar)
        self.seed = int(seed)
        self.radial_exponent = float(radial_exponent)
        self.n_shuffles = int(n_shuffles)

    def replace(self, **changes):
        """Return a copy with some fields changed."""
        return SamplerConfig(**{**self.as_dict(), **changes})

    def as_dict(self):
        """Return this configuration as a dictionary."""
        return {'n_per_round': self.n_per_round, 'box_scale': self.box_scale,
                'r': self.r, 'm_rounds': self.m_rounds, 'r_bar': self.r_bar,
                'seed': self.seed, 'radial_exponent': self.radial_exponent,
                'n_shuffles': self.n_shuffles}

    @classmethod
    def from_dict(cls, cfg_dict):
        """Create a configuration, rejecting unknown fields."""
        unknown = sorted(set(cfg_dict) - set(cls().as_dict()))
        if unknown:
            raise ConfigError(f'sampler.{unknown[0]}', 'unknown field')
        return cls(**cfg_dict)


class SamplerReport:
    """What happened in each round of a sampler run."""

    def __init__(self, beta_star, loss_star, threshold, box_scale):
        """Create an instance of SamplerReport."""
        self.beta_star = np.asarray(beta_star, dtype=float)
        self.loss_star = float(loss_star)
        self.threshold = float(threshold)
        self.box_scale = float(box_scale)
        self.rounds = []
        self.survival_rate = None
        self.final_ellipsoid = None

    def add_round(self, retained_count, ellipsoid=None):
        """Record a round; the initial box round has no ellipsoid."""
        self.rounds.append({'round': len(self.rounds) + 1,
                            'retained_count': int(retained_count),
                            'ellipsoid': ellipsoid})

    def as_dict(self):
        """Return this report as a dictionary."""
        return {'beta_star': self.beta_star.tolist(),
                'loss_star': self.loss_star,
                'threshold': self.threshold,
                'box_scale': self.box_scale,
                'rounds': [{**entry, 'ellipsoid':
                            entry['ellipsoid'] and
                            entry['ellipsoid'].as_dict()}
                           for entry in self.rounds],
                'survival_rate': self.survival_rate,
                'final_ellipsoid': self.final_ellipsoid and
                self.final_ellipsoid.as_dict()}

    def save(self, path):
        """Write the report as JSON."""
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(self.as_dict(), handle, indent=2, sort_keys=True)
        return str(path)


def fit_pca_ellipsoid(points):
    """Fit an ellipsoid enclosing points along their principal axes.

    The center is the mean, the axes are the eigenvectors of the sample
    covariance and each radius is the largest projection onto its axis.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    count, q = points.shape
    if count < q + 1:
        raise DegenerateEllipsoidError(f'{count} points cannot span {q} '
                                       f'dimensions')
    center = points.mean(axis=0)
    offsets = points - center
    values, rotation = eigh_sorted(offsets.T @ offsets / count)
    if values[0] < PCA_RANK_TOL * max(values[-1], 0.0) or values[-1] <= 0:
        raise DegenerateEllipsoidError(f'Points are rank deficient '
                                       f'(eigenvalues {values.tolist()})')
    radii = np.max(np.abs(offsets @ rotation), axis=0)
    return Ellipsoid(center, radii, rotation)


def sample_in_ellipsoid(ellipsoid, n, rng, radial_exponent=RADIAL_EXPONENT):
    """Draw n points: uniform direction, radius U ** radial_exponent."""
    directions = rng.standard_normal((int(n), ellipsoid.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radial = rng.uniform(size=int(n)) ** radial_exponent
    return ellipsoid.boundary_points(directions * radial[:, None])


def _box_draws(beta_star, se, box_scale, n, rng):
    unit = rng.uniform(-1.0, 1.0, size=(int(n), beta_star.shape[0]))
    return beta_star + box_scale * se * unit


def _round_rng(seed, round_index):
    return np.random.default_rng([int(seed), int(round_index)])


def _fit(dataset, epsilon):
    if epsilon < 0:
        raise DataError('Rashomon factor epsilon must be non-negative')
    beta_star = fit_logistic(dataset)
    loss_star = logistic_loss(beta_star, dataset)
    return beta_star, loss_star, (1 + epsilon) * loss_star


def _initial_survival(dataset, beta_star, se, threshold, box_scale, cfg):
    draws = _box_draws(beta_star, se, box_scale, cfg.n_per_round,
                       _round_rng(cfg.seed, 1))
    return float(np.mean(logistic_losses(draws, dataset) <= threshold))


def calibrate_box_scale(dataset, epsilon, cfg, target=SURVIVAL_TARGET,
                        slack=SURVIVAL_SLACK, max_iter=60):
    """Bisect box_scale until the initial survival rate is target +/- slack.

    The initial round's uniform draws are shared across trial scales and the
    Rashomon set is star-shaped around its minimizer, so the survival rate is
    non-increasing in the scale.
    """
    beta_star, _, threshold = _fit(dataset, epsilon)
    if epsilon == 0:
        raise RashomonEmptyError(1, 'epsilon = 0 leaves no model besides '
                                    'the minimizer')
    se = standard_errors(dataset, beta_star)
    low, high = 0.0, None
    scale = cfg.box_scale or BOX_SCALE
    for _ in range(max_iter):
        rate = _initial_survival(dataset, beta_star, se, threshold, scale,
                                 cfg)
        log.debug(f'box_scale={scale:.6g}: initial survival {rate:.3f}')
        if abs(rate - target) <= slack:
            log.info(f'Calibrated box_scale={scale:.6g} (initial survival '
                     f'{rate:.3f})')
            return scale
        if rate > target:
            low = scale
        else:
            high = scale
        scale = scale * 2 if high is None else (low + high) / 2
    raise ConvergenceError(f'No box_scale reached an initial survival of '
                           f'{target} +/- {slack}')


def _eliminate(candidates, dataset, threshold):
    losses = logistic_losses(candidates, dataset)
    keep = losses <= threshold
    return candidates[keep], losses[keep]


def cloud_reliance(betas, dataset, n_shuffles=N_SHUFFLES, seed=0,
                   variant=Variant.RATIO):
    """Return the k x p reliance matrix of many logistic models at once.

    Shuffle k of every feature uses the same permutation as
    mr_empirical_permute with the same seed.
    """
    betas = np.atleast_2d(betas)
    original = logistic_losses(betas, dataset)
    values = np.empty((betas.shape[0], dataset.p))
    features = np.array(dataset.features)
    for j in range(dataset.p):
        column = features[:, j].copy()
        shuffled = np.zeros(betas.shape[0])
        for k in range(n_shuffles):
            features[:, j] = column[permutation(dataset.n, seed + k)]
            shuffled += logistic_losses(betas, dataset, features)
        features[:, j] = column
        values[:, j] = [combine(s, o, variant) for s, o in
                        zip(shuffled / n_shuffles, original)]
    return values


def sample_rashomon_logistic(dataset, epsilon, cfg, with_reliance=True,
                             names=None):
    """Sample the logistic Rashomon set.

    Round 1 draws uniformly in the box beta* +/- box_scale * se. Each of the
    m_rounds following rounds fits a PCA ellipsoid to the previous survivors,
    inflates it by r and redraws. Round k draws from default_rng([seed, k]).

    Returns:
        (VICCloud, SamplerReport)
    """
    beta_star, loss_star, threshold = _fit(dataset, epsilon)
    se = standard_errors(dataset, beta_star)
    box_scale = cfg.box_scale
    if box_scale is None:
        box_scale = calibrate_box_scale(dataset, epsilon, cfg)
    report = SamplerReport(beta_star, loss_star, threshold, box_scale)

    candidates = _box_draws(beta_star, se, box_scale, cfg.n_per_round,
                            _round_rng(cfg.seed, 1))
    survivors, losses = _eliminate(candidates, dataset, threshold)
    report.add_round(len(survivors))
    log.info(f'Round 1: {len(survivors)}/{cfg.n_per_round} survived the box')
    if not len(survivors):
        raise RashomonEmptyError(1)
    for round_index in range(2, cfg.m_rounds + 2):
        ellipsoid = fit_pca_ellipsoid(survivors).scaled(cfg.r)
        candidates = sample_in_ellipsoid(ellipsoid, cfg.n_per_round,
                                         _round_rng(cfg.seed, round_index),
                                         cfg.radial_exponent)
        survivors, losses = _eliminate(candidates, dataset, threshold)
        report.add_round(len(survivors), ellipsoid)
        log.info(f'Round {round_index}: {len(survivors)}/{cfg.n_per_round} '
                 f'survived')
        if not len(survivors):
            raise RashomonEmptyError(round_index)

    report.final_ellipsoid = fit_pca_ellipsoid(survivors)
    diagnostic = sample_in_ellipsoid(report.final_ellipsoid.scaled(cfg.r_bar),
                                     cfg.n_per_round, _round_rng(cfg.seed, 0),
                                     cfg.radial_exponent)
    report.survival_rate = float(np.mean(
        logistic_losses(diagnostic, dataset) <= threshold))

    if np.any(losses > threshold):
        raise NumericError('A survivor lies outside the Rashomon set')
    names = list(names) if names else list(dataset.names)
    if with_reliance:
        mr = cloud_reliance(survivors, dataset, cfg.n_shuffles, cfg.seed)
    else:
        mr = np.ones((len(survivors), dataset.p))
    points = [ReliancePoint(beta, MRVector(values, Variant.RATIO, loss), loss)
              for beta, values, loss in zip(survivors, mr, losses)]
    provenance = {'model_class': 'logistic', 'epsilon': float(epsilon),
                  'seed': cfg.seed, 'sampler': {**cfg.as_dict(),
                                                'box_scale': box_scale},
                  'variant': int(Variant.RATIO),
                  'with_reliance': bool(with_reliance)}
    cloud = VICCloud(points, names, provenance,
                     ['intercept'] + [f'beta_{name}' for name in names])
    return cloud, report


def tune_sampler(dataset, epsilon, r_candidates, m_candidates, r_bar,
                 base_cfg, threshold=STABILITY_THRESHOLD):
    """Choose (r, M) where the diagnostic survival rate stops changing.

    Every (r, M) pair is sampled with the same seed. The chosen r is the
    first candidate after which consecutive survival rates, at the largest M,
    differ by less than threshold; M is then chosen the same way at that r.

    Returns:
        (r, M, survival table with columns r, M, survival_rate)
    """
    r_candidates = [float(r) for r in r_candidates]
    m_candidates = [int(m) for m in m_candidates]
    if r_candidates != sorted(r_candidates) or \
            m_candidates != sorted(m_candidates):
        raise ConfigError('tune', 'candidates must be sorted ascending')
    if not r_candidates or not m_candidates:
        raise ConfigError('tune', 'candidate lists must not be empty')
    if r_bar < r_candidates[-1]:
        raise ConfigError('tune.r_bar', 'must be at least the largest r')
    cfg = base_cfg.replace(r_bar=r_bar, r=r_candidates[0])
    if cfg.box_scale is None:
        cfg = cfg.replace(box_scale=calibrate_box_scale(dataset, epsilon,
                                                        cfg))
    rows = []
    for m_rounds in m_candidates:
        for r in r_candidates:
            _, report = sample_rashomon_logistic(
                dataset, epsilon, cfg.replace(r=r, m_rounds=m_rounds),
                with_reliance=False)
            rows.append({'r': r, 'M': m_rounds,
                         'survival_rate': report.survival_rate})
            log.debug(f'r={r:g}, M={m_rounds}: survival '
                      f'{report.survival_rate:.3f}')
    table = pd.DataFrame(rows, columns=['r', 'M', 'survival_rate'])

    at_largest_m = table[table['M'] == m_candidates[-1]]
    r_index = plateau_start(at_largest_m['survival_rate'].to_numpy(),
                            threshold)
    if r_index is None:
        raise NoPlateauError('Survival rate never stabilised over r; widen '
                             'the r candidates')
    chosen_r = r_candidates[r_index]
    at_r = table[table['r'] == chosen_r]
    m_index = plateau_start(at_r['survival_rate'].to_numpy(), threshold)
    if m_index is None:
        if len(m_candidates) > 1:
            raise NoPlateauError('Survival rate never stabilised over M; '
                                 'widen the M candidates')
        m_index = 0
    log.info(f'Tuned sampler: r={chosen_r:g}, M={m_candidates[m_index]}')
    return chosen_r, m_candidates[m_index], table


def plateau_start(rates, threshold=STABILITY_THRESHOLD):
    """Return the first index after which consecutive rates stay within
    threshold, or None. At least one confirming difference is required.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.shape[0] < 2:
        return None
    steady = np.abs(np.diff(rates)) < threshold
    for start in range(steady.shape[0]):
        if np.all(steady[start:]):
            return start
    return None


def save_survival_table(table, path):
    """Write the survival table as CSV (r, M, survival_rate)."""
    table.to_csv(path, index=False, float_format='%.17g')
    return str(path)

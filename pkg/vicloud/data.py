"""Dataset ingestion, normalization, covariance extraction and generators."""
import itertools
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from vicloud.exceptions import DataError, NotPositiveDefiniteError
from vicloud.models import CovarianceStructure, Dataset, DatasetKind
from vicloud.settings import CENTERED_TOL, PD_EIGEN_TOL

log = logging.getLogger(__name__)


def detect_kind(features, outcome):
    """Return BINARY_PM1 iff the value sets are exactly {0,1} and {-1,+1}."""
    outcome_values = set(np.unique(outcome).tolist())
    if outcome_values != {-1.0, 1.0}:
        return DatasetKind.CONTINUOUS
    for column in np.asarray(features).T:
        if set(np.unique(column).tolist()) != {0.0, 1.0}:
            return DatasetKind.CONTINUOUS
    return DatasetKind.BINARY_PM1


def load_csv(path, outcome_column, kind=None):
    """Read a dataset from a CSV file with a header row.

    Args:
        path: CSV file, comma separated, UTF-8
        outcome_column: column name, or 0-based column index; a string of
            digits that names no column is taken as an index
        kind(DatasetKind): skip auto-detection when given

    Rows in error messages are file line numbers, the header being line 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f'File {path} not found')
    try:
        raw = pd.read_csv(path, header=None, dtype=str,
                          keep_default_na=False, encoding='utf-8')
    except (pd.errors.EmptyDataError, pd.errors.ParserError,
            UnicodeDecodeError) as error:
        raise DataError(f'Cannot parse {path}: {error}')
    names = [name.strip() for name in raw.iloc[0].tolist()]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise DataError(f'Duplicate column names: {", ".join(duplicates)}')
    body = raw.iloc[1:]
    if len(body) < 2:
        raise DataError(f'{path} has fewer than 2 data rows')
    values = np.empty(body.shape)
    for k, name in enumerate(names):
        column = pd.to_numeric(body.iloc[:, k].str.strip(), errors='coerce')
        bad = ~np.isfinite(column.to_numpy(dtype=float))
        if bad.any():
            row = int(np.argmax(bad)) + 2
            cell = body.iloc[row - 2, k]
            raise DataError(f'Non-numeric cell {cell!r} at row {row}, '
                            f'column {name}')
        values[:, k] = column.to_numpy(dtype=float)

    if isinstance(outcome_column, str) and outcome_column not in names \
            and outcome_column.strip().isdigit():
        outcome_column = int(outcome_column)
    if isinstance(outcome_column, int):
        if not 0 <= outcome_column < len(names):
            raise DataError(f'Column index {outcome_column} not found')
        index = outcome_column
    else:
        try:
            index = names.index(outcome_column)
        except ValueError:
            raise DataError(f'Column {outcome_column} not found')
    outcome = values[:, index]
    features = np.delete(values, index, axis=1)
    feature_names = names[:index] + names[index + 1:]
    if kind is None:
        kind = detect_kind(features, outcome)
    log.info(f'Loaded {path}: n={features.shape[0]}, '
             f'p={features.shape[1]}, kind={DatasetKind(kind).name}')
    return Dataset(features, outcome, feature_names, kind)


def save_csv(dataset, path, outcome_name='y'):
    """Write the dataset to CSV with the outcome as the last column."""
    dataset.to_frame(outcome_name).to_csv(path, index=False,
                                          float_format='%.17g')


def normalize(dataset):
    """Return the dataset with every column at mean 0 and variance 1.

    Variances divide by n, matching the second moments used everywhere else.
    """
    columns = np.column_stack([dataset.features, dataset.outcome])
    std = columns.std(axis=0)
    names = list(dataset.names) + ['outcome']
    for name, value in zip(names, std):
        if value == 0:
            raise DataError(f'Column {name} has zero variance')
    scaled = (columns - columns.mean(axis=0)) / std
    return Dataset(scaled[:, :-1], scaled[:, -1], dataset.names,
                   DatasetKind.CONTINUOUS)


def center(dataset):
    """Return the dataset with column means removed."""
    return Dataset(dataset.features - dataset.features.mean(axis=0),
                   dataset.outcome - dataset.outcome.mean(),
                   dataset.names, DatasetKind.CONTINUOUS)


def scale(dataset, feature_scale=None, outcome_scale=1.0):
    """Return the dataset (XS, tY) for diagonal S = feature_scale."""
    factors = np.ones(dataset.p) if feature_scale is None else \
        np.asarray(feature_scale, dtype=float)
    return Dataset(dataset.features * factors,
                   dataset.outcome * outcome_scale, dataset.names,
                   DatasetKind.CONTINUOUS)


def binarize_outcome(dataset):
    """Return the dataset with the outcome replaced by its sign.

    Zero outcomes become +1. Features are left untouched, so the result is
    only BINARY_PM1 when they already are 0/1.
    """
    outcome = np.where(dataset.outcome >= 0, 1.0, -1.0)
    return Dataset(dataset.features, outcome, dataset.names,
                   detect_kind(dataset.features, outcome))


def covariance_of(dataset):
    """Return the empirical second moments of a dataset, dividing by n."""
    if dataset.n < 2:
        raise DataError('Second moments need at least 2 rows')
    X = np.asarray(dataset.features)
    y = np.asarray(dataset.outcome)
    n = dataset.n
    scale = max(1.0, float(np.max(np.abs(X))), float(np.max(np.abs(y))))
    means_removed = bool(
        np.all(np.abs(X.mean(axis=0)) <= CENTERED_TOL * scale) and
        abs(y.mean()) <= CENTERED_TOL * scale)
    return CovarianceStructure(X.T @ X / n, X.T @ y / n, float(y @ y) / n,
                               means_removed)


def save_covariance(cov, path, names=None):
    """Write a covariance structure to CSV.

    The first line is a comment recording the divide-by-n convention.
    """
    names = list(names) if names else [f'x{j + 1}' for j in range(cov.p)]
    frame = pd.DataFrame(np.asarray(cov.sigma_xx), columns=names,
                         index=names)
    frame['y'] = np.asarray(cov.sigma_xy)
    frame.loc['y'] = list(cov.sigma_xy) + [cov.sigma_yy]
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(f'# second moments E[ZZ^T] divide by n; '
                     f'means_removed={cov.means_removed}\n')
        frame.to_csv(handle, index_label='moment', float_format='%.17g')


def joint_correlation(corr_xx, corr_xy):
    """Return the (p+1) x (p+1) correlation matrix of (X, Y)."""
    corr_xx = np.atleast_2d(np.asarray(corr_xx, dtype=float))
    corr_xy = np.asarray(corr_xy, dtype=float).ravel()
    p = corr_xy.shape[0]
    if corr_xx.shape != (p, p):
        raise DataError(f'corr_xx has shape {corr_xx.shape}, expected '
                        f'{(p, p)}')
    joint = np.eye(p + 1)
    joint[:p, :p] = corr_xx
    joint[:p, p] = corr_xy
    joint[p, :p] = corr_xy
    return joint


def gen_gaussian(corr_xx, corr_xy, n, seed):
    """Draw n zero-mean unit-variance Gaussian rows with given correlations.

    The joint matrix is factorised by Cholesky; it must have smallest
    eigenvalue above 1e-10.
    """
    joint = joint_correlation(corr_xx, corr_xy)
    if not np.allclose(joint, joint.T):
        raise DataError('corr_xx must be symmetric')
    smallest = np.linalg.eigvalsh(joint)[0]
    if smallest <= PD_EIGEN_TOL:
        raise NotPositiveDefiniteError(
            f'Joint correlation matrix is not positive definite '
            f'(smallest eigenvalue {smallest:.6g})')
    if n < 2:
        raise DataError('At least 2 rows are required')
    factor = np.linalg.cholesky(joint)
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((int(n), joint.shape[0])) @ factor.T
    return Dataset(draws[:, :-1], draws[:, -1])


def _pattern(key):
    if isinstance(key, (int, np.integer)):
        return (int(key),)
    return tuple(int(bit) for bit in key)


def gen_binary(cell_counts, seed):
    """Build a binary dataset with exactly the given per-pattern counts.

    Args:
        cell_counts: mapping from a 0/1 pattern (string "01" or tuple) to
            (count_pos, count_neg)
        seed: seed of the row shuffle
    """
    if not cell_counts:
        raise DataError('Cell specification is empty')
    patterns = {_pattern(key): counts for key, counts in cell_counts.items()}
    widths = {len(pattern) for pattern in patterns}
    if len(widths) != 1:
        raise DataError('All patterns must have the same length')
    rows, outcomes = [], []
    for pattern in sorted(patterns):
        count_pos, count_neg = patterns[pattern]
        if count_pos < 0 or count_neg < 0:
            raise DataError(f'Negative count for pattern {pattern}')
        rows.extend([pattern] * (count_pos + count_neg))
        outcomes.extend([1] * count_pos + [-1] * count_neg)
    if not rows:
        raise DataError('All cell counts are zero')
    order = np.random.default_rng(seed).permutation(len(rows))
    features = np.array(rows, dtype=float).reshape(len(rows), -1)[order]
    outcome = np.array(outcomes, dtype=float)[order]
    return Dataset(features, outcome, kind=DatasetKind.BINARY_PM1)


def all_patterns(m):
    """Return every 0/1 pattern of length m in lexicographic order."""
    return list(itertools.product((0, 1), repeat=m))


class GaussianSpec:
    """Synthetic Gaussian data specification."""

    def __init__(self, corr_xx, corr_xy, n, seed):
        """Create an instance of GaussianSpec."""
        self.corr_xx = np.atleast_2d(np.asarray(corr_xx, dtype=float))
        self.corr_xy = np.asarray(corr_xy, dtype=float).ravel()
        self.n = int(n)
        self.seed = int(seed)

    @classmethod
    def from_dict(cls, spec_dict):
        """Create a spec from {"corr_xx", "corr_xy", "n", "seed"}."""
        missing = [key for key in ('corr_xx', 'corr_xy', 'n', 'seed')
                   if key not in spec_dict]
        if missing:
            raise DataError(f'Synthetic spec misses {", ".join(missing)}')
        return cls(spec_dict['corr_xx'], spec_dict['corr_xy'],
                   spec_dict['n'], spec_dict['seed'])

    def as_dict(self):
        """Return this spec as a dictionary."""
        return {'corr_xx': self.corr_xx.tolist(),
                'corr_xy': self.corr_xy.tolist(),
                'n': self.n, 'seed': self.seed}

    def covariance(self):
        """Return the population moments the generator targets."""
        return CovarianceStructure.from_correlations(self.corr_xx,
                                                     self.corr_xy)

    def generate(self):
        """Draw the dataset."""
        return gen_gaussian(self.corr_xx, self.corr_xy, self.n, self.seed)


def load_synthetic(path):
    """Read a GaussianSpec from a JSON file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f'File {path} not found')
    with open(path, encoding='utf-8') as handle:
        try:
            return GaussianSpec.from_dict(json.load(handle))
        except json.JSONDecodeError as error:
            raise DataError(f'{path} is not valid JSON: {error}')

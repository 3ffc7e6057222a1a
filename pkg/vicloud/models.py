"""Models shared across vicloud.

This module defines the dataset and covariance containers, the ellipsoid used
for both Rashomon sets and approximated clouds, and the reliance records that
make up a Variable Importance Cloud.
"""
import json
from enum import IntEnum

import numpy as np
import pandas as pd

from vicloud.exceptions import DataError, DegenerateEllipsoidError
from vicloud.settings import ORTHONORMAL_TOL, PSD_TRACE_TOL


def _frozen(values, dtype=float):
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


class DatasetKind(IntEnum):
    """Kinds of dataset."""

    CONTINUOUS = 0
    BINARY_PM1 = 1


class Variant(IntEnum):
    """How a shuffled loss is compared with the original loss."""

    DIFF = 0
    RATIO = 1


class Dataset:
    """Feature matrix, outcome and feature names.

    Arrays are copied and frozen on construction.
    """

    def __init__(self, features, outcome, names=None,
                 kind=DatasetKind.CONTINUOUS):
        """Create an instance of Dataset.

        Args:
            features: n x p array of reals
            outcome: length-n array of reals
            names: p feature names, defaults to x1..xp
            kind(DatasetKind): binary datasets have 0/1 features and a
                -1/+1 outcome
        """
        features = np.atleast_2d(np.asarray(features, dtype=float))
        outcome = np.asarray(outcome, dtype=float).ravel()
        if features.shape[0] != outcome.shape[0]:
            raise DataError(f'{features.shape[0]} feature rows but '
                            f'{outcome.shape[0]} outcomes')
        if features.shape[0] < 1:
            raise DataError('At least 1 row is required')
        if features.shape[1] < 1:
            raise DataError('At least 1 feature is required')
        if not (np.all(np.isfinite(features)) and
                np.all(np.isfinite(outcome))):
            raise DataError('All values must be finite')
        if names is None:
            names = [f'x{j + 1}' for j in range(features.shape[1])]
        names = [str(name) for name in names]
        if len(names) != features.shape[1]:
            raise DataError(f'{len(names)} names for '
                            f'{features.shape[1]} features')
        kind = DatasetKind(kind)
        if kind == DatasetKind.BINARY_PM1:
            if not np.all(np.isin(features, (0.0, 1.0))):
                raise DataError('Binary features must be 0 or 1')
            if not np.all(np.isin(outcome, (-1.0, 1.0))):
                raise DataError('Binary outcomes must be -1 or +1')
        self.features = _frozen(features)
        self.outcome = _frozen(outcome)
        self.names = tuple(names)
        self.kind = kind

    @property
    def n(self):
        """Number of rows."""
        return self.features.shape[0]

    @property
    def p(self):
        """Number of features."""
        return self.features.shape[1]

    def replace(self, features=None, outcome=None, kind=None):
        """Return a copy with some of the arrays replaced."""
        return Dataset(self.features if features is None else features,
                       self.outcome if outcome is None else outcome,
                       self.names,
                       self.kind if kind is None else kind)

    def check_feature(self, j):
        """Raise DataError unless j is a valid feature index."""
        if not 0 <= j < self.p:
            raise DataError(f'Feature index {j} out of range for '
                            f'{self.p} features')

    def to_frame(self, outcome_name='y'):
        """Return the dataset as a DataFrame with the outcome last."""
        frame = pd.DataFrame(np.asarray(self.features), columns=self.names)
        frame[outcome_name] = np.asarray(self.outcome)
        return frame


class CovarianceStructure:
    """Second moments E[XX^T], E[YX] and E[Y^2]."""

    def __init__(self, sigma_xx, sigma_xy, sigma_yy, means_removed=True):
        """Create an instance of CovarianceStructure."""
        sigma_xx = np.atleast_2d(np.asarray(sigma_xx, dtype=float))
        sigma_xy = np.asarray(sigma_xy, dtype=float).ravel()
        p = sigma_xy.shape[0]
        if sigma_xx.shape != (p, p):
            raise DataError(f'sigma_xx has shape {sigma_xx.shape}, '
                            f'expected {(p, p)}')
        if not np.allclose(sigma_xx, sigma_xx.T, rtol=0, atol=1e-12):
            raise DataError('sigma_xx must be symmetric')
        sigma_xx = (sigma_xx + sigma_xx.T) / 2
        trace = max(float(np.trace(sigma_xx)), 1.0)
        if np.linalg.eigvalsh(sigma_xx)[0] < -PSD_TRACE_TOL * trace:
            raise DataError('sigma_xx must be positive semi-definite')
        if sigma_yy < 0:
            raise DataError('sigma_yy must be non-negative')
        self.sigma_xx = _frozen(sigma_xx)
        self.sigma_xy = _frozen(sigma_xy)
        self.sigma_yy = float(sigma_yy)
        self.means_removed = bool(means_removed)

    @property
    def p(self):
        """Number of features."""
        return self.sigma_xy.shape[0]

    @classmethod
    def from_correlations(cls, corr_xx, corr_xy, var_y=1.0):
        """Build a unit-variance structure from correlations."""
        return cls(corr_xx, corr_xy, var_y, means_removed=True)

    def scaled(self, feature_scale=None, outcome_scale=1.0):
        """Return the moments of (XS, tY) for diagonal S = feature_scale."""
        scale = np.ones(self.p) if feature_scale is None else \
            np.asarray(feature_scale, dtype=float)
        return CovarianceStructure(
            self.sigma_xx * np.outer(scale, scale),
            self.sigma_xy * scale * outcome_scale,
            self.sigma_yy * outcome_scale ** 2,
            self.means_removed)

    def is_uncorrelated(self, tol=1e-10):
        """Whether every off-diagonal entry of sigma_xx is within tol of 0."""
        return self.max_off_diagonal()[0] <= tol

    def max_off_diagonal(self):
        """Return (|value|, i, j) of the largest off-diagonal entry."""
        off = np.abs(self.sigma_xx - np.diag(np.diag(self.sigma_xx)))
        if self.p < 2:
            return 0.0, 0, 0
        i, j = np.unravel_index(np.argmax(off), off.shape)
        return float(off[i, j]), int(i), int(j)

    def as_dict(self):
        """Return this structure as a dictionary."""
        return {'sigma_xx': self.sigma_xx.tolist(),
                'sigma_xy': self.sigma_xy.tolist(),
                'sigma_yy': self.sigma_yy,
                'means_removed': self.means_removed}

    @classmethod
    def from_dict(cls, cov_dict):
        """Create a covariance structure from a dictionary."""
        try:
            return cls(cov_dict['sigma_xx'], cov_dict['sigma_xy'],
                       cov_dict['sigma_yy'],
                       cov_dict.get('means_removed', True))
        except KeyError as error:
            raise DataError(f'Missing covariance field {error}')


class RidgeSpec:
    """Ridge Rashomon set parameters."""

    def __init__(self, cov, c=0.0, epsilon=0.05, benchmark_loss=None):
        """Create an instance of RidgeSpec.

        Args:
            cov(CovarianceStructure): population second moments
            c: ridge penalty, c >= 0
            epsilon: Rashomon factor, epsilon > 0
            benchmark_loss: optional override of the in-class minimum loss
        """
        if c < 0:
            raise DataError('Regularization c must be non-negative')
        if epsilon <= 0:
            raise DataError('Rashomon factor epsilon must be positive')
        self.cov = cov
        self.c = float(c)
        self.epsilon = float(epsilon)
        self.benchmark_loss = benchmark_loss

    @property
    def penalized_xx(self):
        """Return sigma_xx + cI."""
        return self.cov.sigma_xx + self.c * np.eye(self.cov.p)

    def with_epsilon(self, epsilon):
        """Return a copy with another Rashomon factor."""
        return RidgeSpec(self.cov, self.c, epsilon, self.benchmark_loss)

    def as_dict(self):
        """Return the provenance fields."""
        return {'c': self.c, 'epsilon': self.epsilon,
                'benchmark_loss': self.benchmark_loss}


class Ellipsoid:
    """Ellipsoid {x : |R^T (x - center) / radii|^2 <= 1}."""

    def __init__(self, center, radii, rotation):
        """Create an instance of Ellipsoid.

        Args:
            center: length-q vector
            radii: length-q vector of positive reals
            rotation: q x q orthonormal matrix, columns are the axes
        """
        center = np.asarray(center, dtype=float).ravel()
        radii = np.asarray(radii, dtype=float).ravel()
        rotation = np.atleast_2d(np.asarray(rotation, dtype=float))
        q = center.shape[0]
        if radii.shape != (q,) or rotation.shape != (q, q):
            raise DataError('Ellipsoid dimensions disagree')
        if not np.all(radii > 0):
            raise DegenerateEllipsoidError(f'Radii must be positive, got '
                                           f'{radii.tolist()}')
        if not np.allclose(rotation.T @ rotation, np.eye(q), rtol=0,
                           atol=ORTHONORMAL_TOL):
            raise DataError('Ellipsoid rotation must be orthonormal')
        self.center = _frozen(center)
        self.radii = _frozen(radii)
        self.rotation = _frozen(rotation)

    @property
    def dim(self):
        """Dimension of the ambient space."""
        return self.center.shape[0]

    def level(self, points):
        """Return |R^T (x - c) / r|^2 for each row of points."""
        points = np.atleast_2d(points)
        local = (points - self.center) @ self.rotation / self.radii
        return np.sum(local ** 2, axis=1)

    def contains(self, point, tol=0.0):
        """Whether point lies inside, with relative slack tol."""
        return bool(self.level(point)[0] <= 1.0 + tol)

    def boundary_points(self, directions):
        """Map unit-sphere directions onto the surface."""
        directions = np.atleast_2d(directions)
        return self.center + (directions * self.radii) @ self.rotation.T

    def shape_matrix(self):
        """Return P with the ellipsoid being (x - c)^T P (x - c) <= 1."""
        return (self.rotation / self.radii ** 2) @ self.rotation.T

    def half_widths(self):
        """Return the half-widths of the axis-aligned bounding box."""
        return np.sqrt(np.sum((self.rotation * self.radii) ** 2, axis=1))

    def scaled(self, factor):
        """Return the ellipsoid with every radius multiplied by factor."""
        return Ellipsoid(self.center, self.radii * factor, self.rotation)

    def as_dict(self):
        """Return this ellipsoid as a dictionary, rotation row-major."""
        return {'center': self.center.tolist(),
                'radii': self.radii.tolist(),
                'rotation': self.rotation.tolist()}

    @classmethod
    def from_dict(cls, ellipsoid_dict):
        """Create an ellipsoid from a dictionary."""
        return cls(ellipsoid_dict['center'], ellipsoid_dict['radii'],
                   ellipsoid_dict['rotation'])


class MRVector:
    """Per-feature model reliance of one model."""

    def __init__(self, values, variant, model_loss):
        """Create an instance of MRVector."""
        self.values = _frozen(np.asarray(values, dtype=float).ravel())
        self.variant = Variant(variant)
        self.model_loss = float(model_loss)
        if self.variant == Variant.RATIO and (
                self.model_loss <= 0 or not np.all(self.values > 0)):
            raise DataError('Ratio reliance needs positive losses')

    def __len__(self):
        return self.values.shape[0]

    def as_rows(self, names):
        """Return CSV rows (feature, variant, value, model_loss)."""
        return [{'feature': name, 'variant': self.variant.name.lower(),
                 'value': float(value), 'model_loss': self.model_loss}
                for name, value in zip(names, self.values)]


class ReliancePoint:
    """A model in the Rashomon set together with its reliance vector."""

    def __init__(self, beta, mr, loss, tag=None):
        """Create an instance of ReliancePoint.

        Args:
            beta: model parameters, empty for decision tables
            mr(MRVector): reliance vector of the model
            loss: model loss
            tag: optional dict of extra CSV columns (e.g. subset id)
        """
        self.beta = _frozen(np.asarray(beta, dtype=float).ravel())
        self.mr = mr
        self.loss = float(loss)
        self.tag = dict(tag or {})


class VICCloud:
    """Sampled Variable Importance Cloud with provenance."""

    def __init__(self, points, names, provenance=None, beta_names=None):
        """Create an instance of VICCloud.

        Args:
            points: list of ReliancePoint
            names: feature names, one per reliance coordinate
            provenance: dict of model class, epsilon, c, seed and sampler
                settings
            beta_names: column names of the model parameters
        """
        self.points = list(points)
        self.names = tuple(names)
        self.provenance = dict(provenance or {})
        self.beta_names = None if beta_names is None else tuple(beta_names)

    def __len__(self):
        return len(self.points)

    @property
    def variant(self):
        """Reliance variant shared by the points."""
        if not self.points:
            return Variant(self.provenance.get('variant', Variant.DIFF))
        return self.points[0].mr.variant

    @property
    def mr_matrix(self):
        """Return the k x p matrix of reliance values."""
        if not self.points:
            return np.empty((0, len(self.names)))
        return np.vstack([point.mr.values for point in self.points])

    @property
    def beta_matrix(self):
        """Return the k x q matrix of model parameters."""
        if not self.points:
            return np.empty((0, len(self.beta_names or ())))
        return np.vstack([point.beta for point in self.points])

    @property
    def losses(self):
        """Return the model losses."""
        return np.array([point.loss for point in self.points])

    def to_frame(self):
        """Return one row per point: tags, loss, parameters, reliances."""
        betas = self.beta_matrix
        beta_names = self.beta_names or [f'beta{k + 1}'
                                         for k in range(betas.shape[1])]
        frame = pd.DataFrame([point.tag for point in self.points],
                             index=range(len(self.points)))
        frame['loss'] = self.losses
        for k, name in enumerate(beta_names):
            frame[name] = betas[:, k]
        mr = self.mr_matrix
        for k, name in enumerate(self.names):
            frame[f'mr_{name}'] = mr[:, k]
        return frame

    def save(self, csv_path):
        """Write the cloud CSV and its JSON provenance sidecar.

        Returns the two paths written.
        """
        frame = self.to_frame()
        frame.to_csv(csv_path, index=False, float_format='%.17g')
        tags = sorted({key for point in self.points for key in point.tag})
        layout = {'names': list(self.names),
                  'beta_names': [column for column in frame.columns
                                 if column not in tags and column != 'loss'
                                 and not column.startswith('mr_')],
                  'tag_names': tags,
                  'variant': int(self.variant)}
        sidecar = f'{csv_path}.json'
        with open(sidecar, 'w', encoding='utf-8') as handle:
            json.dump({'provenance': self.provenance, 'layout': layout},
                      handle, indent=2, sort_keys=True)
        return str(csv_path), sidecar

    @classmethod
    def load(cls, csv_path):
        """Read a cloud written by save()."""
        sidecar = f'{csv_path}.json'
        try:
            with open(sidecar, encoding='utf-8') as handle:
                meta = json.load(handle)
            frame = pd.read_csv(csv_path)
        except OSError as error:
            raise DataError(f'Cannot read cloud {csv_path}: {error}')
        except ValueError as error:
            raise DataError(f'Cannot parse cloud {csv_path}: {error}')
        try:
            layout = meta['layout']
            variant = Variant(layout['variant'])
            points = []
            for _, row in frame.iterrows():
                mr = MRVector([row[f'mr_{name}'] for name in layout['names']],
                              variant, row['loss'])
                points.append(ReliancePoint(
                    [row[name] for name in layout['beta_names']], mr,
                    row['loss'], {name: row[name]
                                  for name in layout['tag_names']}))
            provenance = meta['provenance']
        except KeyError as error:
            raise DataError(f'Cloud {csv_path} misses {error}')
        except (TypeError, ValueError) as error:
            raise DataError(f'Malformed cloud {csv_path}: {error}')
        return cls(points, layout['names'], provenance, layout['beta_names'])

"""Module to help to create tests."""
import json

import numpy as np

from vicloud.data import gen_binary
from vicloud.models import CovarianceStructure, RidgeSpec

RUNNING_CELLS = {'00': (3, 1), '01': (2, 5)}


def uncorrelated_cov():
    """Return unit-variance uncorrelated moments with sigma_xy = (0.4, 0.5)."""
    return CovarianceStructure(np.eye(2), [0.4, 0.5], 1.0)


def correlated_cov(rho=0.2):
    """Return unit-variance moments with correlation rho between features."""
    return CovarianceStructure([[1.0, rho], [rho, 1.0]], [0.4, 0.5], 1.0)


def ridge_spec(cov=None, c=0.0, epsilon=0.05):
    """Return a RidgeSpec on the uncorrelated moments by default."""
    return RidgeSpec(cov or uncorrelated_cov(), c, epsilon)


def running_binary(seed=0):
    """Return the 11-row binary table {00: (3, 1), 01: (2, 5)}."""
    return gen_binary(RUNNING_CELLS, seed)


def write_csv(path, text):
    """Write text to path and return the path as a string."""
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(text)
    return str(path)


def write_json(path, payload):
    """Write payload as JSON to path and return the path as a string."""
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle)
    return str(path)

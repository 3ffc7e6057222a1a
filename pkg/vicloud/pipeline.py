"""Pipelines behind the command line, one function per command.

run_pipeline executes a RunConfig, writes its artifacts under the output
directory and finishes with a manifest recording inputs, seeds and versions.
"""
import hashlib
import json
import logging
import platform
import time
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
import sklearn
import statsmodels

from vicloud import __version__
from vicloud.config import derive_seed
from vicloud.data import (GaussianSpec, binarize_outcome, covariance_of,
                          gen_binary, load_csv, normalize, save_covariance,
                          save_csv)
from vicloud.exceptions import DataError, NumericError
from vicloud.inference import mr_wald_statistic
from vicloud.linear_rashomon import (best_ridge, rashomon_ellipsoid_linear,
                                     rashomon_threshold, ridge_losses,
                                     sample_ellipsoid_surface)
from vicloud.logistic_rashomon import (fit_logistic, logistic_loss,
                                       sample_rashomon_logistic,
                                       save_survival_table, standard_errors,
                                       tune_sampler)
from vicloud.models import DatasetKind, RidgeSpec, VICCloud
from vicloud.reliance import LinearPredictor, mr_vector
from vicloud.tree_rashomon import (enumerate_trees, feature_subsets,
                                   tabulate_cells, tree_cloud)
from vicloud.vic_linear import (approx_vic_boundary,
                                vic_center_radii_uncorrelated,
                                vic_ellipsoid_approx, vic_forward_map)
from vicloud.vid import (bounds_table, cluster_kmeans, project_pairs,
                         render_vid, tradeoff_table)

log = logging.getLogger(__name__)


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f'{type(value).__name__} is not JSON serializable')


def sha256_of(path):
    """Return the hex SHA-256 of a file."""
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def versions():
    """Return the versions of the numerical stack."""
    return {'vicloud': __version__, 'python': platform.python_version(),
            'numpy': np.__version__, 'scipy': scipy.__version__,
            'pandas': pd.__version__, 'scikit-learn': sklearn.__version__,
            'statsmodels': statsmodels.__version__}


class Run:
    """Artifacts and stage seeds of one pipeline execution."""

    def __init__(self, config):
        """Create an instance of Run."""
        self.config = config
        self.out_dir = config.out_dir
        self.stage_seeds = {}
        self.artifacts = []

    def seed(self, stage):
        """Return the seed of a stage, recording it for the manifest."""
        self.stage_seeds[stage] = derive_seed(self.config.seed, stage)
        return self.stage_seeds[stage]

    def path(self, name):
        """Return the path of an artifact, recording it."""
        self.artifacts.append(name)
        return self.out_dir / name

    def write_json(self, name, payload):
        """Write a JSON artifact."""
        with open(self.path(name), 'w', encoding='utf-8') as handle:
            json.dump(payload, handle, indent=2, sort_keys=True,
                      default=_jsonable)
            handle.write('\n')

    def save_cloud(self, cloud, name='cloud.csv'):
        """Write a cloud and its provenance sidecar."""
        cloud.save(self.path(name))
        self.artifacts.append(f'{name}.json')


def _read_synthetic(path):
    with open(path, encoding='utf-8') as handle:
        try:
            spec = json.load(handle)
        except json.JSONDecodeError as error:
            raise DataError(f'{path} is not valid JSON: {error}')
    if 'cells' in spec:
        cells = {key: tuple(counts) for key, counts in spec['cells'].items()}
        return None, gen_binary(cells, spec.get('seed', 0))
    gaussian = GaussianSpec.from_dict(spec)
    return gaussian, gaussian.generate()


def load_dataset(config, binary_outcome=False):
    """Return the run's dataset, from a CSV file or a synthetic spec."""
    if config.data:
        kind = {'continuous': DatasetKind.CONTINUOUS,
                'binary': DatasetKind.BINARY_PM1}.get(config.kind)
        dataset = load_csv(config.data, config.outcome, kind)
    else:
        _, dataset = _read_synthetic(config.synthetic)
    if config.normalize:
        dataset = normalize(dataset)
    if (binary_outcome or config.binarize) and \
            not np.all(np.isin(dataset.outcome, (-1.0, 1.0))):
        dataset = binarize_outcome(dataset)
    return dataset


def load_covariance(config):
    """Return the run's second moments and feature names.

    A Gaussian synthetic spec contributes its population moments.
    """
    if config.synthetic:
        gaussian, dataset = _read_synthetic(config.synthetic)
        if gaussian is not None:
            return gaussian.covariance(), list(dataset.names)
    dataset = load_dataset(config)
    return covariance_of(dataset), list(dataset.names)


def resolve_feature(value, names):
    """Return the 0-based index of a feature given by name or 1-based index."""
    if isinstance(value, str) and value in names:
        return names.index(value)
    try:
        index = int(value) - 1
    except (TypeError, ValueError):
        raise DataError(f'Feature {value!r} not found')
    if not 0 <= index < len(names):
        raise DataError(f'Feature index {value} out of range for '
                        f'{len(names)} features')
    return index


def _features(config, names):
    if config.features is None:
        return None
    return [resolve_feature(value, names) for value in config.features]


def write_diagrams(run, cloud, overlays=None):
    """Write bounds, the diagram as SVG and CSV, and optional clusters."""
    config = run.config
    bounds_table(cloud).save(run.path('bounds.csv'))
    grid = project_pairs(cloud, _features(config, list(cloud.names)))
    if config.k:
        grid = grid.with_clusters(cluster_kmeans(cloud, config.k,
                                                 run.seed('cluster')))
    render_vid(grid, run.path('vid.svg'), 'svg', overlays)
    render_vid(grid, run.path('vid.csv'), 'csv')


def ingest(run):
    """Read a CSV dataset and export it with its second moments."""
    dataset = load_dataset(run.config)
    save_csv(dataset, run.path('dataset.csv'))
    save_covariance(covariance_of(dataset), run.path('covariance.csv'),
                    dataset.names)
    run.write_json('summary.json', {'n': dataset.n, 'p': dataset.p,
                                    'kind': dataset.kind.name.lower(),
                                    'names': list(dataset.names)})


def gen(run):
    """Generate a synthetic dataset."""
    dataset = load_dataset(run.config)
    save_csv(dataset, run.path('dataset.csv'))
    if dataset.n >= 2:
        save_covariance(covariance_of(dataset), run.path('covariance.csv'),
                        dataset.names)


def _ridge_spec(run):
    cov, names = load_covariance(run.config)
    return RidgeSpec(cov, run.config.c, run.config.epsilon), names


def fit_linear(run):
    """Fit the best ridge model and report its reliance."""
    spec, names = _ridge_spec(run)
    beta = best_ridge(spec.cov, spec.c)
    mr = mr_vector(LinearPredictor(beta), spec.cov)
    run.write_json('fit.json', {'names': names, 'beta': beta,
                                'loss': mr.model_loss,
                                'mr': mr.values,
                                'variant': mr.variant.name.lower()})


def fit_logistic_command(run):
    """Fit the maximum likelihood logistic model."""
    dataset = load_dataset(run.config, binary_outcome=True)
    beta = fit_logistic(dataset)
    run.write_json('fit.json', {
        'names': ['intercept'] + list(dataset.names), 'beta': beta,
        'se': standard_errors(dataset, beta),
        'loss': logistic_loss(beta, dataset)})


def rashomon_linear(run):
    """Export the exact ridge Rashomon ellipsoid and boundary models."""
    spec, names = _ridge_spec(run)
    ellipsoid = rashomon_ellipsoid_linear(spec)
    run.write_json('rashomon.json', {
        'names': names, 'ellipsoid': ellipsoid.as_dict(),
        'threshold': rashomon_threshold(spec), **spec.as_dict()})
    if run.config.n_boundary:
        betas = sample_ellipsoid_surface(spec, run.config.n_boundary,
                                         run.seed('boundary'))
        frame = pd.DataFrame(betas, columns=[f'beta_{name}'
                                             for name in names])
        frame['loss'] = ridge_losses(betas, spec)
        frame.to_csv(run.path('boundary.csv'), index=False,
                     float_format='%.17g')


def rashomon_logistic(run):
    """Sample the logistic Rashomon set without reliance."""
    dataset = load_dataset(run.config, binary_outcome=True)
    cloud, report = sample_rashomon_logistic(
        dataset, run.config.epsilon,
        run.config.sampler_config(run.seed('sample')), with_reliance=False)
    run.save_cloud(cloud, 'rashomon.csv')
    report.save(run.path('report.json'))


def rashomon_tree(run):
    """Enumerate decision tables subset by subset."""
    config = run.config
    dataset = load_dataset(config)
    tables = [tabulate_cells(dataset, subset)
              for subset in feature_subsets(dataset.p, config.max_features)]
    benchmark = min(table.total_best_loss for table in tables)
    rows, summary = [], []
    for subset_id, table in enumerate(tables):
        trees = enumerate_trees(table, config.epsilon, config.include_empty,
                                benchmark)
        summary.append({'subset_id': subset_id,
                        'subset': list(table.names),
                        'total_best_loss': table.total_best_loss,
                        'n_trees': len(trees)})
        rows.extend({'subset_id': subset_id,
                     'subset': '+'.join(table.names) or 'constant',
                     'flipped': tree.bitmask, 'loss': tree.loss}
                    for tree in trees)
    pd.DataFrame(rows, columns=['subset_id', 'subset', 'flipped',
                                'loss']).to_csv(run.path('trees.csv'),
                                                index=False)
    run.write_json('rashomon_tree.json', {'benchmark_loss': benchmark,
                                          'epsilon': config.epsilon,
                                          'subsets': summary})


def vic_linear_command(run):
    """Forward-map the ridge Rashomon set and draw its diagram."""
    config = run.config
    spec, names = _ridge_spec(run)
    cloud = vic_forward_map(spec, config.n_boundary, config.n_interior,
                            run.seed('sample'), names)
    run.save_cloud(cloud)
    overlays = {}
    approx = {}
    try:
        ellipsoid = vic_ellipsoid_approx(None, spec)
        approx['approximated'] = ellipsoid.as_dict()
        overlays['approximated VIC'] = approx_vic_boundary(
            ellipsoid, max(config.n_boundary, 200), run.seed('overlay'))
    except NumericError as error:
        log.warning(f'No approximated VIC: {error}')
    if spec.cov.is_uncorrelated():
        try:
            approx['exact'] = vic_center_radii_uncorrelated(
                spec.cov, spec.c, spec.epsilon).as_dict()
        except NumericError as error:
            log.warning(f'No closed-form VIC: {error}')
    run.write_json('vic_ellipsoid.json', {'names': names, **approx})
    write_diagrams(run, cloud, overlays)


def vic_logistic_command(run):
    """Sample the logistic Rashomon set with reliance and draw its diagram."""
    dataset = load_dataset(run.config, binary_outcome=True)
    cloud, report = sample_rashomon_logistic(
        dataset, run.config.epsilon,
        run.config.sampler_config(run.seed('sample')))
    run.save_cloud(cloud)
    report.save(run.path('report.json'))
    write_diagrams(run, cloud)


def vic_tree_command(run):
    """Enumerate the decision-table Rashomon set and draw its diagram."""
    config = run.config
    cloud = tree_cloud(load_dataset(config), config.epsilon,
                       config.max_features, config.include_empty)
    run.save_cloud(cloud)
    write_diagrams(run, cloud)


def vid(run):
    """Draw the diagram of a saved cloud."""
    config = run.config
    cloud = VICCloud.load(config.cloud)
    grid = project_pairs(cloud, _features(config, list(cloud.names)))
    if config.k:
        grid = grid.with_clusters(cluster_kmeans(cloud, config.k,
                                                 run.seed('cluster')))
    render_vid(grid, run.path(f'vid.{config.format}'), config.format)


def bounds(run):
    """Tabulate the reliance bounds of a saved cloud."""
    config = run.config
    cloud = VICCloud.load(config.cloud)
    bounds_table(cloud).save(run.path('bounds.csv'))
    if config.feature is not None:
        j = resolve_feature(config.feature, list(cloud.names))
        tradeoff_table(cloud, j).to_csv(run.path('tradeoff.csv'),
                                        index=False, float_format='%.17g')


def tune(run):
    """Tabulate survival rates over (r, M) and pick the plateau."""
    config = run.config
    dataset = load_dataset(config, binary_outcome=True)
    cfg = config.sampler_config(run.seed('sample'))
    r, m_rounds, table = tune_sampler(dataset, config.epsilon,
                                      config.r_candidates,
                                      config.m_candidates, config.r_bar,
                                      cfg)
    save_survival_table(table, run.path('survival.csv'))
    run.write_json('tuning.json', {'r': r, 'm_rounds': m_rounds,
                                   'r_bar': config.r_bar})


def wald_test(run):
    """Test whether a linear model relies on one feature."""
    config = run.config
    dataset = load_dataset(config)
    j = resolve_feature(config.feature, list(dataset.names))
    result = mr_wald_statistic(dataset, j, config.null_value)
    run.write_json('test.json', result.as_dict())


PIPELINES = {
    'ingest': ingest,
    'gen': gen,
    'fit-linear': fit_linear,
    'fit-logistic': fit_logistic_command,
    'rashomon-linear': rashomon_linear,
    'rashomon-logistic': rashomon_logistic,
    'rashomon-tree': rashomon_tree,
    'linear': vic_linear_command,
    'logistic': vic_logistic_command,
    'tree': vic_tree_command,
    'vid': vid,
    'bounds': bounds,
    'tune': tune,
    'test': wald_test,
}


def run_pipeline(config):
    """Execute a validated RunConfig and write its manifest.

    Returns:
        the Run, listing the artifacts written
    """
    started = time.perf_counter()
    run = Run(config)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    log.info(f'Running {config.command} into {run.out_dir}')
    PIPELINES[config.command](run)
    inputs = {name: sha256_of(getattr(config, name))
              for name in ('data', 'synthetic', 'cloud')
              if getattr(config, name)}
    manifest = {'command': config.command, 'config': config.as_dict(),
                'inputs_sha256': inputs, 'seed': config.seed,
                'stage_seeds': run.stage_seeds, 'versions': versions(),
                'wall_time_s': time.perf_counter() - started,
                'artifacts': sorted(run.artifacts)}
    run.write_json('manifest.json', manifest)
    return run

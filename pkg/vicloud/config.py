"""Run configuration: schema, validation and per-stage seeds."""
import hashlib
import json
import os
from pathlib import Path

from vicloud.exceptions import ConfigError
from vicloud.logistic_rashomon import SamplerConfig
from vicloud.settings import (DEFAULT_OUTPUT_ROOT, MAX_FEATURES, N_BOUNDARY,
                              N_INTERIOR, N_SHUFFLES, OUTPUT_ROOT_ENV, R_BAR)

COMMANDS = ('ingest', 'gen', 'fit-linear', 'fit-logistic', 'rashomon-linear',
            'rashomon-logistic', 'rashomon-tree', 'linear', 'logistic',
            'tree', 'vid', 'bounds', 'tune', 'test')

# field: (accepted types, default)
SCHEMA = {
    'command': ((str,), None),
    'seed': ((int,), None),
    'out': ((str,), None),
    'data': ((str,), None),
    'synthetic': ((str,), None),
    'cloud': ((str,), None),
    'outcome': ((str, int), 'y'),
    'kind': ((str,), None),
    'normalize': ((bool,), False),
    'binarize': ((bool,), False),
    'epsilon': ((int, float), 0.05),
    'c': ((int, float), 0.0),
    'n_boundary': ((int,), N_BOUNDARY),
    'n_interior': ((int,), N_INTERIOR),
    'n_shuffles': ((int,), N_SHUFFLES),
    'sampler': ((dict,), None),
    'r_candidates': ((list,), [1.1, 1.2, 1.3, 1.4, 1.5]),
    'm_candidates': ((list,), [1, 2, 3, 4]),
    'r_bar': ((int, float), R_BAR),
    'max_features': ((int,), MAX_FEATURES),
    'include_empty': ((bool,), False),
    'features': ((list,), None),
    'feature': ((str, int), None),
    'null_value': ((int, float), 0.0),
    'k': ((int,), None),
    'format': ((str,), 'svg'),
}

NEEDS_DATA = {'ingest', 'fit-logistic', 'tune', 'test'}
NEEDS_SOURCE = {'gen', 'fit-linear', 'rashomon-linear', 'rashomon-logistic',
                'rashomon-tree', 'linear', 'logistic', 'tree'}
NEEDS_CLOUD = {'vid', 'bounds'}
KINDS = ('continuous', 'binary')


def derive_seed(master, stage):
    """Return a 64-bit seed for a stage, independent of the other stages."""
    digest = hashlib.sha256(f'{stage}:{int(master)}'.encode()).digest()
    return int.from_bytes(digest[:8], 'big')


def output_root():
    """Return the default output root, overridable by environment."""
    return os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)


class RunConfig:
    """Validated parameters of one run."""

    def __init__(self, **fields):
        """Create an instance of RunConfig; use from_dict to validate."""
        for name, (_, default) in SCHEMA.items():
            setattr(self, name, fields.get(name, default))

    def as_dict(self):
        """Return every field, defaults included."""
        return {name: getattr(self, name) for name in SCHEMA}

    @property
    def out_dir(self):
        """Directory receiving the artifacts."""
        return Path(self.out or Path(output_root()) / self.command)

    def sampler_config(self, seed=None):
        """Return the SamplerConfig of this run."""
        fields = dict(self.sampler or {})
        fields.setdefault('seed', self.seed if seed is None else seed)
        fields.setdefault('n_shuffles', self.n_shuffles)
        return SamplerConfig.from_dict(fields)

    @classmethod
    def from_dict(cls, config_dict):
        """Validate a configuration document.

        Raises:
            ConfigError: naming the first offending field
        """
        if not isinstance(config_dict, dict):
            raise ConfigError('config', 'must be a JSON object')
        unknown = sorted(set(config_dict) - set(SCHEMA))
        if unknown:
            raise ConfigError(unknown[0], 'unknown field')
        fields = {}
        for name, (types, default) in SCHEMA.items():
            value = config_dict.get(name, default)
            if value is not None:
                _check_type(name, value, types)
            fields[name] = value

        command = fields['command']
        if command not in COMMANDS:
            raise ConfigError('command', f'must be one of '
                                         f'{", ".join(COMMANDS)}')
        if fields['seed'] is None:
            raise ConfigError('seed', 'a master seed is required')
        if fields['epsilon'] <= 0:
            raise ConfigError('epsilon', 'must be positive')
        if fields['c'] < 0:
            raise ConfigError('c', 'must be non-negative')
        for name in ('n_boundary', 'n_interior', 'n_shuffles',
                     'max_features'):
            if fields[name] < 0:
                raise ConfigError(name, 'must be non-negative')
        if fields['n_shuffles'] < 1:
            raise ConfigError('n_shuffles', 'must be at least 1')
        if fields['k'] is not None and fields['k'] < 1:
            raise ConfigError('k', 'must be at least 1')
        if fields['kind'] is not None and fields['kind'] not in KINDS:
            raise ConfigError('kind', f'must be one of {", ".join(KINDS)}')
        if fields['format'] not in ('svg', 'csv'):
            raise ConfigError('format', 'must be svg or csv')

        if command in NEEDS_DATA and not fields['data']:
            raise ConfigError('data', f'required by {command}')
        if command in NEEDS_SOURCE and not (fields['data'] or
                                            fields['synthetic']):
            raise ConfigError('data', f'{command} needs data or synthetic')
        if fields['data'] and fields['synthetic']:
            raise ConfigError('synthetic', 'give either data or synthetic')
        if command in NEEDS_CLOUD and not fields['cloud']:
            raise ConfigError('cloud', f'required by {command}')
        if command == 'test' and fields['feature'] is None:
            raise ConfigError('feature', 'required by test')
        for name in ('data', 'synthetic', 'cloud'):
            if fields[name] and not Path(fields[name]).is_file():
                raise ConfigError(name, f'{fields[name]} does not exist')
        if fields['sampler'] is not None:
            SamplerConfig.from_dict(fields['sampler'])
        return cls(**fields)

    @classmethod
    def load(cls, path, overrides=None):
        """Read a JSON configuration, then apply overrides on top."""
        try:
            with open(path, encoding='utf-8') as handle:
                config_dict = json.load(handle)
        except OSError as error:
            raise ConfigError('config', f'cannot read {path}: {error}')
        except json.JSONDecodeError as error:
            raise ConfigError('config', f'{path} is not valid JSON: {error}')
        if not isinstance(config_dict, dict):
            raise ConfigError('config', 'must be a JSON object')
        return cls.from_dict({**config_dict, **(overrides or {})})


def _check_type(name, value, types):
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(name, f'must be {_type_names(types)}, got a '
                                f'boolean')
    if not isinstance(value, types):
        raise ConfigError(name, f'must be {_type_names(types)}, got '
                                f'{type(value).__name__}')


def _type_names(types):
    return ' or '.join(kind.__name__ for kind in types)

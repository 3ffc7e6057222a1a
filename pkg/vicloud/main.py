"""Command line of vicloud.

Every subcommand builds a RunConfig from built-in defaults, an optional JSON
config file and explicit flags, in that order of precedence, then hands it to
run_pipeline. Errors raised below are translated here into exit codes.
"""
import json
import logging
import traceback
from pathlib import Path

import click
from click.core import ParameterSource

from vicloud import __version__
from vicloud.config import SCHEMA, RunConfig
from vicloud.exceptions import ConfigError, VICError
from vicloud.pipeline import run_pipeline

log = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

# option name -> (RunConfig field, click option declaration)
OPTIONS = {
    'seed': ('seed', dict(type=int, default=0, help='Master seed.')),
    'out': ('out', dict(type=click.Path(file_okay=False),
                        help='Output directory.')),
    'data': ('data', dict(type=click.Path(), help='Dataset CSV.')),
    'synthetic': ('synthetic', dict(type=click.Path(),
                                    help='Synthetic data JSON.')),
    'cloud': ('cloud', dict(type=click.Path(), help='Saved cloud CSV.')),
    'outcome': ('outcome', dict(default=SCHEMA['outcome'][1],
                                help='Outcome column name or 0-based index.')),
    'kind': ('kind', dict(type=click.Choice(['continuous', 'binary']),
                          help='Skip dataset kind detection.')),
    'normalize': ('normalize', dict(is_flag=True,
                                    help='Standardize every column.')),
    'binarize': ('binarize', dict(is_flag=True,
                                  help='Replace the outcome by its sign.')),
    'epsilon': ('epsilon', dict(type=float, default=SCHEMA['epsilon'][1],
                                help='Rashomon parameter.')),
    'c': ('c', dict(type=float, default=SCHEMA['c'][1],
                    help='Ridge penalty.')),
    'boundary': ('n_boundary', dict(type=int,
                                    default=SCHEMA['n_boundary'][1],
                                    help='Boundary models to map.')),
    'interior': ('n_interior', dict(type=int,
                                    default=SCHEMA['n_interior'][1],
                                    help='Interior models to map.')),
    'n-shuffles': ('n_shuffles', dict(type=int,
                                      default=SCHEMA['n_shuffles'][1],
                                      help='Shuffles per feature.')),
    'sampler': ('sampler', dict(help='Sampler settings as a JSON object.')),
    'r-candidates': ('r_candidates', dict(
        help='Comma separated scale factors to tune.')),
    'm-candidates': ('m_candidates', dict(
        help='Comma separated round counts to tune.')),
    'r-bar': ('r_bar', dict(type=float, default=SCHEMA['r_bar'][1],
                            help='Diagnostic inflation factor.')),
    'max-features': ('max_features', dict(
        type=int, default=SCHEMA['max_features'][1],
        help='Largest feature subset of a decision table.')),
    'include-empty': ('include_empty', dict(
        is_flag=True, help='Allow flipping empty cells.')),
    'features': ('features', dict(
        help='Comma separated diagram features, names or 1-based indices.')),
    'feature': ('feature', dict(help='Feature name or 1-based index.')),
    'null-value': ('null_value', dict(type=float,
                                      default=SCHEMA['null_value'][1],
                                      help='Reliance under the null.')),
    'k': ('k', dict(type=int, help='Number of k-means clusters.')),
    'format': ('format', dict(type=click.Choice(['svg', 'csv']),
                              default=SCHEMA['format'][1],
                              help='Diagram format.')),
}

# subcommand -> options it accepts, besides --seed, --out and --config
COMMAND_OPTIONS = {
    'ingest': ('data', 'outcome', 'kind', 'normalize'),
    'gen': ('synthetic',),
    'fit-linear': ('data', 'synthetic', 'outcome', 'kind', 'normalize', 'c'),
    'fit-logistic': ('data', 'outcome', 'kind', 'normalize', 'binarize'),
    'rashomon-linear': ('data', 'synthetic', 'outcome', 'kind', 'normalize',
                        'epsilon', 'c', 'boundary'),
    'rashomon-logistic': ('data', 'synthetic', 'outcome', 'kind',
                          'normalize', 'binarize', 'epsilon', 'sampler'),
    'rashomon-tree': ('data', 'synthetic', 'outcome', 'kind', 'epsilon',
                      'max-features', 'include-empty'),
    'linear': ('data', 'synthetic', 'outcome', 'kind', 'normalize',
               'epsilon', 'c', 'boundary', 'interior', 'features', 'k'),
    'logistic': ('data', 'synthetic', 'outcome', 'kind', 'normalize',
                 'binarize', 'epsilon', 'sampler', 'n-shuffles', 'features',
                 'k'),
    'tree': ('data', 'synthetic', 'outcome', 'kind', 'epsilon',
             'max-features', 'include-empty', 'features', 'k'),
    'vid': ('cloud', 'features', 'k', 'format'),
    'bounds': ('cloud', 'feature'),
    'tune': ('data', 'outcome', 'kind', 'normalize', 'binarize', 'epsilon',
             'sampler', 'r-candidates', 'm-candidates', 'r-bar'),
    'test': ('data', 'outcome', 'kind', 'feature', 'null-value'),
}

HELP = {
    'ingest': 'Read a CSV dataset and export its second moments.',
    'gen': 'Generate a synthetic dataset.',
    'fit-linear': 'Fit the best ridge model.',
    'fit-logistic': 'Fit the maximum likelihood logistic model.',
    'rashomon-linear': 'Export the ridge Rashomon ellipsoid.',
    'rashomon-logistic': 'Sample the logistic Rashomon set.',
    'rashomon-tree': 'Enumerate the decision-table Rashomon set.',
    'linear': 'Build the VIC of ridge models.',
    'logistic': 'Build the VIC of logistic models.',
    'tree': 'Build the VIC of decision tables.',
    'vid': 'Draw the diagram of a saved cloud.',
    'bounds': 'Tabulate reliance bounds of a saved cloud.',
    'tune': 'Tune the logistic sampler.',
    'test': 'Test the reliance of a linear model on one feature.',
}


def _split(text, cast, field):
    try:
        return [cast(item.strip()) for item in text.split(',')
                if item.strip()]
    except ValueError:
        raise ConfigError(field, f'cannot parse {text!r}')


def _convert(field, value):
    """Turn a flag value into its JSON config form."""
    if field == 'sampler':
        try:
            return json.loads(value)
        except json.JSONDecodeError as error:
            raise ConfigError('sampler', f'invalid JSON: {error}')
    if field == 'r_candidates':
        return _split(value, float, field)
    if field == 'm_candidates':
        return _split(value, int, field)
    if field == 'features':
        return _split(value, str, field)
    return value


def build_config(command, config_path, params, sources):
    """Merge defaults, config file and explicit flags into a RunConfig.

    Args:
        command: subcommand name, None to take it from the config file
        config_path: optional JSON config file
        params: option name -> click value
        sources: option name -> click ParameterSource
    """
    defaults, explicit = {}, {}
    for name, value in params.items():
        field = OPTIONS[name.replace('_', '-')][0] \
            if name.replace('_', '-') in OPTIONS else None
        if field is None or value is None:
            continue
        value = _convert(field, value)
        if sources.get(name) == ParameterSource.DEFAULT:
            defaults[field] = value
        else:
            explicit[field] = value
    if command is not None:
        explicit['command'] = command
    if config_path is None:
        return RunConfig.from_dict({**defaults, **explicit})
    try:
        with open(config_path, encoding='utf-8') as handle:
            file_fields = json.load(handle)
    except OSError as error:
        raise ConfigError('config', f'cannot read {config_path}: {error}')
    except json.JSONDecodeError as error:
        raise ConfigError('config', f'{config_path} is not valid JSON: '
                                    f'{error}')
    if not isinstance(file_fields, dict):
        raise ConfigError('config', 'must be a JSON object')
    return RunConfig.from_dict({**defaults, **file_fields, **explicit})


def failing_module(error):
    """Return the name of the module where an error was raised."""
    frames = traceback.extract_tb(error.__traceback__)
    if not frames:
        return 'vicloud'
    return Path(frames[-1].filename).stem


def execute(ctx, command, config_path, params):
    """Run one pipeline and exit with the code of its error class."""
    sources = {name: ctx.get_parameter_source(name) for name in params}
    try:
        config = build_config(command, config_path, params, sources)
        run = run_pipeline(config)
    except VICError as error:
        module = failing_module(error)
        log.debug(''.join(traceback.format_exception(
            type(error), error, error.__traceback__)))
        click.echo(f'Error in {module}: {error}', err=True)
        ctx.exit(error.exit_code)
    click.echo(str(run.out_dir))


@click.group()
@click.version_option(__version__, prog_name='vic')
@click.option('--verbose', is_flag=True, help='Log debug messages.')
@click.option('--quiet', is_flag=True, help='Log warnings and errors only.')
def cli(verbose, quiet):
    """Variable Importance Clouds and Diagrams."""
    level = logging.DEBUG if verbose else \
        logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _make_command(command):
    def callback(config, **params):
        execute(click.get_current_context(), command, config, params)

    callback.__doc__ = HELP[command]
    for name in reversed(('seed', 'out') + COMMAND_OPTIONS[command]):
        callback = click.option(f'--{name}', **OPTIONS[name][1])(callback)
    callback = click.option('--config', type=click.Path(),
                            help='JSON run configuration.')(callback)
    return cli.command(name=command, help=HELP[command])(callback)


for _command in COMMAND_OPTIONS:
    _make_command(_command)


@cli.command()
@click.option('--config', type=click.Path(), required=True,
              help='JSON run configuration naming its command.')
@click.pass_context
def run(ctx, config):
    """Execute a full run configuration."""
    execute(ctx, None, config, {})


if __name__ == '__main__':
    cli()  # pylint: disable=no-value-for-parameter

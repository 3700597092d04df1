"""
Experiment commands definition.
This module contains the command-line group with one subcommand per
experiment.
"""

import json

import click

from graphon_sis import __version__, configure_logging, get_config
from graphon_sis.services.experiment_service import EXIT_ERROR, ExperimentService
from graphon_sis.utils.errors import GraphonSISError

COMMANDS = {
    'spectrum': 'Leading eigenpair, second eigenvalue and spectral gap of a kernel.',
    'endemic': 'Endemic equilibrium by bisection or fixed-point iteration.',
    'simulate': 'Integrate the SIS equation and write the trajectory table.',
    'usic-align': 'Align trajectories from small initial conditions at a crossing level.',
    'eternal': 'Construct the eternal solution by staged forward runs.',
    'si-exact': 'Closed-form SI eternal solution of a rank-1 kernel.',
    'chi-curve': 'Prevalence-to-SI-links curve of a rank-1 kernel.',
    'verify-bounds': 'Check the linearization and comparison bounds on a run.',
}


def _echo_envelope(envelope, err=False):
    click.echo(json.dumps(envelope, indent=2, default=str), err=err)


@click.group()
@click.version_option(__version__, prog_name='graphon-sis')
@click.option('--env', 'env_name', envvar='GRAPHON_SIS_ENV', default=None,
              help='Configuration name (development, production, testing).')
@click.pass_context
def cli(ctx, env_name):
    """Deterministic SIS/SI epidemics on graphon kernels."""
    ctx.obj = configure_logging(get_config(env_name))


def _make_command(name, help_text):
    @cli.command(name, help=help_text)
    @click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                  help='YAML experiment configuration.')
    @click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE',
                  help='Override a dotted configuration key; the value is parsed as YAML.')
    @click.option('--output-dir', type=click.Path(file_okay=False),
                  help='Output directory (defaults to $GRAPHON_SIS_OUTPUT_ROOT/<experiment>).')
    @click.pass_context
    def command(ctx, config_path, overrides, output_dir):
        settings = ctx.obj
        try:
            if config_path:
                config = ExperimentService.load_config(config_path, overrides, settings, name)
            else:
                config = ExperimentService.parse_config('', overrides, None, settings, name)
            exit_code, manifest = ExperimentService.run(config, output_dir, settings)
        except GraphonSISError as e:
            envelope = e.to_dict()
            if getattr(e, 'errors', None):
                envelope['errors'] = e.errors
            _echo_envelope(envelope, err=True)
            ctx.exit(EXIT_ERROR)
            return

        if manifest.error is not None:
            _echo_envelope(manifest.error, err=True)
        else:
            _echo_envelope({
                'success': exit_code == 0,
                'data': {
                    'experiment': manifest.experiment,
                    'status': manifest.status,
                    'files': manifest.files,
                    'properties': manifest.properties,
                },
                'message': f'{name} finished with status {manifest.status}',
            })
        ctx.exit(exit_code)

    command.__name__ = name.replace('-', '_')
    return command


for _name, _help in COMMANDS.items():
    _make_command(_name, _help)

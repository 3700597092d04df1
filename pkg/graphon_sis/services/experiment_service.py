"""
Experiment service layer.
This module contains configuration parsing and the orchestration of every
experiment, with deterministic YAML/CSV outputs and a run manifest.
"""

import copy
import logging
import math
import time
from pathlib import Path

import numpy as np
import yaml
from marshmallow import ValidationError

from graphon_sis import __version__, get_config
from graphon_sis.models.experiment import RunManifest
from graphon_sis.models.field import Field, Partition
from graphon_sis.models.kernel import PowerLaw
from graphon_sis.models.trajectory import IntegratorConfig
from graphon_sis.schemas.experiment_schema import ExperimentSchema
from graphon_sis.services.dynamics_service import DynamicsService
from graphon_sis.services.kernel_service import KernelService
from graphon_sis.services.si_closed_form_service import SIClosedFormService
from graphon_sis.services.usic_service import UsicService
from graphon_sis.utils.errors import ConfigError, GraphonSISError
from graphon_sis.utils.serialization import (
    read_trajectory_csv,
    to_builtin,
    write_csv,
    write_trajectory_csv,
    write_trajectory_wide_csv,
    write_yaml,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_ERROR = 2
DEFAULT_LEVELS = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
ROUND_TRIP_TOL = 1e-12


def _flatten_messages(messages, path=''):
    """Flatten nested marshmallow messages into 'path: message' strings."""
    if isinstance(messages, dict):
        flat = []
        for key, value in messages.items():
            label = str(key) if key != '_schema' else ''
            child = f'{path}.{label}' if path and label else (path or label)
            flat.extend(_flatten_messages(value, child))
        return flat
    if isinstance(messages, (list, tuple)):
        flat = []
        for item in messages:
            flat.extend(_flatten_messages(item, path))
        return flat
    return [f'{path}: {messages}' if path else str(messages)]


def _apply_override(data, override):
    key, sep, raw = override.partition('=')
    if not sep or not key.strip():
        raise ConfigError(f'Override {override!r} is not of the form key=value',
                          operation='parse_config')
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f'Override value {raw!r} is not valid YAML',
                          operation='parse_config') from e
    node = data
    parts = key.strip().split('.')
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f'Override {key!r} does not address a mapping',
                              operation='parse_config')
        node = child
    node[parts[-1]] = value


class ExperimentService:
    """Service class for configuration parsing and experiment runs."""

    @staticmethod
    def parse_config(text, overrides=None, base_dir=None, config_class=None, experiment=None):
        """
        Parse and validate an experiment configuration.

        Args:
            text (str): YAML configuration text
            overrides (list[str]): 'dotted.key=value' overrides, values parsed as YAML
            base_dir (str | Path): Directory for relative kernel paths
            config_class (type): Configuration class supplying defaults
            experiment (str): Experiment required by the caller; fills a missing key

        Returns:
            ExperimentConfig: Validated configuration

        Raises:
            ConfigError: With the full list of validation messages
        """
        try:
            data = yaml.safe_load(text) if text else {}
        except yaml.YAMLError as e:
            raise ConfigError(f'Configuration is not valid YAML: {e}',
                              operation='parse_config') from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError('Configuration must be a mapping', operation='parse_config')
        for override in overrides or ():
            _apply_override(data, override)
        if experiment is not None:
            declared = data.setdefault('experiment', experiment)
            if declared != experiment:
                raise ConfigError(
                    f'Configuration declares experiment {declared!r}, not {experiment!r}',
                    operation='parse_config',
                )

        schema = ExperimentSchema()
        schema.context.update({'base_dir': base_dir, 'config': config_class or get_config()})
        try:
            config = schema.load(copy.deepcopy(data))
        except ValidationError as e:
            errors = _flatten_messages(e.messages)
            raise ConfigError(
                f'Invalid configuration ({len(errors)} errors)',
                errors=errors,
                operation='parse_config',
            ) from e
        config.echo = to_builtin(data)
        return config

    @staticmethod
    def load_config(path, overrides=None, config_class=None, experiment=None):
        """Read and parse a configuration file."""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f'Configuration file not found: {path}', operation='parse_config')
        return ExperimentService.parse_config(
            path.read_text(encoding='utf-8'), overrides, path.parent, config_class, experiment
        )

    @staticmethod
    def integrator_config(config, settings):
        tolerances = config.tolerances
        return IntegratorConfig.from_config(
            settings,
            rel_tol=tolerances.get('rel_tol'),
            abs_tol=tolerances.get('abs_tol'),
            state_tol=tolerances.get('state_tol'),
            sample_tol=tolerances.get('sample_tol'),
            max_step=tolerances.get('max_step'),
        )

    @staticmethod
    def run(config, output_dir=None, config_class=None):
        """
        Run an experiment and write its outputs.

        Results are written first; manifest.yaml is written last, atomically.

        Args:
            config (ExperimentConfig): Validated configuration
            output_dir (str | Path): Overrides the configured output directory
            config_class (type): Configuration class

        Returns:
            tuple[int, RunManifest]: Exit status (0 ok, 1 property failure,
            2 error) and the manifest
        """
        settings = config_class or get_config()
        out_dir = Path(
            output_dir or config.output_dir
            or Path(settings.OUTPUT_ROOT) / config.experiment
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = ExperimentService.integrator_config(config, settings)
        manifest = RunManifest(config.experiment, __version__, config.to_dict())
        manifest.tolerances = {
            **cfg.to_dict(),
            'eigen_tol': config.tolerances.get('eigen_tol', settings.EIGEN_TOL),
            'eigen_max_iter': config.tolerances.get('eigen_max_iter', settings.EIGEN_MAX_ITER),
            'endemic_tol': config.tolerances.get('endemic_tol', settings.ENDEMIC_TOL),
            'endemic_max_iter': config.tolerances.get('endemic_max_iter',
                                                      settings.ENDEMIC_MAX_ITER),
        }
        runner = RUNNERS[config.experiment]
        started = time.perf_counter()
        try:
            runner(config, settings, cfg, out_dir, manifest)
        except GraphonSISError as e:
            logger.error('%s: %s', e.context, e)
            manifest.status = 'error'
            manifest.exit_code = EXIT_ERROR
            manifest.error = e.to_dict()
        manifest.wall_clock = time.perf_counter() - started
        write_yaml(out_dir / 'manifest.yaml', manifest.to_dict())
        logger.info('Experiment %s finished with status %s', config.experiment, manifest.status)
        return manifest.exit_code, manifest


def _spectrum(config, manifest, with_lambda2=True):
    tol = manifest.tolerances['eigen_tol']
    max_iter = manifest.tolerances['eigen_max_iter']
    kernel = config.kernel
    if with_lambda2:
        spectrum = KernelService.spectrum(kernel, tol, max_iter)
    else:
        spectrum = KernelService.leading_eigenpair(kernel, tol, max_iter)
    manifest.constants.update({
        'lambda1': spectrum.lambda1,
        'lambda2': spectrum.lambda2,
        'gap': spectrum.gap,
        'm': spectrum.m,
        'eigen_residual': spectrum.residual,
        'cells': kernel.partition.size,
    })
    if isinstance(kernel, PowerLaw):
        manifest.constants.update({'grid_size': kernel.grid_size, 'kappa': kernel.kappa,
                                   'phi_cap': kernel.phi_cap})
    return spectrum


def _record(manifest, out_dir, path):
    manifest.files.append(str(Path(path).relative_to(out_dir)))


def _record_integration(manifest, trajectory, label='trajectory'):
    manifest.integrator[label] = dict(trajectory.stats)


def _initial_state(config, spectrum, default):
    value = config.option('u0', default)
    phi = spectrum.phi1
    if config.option('initial_profile', 'uniform') == 'phi1':
        return phi.with_values(np.minimum(value * phi.values, 1.0))
    return Field.constant(value, phi.partition)


def _run_spectrum(config, settings, cfg, out_dir, manifest):
    spectrum = _spectrum(config, manifest)
    manifest.constants['connected'] = KernelService.is_connected(config.kernel)
    report = {'kernel': {'variant': config.kernel.variant, 'source': config.kernel_source},
              **spectrum.to_dict()}
    _record(manifest, out_dir, write_yaml(out_dir / 'spectrum.yaml', report))
    _record(manifest, out_dir, write_yaml(out_dir / 'phi1.yaml', spectrum.phi1.to_dict()))
    manifest.record_property('eigen_residual', spectrum.residual <= manifest.tolerances['eigen_tol'],
                             measured=spectrum.residual)


def _run_endemic(config, settings, cfg, out_dir, manifest):
    spectrum = _spectrum(config, manifest, with_lambda2=False)
    tol = manifest.tolerances['endemic_tol']
    max_iter = manifest.tolerances['endemic_max_iter']
    method = config.option('method', 'auto')
    endemic = DynamicsService.endemic_solve(config.kernel, config.params, tol, method, spectrum,
                                            max_iter)
    report = {'endemic': endemic.to_dict()}
    manifest.record_property('endemic_residual', endemic.residual <= tol,
                             measured=endemic.residual, bound=tol)
    if config.kernel.is_rank_one and config.params.gamma > 0.0:
        other = DynamicsService.endemic_solve(
            config.kernel, config.params, tol,
            'fixed_point' if endemic.method == 'bisection' else 'bisection', spectrum, max_iter,
        )
        agreement = float(np.max(np.abs(other.psi.values - endemic.psi.values)))
        report['cross_check'] = {'method': other.method, 'max_difference': agreement}
        manifest.record_property('endemic_paths_agree', agreement <= 1e-8, measured=agreement,
                                 bound=1e-8)
    if config.params.gamma > 0.0:
        near = SIClosedFormService.near_critical_gap(spectrum, config.params, endemic)
        report['near_critical_gap'] = near
    _record(manifest, out_dir, write_yaml(out_dir / 'endemic.yaml', report))
    _record(manifest, out_dir, write_yaml(out_dir / 'psi.yaml', endemic.psi.to_dict()))


def _run_simulate(config, settings, cfg, out_dir, manifest):
    spectrum = _spectrum(config, manifest, with_lambda2=False)
    u0 = _initial_state(config, spectrum, 1e-3)
    t_start = config.option('t_start', 0.0)
    t_end = config.option('t_end', 20.0)
    times = np.linspace(t_start, t_end, config.option('samples', 201))
    trajectory = DynamicsService.integrate(config.kernel, config.params, u0, (t_start, t_end),
                                           cfg, times, spectrum)
    _record_integration(manifest, trajectory)
    path = write_trajectory_csv(out_dir / 'trajectory.csv', trajectory)
    _record(manifest, out_dir, path)
    if config.option('wide', False):
        _record(manifest, out_dir,
                write_trajectory_wide_csv(out_dir / 'trajectory_wide.csv', trajectory))
    columns = read_trajectory_csv(path)
    drift = max(
        float(np.max(np.abs(columns[name] - values)))
        for name, values in (('t', trajectory.times), ('prevalence', trajectory.prevalence),
                             ('c1', trajectory.c1), ('l2', trajectory.l2))
    )
    manifest.record_property('csv_round_trip', drift <= ROUND_TRIP_TOL, measured=drift)
    report = {'initial': {'prevalence': u0.integral(), 'c1': spectrum.phi1.inner(u0)},
              'trajectory': trajectory.to_dict()}
    _record(manifest, out_dir, write_yaml(out_dir / 'simulate.yaml', report))


def _run_usic_align(config, settings, cfg, out_dir, manifest):
    spectrum = _spectrum(config, manifest)
    write_curves = config.option('write_curves', False)
    statistic = config.option('statistic', 'prevalence' if write_curves else 'c1')
    levels = config.option('levels', DEFAULT_LEVELS)
    family = [Field.constant(level, spectrum.phi1.partition) for level in levels]
    sweep = UsicService.usic_sweep(
        config.kernel, config.params, family, config.option('level', 1e-2),
        config.option('horizon', 20.0), cfg, spectrum, statistic, config.option('spacing'),
        config.option('workers', settings.WORKERS),
    )
    for index, trajectory in enumerate(sweep.trajectories):
        _record_integration(manifest, trajectory, f'member_{index}')
    manifest.constants['hypothesis_holds'] = sweep.hypothesis_holds
    _record(manifest, out_dir, write_yaml(out_dir / 'sweep.yaml', sweep.to_dict()))
    if write_curves:
        reference = sweep.reports[0][0].t1
        for index, trajectory in enumerate(sweep.trajectories):
            _record(manifest, out_dir,
                    write_trajectory_csv(out_dir / f'curve_{index}.csv', trajectory))
            shift = sweep.reports[index][index].t1 - reference
            _record(manifest, out_dir, write_trajectory_csv(
                out_dir / f'aligned_{index}.csv', trajectory.shifted(-shift)))
    manifest.record_property('usic_trend', sweep.trend_ok,
                             measured=sweep.max_sup_distance)


def _eternal(config, settings, cfg, spectrum, epsilon0=None):
    return UsicService.construct_eternal(
        config.kernel, config.params, epsilon0 or config.option('epsilon0'),
        config.option('n_stages', 8), config.option('t_fwd', 20.0),
        config.option('samples_per_unit', 50), cfg, spectrum,
        config.option('workers', settings.WORKERS),
    )


def _run_eternal(config, settings, cfg, out_dir, manifest):
    spectrum = _spectrum(config, manifest, with_lambda2=False)
    eternal = _eternal(config, settings, cfg, spectrum)
    _record_integration(manifest, eternal.trajectory, 'final_stage')
    manifest.constants['epsilon0'] = eternal.epsilon0
    _record(manifest, out_dir, write_yaml(out_dir / 'eternal.yaml', eternal.to_dict()))
    _record(manifest, out_dir, write_trajectory_csv(out_dir / 'eternal.csv', eternal.trajectory))
    _record(manifest, out_dir, write_csv(
        out_dir / 'alignment_ratio.csv', ['t', 'alignment_ratio'],
        zip(eternal.trajectory.times, eternal.alignment_ratio)))
    manifest.record_property('cauchy_ratio', eternal.converged,
                             measured=eternal.gap_ratio, bound=eternal.max_gap_ratio)
    manifest.record_property('early_alignment', eternal.alignment_ok,
                             measured=eternal.early_alignment, bound=eternal.min_alignment,
                             window=list(eternal.early_window))
    manifest.record_property('eternal_decay', eternal.decay_ok,
                             measured=float(eternal.trajectory.prevalence[0]),
                             bound=2.0 * eternal.epsilon_final)
    if config.option('eps_a') and config.option('eps_b'):
        uniqueness = UsicService.uniqueness_check(
            config.kernel, config.params, config.option('eps_a'), config.option('eps_b'),
            config.option('n_stages', 8), config.option('uniqueness_tol', 5e-3),
            config.option('t_fwd', 20.0), config.option('samples_per_unit', 50), None, cfg,
            spectrum, config.option('workers', settings.WORKERS),
        )
        _record(manifest, out_dir, write_yaml(out_dir / 'uniqueness.yaml', uniqueness.to_dict()))
        manifest.record_property('uniqueness', uniqueness.passed,
                                 measured=uniqueness.alignment.sup_distance,
                                 bound=uniqueness.tol)


def _closed_form(config, manifest):
    cf = SIClosedFormService.build(config.kernel, config.params,
                                   anchor_prevalence=config.option('anchor_prevalence', 0.5))
    manifest.constants.update({'lambda1': cf.lambda1, 'omega0': cf.omega0,
                               'phi1_bar': cf.phi1_bar, 'cells': cf.partition.size})
    if isinstance(config.kernel, PowerLaw):
        manifest.constants.update({'grid_size': config.kernel.grid_size,
                                   'kappa': config.kernel.kappa,
                                   'phi_cap': config.kernel.phi_cap})
    return cf


def _run_si_exact(config, settings, cfg, out_dir, manifest):
    cf = _closed_form(config, manifest)
    t_start = config.option('t_start', -20.0)
    t_end = config.option('t_end', 20.0)
    times = np.linspace(t_start, t_end, config.option('samples', 401))
    curve = SIClosedFormService.omega_curve(cf, times)
    _record(manifest, out_dir, write_csv(out_dir / 'omega.csv', ['t', 'omega', 'prevalence'],
                                         curve.rows()))
    trajectory = SIClosedFormService.si_trajectory(cf, times)
    _record(manifest, out_dir, write_trajectory_csv(out_dir / 'si_trajectory.csv', trajectory))
    report = {'closed_form': cf.to_dict()}
    if config.option('compare_eternal', False):
        spectrum = _spectrum(config, manifest, with_lambda2=False)
        eternal = _eternal(config, settings, cfg, spectrum)
        exact = SIClosedFormService.si_trajectory(cf, eternal.trajectory.times)
        curves = [exact.shifted(-exact.times[0]),
                  eternal.trajectory.shifted(-eternal.trajectory.times[0])]
        level = cf.anchor_prevalence
        remaining = min(c.times[-1] - UsicService.crossing_time(c, level, 'prevalence')
                        for c in curves)
        alignment = UsicService.align(curves[0], curves[1], level, max(remaining, 0.0),
                                      'prevalence')
        tol = config.option('uniqueness_tol', 1e-3)
        report['eternal_comparison'] = alignment.to_dict()
        manifest.record_property('closed_form_matches_eternal', alignment.sup_distance <= tol,
                                 measured=alignment.sup_distance, bound=tol)
    _record(manifest, out_dir, write_yaml(out_dir / 'si_exact.yaml', report))


def _run_chi_curve(config, settings, cfg, out_dir, manifest):
    cf = _closed_form(config, manifest)
    curve = SIClosedFormService.chi_curve(cf, config.option('n_samples', 100))
    _record(manifest, out_dir, write_csv(out_dir / 'chi.csv', ['prevalence', 'si_links'],
                                         curve.rows()))
    report = {'chi': curve.to_dict()}
    if config.option('trajectory_oracle', False):
        t_start = config.option('t_start', -10.0)
        t_end = config.option('t_end', 10.0)
        times = np.linspace(t_start, t_end, config.option('samples', 201))
        u0 = SIClosedFormService.si_state(cf, t_start)
        spectrum = _spectrum(config, manifest, with_lambda2=False)
        trajectory = DynamicsService.integrate(config.kernel, config.params, u0,
                                               (t_start, t_end), cfg, times, spectrum)
        _record_integration(manifest, trajectory)
        oracle = SIClosedFormService.chi_from_trajectory(config.kernel, trajectory)
        usable = oracle.prevalence < SIClosedFormService.saturation(cf) - 1e-9
        predicted = np.array([SIClosedFormService.chi_at(cf, u)
                              for u in oracle.prevalence[usable]])
        gap = float(np.max(np.abs(predicted - oracle.si_links[usable])))
        report['trajectory_oracle_gap'] = gap
        _record(manifest, out_dir, write_csv(out_dir / 'chi_oracle.csv',
                                             ['prevalence', 'si_links'], oracle.rows()))
        manifest.record_property('chi_oracle', gap <= 1e-4, measured=gap, bound=1e-4)
    _record(manifest, out_dir, write_yaml(out_dir / 'chi_curve.yaml', report))


def _run_verify_bounds(config, settings, cfg, out_dir, manifest):
    kernel, params = config.kernel, config.params
    spectrum = _spectrum(config, manifest, with_lambda2=False)
    u0 = _initial_state(config, spectrum, 1e-4)
    bounds = DynamicsService.verify_linearization_bounds(
        kernel, params, u0, config.option('eps_prime', 1e-2), cfg, spectrum,
        config.option('samples', 201),
    )
    manifest.integrator['bounds'] = dict(bounds.stats)
    manifest.constants['hypothesis_holds'] = bounds.hypothesis_holds
    for check in bounds.checks:
        manifest.record_property(check.name, check.passed, measured=check.measured,
                                 bound=check.bound)
    report = {'bounds': bounds.to_dict()}

    alpha1 = params.alpha(spectrum.lambda1)
    if config.option('lyapunov', True):
        endemic = DynamicsService.endemic_solve(
            kernel, params, manifest.tolerances['endemic_tol'], 'auto', spectrum,
            manifest.tolerances['endemic_max_iter'],
        )
        epsilon0 = config.option('epsilon0', 0.01 * alpha1 / (params.beta * spectrum.lambda1))
        start = spectrum.phi1.with_values(np.minimum(epsilon0 * spectrum.phi1.values, 1.0))
        t_end = (math.log(1.0 / epsilon0) + 10.0) / alpha1
        times = np.linspace(0.0, t_end, config.option('samples', 201))
        trajectory = DynamicsService.integrate(kernel, params, start, (0.0, t_end), cfg, times,
                                               spectrum, with_rates=False)
        _record_integration(manifest, trajectory, 'lyapunov')
        checks = [DynamicsService.check_lyapunov_decrease(trajectory, endemic),
                  DynamicsService.check_infection_pressure(kernel, trajectory)]
        manifest.constants['epsilon0_tilde'] = checks[1].details['epsilon0_tilde']
        for check in checks:
            manifest.record_property(check.name, check.passed, measured=check.measured,
                                     bound=check.bound)
        report['lyapunov'] = [check.to_dict() for check in checks]

    if config.option('theta') is not None:
        monotone = DynamicsService.monotone_envelope(
            kernel, params, config.option('theta'), (0.0, config.option('t_end', 20.0)),
            cfg=cfg, spectrum=spectrum,
        )
        manifest.record_property('monotone_envelope', monotone.passed,
                                 measured=monotone.max_decrease)
        report['monotone'] = monotone.to_dict()

    cells = config.option('perturbation_cells')
    if cells:
        coarse = KernelService.discretize(kernel, Partition.uniform(cells[0]))
        fine = KernelService.discretize(kernel, Partition.uniform(cells[1]))
        perturbation = DynamicsService.perturbation_sensitivity(
            kernel, coarse, fine, params, config.option('u0', 1e-4),
            config.option('t_end', 10.0), cfg, max_cells=settings.REFINEMENT_MAX_CELLS,
        )
        manifest.record_property(perturbation.name, perturbation.passed,
                                 measured=perturbation.measured, bound=perturbation.bound)
        report['perturbation'] = perturbation.to_dict()

    _record(manifest, out_dir, write_yaml(out_dir / 'bounds.yaml', report))


RUNNERS = {
    'spectrum': _run_spectrum,
    'endemic': _run_endemic,
    'simulate': _run_simulate,
    'usic-align': _run_usic_align,
    'eternal': _run_eternal,
    'si-exact': _run_si_exact,
    'chi-curve': _run_chi_curve,
    'verify-bounds': _run_verify_bounds,
}

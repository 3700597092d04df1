from pathlib import Path

import pytest
from marshmallow import ValidationError

from graphon_sis.models import DiscreteBlock, PowerLaw
from graphon_sis.schemas import ExperimentSchema, dump_kernel, load_kernel
from graphon_sis.services import ExperimentService
from graphon_sis.utils.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'

MINIMAL = """
experiment: simulate
kernel:
  variant: constant
params:
  beta: 1.0
  gamma: 0.0
"""


class TestKernelSchema:
    def test_constant_defaults(self, settings):
        kernel = load_kernel({'variant': 'constant'}, settings)
        assert isinstance(kernel, DiscreteBlock)
        assert kernel.matrix[0, 0] == 1.0

    def test_power_law_uses_configured_grid(self, settings):
        kernel = load_kernel({'variant': 'power_law', 'lambda1': 1.0, 'p': 0.4}, settings)
        assert isinstance(kernel, PowerLaw)
        assert kernel.grid_size == settings.POWER_LAW_GRID_SIZE

    def test_power_law_is_uncapped_by_default(self, settings):
        kernel = load_kernel({'variant': 'power_law', 'lambda1': 1.0, 'p': 0.4}, settings)
        assert kernel.phi_cap is None
        assert kernel.kappa == pytest.approx(10.0)

    def test_power_law_cap_from_settings(self, settings):
        class Capped(settings):
            POWER_LAW_PHI_CAP = 1e3

        kernel = load_kernel({'variant': 'power_law', 'lambda1': 1.0, 'p': 0.4}, Capped)
        assert kernel.phi_cap == 1e3
        assert kernel.kappa < 10.0
        assert kernel.phi1.values.max() <= 1e3 * (1.0 + 1e-6)

    def test_power_law_cap_must_be_positive(self, settings):
        with pytest.raises(ValidationError) as excinfo:
            load_kernel({'variant': 'power_law', 'lambda1': 1.0, 'p': 0.4, 'phi_cap': 0.0},
                        settings)
        assert 'phi_cap' in excinfo.value.messages

    def test_power_law_exponent(self, settings):
        with pytest.raises(ValidationError) as excinfo:
            load_kernel({'variant': 'power_law', 'lambda1': 1.0, 'p': 0.6}, settings)
        assert 'p < 1/2' in str(excinfo.value.messages['p'])

    def test_asymmetric_matrix(self, settings):
        data = {'variant': 'discrete_block', 'cell_weights': [0.5, 0.5],
                'matrix': [[1.0, 2.0], [0.0, 1.0]]}
        with pytest.raises(ValidationError) as excinfo:
            load_kernel(data, settings)
        assert 'matrix' in excinfo.value.messages

    def test_unknown_key(self, settings):
        with pytest.raises(ValidationError) as excinfo:
            load_kernel({'variant': 'constant', 'colour': 'red'}, settings)
        assert 'colour' in excinfo.value.messages

    def test_unknown_variant(self, settings):
        with pytest.raises(ValidationError):
            load_kernel({'variant': 'fractal'}, settings)

    def test_dump_round_trip(self, settings, five_block):
        kernel = load_kernel(dump_kernel(five_block), settings)
        assert (kernel.matrix == five_block.matrix).all()

    def test_annealed(self, settings):
        kernel = load_kernel({'variant': 'annealed', 'degrees': [1, 2], 'p_k': [0.5, 0.5]},
                             settings)
        assert kernel.annealed.uncorrelated


class TestParseConfig:
    def test_minimal_simulate(self, settings):
        config = ExperimentService.parse_config(MINIMAL, config_class=settings)
        assert config.experiment == 'simulate'
        assert config.params.beta == 1.0
        assert config.options == {}
        assert config.kernel_source == 'inline'
        assert config.to_dict()['kernel'] == {'variant': 'constant'}

    def test_collects_every_error(self, settings):
        text = """
experiment: run-everything
kernel:
  variant: power_law
  lambda1: 1.0
  p: 0.6
params:
  beta: -1.0
options:
  colour: red
"""
        with pytest.raises(ConfigError) as excinfo:
            ExperimentService.parse_config(text, config_class=settings)
        errors = excinfo.value.errors
        assert any(e.startswith('experiment:') for e in errors)
        assert any('p < 1/2' in e for e in errors)
        assert any(e.startswith('params.') for e in errors)
        assert any(e.startswith('options.colour') for e in errors)

    def test_missing_kernel(self, settings):
        with pytest.raises(ConfigError) as excinfo:
            ExperimentService.parse_config('experiment: spectrum\nparams: {beta: 1, gamma: 0}\n',
                                           config_class=settings)
        assert any(e.startswith('kernel:') for e in excinfo.value.errors)

    def test_overrides(self, settings):
        config = ExperimentService.parse_config(
            MINIMAL, ['params.beta=2.5', 'options.levels=[0.1, 0.01]'], config_class=settings
        )
        assert config.params.beta == 2.5
        assert config.options['levels'] == [0.1, 0.01]
        assert config.to_dict()['params']['beta'] == 2.5

    def test_malformed_override(self, settings):
        with pytest.raises(ConfigError):
            ExperimentService.parse_config(MINIMAL, ['params.beta'], config_class=settings)

    def test_experiment_mismatch(self, settings):
        with pytest.raises(ConfigError):
            ExperimentService.parse_config(MINIMAL, config_class=settings, experiment='spectrum')

    def test_power_law_sweep_config(self, settings):
        config = ExperimentService.load_config(CONFIGS / 'usic_align_power_law.yaml',
                                               config_class=settings)
        assert config.experiment == 'usic-align'
        assert isinstance(config.kernel, PowerLaw)
        assert config.kernel.p == 0.4
        assert config.params.gamma == 0.0
        assert config.options['levels'] == [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
        assert config.kernel_source.endswith('power_law_p04.yaml')
        assert config.kernel.phi_cap == 1e3
        assert config.kernel.grid_size == 2000

    def test_missing_kernel_file(self, settings, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text(MINIMAL.replace('kernel:\n  variant: constant', 'kernel: nowhere.yaml'))
        with pytest.raises(ConfigError) as excinfo:
            ExperimentService.load_config(path, config_class=settings)
        assert any('not found' in e for e in excinfo.value.errors)

    def test_schema_loads_directly(self, settings):
        schema = ExperimentSchema()
        schema.context['config'] = settings
        config = schema.load({'experiment': 'spectrum', 'kernel': {'variant': 'constant'},
                              'params': {'beta': 1.0, 'gamma': 0.0}})
        assert config.experiment == 'spectrum'

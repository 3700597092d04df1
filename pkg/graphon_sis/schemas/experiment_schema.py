"""
Experiment schema definition.
This module contains Marshmallow schemas for experiment configuration files.
"""

from marshmallow import Schema, fields, post_load, validate

from graphon_sis.models.experiment import EXPERIMENTS, ExperimentConfig
from graphon_sis.models.kernel import EpidemicParams
from graphon_sis.schemas.kernel_schema import KernelField

POSITIVE = validate.Range(min=0.0, min_inclusive=False)


def _positive(**kwargs):
    return fields.Float(allow_nan=False, validate=POSITIVE, **kwargs)


class ParamsSchema(Schema):
    """Schema for the epidemic parameters."""

    beta = fields.Float(
        required=True,
        allow_nan=False,
        validate=validate.Range(min=0.0, min_inclusive=False, error='beta must be positive'),
        error_messages={'required': 'beta is required'},
    )
    gamma = fields.Float(
        load_default=0.0,
        allow_nan=False,
        validate=validate.Range(min=0.0, error='gamma must be non-negative'),
    )

    @post_load
    def make_params(self, data, **kwargs):
        return EpidemicParams(data['beta'], data['gamma'])


class TolerancesSchema(Schema):
    """Schema for numerical tolerance overrides."""

    rel_tol = _positive()
    abs_tol = _positive()
    state_tol = _positive()
    sample_tol = _positive()
    max_step = _positive()
    eigen_tol = _positive()
    eigen_max_iter = fields.Int(validate=validate.Range(min=1))
    endemic_tol = _positive()
    endemic_max_iter = fields.Int(validate=validate.Range(min=1))


class OptionsSchema(Schema):
    """Schema for experiment-specific options (all optional)."""

    # initial data
    u0 = fields.Float(validate=validate.Range(min=0.0, max=1.0))
    initial_profile = fields.Str(validate=validate.OneOf(['uniform', 'phi1']))
    levels = fields.List(fields.Float(validate=validate.Range(min=0.0, max=1.0,
                                                              min_inclusive=False)),
                         validate=validate.Length(min=1))

    # time grids
    t_start = fields.Float(allow_nan=False)
    t_end = _positive()
    samples = fields.Int(validate=validate.Range(min=2))
    spacing = _positive()
    wide = fields.Bool()

    # alignment
    level = _positive()
    horizon = fields.Float(validate=validate.Range(min=0.0))
    statistic = fields.Str(validate=validate.OneOf(['c1', 'prevalence']))
    write_curves = fields.Bool()

    # eternal solution
    n_stages = fields.Int(validate=validate.Range(min=1))
    t_fwd = _positive()
    samples_per_unit = fields.Int(validate=validate.Range(min=1))
    epsilon0 = _positive()
    eps_a = _positive()
    eps_b = _positive()
    uniqueness_tol = _positive()
    compare_eternal = fields.Bool()

    # closed forms
    anchor_prevalence = fields.Float(validate=validate.Range(min=0.0, max=1.0,
                                                             min_inclusive=False,
                                                             max_inclusive=False))
    n_samples = fields.Int(validate=validate.Range(min=2))
    c0 = fields.Float(validate=validate.Range(min=0.0, max=1.0, min_inclusive=False,
                                              max_inclusive=False))
    trajectory_oracle = fields.Bool()

    # endemic and bounds
    method = fields.Str(validate=validate.OneOf(['auto', 'bisection', 'fixed_point']))
    eps_prime = _positive()
    theta = fields.Float(validate=validate.Range(min=0.0))
    lyapunov = fields.Bool()
    perturbation_cells = fields.List(fields.Int(validate=validate.Range(min=1)),
                                     validate=validate.Length(equal=2))

    workers = fields.Int(validate=validate.Range(min=1))


class ExperimentSchema(Schema):
    """Schema for a complete experiment configuration."""

    experiment = fields.Str(
        required=True,
        validate=validate.OneOf(EXPERIMENTS),
        error_messages={'required': 'experiment is required'},
    )
    kernel = KernelField(required=True, error_messages={'required': 'Kernel is required'})
    params = fields.Nested(ParamsSchema, required=True,
                           error_messages={'required': 'params is required'})
    options = fields.Nested(OptionsSchema, load_default=dict)
    output_dir = fields.Str(load_default=None)
    tolerances = fields.Nested(TolerancesSchema, load_default=dict)

    @post_load
    def make_config(self, data, **kwargs):
        return ExperimentConfig(
            experiment=data['experiment'],
            kernel=data['kernel'],
            params=data['params'],
            options=data['options'],
            output_dir=data['output_dir'],
            tolerances=data['tolerances'],
            kernel_source=self.context.get('kernel_source', 'inline'),
        )

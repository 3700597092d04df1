"""
Kernel schema definition.
This module contains Marshmallow schemas for the kernel file format. Every
kernel block carries a 'variant' discriminator.
"""

from pathlib import Path

import numpy as np
import yaml
from marshmallow import Schema, ValidationError, fields, post_load, validate

from graphon_sis.config import Config
from graphon_sis.models.field import Field, Partition
from graphon_sis.models.kernel import DiscreteBlock, GridSampled, PowerLaw, RankOne
from graphon_sis.services.kernel_service import KernelService
from graphon_sis.utils.errors import GraphonSISError

VARIANTS = ('discrete_block', 'grid_sampled', 'power_law', 'rank_one', 'annealed', 'constant')


def _real(**kwargs):
    return fields.Float(allow_nan=False, **kwargs)


def _vector(**kwargs):
    return fields.List(_real(), validate=validate.Length(min=1), **kwargs)


def _matrix(**kwargs):
    return fields.List(fields.List(_real()), validate=validate.Length(min=1), **kwargs)


def _build(key, factory, *args):
    """Run a model constructor, mapping library errors onto a schema field."""
    try:
        return factory(*args)
    except GraphonSISError as e:
        raise ValidationError({key: [str(e)]}) from e


class DiscreteBlockSchema(Schema):
    """Schema for block kernels: cell weights then a dense row-major matrix."""

    variant = fields.Str(required=True, validate=validate.Equal('discrete_block'))
    cell_weights = _vector(required=True, error_messages={'required': 'cell_weights is required'})
    matrix = _matrix(required=True, error_messages={'required': 'matrix is required'})

    @post_load
    def make_kernel(self, data, **kwargs):
        partition = _build('cell_weights', Partition.from_weights, data['cell_weights'])
        return _build('matrix', DiscreteBlock, np.array(data['matrix'], dtype=float), partition)


class GridSampledSchema(Schema):
    """Schema for grid-sampled kernels on explicit edges or a uniform grid."""

    variant = fields.Str(required=True, validate=validate.Equal('grid_sampled'))
    cell_edges = _vector(load_default=None)
    cells = fields.Int(load_default=None, validate=validate.Range(min=1))
    values = _matrix(required=True, error_messages={'required': 'values is required'})

    @post_load
    def make_kernel(self, data, **kwargs):
        values = np.array(data['values'], dtype=float)
        if data['cell_edges'] is not None:
            partition = _build('cell_edges', Partition, data['cell_edges'])
        else:
            partition = Partition.uniform(data['cells'] or len(values))
        return _build('values', GridSampled, values, partition)


class PowerLawSchema(Schema):
    """Schema for power-law kernels {lambda1, p, grid_size, kappa, phi_cap}."""

    variant = fields.Str(required=True, validate=validate.Equal('power_law'))
    lambda1 = _real(
        required=True,
        validate=validate.Range(min=0.0, min_inclusive=False),
        error_messages={'required': 'lambda1 is required'},
    )
    p = _real(
        required=True,
        validate=validate.Range(
            min=0.0, max=0.5, max_inclusive=False,
            error='Power-law exponent must satisfy 0 <= p < 1/2',
        ),
        error_messages={'required': 'p is required'},
    )
    grid_size = fields.Int(load_default=None, validate=validate.Range(min=1))
    kappa = _real(load_default=None, validate=validate.Range(min=1.0))
    phi_cap = _real(load_default=None, validate=validate.Range(min=0.0, min_inclusive=False))

    @post_load
    def make_kernel(self, data, **kwargs):
        settings = self.context.get('config') or Config
        grid_size = data['grid_size'] or settings.POWER_LAW_GRID_SIZE
        phi_cap = data['phi_cap'] or settings.POWER_LAW_PHI_CAP
        return _build('p', PowerLaw.create, data['lambda1'], data['p'], grid_size,
                      data['kappa'], phi_cap)


class RankOneSchema(Schema):
    """Schema for rank-1 kernels with a tabulated eigenfunction."""

    variant = fields.Str(required=True, validate=validate.Equal('rank_one'))
    lambda1 = _real(required=True, validate=validate.Range(min=0.0, min_inclusive=False))
    cell_weights = _vector(required=True)
    phi1 = _vector(required=True)

    @post_load
    def make_kernel(self, data, **kwargs):
        partition = _build('cell_weights', Partition.from_weights, data['cell_weights'])
        phi = _build('phi1', Field, data['phi1'], partition)
        return _build('phi1', RankOne, data['lambda1'], phi)


class ConditionalField(fields.Field):
    """Either the string 'uncorrelated' or a square matrix."""

    def _deserialize(self, value, attr, data, **kwargs):
        if value == 'uncorrelated':
            return value
        if isinstance(value, list) and all(isinstance(row, list) for row in value):
            try:
                return np.array(value, dtype=float)
            except (TypeError, ValueError) as e:
                raise ValidationError('Conditional matrix must be numeric') from e
        raise ValidationError("Conditional must be 'uncorrelated' or a matrix")


class AnnealedSchema(Schema):
    """Schema for annealed networks given by degree classes."""

    variant = fields.Str(required=True, validate=validate.Equal('annealed'))
    degrees = _vector(required=True)
    p_k = _vector(required=True)
    conditional = ConditionalField(load_default='uncorrelated')

    @post_load
    def make_kernel(self, data, **kwargs):
        return _build('conditional', KernelService.build_annealed, data['degrees'],
                      data['p_k'], data['conditional'])


class ConstantSchema(Schema):
    """Schema for the constant kernel W = value."""

    variant = fields.Str(required=True, validate=validate.Equal('constant'))
    value = _real(load_default=1.0, validate=validate.Range(min=0.0))
    cells = fields.Int(load_default=1, validate=validate.Range(min=1))

    @post_load
    def make_kernel(self, data, **kwargs):
        return KernelService.constant(data['value'], data['cells'])


KERNEL_SCHEMAS = {
    'discrete_block': DiscreteBlockSchema,
    'grid_sampled': GridSampledSchema,
    'power_law': PowerLawSchema,
    'rank_one': RankOneSchema,
    'annealed': AnnealedSchema,
    'constant': ConstantSchema,
}


def load_kernel(data, config=None):
    """
    Validate a kernel block and build the kernel.

    Args:
        data (dict): Kernel block with a 'variant' key
        config (type): Configuration class supplying power-law defaults

    Returns:
        KernelSpec: The kernel

    Raises:
        ValidationError: With every problem found in the block
    """
    if not isinstance(data, dict):
        raise ValidationError('Kernel must be a mapping')
    variant = data.get('variant')
    if variant not in KERNEL_SCHEMAS:
        raise ValidationError({'variant': [f'Must be one of: {", ".join(VARIANTS)}.']})
    schema = KERNEL_SCHEMAS[variant]()
    schema.context['config'] = config
    return schema.load(data)


class KernelField(fields.Field):
    """A kernel given inline or as a path to a kernel file."""

    def _deserialize(self, value, attr, data, **kwargs):
        context = self.parent.context if self.parent is not None else {}
        source = 'inline'
        if isinstance(value, str):
            path = Path(value)
            if not path.is_absolute() and context.get('base_dir'):
                path = Path(context['base_dir']) / path
            if not path.is_file():
                raise ValidationError(f'Kernel file not found: {value}')
            with open(path, encoding='utf-8') as handle:
                try:
                    value = yaml.safe_load(handle)
                except yaml.YAMLError as e:
                    raise ValidationError(f'Kernel file is not valid YAML: {e}') from e
            source = str(path)
        kernel = load_kernel(value, context.get('config'))
        context['kernel_source'] = source
        return kernel


def dump_kernel(kernel):
    """Kernel file block of a kernel."""
    return kernel.to_dict()

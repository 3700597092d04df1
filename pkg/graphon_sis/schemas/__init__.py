"""Marshmallow schemas for kernel files and experiment configurations."""

from graphon_sis.schemas.experiment_schema import ExperimentSchema
from graphon_sis.schemas.kernel_schema import dump_kernel, load_kernel

__all__ = ['ExperimentSchema', 'dump_kernel', 'load_kernel']

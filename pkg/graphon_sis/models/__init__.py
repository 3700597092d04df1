"""Domain types of the graphon SIS library."""

from graphon_sis.models.closed_form import ChiCurve, OmegaCurve, SIClosedForm
from graphon_sis.models.experiment import EXPERIMENTS, ExperimentConfig, RunManifest
from graphon_sis.models.field import Field, Partition
from graphon_sis.models.kernel import (
    AnnealedData,
    DiscreteBlock,
    EpidemicParams,
    GridSampled,
    KernelSpec,
    ModalBasis,
    PowerLaw,
    RankOne,
    Spectrum,
)
from graphon_sis.models.reports import BoundReport, EndemicState, MonotoneReport, PropertyReport
from graphon_sis.models.trajectory import IntegratorConfig, Trajectory
from graphon_sis.models.usic import (
    AlignmentReport,
    EternalSolution,
    SweepReport,
    UniquenessReport,
)

__all__ = [
    'AlignmentReport',
    'AnnealedData',
    'BoundReport',
    'ChiCurve',
    'DiscreteBlock',
    'EXPERIMENTS',
    'EndemicState',
    'EpidemicParams',
    'EternalSolution',
    'ExperimentConfig',
    'Field',
    'GridSampled',
    'IntegratorConfig',
    'KernelSpec',
    'ModalBasis',
    'MonotoneReport',
    'OmegaCurve',
    'Partition',
    'PowerLaw',
    'PropertyReport',
    'RankOne',
    'RunManifest',
    'SIClosedForm',
    'Spectrum',
    'SweepReport',
    'Trajectory',
    'UniquenessReport',
]

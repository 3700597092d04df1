from graphon_sis.services.dynamics_service import DynamicsService
from graphon_sis.services.experiment_service import ExperimentService
from graphon_sis.services.kernel_service import KernelService
from graphon_sis.services.si_closed_form_service import SIClosedFormService
from graphon_sis.services.usic_service import UsicService

__all__ = [
    'DynamicsService',
    'ExperimentService',
    'KernelService',
    'SIClosedFormService',
    'UsicService',
]

"""
Error definitions.
This module contains the exception hierarchy raised by the services.
"""


class GraphonSISError(Exception):
    """Base class for all library errors."""

    module = 'graphon_sis'

    def __init__(self, message, *, module=None, operation=None, **details):
        super().__init__(message)
        if module:
            self.module = module
        self.operation = operation
        self.details = details

    @property
    def context(self):
        """Dotted module/operation label used in rendered errors."""
        if self.operation:
            return f'{self.module}.{self.operation}'
        return self.module

    def to_dict(self):
        """Render the error in the response envelope used by the CLI."""
        return {
            'success': False,
            'error': str(self),
            'message': f'{self.context} failed',
            'details': self.details,
        }


class DimensionError(GraphonSISError, ValueError):
    module = 'kernel'


class KernelValidationError(GraphonSISError, ValueError):
    module = 'kernel'


class InvalidCorrelationError(KernelValidationError):
    pass


class IterationError(GraphonSISError, RuntimeError):
    module = 'kernel'

    def __init__(self, message, *, last_residual=None, **kwargs):
        super().__init__(message, last_residual=last_residual, **kwargs)
        self.last_residual = last_residual


class RefinementError(GraphonSISError, ValueError):
    module = 'kernel'


class KernelTypeError(GraphonSISError, TypeError):
    module = 'kernel'


class DomainError(GraphonSISError, RuntimeError):
    module = 'dynamics'


class StiffnessError(GraphonSISError, RuntimeError):
    module = 'dynamics'


class TruncationError(GraphonSISError, ValueError):
    module = 'dynamics'


class NoEndemicStateError(GraphonSISError, ValueError):
    module = 'dynamics'


class SolverError(GraphonSISError, RuntimeError):
    module = 'dynamics'


class UndefinedTimeError(GraphonSISError, ValueError):
    module = 'dynamics'


class ParameterError(GraphonSISError, ValueError):
    module = 'dynamics'


class InsufficientHorizonError(GraphonSISError, ValueError):
    module = 'usic'


class UnreachableLevelError(GraphonSISError, ValueError):
    module = 'usic'


class SaturationError(GraphonSISError, ValueError):
    module = 'si_closed_form'


class OmegaUnderflowError(GraphonSISError, RuntimeError):
    module = 'si_closed_form'


class ConfigError(GraphonSISError, ValueError):
    """Invalid experiment configuration; carries every validation message."""

    module = 'cli_io'

    def __init__(self, message, errors=None, **kwargs):
        self.errors = list(errors or [])
        super().__init__(message, errors=self.errors, **kwargs)

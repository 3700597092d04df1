"""
Experiment model definitions.
This module contains the validated experiment configuration and the run
manifest written next to every result set.
"""

from dataclasses import dataclass, field

EXPERIMENTS = (
    'simulate',
    'spectrum',
    'endemic',
    'usic-align',
    'eternal',
    'si-exact',
    'chi-curve',
    'verify-bounds',
)


@dataclass
class ExperimentConfig:
    """A parsed experiment configuration."""

    experiment: str
    kernel: object
    params: object
    options: dict = field(default_factory=dict)
    output_dir: str = None
    tolerances: dict = field(default_factory=dict)
    kernel_source: str = 'inline'
    echo: dict = field(default_factory=dict)

    def option(self, key, default=None):
        value = self.options.get(key)
        return default if value is None else value

    def to_dict(self):
        return dict(self.echo)


@dataclass
class RunManifest:
    """Record of one experiment run."""

    experiment: str
    version: str
    config: dict
    status: str = 'ok'
    exit_code: int = 0
    wall_clock: float = 0.0
    integrator: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    properties: list = field(default_factory=list)
    files: list = field(default_factory=list)
    error: dict = None

    def record_property(self, name, passed, **values):
        self.properties.append({'name': name, 'passed': bool(passed), **values})
        if not passed and self.exit_code == 0:
            self.status = 'property_failure'
            self.exit_code = 1

    def to_dict(self):
        data = {
            'experiment': self.experiment,
            'version': self.version,
            'status': self.status,
            'exit_code': self.exit_code,
            'wall_clock': self.wall_clock,
            'config': self.config,
            'tolerances': self.tolerances,
            'integrator': self.integrator,
            'constants': self.constants,
            'properties': self.properties,
            'files': self.files,
        }
        if self.error is not None:
            data['error'] = self.error
        return data

"""
Dynamics report definitions.
This module contains the endemic state and the property/bound reports
produced by the dynamics service. Property failures are reported here,
never raised.
"""

from dataclasses import dataclass, field

from graphon_sis.models.field import Field
from graphon_sis.models.trajectory import Trajectory


@dataclass(frozen=True, eq=False)
class EndemicState:
    """Nonzero stationary state psi of the SIS flow."""

    psi: Field
    residual: float
    c_star: float = None
    iterations: int = 0
    method: str = 'closed'

    def to_dict(self):
        return {
            'residual': self.residual,
            'c_star': self.c_star,
            'iterations': self.iterations,
            'method': self.method,
            'prevalence': self.psi.integral(),
            'psi_min': float(self.psi.values.min()),
            'psi_max': float(self.psi.values.max()),
        }


@dataclass(frozen=True)
class PropertyReport:
    """Outcome of one numerical property check."""

    name: str
    passed: bool
    measured: float
    bound: float = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'name': self.name,
            'passed': self.passed,
            'measured': self.measured,
            'bound': self.bound,
            'details': dict(self.details),
        }


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Measured linearization errors against their theoretical bounds."""

    t_bar: float
    t_hat: float
    eps_prime: float
    c1_initial: float
    norm_initial: float
    checks: list
    hypothesis_holds: bool
    stats: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def check(self, name):
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self):
        return {
            'passed': self.passed,
            't_bar': self.t_bar,
            't_hat': self.t_hat,
            'eps_prime': self.eps_prime,
            'c1_initial': self.c1_initial,
            'norm_initial': self.norm_initial,
            'hypothesis_holds': self.hypothesis_holds,
            'checks': [check.to_dict() for check in self.checks],
            'stats': dict(self.stats),
        }


@dataclass(frozen=True, eq=False)
class MonotoneReport:
    """Trajectory started from theta * phi1 with its monotonicity verdict."""

    trajectory: Trajectory
    theta: float
    theta0: float
    max_decrease: float
    passed: bool

    def to_dict(self):
        return {
            'passed': self.passed,
            'theta': self.theta,
            'theta0': self.theta0,
            'max_decrease': self.max_decrease,
            'trajectory': self.trajectory.to_dict(),
        }

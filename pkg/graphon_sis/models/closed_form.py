"""
Closed-form SI model definitions.
This module contains the separated-variable SI solution data and the
prevalence-to-SI-links curve.
"""

from dataclasses import dataclass

import numpy as np

from graphon_sis.models.field import Field


@dataclass(frozen=True, eq=False)
class SIClosedForm:
    """
    Data of the SI eternal solution u(t, x) = 1 - exp(-Omega(t) phi1(x)).

    rate is beta * lambda1; Omega solves dOmega/dt = rate * F(Omega) with
    Omega(0) = omega0.
    """

    phi1: Field
    lambda1: float
    rate: float
    omega0: float
    anchor_prevalence: float = 0.5

    @property
    def phi1_bar(self):
        return self.phi1.integral()

    @property
    def partition(self):
        return self.phi1.partition

    def to_dict(self):
        return {
            'lambda1': self.lambda1,
            'rate': self.rate,
            'omega0': self.omega0,
            'anchor_prevalence': self.anchor_prevalence,
            'phi1_bar': self.phi1_bar,
            'cells': self.partition.size,
        }


@dataclass(frozen=True, eq=False)
class OmegaCurve:
    times: np.ndarray
    omega: np.ndarray
    prevalence: np.ndarray

    def rows(self):
        return zip(self.times, self.omega, self.prevalence)


@dataclass(frozen=True, eq=False)
class ChiCurve:
    """Samples (prevalence, SI links) of the chi mapping."""

    prevalence: np.ndarray
    si_links: np.ndarray
    phi1_bar: float
    omega: np.ndarray = None

    def rows(self):
        return zip(self.prevalence, self.si_links)

    def to_dict(self):
        return {
            'samples': int(self.prevalence.size),
            'phi1_bar': self.phi1_bar,
            'max_si_links': float(self.si_links.max()),
            'prevalence_range': [float(self.prevalence.min()), float(self.prevalence.max())],
        }

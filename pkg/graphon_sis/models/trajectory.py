"""
Trajectory definitions.
This module contains the sampled solution of the SIS flow, its scalar
summaries and the integrator configuration.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from graphon_sis.config import Config
from graphon_sis.models.field import Field, Partition
from graphon_sis.utils.errors import DimensionError, ParameterError

INTERPOLATION_CHUNK = 256


@dataclass(frozen=True)
class IntegratorConfig:
    """
    Adaptive RK 4(5) settings.

    state_tol bounds how far accepted steps may leave [0, 1]. sample_tol
    bounds the dense-output overshoot that is clipped back onto [0, 1].
    A run whose step stays below min_step_ratio * (t_b - t_a) for
    stiff_steps consecutive steps is stopped as stiff.
    """

    rel_tol: float = Config.REL_TOL
    abs_tol: float = Config.ABS_TOL
    max_step: float = math.inf
    method: str = 'RK45'
    state_tol: float = Config.STATE_TOL
    sample_tol: float = Config.SAMPLE_TOL
    min_step_ratio: float = Config.MIN_STEP_RATIO
    stiff_steps: int = Config.STIFF_STEPS

    def __post_init__(self):
        tolerances = (self.rel_tol, self.abs_tol, self.state_tol, self.sample_tol,
                      self.min_step_ratio)
        if not all(value > 0.0 for value in tolerances):
            raise ParameterError('Integrator tolerances must be positive', operation='integrate')
        if not self.max_step > 0.0:
            raise ParameterError('max_step must be positive', operation='integrate')
        if int(self.stiff_steps) < 1:
            raise ParameterError('stiff_steps must be at least 1', operation='integrate')
        if self.method != 'RK45':
            raise ParameterError(
                f'Unsupported integration method {self.method!r}', operation='integrate'
            )

    @classmethod
    def from_config(cls, config, **overrides):
        """Build from a configuration class (see graphon_sis.config)."""
        values = {
            'rel_tol': config.REL_TOL,
            'abs_tol': config.ABS_TOL,
            'state_tol': config.STATE_TOL,
            'sample_tol': config.SAMPLE_TOL,
            'min_step_ratio': config.MIN_STEP_RATIO,
            'stiff_steps': config.STIFF_STEPS,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self):
        return {
            'rel_tol': self.rel_tol,
            'abs_tol': self.abs_tol,
            'max_step': self.max_step,
            'method': self.method,
            'state_tol': self.state_tol,
            'sample_tol': self.sample_tol,
            'min_step_ratio': self.min_step_ratio,
            'stiff_steps': self.stiff_steps,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Sampled solution u(t, .) of the SIS flow.

    states has one row per sample time. rates, when present, holds du/dt at
    the samples and is used for Hermite resampling. Summaries are computed
    from states clipped to [0, 1]; the stored states are left untouched.
    """

    times: np.ndarray
    states: np.ndarray
    partition: Partition
    phi1: Field = None
    rates: np.ndarray = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape != (times.size, self.partition.size):
            raise DimensionError(
                f'States of shape {states.shape} do not match {times.size} times '
                f'x {self.partition.size} cells',
                operation='trajectory',
            )
        if times.size > 1 and np.any(np.diff(times) <= 0.0):
            raise ParameterError('Trajectory times must be strictly increasing',
                                 operation='trajectory')
        times.flags.writeable = False
        states.flags.writeable = False
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'states', states)
        if self.rates is not None:
            rates = np.array(self.rates, dtype=float)
            rates.flags.writeable = False
            object.__setattr__(self, 'rates', rates)
        clipped = np.clip(states, 0.0, 1.0)
        weights = self.partition.cell_weights
        object.__setattr__(self, '_prevalence', clipped @ weights)
        object.__setattr__(self, '_l2', np.sqrt((clipped ** 2) @ weights))
        if self.phi1 is not None:
            object.__setattr__(self, '_c1', clipped @ (weights * self.phi1.values))
        else:
            object.__setattr__(self, '_c1', np.full(times.size, np.nan))

    def __repr__(self):
        return f'<Trajectory samples={self.times.size} cells={self.partition.size}>'

    def __len__(self):
        return self.times.size

    @property
    def prevalence(self):
        return self._prevalence

    @property
    def c1(self):
        return self._c1

    @property
    def l2(self):
        return self._l2

    def state(self, index):
        """State at sample index as a Field."""
        return Field(self.states[index], self.partition)

    def final_state(self):
        return self.state(-1)

    def interpolate(self, query_times):
        """
        Resample states at arbitrary times inside the sampled window.

        Uses cubic Hermite interpolation with the stored rates (finite
        differences when none are stored). Splines are built over the
        bracketing samples of each chunk of queries only.

        Args:
            query_times (array-like): Times within [times[0], times[-1]]

        Returns:
            numpy.ndarray: States with one row per query time
        """
        query = np.asarray(query_times, dtype=float)
        if query.size == 0:
            return np.empty((0, self.partition.size))
        span = self.times[-1] - self.times[0]
        slack = 1e-12 * max(1.0, abs(span))
        if query.min() < self.times[0] - slack or query.max() > self.times[-1] + slack:
            raise ParameterError('Query times outside the sampled window',
                                 operation='interpolate')
        query = np.clip(query, self.times[0], self.times[-1])
        if self.times.size == 1:
            return np.repeat(self.states[:1], query.size, axis=0)
        rates = self.rates
        if rates is None:
            rates = np.gradient(self.states, self.times, axis=0)
        out = np.empty((query.size, self.partition.size))
        order = np.argsort(query, kind='stable')
        for start in range(0, query.size, INTERPOLATION_CHUNK):
            chunk = order[start:start + INTERPOLATION_CHUNK]
            q = query[chunk]
            lo = max(int(np.searchsorted(self.times, q.min(), side='right')) - 1, 0)
            hi = min(int(np.searchsorted(self.times, q.max(), side='left')), self.times.size - 1)
            hi = max(hi, lo + 1)
            spline = CubicHermiteSpline(
                self.times[lo:hi + 1], self.states[lo:hi + 1], rates[lo:hi + 1], axis=0
            )
            out[chunk] = spline(q)
        return out

    def window(self, t_start, t_end):
        """Samples within [t_start, t_end]."""
        mask = (self.times >= t_start) & (self.times <= t_end)
        return Trajectory(
            self.times[mask],
            self.states[mask],
            self.partition,
            self.phi1,
            None if self.rates is None else self.rates[mask],
            dict(self.stats),
        )

    def shifted(self, offset):
        """Same samples with times moved by offset."""
        return Trajectory(
            self.times + offset, self.states, self.partition, self.phi1, self.rates, dict(self.stats)
        )

    def summary_rows(self):
        return zip(self.times, self.prevalence, self.c1, self.l2)

    def to_dict(self):
        return {
            'samples': int(self.times.size),
            't_start': float(self.times[0]),
            't_end': float(self.times[-1]),
            'prevalence_start': float(self.prevalence[0]),
            'prevalence_end': float(self.prevalence[-1]),
            'stats': dict(self.stats),
        }

"""
USIC model definitions.
This module contains the alignment, sweep, eternal-solution and uniqueness
reports.
"""

from dataclasses import dataclass, field

import numpy as np

from graphon_sis.models.trajectory import Trajectory


@dataclass(frozen=True)
class AlignmentReport:
    """Time shifts that align two trajectories at a crossing level."""

    t1: float
    t2: float
    sup_distance: float
    pre_shift_max: float
    level: float
    horizon: float
    statistic: str = 'c1'

    def to_dict(self):
        return {
            't1': self.t1,
            't2': self.t2,
            'sup_distance': self.sup_distance,
            'pre_shift_max': self.pre_shift_max,
            'level': self.level,
            'horizon': self.horizon,
            'statistic': self.statistic,
        }


@dataclass(frozen=True, eq=False)
class SweepReport:
    """
    Pairwise alignment of a family of initial conditions.

    reports[i][j] aligns member i against member j. Members are ordered as
    given; norms holds ||u0||_2 of each member.
    """

    reports: list
    norms: np.ndarray
    max_sup_distance: float
    max_pre_shift: float
    restricted_max: list
    reference_distances: list
    trend_ok: bool
    hypothesis_holds: bool
    trajectories: list = field(default_factory=list, repr=False)

    @property
    def passed(self):
        return self.trend_ok

    def to_dict(self):
        return {
            'passed': self.passed,
            'members': int(self.norms.size),
            'norms': self.norms.tolist(),
            'max_sup_distance': self.max_sup_distance,
            'max_pre_shift': self.max_pre_shift,
            'restricted_max': [dict(item) for item in self.restricted_max],
            'reference_distances': list(self.reference_distances),
            'trend_ok': self.trend_ok,
            'hypothesis_holds': self.hypothesis_holds,
            'pairs': [
                {'i': i, 'j': j, **report.to_dict()}
                for i, row in enumerate(self.reports)
                for j, report in enumerate(row)
                if i < j
            ],
        }


@dataclass(frozen=True, eq=False)
class EternalSolution:
    """
    Approximation of the nontrivial eternal solution.

    converged holds when the Cauchy gaps of the final three stages shrink
    by at least max_gap_ratio. early_alignment is the smallest
    c1 / ||u||_2 over early_window, the start of the final stage where the
    prevalence is still at most ten times its initial level.
    """

    trajectory: Trajectory
    epsilon0: float
    epsilon_final: float
    cauchy_gaps: list
    gap_ratios: list
    converged: bool
    decay_ok: bool
    early_alignment: float
    early_window: tuple = (0.0, 0.0)
    max_gap_ratio: float = 0.5
    min_alignment: float = 0.999

    @property
    def alignment_ratio(self):
        """c1(t) / ||u(t)||_2 per sample."""
        l2 = self.trajectory.l2
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(l2 > 0.0, self.trajectory.c1 / l2, 1.0)

    @property
    def gap_ratio(self):
        """Largest ratio over the final three stages (None with fewer gaps)."""
        tail = self.gap_ratios[-3:]
        return max(tail) if tail else None

    @property
    def alignment_ok(self):
        return self.early_alignment >= self.min_alignment

    @property
    def passed(self):
        return self.converged and self.decay_ok and self.alignment_ok

    def to_dict(self):
        return {
            'passed': self.passed,
            'epsilon0': self.epsilon0,
            'epsilon_final': self.epsilon_final,
            'cauchy_gaps': list(self.cauchy_gaps),
            'gap_ratios': list(self.gap_ratios),
            'gap_ratio': self.gap_ratio,
            'max_gap_ratio': self.max_gap_ratio,
            'converged': self.converged,
            'decay_ok': self.decay_ok,
            'early_alignment': self.early_alignment,
            'early_window': list(self.early_window),
            'min_alignment': self.min_alignment,
            'alignment_ok': self.alignment_ok,
            'trajectory': self.trajectory.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class UniquenessReport:
    """Alignment of two independently constructed eternal solutions."""

    alignment: AlignmentReport
    eps_a: float
    eps_b: float
    tol: float

    @property
    def passed(self):
        return self.alignment.sup_distance <= self.tol

    def to_dict(self):
        return {
            'passed': self.passed,
            'eps_a': self.eps_a,
            'eps_b': self.eps_b,
            'tol': self.tol,
            'alignment': self.alignment.to_dict(),
        }

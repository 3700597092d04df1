"""
Kernel model definitions.
This module contains the graphon kernel representations (discrete block,
grid sampled, rank-1 and power-law), epidemic parameters and spectral data.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from graphon_sis.models.field import Field, Partition
from graphon_sis.utils.errors import KernelValidationError, ParameterError


@dataclass(frozen=True)
class EpidemicParams:
    """Infection rate beta and curing rate gamma (both in 1/time)."""

    beta: float
    gamma: float

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ParameterError('beta must be positive', operation='params', beta=self.beta)
        if not (self.gamma >= 0.0 and math.isfinite(self.gamma)):
            raise ParameterError(
                'gamma must be non-negative', operation='params', gamma=self.gamma
            )
        object.__setattr__(self, 'beta', float(self.beta))
        object.__setattr__(self, 'gamma', float(self.gamma))

    def alpha(self, eigenvalue):
        """Linear growth rate beta * lambda_k - gamma of mode k."""
        return self.beta * eigenvalue - self.gamma

    def is_supercritical(self, lambda1):
        return self.beta * lambda1 > self.gamma

    def to_dict(self):
        return {'beta': self.beta, 'gamma': self.gamma}


@dataclass(frozen=True, eq=False)
class AnnealedData:
    """Degree classes of an annealed network."""

    degrees: np.ndarray
    p_k: np.ndarray
    conditional: np.ndarray
    uncorrelated: bool = True

    @property
    def mean_degree(self):
        return float(np.dot(self.p_k, self.degrees))

    @property
    def second_moment(self):
        return float(np.dot(self.p_k, self.degrees ** 2))

    def generating(self, omega):
        """G(omega) = sum_i p(k_i) exp(omega k_i)."""
        return np.exp(np.multiply.outer(omega, self.degrees)) @ self.p_k

    def generating_derivative(self, omega):
        return np.exp(np.multiply.outer(omega, self.degrees)) @ (self.p_k * self.degrees)

    def to_dict(self):
        return {
            'degrees': self.degrees.tolist(),
            'p_k': self.p_k.tolist(),
            'uncorrelated': self.uncorrelated,
        }


class KernelSpec:
    """Base class of the kernel representations."""

    variant = None
    partition: Partition

    @property
    def is_rank_one(self):
        return False

    @property
    def size(self):
        return self.partition.size


def _validated_matrix(matrix, partition, label):
    matrix = np.array(matrix, dtype=float)
    n = partition.size
    if matrix.shape != (n, n):
        raise KernelValidationError(
            f'{label} matrix has shape {matrix.shape}, expected ({n}, {n})',
            operation='kernel',
        )
    if not np.all(np.isfinite(matrix)):
        raise KernelValidationError(f'{label} entries must be finite', operation='kernel')
    if not np.array_equal(matrix, matrix.T):
        raise KernelValidationError(f'{label} matrix must be symmetric', operation='kernel')
    if np.any(matrix < 0.0):
        raise KernelValidationError(f'{label} entries must be non-negative', operation='kernel')
    matrix.flags.writeable = False
    return matrix


@dataclass(frozen=True, eq=False)
class DiscreteBlock(KernelSpec):
    """Piecewise-constant kernel W(x, y) = W_ij on I_i x I_j."""

    matrix: np.ndarray
    partition: Partition
    annealed: AnnealedData = None

    variant = 'discrete_block'

    def __post_init__(self):
        object.__setattr__(
            self, 'matrix', _validated_matrix(self.matrix, self.partition, 'DiscreteBlock')
        )

    def __repr__(self):
        return f'<DiscreteBlock cells={self.size}>'

    def to_dict(self):
        data = {
            'variant': self.variant,
            'cell_weights': self.partition.cell_weights.tolist(),
            'matrix': self.matrix.tolist(),
        }
        if self.annealed is not None:
            data['annealed'] = self.annealed.to_dict()
        return data


@dataclass(frozen=True, eq=False)
class GridSampled(KernelSpec):
    """Kernel sampled as W(x_i, y_j) at the cell midpoints of a partition."""

    values: np.ndarray
    partition: Partition

    variant = 'grid_sampled'

    def __post_init__(self):
        object.__setattr__(
            self, 'values', _validated_matrix(self.values, self.partition, 'GridSampled')
        )

    @property
    def matrix(self):
        return self.values

    def __repr__(self):
        return f'<GridSampled cells={self.size}>'

    def to_dict(self):
        return {
            'variant': self.variant,
            'cell_edges': self.partition.cell_edges.tolist(),
            'values': self.values.tolist(),
        }


@dataclass(frozen=True, eq=False)
class RankOne(KernelSpec):
    """Kernel W(x, y) = lambda1 * phi1(x) * phi1(y) with ||phi1||_2 = 1."""

    lambda1: float
    phi1: Field

    variant = 'rank_one'

    def __post_init__(self):
        if not (self.lambda1 > 0.0 and math.isfinite(self.lambda1)):
            raise KernelValidationError('lambda1 must be positive', operation='kernel')
        if np.any(self.phi1.values < 0.0):
            raise KernelValidationError('phi1 must be non-negative', operation='kernel')
        norm = self.phi1.norm()
        if norm == 0.0:
            raise KernelValidationError('phi1 must be non-zero', operation='kernel')
        object.__setattr__(self, 'lambda1', float(self.lambda1))
        object.__setattr__(self, 'phi1', self.phi1.with_values(self.phi1.values / norm))

    @property
    def partition(self):
        return self.phi1.partition

    @property
    def is_rank_one(self):
        return True

    def __repr__(self):
        return f'<RankOne lambda1={self.lambda1!r} cells={self.size}>'

    def to_dict(self):
        return {
            'variant': self.variant,
            'lambda1': self.lambda1,
            'cell_weights': self.partition.cell_weights.tolist(),
            'phi1': self.phi1.values.tolist(),
        }


def power_law_profile(x, p):
    """Unnormalized power-law eigenfunction sqrt(1 - 2p) * x**(-p)."""
    return math.sqrt(1.0 - 2.0 * p) * np.asarray(x, dtype=float) ** (-p)


def power_law_cell_averages(partition, p):
    """Exact cell averages of sqrt(1 - 2p) * x**(-p), finite on the first cell."""
    edges = partition.cell_edges
    antiderivative = edges ** (1.0 - p) / (1.0 - p)
    return math.sqrt(1.0 - 2.0 * p) * np.diff(antiderivative) / partition.cell_weights


def default_grading(p, grid_size, phi_cap=None):
    """
    Grading exponent for the power-law mesh.

    Uses 2 / (1 - 2p). With phi_cap the exponent is lowered until the
    average of phi1 over the first cell is at most phi_cap.
    """
    kappa = 2.0 / (1.0 - 2.0 * p)
    if phi_cap is not None and p > 0.0 and grid_size > 1:
        first_scale = math.log(phi_cap * (1.0 - p) / math.sqrt(1.0 - 2.0 * p))
        kappa = min(kappa, first_scale / (p * math.log(grid_size)))
    return max(kappa, 1.0)


@dataclass(frozen=True, eq=False)
class PowerLaw(RankOne):
    """Rank-1 power-law kernel lambda1 (1 - 2p) (xy)**(-p) on a graded mesh."""

    p: float = 0.0
    grid_size: int = 2000
    kappa: float = 2.0
    phi_cap: float = None

    variant = 'power_law'

    @classmethod
    def create(cls, lambda1, p, grid_size=2000, kappa=None, phi_cap=None):
        """
        Build a power-law kernel.

        phi1 holds the exact cell averages of the profile, so its integral
        is exact on every mesh. Without phi_cap the mesh uses
        kappa = 2 / (1 - 2p), which puts values near 1e13 in the first cell
        for p = 0.4; explicit integration then needs a cap.

        Args:
            lambda1 (float): Leading eigenvalue
            p (float): Exponent in [0, 1/2)
            grid_size (int): Number of graded cells M
            kappa (float): Grading exponent; defaults to default_grading()
            phi_cap (float): Optional bound on the first-cell value of phi1

        Returns:
            PowerLaw: Kernel on the graded mesh

        Raises:
            KernelValidationError: If p is outside [0, 1/2)
        """
        if not 0.0 <= p < 0.5:
            raise KernelValidationError(
                f'Power-law exponent p={p!r} must satisfy 0 <= p < 1/2',
                operation='power_law',
            )
        if phi_cap is not None and not phi_cap > 0.0:
            raise KernelValidationError('phi_cap must be positive', operation='power_law')
        if kappa is None:
            kappa = default_grading(p, grid_size, phi_cap)
        partition = Partition.graded(int(grid_size), float(kappa))
        phi = Field(power_law_cell_averages(partition, p), partition)
        cap = None if phi_cap is None else float(phi_cap)
        return cls(lambda1, phi, float(p), int(grid_size), float(kappa), cap)

    def profile(self, x):
        return power_law_profile(x, self.p)

    def degree(self, x):
        """Degree function lambda1 (1 - 2p) / (1 - p) * x**(-p)."""
        x = np.asarray(x, dtype=float)
        return self.lambda1 * (1.0 - 2.0 * self.p) / (1.0 - self.p) * x ** (-self.p)

    def cell_degrees(self):
        """Cell averages of the degree function."""
        return self.lambda1 * math.sqrt(1.0 - 2.0 * self.p) / (1.0 - self.p) \
            * power_law_cell_averages(self.partition, self.p)

    def __repr__(self):
        return f'<PowerLaw lambda1={self.lambda1!r} p={self.p!r} cells={self.size}>'

    def to_dict(self):
        data = {
            'variant': self.variant,
            'lambda1': self.lambda1,
            'p': self.p,
            'grid_size': self.grid_size,
            'kappa': self.kappa,
        }
        if self.phi_cap is not None:
            data['phi_cap'] = self.phi_cap
        return data


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Leading eigenpair and, when computed, the second eigenvalue."""

    lambda1: float
    phi1: Field
    lambda2: float = None
    residual: float = 0.0
    iterations: int = 0

    @property
    def gap(self):
        if self.lambda2 is None:
            return None
        return self.lambda1 - self.lambda2

    @property
    def m(self):
        """Uniform positivity constant min phi1."""
        return float(self.phi1.values.min())

    def with_lambda2(self, lambda2):
        return Spectrum(self.lambda1, self.phi1, lambda2, self.residual, self.iterations)

    def to_dict(self):
        return {
            'lambda1': self.lambda1,
            'lambda2': self.lambda2,
            'gap': self.gap,
            'm': self.m,
            'residual': self.residual,
            'iterations': self.iterations,
            'phi1_norm': self.phi1.norm(),
            'phi1_sup': self.phi1.sup_norm(),
        }


@dataclass(frozen=True, eq=False)
class ModalBasis:
    """Orthonormal eigenfunctions (columns of modes) with eigenvalues, descending."""

    eigenvalues: np.ndarray
    modes: np.ndarray
    partition: Partition = field(repr=False)

    @property
    def count(self):
        return self.eigenvalues.size

"""
Partition and Field definitions.
This module contains the quadrature partition of [0, 1] and the cell-wise
functions (states, eigenfunctions, endemic profiles) defined on it.
"""

from dataclasses import dataclass, field

import numpy as np

from graphon_sis.utils.errors import DimensionError, KernelValidationError

WEIGHT_SUM_TOL = 1e-12
EDGE_TOL = 8 * np.finfo(float).eps


def _readonly(array):
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Partition:
    """Ordered breakpoints 0 = x_0 < x_1 < ... < x_M = 1 with cell weights."""

    cell_edges: np.ndarray
    cell_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = _readonly(self.cell_edges)
        if edges.ndim != 1 or edges.size < 2:
            raise KernelValidationError(
                'A partition needs at least two edges', operation='partition'
            )
        if edges[0] != 0.0 or edges[-1] != 1.0:
            raise KernelValidationError(
                'Partition edges must start at 0 and end at 1', operation='partition'
            )
        weights = np.diff(edges)
        if np.any(weights <= 0.0):
            raise KernelValidationError(
                'Partition edges must be strictly increasing', operation='partition'
            )
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise KernelValidationError(
                'Cell weights must sum to 1', operation='partition'
            )
        object.__setattr__(self, 'cell_edges', edges)
        object.__setattr__(self, 'cell_weights', _readonly(weights))

    def __repr__(self):
        return f'<Partition cells={self.size}>'

    @property
    def size(self):
        return self.cell_weights.size

    @property
    def midpoints(self):
        return 0.5 * (self.cell_edges[:-1] + self.cell_edges[1:])

    @property
    def min_weight(self):
        return float(self.cell_weights.min())

    @classmethod
    def uniform(cls, n):
        """Partition into n cells of equal width."""
        if n < 1:
            raise KernelValidationError('Cell count must be positive', operation='partition')
        edges = np.linspace(0.0, 1.0, n + 1)
        return cls(edges)

    @classmethod
    def graded(cls, n, kappa):
        """
        Graded partition with edges (j/n)**kappa.

        Cells shrink toward x = 0 for kappa > 1, resolving integrands that
        are singular at the origin.

        Args:
            n (int): Number of cells
            kappa (float): Grading exponent (>= 1)

        Returns:
            Partition: Graded partition
        """
        if n < 1 or kappa < 1.0:
            raise KernelValidationError(
                'Graded partitions need n >= 1 and kappa >= 1', operation='partition'
            )
        edges = (np.arange(n + 1) / n) ** kappa
        edges[-1] = 1.0
        return cls(edges)

    @classmethod
    def from_weights(cls, weights):
        """
        Partition whose consecutive cells have the given measures.

        Args:
            weights (array-like): Positive cell measures summing to 1

        Returns:
            Partition: Partition with |I_i| = weights[i]

        Raises:
            KernelValidationError: If weights are non-positive or do not sum to 1
        """
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0 or np.any(weights <= 0.0):
            raise KernelValidationError(
                'Cell weights must be strictly positive', operation='partition'
            )
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise KernelValidationError(
                f'Cell weights sum to {weights.sum()!r}, expected 1',
                operation='partition',
            )
        edges = np.concatenate([[0.0], np.cumsum(weights)])
        edges[-1] = 1.0
        return cls(edges)

    def same_as(self, other):
        """True when both partitions have the same edges."""
        if self is other:
            return True
        return self.size == other.size and np.allclose(
            self.cell_edges, other.cell_edges, rtol=1e-12, atol=0.0
        )

    def common_refinement(self, other):
        """
        Coarsest partition refining both self and other.

        Edges closer than a few ulps are merged.
        """
        if self.same_as(other):
            return self
        merged = np.union1d(self.cell_edges, other.cell_edges)
        keep = np.concatenate([[True], np.diff(merged) > EDGE_TOL * merged[1:]])
        merged = merged[keep]
        merged[-1] = 1.0
        return Partition(merged)

    def refines(self, other):
        """True when every edge of other is (up to rounding) an edge of self."""
        if self.same_as(other):
            return True
        idx = np.clip(np.searchsorted(self.cell_edges, other.cell_edges), 1, self.size)
        nearest = np.minimum(
            np.abs(self.cell_edges[idx] - other.cell_edges),
            np.abs(self.cell_edges[idx - 1] - other.cell_edges),
        )
        return bool(np.all(nearest <= EDGE_TOL * np.maximum(other.cell_edges, 1e-300)))

    def cell_index(self, points):
        """Index of the cell containing each point."""
        idx = np.searchsorted(self.cell_edges, points, side='right') - 1
        return np.clip(idx, 0, self.size - 1)

    def to_dict(self):
        return {'cells': self.size, 'cell_edges': self.cell_edges.tolist()}


@dataclass(frozen=True, eq=False)
class Field:
    """A real function on [0, 1], constant on the cells of a partition."""

    values: np.ndarray
    partition: Partition

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 1 or values.size != self.partition.size:
            raise DimensionError(
                f'Field has {values.size} values for {self.partition.size} cells',
                operation='field',
            )
        if not np.all(np.isfinite(values)):
            raise KernelValidationError('Field values must be finite', operation='field')
        object.__setattr__(self, 'values', values)

    def __repr__(self):
        return f'<Field cells={self.partition.size}>'

    @classmethod
    def constant(cls, value, partition):
        return cls(np.full(partition.size, float(value)), partition)

    def with_values(self, values):
        """New field on the same partition."""
        return Field(values, self.partition)

    def require_partition(self, partition, operation='field'):
        """
        Raise unless the field lives on the given partition.

        Raises:
            DimensionError: If the partitions differ
        """
        if not self.partition.same_as(partition):
            raise DimensionError(
                f'Field on {self.partition.size} cells does not match '
                f'partition with {partition.size} cells',
                operation=operation,
            )

    def inner(self, other):
        """Quadrature inner product <self, other>."""
        other.require_partition(self.partition, operation='inner')
        return float(np.dot(self.partition.cell_weights * self.values, other.values))

    def norm(self):
        """L2 norm under the partition quadrature."""
        return float(np.sqrt(np.dot(self.partition.cell_weights, self.values ** 2)))

    def integral(self):
        return float(np.dot(self.partition.cell_weights, self.values))

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def in_domain(self, tol=0.0):
        """True when every value lies in [-tol, 1 + tol]."""
        return bool(np.all(self.values >= -tol) and np.all(self.values <= 1.0 + tol))

    def prolong(self, target):
        """
        Represent this field on a refining partition.

        Args:
            target (Partition): Partition refining self.partition

        Returns:
            Field: The same piecewise-constant function on target
        """
        if self.partition.same_as(target):
            return self
        idx = self.partition.cell_index(target.midpoints)
        return Field(self.values[idx], target)

    def distance(self, other):
        """L2 distance to a field on a possibly different partition."""
        common = self.partition.common_refinement(other.partition)
        diff = self.prolong(common).values - other.prolong(common).values
        return float(np.sqrt(np.dot(common.cell_weights, diff ** 2)))

    def to_dict(self):
        return {
            'cell_weights': self.partition.cell_weights.tolist(),
            'values': self.values.tolist(),
        }

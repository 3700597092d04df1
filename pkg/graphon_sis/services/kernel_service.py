"""
Kernel service layer.
This module contains the integral operator, spectral solvers, annealed
kernel construction and kernel distances.
"""

import logging

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from graphon_sis.config import Config
from graphon_sis.models.field import Field, Partition
from graphon_sis.models.kernel import (
    AnnealedData,
    DiscreteBlock,
    GridSampled,
    ModalBasis,
    PowerLaw,
    Spectrum,
)
from graphon_sis.utils.errors import (
    InvalidCorrelationError,
    IterationError,
    KernelValidationError,
    RefinementError,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
STOCHASTIC_TOL = 1e-10
DISTANCE_CHUNK = 256


class KernelService:
    """Service class for kernel operations."""

    @staticmethod
    def constant(value, cells=1):
        """Kernel W = value on a uniform partition with the given cell count."""
        partition = Partition.uniform(cells)
        return DiscreteBlock(np.full((cells, cells), float(value)), partition)

    @staticmethod
    def weighted_matrix(kernel):
        """
        Matrix of the operator on cell-constant fields: W_ij |I_j|.

        Rank-1 kernels are materialized here only on request.
        """
        w = kernel.partition.cell_weights
        if kernel.is_rank_one:
            phi = kernel.phi1.values
            return kernel.lambda1 * np.outer(phi, phi * w)
        return kernel.matrix * w[None, :]

    @staticmethod
    def apply_values(kernel, values):
        """Apply the integral operator to raw cell values (1-D, or cells x k)."""
        w = kernel.partition.cell_weights
        values = np.asarray(values, dtype=float)
        if kernel.is_rank_one:
            phi = kernel.phi1.values
            return kernel.lambda1 * np.multiply.outer(phi, (w * phi) @ values)
        if values.ndim == 1:
            return kernel.matrix @ (w * values)
        return kernel.matrix @ (w[:, None] * values)

    @staticmethod
    def apply_operator(kernel, f):
        """
        Apply the integral operator to a field.

        Args:
            kernel (KernelSpec): The kernel
            f (Field): Field on the kernel partition

        Returns:
            Field: The image of f

        Raises:
            DimensionError: If f lives on another partition
        """
        f.require_partition(kernel.partition, operation='apply_operator')
        return f.with_values(KernelService.apply_values(kernel, f.values))

    @staticmethod
    def is_connected(kernel):
        """True when the support graph of the kernel is connected."""
        if kernel.is_rank_one:
            return bool(np.all(kernel.phi1.values > 0.0))
        n_components, _ = connected_components(
            csr_matrix(kernel.matrix > 0.0), directed=False
        )
        return n_components == 1

    @staticmethod
    def leading_eigenpair(kernel, tol=Config.EIGEN_TOL, max_iter=Config.EIGEN_MAX_ITER):
        """
        Compute the leading eigenpair.

        Shifted power iteration started from the constant field. Stops once
        the weighted residual ||W phi - lambda phi||_2 is at most tol. Rank-1
        kernels return their stored pair.

        Args:
            kernel (KernelSpec): Non-negative kernel
            tol (float): Residual tolerance
            max_iter (int): Iteration cap

        Returns:
            Spectrum: Leading eigenpair with phi1 normalized and non-negative

        Raises:
            IterationError: If the residual stays above tol after max_iter steps
        """
        if kernel.is_rank_one:
            return Spectrum(kernel.lambda1, kernel.phi1, 0.0, 0.0, 0)

        if isinstance(kernel, DiscreteBlock) and not KernelService.is_connected(kernel):
            logger.warning('Block kernel with %d cells is not connected', kernel.size)

        partition = kernel.partition
        w = partition.cell_weights
        a = KernelService.weighted_matrix(kernel)
        x = np.ones(partition.size)
        x /= np.sqrt(np.dot(w, x ** 2))
        # positive shift separates lambda1 from -lambda1 on bipartite supports
        shift = 0.25 * float(np.dot(w * x, a @ x))
        residual = np.inf
        for iteration in range(1, int(max_iter) + 1):
            y = a @ x
            lam = float(np.dot(w * x, y))
            r = y - lam * x
            residual = float(np.sqrt(np.dot(w, r ** 2)))
            if residual <= tol:
                break
            x = y + shift * x
            x /= np.sqrt(np.dot(w, x ** 2))
        else:
            raise IterationError(
                f'Power iteration did not converge in {max_iter} iterations',
                operation='leading_eigenpair',
                last_residual=residual,
            )

        if np.dot(w, x) < 0.0:
            x = -x
        x = np.where((x < 0.0) & (x > -1e-12), 0.0, x)
        logger.info(
            'Leading eigenpair: lambda1=%.12g after %d iterations (residual %.3g)',
            lam, iteration, residual,
        )
        return Spectrum(lam, Field(x, partition), None, residual, iteration)

    @staticmethod
    def second_eigenvalue(kernel, spectrum, tol=Config.EIGEN_TOL,
                          max_iter=Config.EIGEN_MAX_ITER):
        """
        Second eigenvalue by power iteration on the deflated operator.

        Returns the signed Rayleigh quotient of the magnitude-dominant
        eigenvalue of f -> Wf - lambda1 <phi1, f> phi1.

        Args:
            kernel (KernelSpec): The kernel
            spectrum (Spectrum): Leading eigenpair
            tol (float): Residual tolerance
            max_iter (int): Iteration cap

        Returns:
            float: lambda2 (0 for rank-1 kernels)

        Raises:
            IterationError: If the deflated iteration does not converge
        """
        if kernel.is_rank_one:
            return 0.0

        partition = kernel.partition
        w = partition.cell_weights
        phi = spectrum.phi1.values
        a = KernelService.weighted_matrix(kernel)

        def deflate(v):
            return v - np.dot(w * phi, v) * phi

        x = deflate(np.linspace(-1.0, 1.0, partition.size))
        norm = np.sqrt(np.dot(w, x ** 2))
        if norm <= 1e-14:
            x = deflate(np.where(np.arange(partition.size) % 2 == 0, 1.0, -1.0))
            norm = np.sqrt(np.dot(w, x ** 2))
            if norm <= 1e-14:
                return 0.0
        x /= norm

        residual = np.inf
        for _ in range(int(max_iter)):
            y = deflate(a @ x)
            lam = float(np.dot(w * x, y))
            r = y - lam * x
            residual = float(np.sqrt(np.dot(w, r ** 2)))
            if residual <= tol:
                return lam
            norm = np.sqrt(np.dot(w, y ** 2))
            if norm <= tol:
                return 0.0
            x = deflate(y / norm)
        raise IterationError(
            f'Deflated power iteration did not converge in {max_iter} iterations',
            operation='second_eigenvalue',
            last_residual=residual,
        )

    @staticmethod
    def spectrum(kernel, tol=Config.EIGEN_TOL, max_iter=Config.EIGEN_MAX_ITER):
        """Leading eigenpair together with lambda2."""
        leading = KernelService.leading_eigenpair(kernel, tol, max_iter)
        lambda2 = KernelService.second_eigenvalue(kernel, leading, tol, max_iter)
        return leading.with_lambda2(lambda2)

    @staticmethod
    def modal_decomposition(kernel, u0=None):
        """
        Orthonormal eigenbasis of the operator, eigenvalues descending.

        Block and grid kernels use a dense symmetric eigensolver on
        sqrt(w) W sqrt(w). Rank-1 kernels return phi1 and, when u0 is given,
        the normalized part of u0 orthogonal to phi1 (eigenvalue 0), which
        spans the flow of u0 exactly.

        Args:
            kernel (KernelSpec): The kernel
            u0 (Field): Optional initial condition for the rank-1 basis

        Returns:
            ModalBasis: Eigenvalues and modes (cells x modes)
        """
        partition = kernel.partition
        w = partition.cell_weights
        if kernel.is_rank_one:
            phi = kernel.phi1.values
            eigenvalues = [kernel.lambda1]
            modes = [phi]
            if u0 is not None:
                remainder = u0.values - np.dot(w * phi, u0.values) * phi
                norm = np.sqrt(np.dot(w, remainder ** 2))
                if norm > 1e-14 * max(u0.norm(), 1e-300):
                    eigenvalues.append(0.0)
                    modes.append(remainder / norm)
            return ModalBasis(np.array(eigenvalues), np.column_stack(modes), partition)

        root = np.sqrt(w)
        symmetric = root[:, None] * kernel.matrix * root[None, :]
        values, vectors = np.linalg.eigh(symmetric)
        order = np.argsort(values)[::-1]
        values = values[order]
        modes = vectors[:, order] / root[:, None]
        if np.dot(w, modes[:, 0]) < 0.0:
            modes[:, 0] = -modes[:, 0]
        return ModalBasis(values, modes, partition)

    @staticmethod
    def build_annealed(degrees, p_k, conditional='uncorrelated'):
        """
        Build the block kernel of an annealed network.

        Cells have measure p(k_i) and W_ij = k_i p(k_j | k_i) / p(k_j).

        Args:
            degrees (array-like): Degree classes k_i > 0
            p_k (array-like): Probabilities p(k_i)
            conditional: Matrix p(k_j | k_i) or 'uncorrelated'

        Returns:
            DiscreteBlock: Kernel carrying its AnnealedData

        Raises:
            KernelValidationError: If p_k or the conditional rows are not stochastic
            InvalidCorrelationError: If the implied W_ij is not symmetric
        """
        degrees = np.asarray(degrees, dtype=float)
        p_k = np.asarray(p_k, dtype=float)
        if degrees.ndim != 1 or degrees.shape != p_k.shape or degrees.size == 0:
            raise KernelValidationError(
                'degrees and p_k must be vectors of equal length', operation='build_annealed'
            )
        if np.any(degrees <= 0.0) or not np.all(np.isfinite(degrees)):
            raise KernelValidationError('Degrees must be positive', operation='build_annealed')
        if np.any(p_k <= 0.0) or abs(p_k.sum() - 1.0) > 1e-12:
            raise KernelValidationError(
                'p_k must be a positive probability vector', operation='build_annealed'
            )

        uncorrelated = isinstance(conditional, str)
        if uncorrelated:
            if conditional != 'uncorrelated':
                raise KernelValidationError(
                    f'Unknown conditional mode {conditional!r}', operation='build_annealed'
                )
            mean_degree = np.dot(degrees, p_k)
            cond = np.tile(degrees * p_k / mean_degree, (degrees.size, 1))
        else:
            cond = np.asarray(conditional, dtype=float)
            if cond.shape != (degrees.size, degrees.size):
                raise KernelValidationError(
                    'Conditional matrix must be square over the degree classes',
                    operation='build_annealed',
                )
            if np.any(cond < 0.0) or np.any(np.abs(cond.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
                raise KernelValidationError(
                    'Conditional rows must be probability vectors', operation='build_annealed'
                )

        partition = Partition.from_weights(p_k)
        matrix = degrees[:, None] * cond / partition.cell_weights[None, :]
        asymmetry = float(np.max(np.abs(matrix - matrix.T)))
        if asymmetry > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(matrix)))):
            raise InvalidCorrelationError(
                f'Implied kernel is asymmetric (max deviation {asymmetry:.3g})',
                operation='build_annealed',
                asymmetry=asymmetry,
            )
        matrix = 0.5 * (matrix + matrix.T)
        annealed = AnnealedData(degrees, p_k, cond, uncorrelated)
        return DiscreteBlock(matrix, partition, annealed)

    @staticmethod
    def values_on(kernel, partition, rows=slice(None)):
        """
        Kernel values on a partition refining the kernel partition.

        Args:
            kernel (KernelSpec): The kernel
            partition (Partition): Refining partition
            rows (slice): Row block to evaluate

        Returns:
            numpy.ndarray: W on the selected rows x all cells
        """
        idx = kernel.partition.cell_index(partition.midpoints)
        row_idx = idx[rows]
        if kernel.is_rank_one:
            phi = kernel.phi1.values
            return kernel.lambda1 * np.outer(phi[row_idx], phi[idx])
        return kernel.matrix[np.ix_(row_idx, idx)]

    @staticmethod
    def kernel_distance(k1, k2, max_cells=Config.REFINEMENT_MAX_CELLS):
        """
        L2 distance ||W1 - W2||_2 under the product quadrature.

        Both kernels are evaluated on the common refinement of their
        partitions, row block by row block.

        Raises:
            RefinementError: If the common refinement exceeds max_cells
        """
        common = k1.partition.common_refinement(k2.partition)
        if common.size > max_cells:
            raise RefinementError(
                f'Common refinement has {common.size} cells (limit {max_cells})',
                operation='kernel_distance',
            )
        w = common.cell_weights
        total = 0.0
        for start in range(0, common.size, DISTANCE_CHUNK):
            rows = slice(start, start + DISTANCE_CHUNK)
            diff = KernelService.values_on(k1, common, rows) - KernelService.values_on(
                k2, common, rows
            )
            total += float(w[rows] @ ((diff ** 2) @ w))
        return float(np.sqrt(total))

    @staticmethod
    def discretize(kernel, partition):
        """
        Sample a kernel at the midpoints of a partition.

        Power-law kernels are sampled from their analytic profile; other
        kernels from their cell values.

        Returns:
            GridSampled: Sampled kernel
        """
        if isinstance(kernel, PowerLaw):
            profile = kernel.profile(partition.midpoints)
            values = kernel.lambda1 * np.outer(profile, profile)
        else:
            values = KernelService.values_on(kernel, partition)
        values = 0.5 * (values + values.T)
        return GridSampled(values, partition)

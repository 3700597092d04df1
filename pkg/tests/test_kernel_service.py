import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graphon_sis.models import DiscreteBlock, Field, Partition, PowerLaw, RankOne
from graphon_sis.models.kernel import default_grading, power_law_cell_averages, power_law_profile
from graphon_sis.services import KernelService
from graphon_sis.utils.errors import (
    DimensionError,
    InvalidCorrelationError,
    IterationError,
    KernelValidationError,
    RefinementError,
)
from tests.conftest import FIVE_BLOCK

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


class TestPartition:
    def test_uniform_weights(self):
        partition = Partition.uniform(4)
        np.testing.assert_allclose(partition.cell_weights, 0.25)
        assert partition.size == 4

    def test_graded_edges(self):
        partition = Partition.graded(4, 2.0)
        np.testing.assert_allclose(partition.cell_edges, [0.0, 1 / 16, 1 / 4, 9 / 16, 1.0])

    def test_rejects_unordered_edges(self):
        with pytest.raises(KernelValidationError):
            Partition(np.array([0.0, 0.6, 0.4, 1.0]))

    def test_common_refinement_contains_both(self):
        a = Partition.uniform(2)
        b = Partition.uniform(3)
        common = a.common_refinement(b)
        assert common.refines(a) and common.refines(b)
        assert common.size == 4


class TestField:
    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            Field(np.ones(3), Partition.uniform(2))

    def test_distance_across_partitions(self):
        f = Field(np.array([1.0, 0.0]), Partition.uniform(2))
        g = Field.constant(0.0, Partition.uniform(4))
        assert f.distance(g) == pytest.approx(np.sqrt(0.5))


class TestLeadingEigenpair:
    def test_constant_kernel(self, hmfa):
        spectrum = KernelService.leading_eigenpair(hmfa)
        assert spectrum.lambda1 == pytest.approx(1.0)
        np.testing.assert_allclose(spectrum.phi1.values, 1.0)

    def test_two_block(self, two_block):
        spectrum = KernelService.spectrum(two_block)
        assert spectrum.lambda1 == pytest.approx(2.0, rel=1e-12)
        assert spectrum.lambda2 == pytest.approx(1.0, rel=1e-9)
        assert spectrum.gap == pytest.approx(1.0, rel=1e-9)
        np.testing.assert_allclose(spectrum.phi1.values, 1.0, rtol=1e-10)

    def test_second_eigenvalue_is_signed(self):
        kernel = DiscreteBlock(np.array([[1.0, 3.0], [3.0, 1.0]]), Partition.uniform(2))
        spectrum = KernelService.spectrum(kernel)
        assert spectrum.lambda1 == pytest.approx(2.0, rel=1e-12)
        assert spectrum.lambda2 == pytest.approx(-1.0, rel=1e-9)

    def test_bipartite_block(self):
        kernel = DiscreteBlock(np.array([[0.0, 1.0], [1.0, 0.0]]), Partition.uniform(2))
        spectrum = KernelService.spectrum(kernel)
        assert spectrum.lambda1 == pytest.approx(0.5, rel=1e-12)
        assert spectrum.lambda2 == pytest.approx(-0.5, rel=1e-9)
        np.testing.assert_allclose(spectrum.phi1.values, 1.0, rtol=1e-10)

    def test_five_block_matches_dense_solver(self, five_block):
        spectrum = KernelService.spectrum(five_block)
        dense = np.sort(np.linalg.eigvalsh(np.array(FIVE_BLOCK) * 0.2))[::-1]
        assert spectrum.lambda1 == pytest.approx(dense[0], rel=1e-10)
        assert abs(spectrum.lambda2) == pytest.approx(max(abs(dense[1]), abs(dense[-1])),
                                                      rel=1e-8)
        assert spectrum.phi1.norm() == pytest.approx(1.0, rel=1e-12)
        assert spectrum.m > 0.0
        residual = KernelService.apply_operator(five_block, spectrum.phi1).values - (
            spectrum.lambda1 * spectrum.phi1.values
        )
        assert np.sqrt(np.dot(five_block.partition.cell_weights, residual ** 2)) <= 1e-11

    def test_iteration_cap(self, five_block):
        with pytest.raises(IterationError) as excinfo:
            KernelService.leading_eigenpair(five_block, max_iter=1)
        assert excinfo.value.last_residual > 0.0

    def test_rank_one_returns_stored_pair(self, power_law):
        spectrum = KernelService.spectrum(power_law)
        assert spectrum.lambda1 == 1.0
        assert spectrum.lambda2 == 0.0
        image = KernelService.apply_operator(power_law, spectrum.phi1)
        np.testing.assert_allclose(image.values, spectrum.phi1.values, rtol=1e-10)

    def test_disconnected_block_warns(self, caplog):
        kernel = DiscreteBlock(np.array([[2.0, 0.0], [0.0, 1.0]]), Partition.uniform(2))
        assert not KernelService.is_connected(kernel)
        with caplog.at_level(logging.WARNING, logger='graphon_sis'):
            KernelService.leading_eigenpair(kernel)
        assert 'not connected' in caplog.text


class TestOperator:
    @given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite),
           st.floats(min_value=-5.0, max_value=5.0))
    @settings(max_examples=50, deadline=None)
    def test_linearity(self, f, g, a):
        kernel = DiscreteBlock(np.array(FIVE_BLOCK), Partition.uniform(5))
        left = KernelService.apply_values(kernel, a * f + g)
        right = a * KernelService.apply_values(kernel, f) + KernelService.apply_values(kernel, g)
        np.testing.assert_allclose(left, right, atol=1e-9)

    @given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
    @settings(max_examples=50, deadline=None)
    def test_self_adjoint(self, f, g):
        partition = Partition.from_weights([0.1, 0.2, 0.3, 0.15, 0.25])
        kernel = DiscreteBlock(np.array(FIVE_BLOCK), partition)
        ff, gg = Field(f, partition), Field(g, partition)
        left = KernelService.apply_operator(kernel, ff).inner(gg)
        right = ff.inner(KernelService.apply_operator(kernel, gg))
        assert left == pytest.approx(right, abs=1e-9)

    def test_rank_one_matches_materialized_matrix(self, power_law):
        values = np.linspace(0.0, 1.0, power_law.size)
        dense = KernelService.weighted_matrix(power_law) @ values
        np.testing.assert_allclose(KernelService.apply_values(power_law, values), dense,
                                   rtol=1e-10)

    def test_apply_operator_wrong_partition(self, five_block):
        with pytest.raises(DimensionError):
            KernelService.apply_operator(five_block, Field.constant(1.0, Partition.uniform(3)))

    def test_modal_decomposition(self, five_block):
        basis = KernelService.modal_decomposition(five_block)
        w = five_block.partition.cell_weights
        gram = basis.modes.T @ (w[:, None] * basis.modes)
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-12)
        assert np.all(np.diff(basis.eigenvalues) <= 0.0)


class TestKernelValidation:
    def test_asymmetric_block(self):
        with pytest.raises(KernelValidationError):
            DiscreteBlock(np.array([[1.0, 2.0], [0.5, 1.0]]), Partition.uniform(2))

    def test_negative_block(self):
        with pytest.raises(KernelValidationError):
            DiscreteBlock(np.array([[1.0, -1.0], [-1.0, 1.0]]), Partition.uniform(2))

    def test_rank_one_normalizes(self):
        kernel = RankOne(2.0, Field(np.array([1.0, 3.0]), Partition.uniform(2)))
        assert kernel.phi1.norm() == pytest.approx(1.0)

    @pytest.mark.parametrize('p', [-0.1, 0.5, 0.6])
    def test_power_law_exponent_range(self, p):
        with pytest.raises(KernelValidationError):
            PowerLaw.create(1.0, p, grid_size=10)


class TestPowerLaw:
    def test_default_grading_is_uncapped(self):
        assert default_grading(0.4, 2000) == pytest.approx(10.0)
        assert default_grading(0.0, 2000) == pytest.approx(2.0)

    def test_phi1_holds_exact_cell_averages(self):
        kernel = PowerLaw.create(1.0, 0.4, grid_size=2000)
        averages = power_law_cell_averages(kernel.partition, 0.4)
        np.testing.assert_allclose(kernel.phi1.values, averages, rtol=1e-4)
        exact_integral = np.sqrt(1.0 - 0.8) / 0.6
        assert kernel.phi1.integral() == pytest.approx(exact_integral, rel=1e-4)
        assert kernel.kappa == pytest.approx(10.0)
        assert kernel.phi_cap is None

    def test_degree_function(self):
        kernel = PowerLaw.create(1.0, 0.4, grid_size=2000)
        w = kernel.partition.cell_weights
        degree = KernelService.apply_operator(kernel, Field.constant(1.0, kernel.partition))
        expected = kernel.cell_degrees()
        error = np.sqrt(np.dot(w, (degree.values - expected) ** 2))
        assert error / np.sqrt(np.dot(w, expected ** 2)) <= 1e-4

    def test_cell_averages_approach_profile_away_from_zero(self):
        partition = Partition.graded(2000, 10.0)
        averages = power_law_cell_averages(partition, 0.4)
        far = partition.midpoints > 0.1
        np.testing.assert_allclose(averages[far], power_law_profile(partition.midpoints[far], 0.4),
                                   rtol=1e-4)

    def test_cap_bounds_first_cell(self, power_law_fine):
        kappa = default_grading(0.4, 2000, 1e3)
        first = power_law_cell_averages(Partition.graded(2000, kappa), 0.4)[0]
        assert first <= 1e3 * (1.0 + 1e-9)
        assert 1.0 <= kappa < 10.0
        assert power_law_fine.kappa == pytest.approx(kappa)
        assert power_law_fine.to_dict()['phi_cap'] == 1e3

    def test_invalid_cap(self):
        with pytest.raises(KernelValidationError):
            PowerLaw.create(1.0, 0.4, grid_size=10, phi_cap=0.0)

    def test_uniform_kernel_is_p_zero(self):
        kernel = PowerLaw.create(1.0, 0.0, grid_size=8)
        np.testing.assert_allclose(kernel.phi1.values, 1.0)
        assert 'phi_cap' not in kernel.to_dict()

    def test_stored_pair_for_other_eigenvalue(self):
        kernel = PowerLaw.create(2.0, 0.4, grid_size=300)
        spectrum = KernelService.spectrum(kernel)
        assert spectrum.lambda1 == 2.0
        assert spectrum.lambda2 == 0.0
        ratio = spectrum.phi1.values / power_law_cell_averages(kernel.partition, 0.4)
        np.testing.assert_allclose(ratio, ratio[-1], rtol=1e-12)


class TestAnnealed:
    def test_uncorrelated_is_rank_one(self):
        kernel = KernelService.build_annealed([1.0, 2.0, 3.0], [0.5, 0.3, 0.2])
        spectrum = KernelService.spectrum(kernel)
        assert spectrum.lambda1 == pytest.approx(3.5 / 1.7, rel=1e-10)
        assert abs(spectrum.lambda2) <= 1e-10
        assert kernel.annealed.uncorrelated

    def test_two_degree_classes(self):
        kernel = KernelService.build_annealed([1.0, 3.0], [0.5, 0.5])
        spectrum = KernelService.leading_eigenpair(kernel)
        assert spectrum.lambda1 == pytest.approx(2.5, rel=1e-12)
        np.testing.assert_allclose(spectrum.phi1.values, np.array([1.0, 3.0]) / np.sqrt(5.0),
                                   rtol=1e-10)

    def test_single_degree_class(self):
        kernel = KernelService.build_annealed([3.0], [1.0])
        assert kernel.matrix[0, 0] == pytest.approx(3.0)
        assert KernelService.leading_eigenpair(kernel).lambda1 == pytest.approx(3.0)

    @pytest.mark.parametrize('n, seed', [(2, 0), (3, 1), (4, 2), (6, 3)])
    def test_operator_matches_degree_class_recursion(self, n, seed):
        rng = np.random.default_rng(seed)
        joint = rng.uniform(0.1, 1.0, (n, n))
        joint = joint + joint.T
        degrees = np.arange(1.0, n + 1.0) * 2.0
        ends = joint.sum(axis=1)
        p_k = ends / degrees
        p_k /= p_k.sum()
        conditional = joint / ends[:, None]
        kernel = KernelService.build_annealed(degrees, p_k, conditional)
        z = rng.uniform(0.0, 1.0, n)
        theta = conditional @ z
        np.testing.assert_allclose(KernelService.apply_values(kernel, z), degrees * theta,
                                   rtol=1e-10)

    def test_inconsistent_correlation(self):
        with pytest.raises(InvalidCorrelationError):
            KernelService.build_annealed([1.0, 2.0], [0.5, 0.5], [[0.5, 0.5], [0.9, 0.1]])

    def test_non_stochastic_rows(self):
        with pytest.raises(KernelValidationError):
            KernelService.build_annealed([1.0, 2.0], [0.5, 0.5], [[0.5, 0.6], [0.5, 0.5]])


def overlap_distance(rank_one, grid):
    """||W1 - W2||_2 from the cell overlaps of a rank-1 and a block kernel."""
    left = rank_one.partition.cell_edges
    right = grid.partition.cell_edges
    overlap = np.clip(
        np.minimum(left[1:, None], right[None, 1:]) - np.maximum(left[:-1, None], right[None, :-1]),
        0.0, None,
    )
    phi = rank_one.phi1.values
    w = rank_one.partition.cell_weights
    projected = overlap.T @ phi
    v = grid.matrix
    w2 = grid.partition.cell_weights
    total = (rank_one.lambda1 * np.dot(w, phi ** 2)) ** 2
    total -= 2.0 * rank_one.lambda1 * projected @ v @ projected
    total += w2 @ (v ** 2) @ w2
    return np.sqrt(total)


class TestKernelDistance:
    def test_constant_kernels(self):
        d = KernelService.kernel_distance(KernelService.constant(1.0, 2),
                                          KernelService.constant(3.0, 3))
        assert d == pytest.approx(2.0)

    def test_unit_mass_difference(self):
        d = KernelService.kernel_distance(KernelService.constant(1.0),
                                          KernelService.constant(0.0, 4))
        assert d == pytest.approx(1.0)

    def test_identical_kernels(self, power_law):
        assert KernelService.kernel_distance(power_law, power_law) == 0.0

    def test_matches_overlap_quadrature(self, power_law):
        grid = KernelService.discretize(power_law, Partition.uniform(100))
        expected = overlap_distance(power_law, grid)
        assert KernelService.kernel_distance(power_law, grid) == pytest.approx(expected, rel=1e-8)

    def test_discretization_converges(self, power_law_03):
        coarse = KernelService.discretize(power_law_03, Partition.uniform(50))
        fine = KernelService.discretize(power_law_03, Partition.uniform(200))
        assert KernelService.kernel_distance(power_law_03, fine) < KernelService.kernel_distance(
            power_law_03, coarse
        )

    def test_refinement_limit(self, five_block):
        with pytest.raises(RefinementError):
            KernelService.kernel_distance(five_block, KernelService.constant(1.0, 7), max_cells=5)

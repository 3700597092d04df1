from dataclasses import replace

import numpy as np
import pytest

from graphon_sis.models import DiscreteBlock, EpidemicParams, Field, Partition, PowerLaw
from graphon_sis.services import DynamicsService, KernelService, SIClosedFormService
from graphon_sis.utils.errors import (
    DomainError,
    KernelTypeError,
    NoEndemicStateError,
    ParameterError,
    SaturationError,
)


@pytest.fixture
def hmfa_closed_form(hmfa):
    return SIClosedFormService.build(hmfa)


@pytest.fixture
def power_law_closed_form(power_law):
    return SIClosedFormService.build(power_law)


class TestBuild:
    def test_anchor(self, hmfa_closed_form):
        assert hmfa_closed_form.omega0 == pytest.approx(np.log(2.0), rel=1e-12)
        assert hmfa_closed_form.phi1_bar == pytest.approx(1.0)

    def test_requires_si(self, hmfa):
        with pytest.raises(ParameterError):
            SIClosedFormService.build(hmfa, EpidemicParams(1.0, 0.5))

    def test_requires_rank_one(self, two_block):
        with pytest.raises(KernelTypeError):
            SIClosedFormService.build(two_block)

    def test_rank_one_block_is_accepted(self):
        phi = np.array([1.0, 2.0, 3.0])
        kernel = DiscreteBlock(np.outer(phi, phi), Partition.uniform(3))
        cf = SIClosedFormService.build(kernel)
        assert cf.lambda1 == pytest.approx(14.0 / 3.0, rel=1e-10)


class TestScalarFunctions:
    def test_constant_kernel_formulas(self, hmfa_closed_form):
        omega = np.array([0.0, 0.5, 2.0])
        np.testing.assert_allclose(SIClosedFormService.F_eval(hmfa_closed_form, omega),
                                   -np.expm1(-omega))
        np.testing.assert_allclose(SIClosedFormService.prevalence(hmfa_closed_form, omega),
                                   -np.expm1(-omega))

    def test_negative_omega(self, hmfa_closed_form):
        with pytest.raises(DomainError):
            SIClosedFormService.F_eval(hmfa_closed_form, -1.0)

    def test_invert_prevalence(self, power_law_closed_form):
        omega = SIClosedFormService.invert_prevalence(power_law_closed_form, 0.3)
        assert SIClosedFormService.prevalence(power_law_closed_form, omega) == pytest.approx(
            0.3, rel=1e-12)

    def test_saturation(self, hmfa_closed_form):
        assert SIClosedFormService.saturation(hmfa_closed_form) == pytest.approx(1.0)
        with pytest.raises(SaturationError):
            SIClosedFormService.invert_prevalence(hmfa_closed_form, 1.0)


class TestOmega:
    def test_constant_kernel_logistic(self, hmfa_closed_form):
        times = np.linspace(-10.0, 10.0, 81)
        curve = SIClosedFormService.omega_curve(hmfa_closed_form, times)
        np.testing.assert_allclose(curve.prevalence, 1.0 / (1.0 + np.exp(-times)), atol=1e-9)
        assert np.all(np.diff(curve.omega) > 0.0)

    def test_anchor_at_zero(self, power_law_closed_form):
        omega = SIClosedFormService.omega_solve(power_law_closed_form, [-1.0, 0.0, 1.0])
        assert omega[1] == power_law_closed_form.omega0
        assert omega[0] < omega[1] < omega[2]

    def test_unsorted_grid(self, hmfa_closed_form):
        with pytest.raises(ParameterError):
            SIClosedFormService.omega_solve(hmfa_closed_form, [1.0, 0.0])

    @pytest.mark.parametrize('shift', [-2.0, 1.5])
    def test_translation(self, power_law_closed_form, shift):
        times = np.linspace(-3.0, 3.0, 13)
        omega = SIClosedFormService.omega_solve(power_law_closed_form, times + shift)
        start = SIClosedFormService.omega_solve(power_law_closed_form, [shift])[0]
        moved = replace(power_law_closed_form, omega0=start)
        np.testing.assert_allclose(SIClosedFormService.omega_solve(moved, times), omega,
                                   rtol=1e-7)

    def test_matches_integrator(self, power_law, power_law_closed_form, si_params):
        times = np.linspace(-5.0, 5.0, 101)
        exact = SIClosedFormService.si_trajectory(power_law_closed_form, times)
        u0 = SIClosedFormService.si_state(power_law_closed_form, times[0])
        numeric = DynamicsService.integrate(power_law, si_params, u0, (-5.0, 5.0),
                                            sample_times=times)
        assert DynamicsService.trajectory_distance(exact, numeric) <= 1e-6
        assert exact.prevalence[50] == pytest.approx(0.5, abs=1e-9)


class TestChi:
    def test_constant_kernel(self, hmfa_closed_form):
        curve = SIClosedFormService.chi_curve(hmfa_closed_form, 50)
        np.testing.assert_allclose(curve.si_links, curve.prevalence * (1.0 - curve.prevalence),
                                   atol=1e-12)
        assert curve.prevalence[-1] > 1.0 - 1e-6

    def test_chi_at_matches_trajectory(self, power_law, power_law_closed_form):
        trajectory = SIClosedFormService.si_trajectory(power_law_closed_form,
                                                       np.linspace(-4.0, 4.0, 17))
        observed = SIClosedFormService.chi_from_trajectory(power_law, trajectory)
        predicted = [SIClosedFormService.chi_at(power_law_closed_form, u)
                     for u in observed.prevalence]
        np.testing.assert_allclose(observed.si_links, predicted, rtol=1e-8, atol=1e-12)

    def test_too_few_samples(self, hmfa_closed_form):
        with pytest.raises(ParameterError):
            SIClosedFormService.chi_curve(hmfa_closed_form, 1)

    def test_links_bounded_by_quarter_square(self, power_law_closed_form):
        cf = power_law_closed_form
        curve = SIClosedFormService.chi_curve(cf, 200)
        assert np.all(curve.si_links >= 0.0)
        assert np.all(curve.si_links <= 0.25 * cf.lambda1 * cf.phi1_bar ** 2 * (1.0 + 1e-12))


class TestAnnealed:
    def test_generating_function_matches_closed_form(self):
        kernel = KernelService.build_annealed([1.0, 2.0, 3.0], [0.5, 0.3, 0.2])
        cf = SIClosedFormService.build(kernel)
        omega = np.array([0.5, 1.0, 2.0])
        ubar, F = SIClosedFormService.annealed_generating(kernel, omega)
        np.testing.assert_allclose(ubar, SIClosedFormService.prevalence(cf, omega), rtol=1e-9)
        np.testing.assert_allclose(F, SIClosedFormService.F_eval(cf, omega), rtol=1e-9)

    def test_rejects_other_kernels(self, power_law):
        with pytest.raises(KernelTypeError):
            SIClosedFormService.annealed_generating(power_law, 1.0)


class TestNearCritical:
    @pytest.mark.parametrize('beta, gap', [(1.05, 0.05), (1.1, 0.1)])
    def test_gap_to_endemic_state(self, hmfa, beta, gap):
        params = EpidemicParams(beta, 1.0)
        spectrum = KernelService.leading_eigenpair(hmfa)
        endemic = DynamicsService.endemic_solve(hmfa, params)
        measured = SIClosedFormService.near_critical_gap(spectrum, params, endemic)
        assert measured == pytest.approx(gap, rel=1e-6)
        assert measured <= 0.1 + 1e-9

    def test_limit_is_growth_rate_times_phi1(self, hmfa):
        params = EpidemicParams(2.1, 2.0)
        spectrum = KernelService.leading_eigenpair(hmfa)
        curve = SIClosedFormService.near_critical_curve(spectrum, params, [0.0, 400.0])
        np.testing.assert_allclose(curve.states[-1], 0.1 * spectrum.phi1.values, rtol=1e-9)

    def test_curve_start(self, power_law):
        params = EpidemicParams(1.0, 0.9)
        spectrum = KernelService.leading_eigenpair(power_law)
        curve = SIClosedFormService.near_critical_curve(spectrum, params, [0.0, 1.0], c0=0.5)
        np.testing.assert_allclose(curve.states[0], 0.1 * 0.5 * spectrum.phi1.values)

    def test_subcritical(self, hmfa):
        spectrum = KernelService.leading_eigenpair(hmfa)
        with pytest.raises(NoEndemicStateError):
            SIClosedFormService.near_critical_curve(spectrum, EpidemicParams(1.0, 1.0), [0.0])

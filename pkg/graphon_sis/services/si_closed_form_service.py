"""
SI closed-form service layer.
This module contains the separated-variable SI eternal solution, the
prevalence-to-SI-links curve, generating-function formulas for annealed
networks and the near-critical logistic approximation.
"""

import logging

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import bisect

from graphon_sis.config import Config
from graphon_sis.models.closed_form import ChiCurve, OmegaCurve, SIClosedForm
from graphon_sis.models.field import Field
from graphon_sis.models.kernel import DiscreteBlock, EpidemicParams
from graphon_sis.models.trajectory import Trajectory
from graphon_sis.services.kernel_service import KernelService
from graphon_sis.utils.errors import (
    DomainError,
    KernelTypeError,
    NoEndemicStateError,
    OmegaUnderflowError,
    ParameterError,
    SaturationError,
)

logger = logging.getLogger(__name__)

RANK_ONE_TOL = 1e-8
CHI_OMEGA_MIN = 1e-6
CHI_SATURATION = 1.0 - 1e-6
MODULE = 'si_closed_form'


def _check_omega(omega, operation):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0.0):
        raise DomainError('omega must be non-negative', module=MODULE, operation=operation)
    return omega


class SIClosedFormService:
    """Service class for the closed-form SI solution."""

    @staticmethod
    def build(kernel, params=None, spectrum=None, anchor_prevalence=0.5):
        """
        Prepare the closed-form SI solution of a rank-1 kernel.

        omega0 is fixed by requiring prevalence anchor_prevalence at t = 0.

        Args:
            kernel (KernelSpec): Rank-1 kernel (block kernels are checked numerically)
            params (EpidemicParams): SI parameters (gamma = 0); beta = 1 by default
            spectrum (Spectrum): Leading eigenpair for non rank-1 representations
            anchor_prevalence (float): Prevalence at t = 0, in (0, 1)

        Returns:
            SIClosedForm: Closed-form data

        Raises:
            KernelTypeError: If the kernel is not rank-1
            ParameterError: If gamma > 0
            SaturationError: If the anchor prevalence is unreachable
        """
        params = params or EpidemicParams(1.0, 0.0)
        if params.gamma != 0.0:
            raise ParameterError('Closed forms exist for SI dynamics only (gamma = 0)',
                                 module=MODULE, operation='build')
        if not 0.0 < anchor_prevalence < 1.0:
            raise ParameterError('anchor_prevalence must lie in (0, 1)',
                                 module=MODULE, operation='build')
        if kernel.is_rank_one:
            lambda1, phi1 = kernel.lambda1, kernel.phi1
        else:
            spectrum = spectrum or KernelService.leading_eigenpair(kernel)
            lambda1, phi1 = spectrum.lambda1, spectrum.phi1
            w = kernel.partition.cell_weights
            rank_one = lambda1 * np.outer(phi1.values, phi1.values * w)
            weighted = KernelService.weighted_matrix(kernel)
            scale = max(float(np.abs(weighted).max()), 1e-300)
            if float(np.abs(weighted - rank_one).max()) > RANK_ONE_TOL * scale:
                raise KernelTypeError('Closed-form SI solution needs a rank-1 kernel',
                                      module=MODULE, operation='build')
        cf = SIClosedForm(phi1, float(lambda1), params.beta * lambda1, 1.0, anchor_prevalence)
        omega0 = SIClosedFormService.invert_prevalence(cf, anchor_prevalence)
        return SIClosedForm(phi1, float(lambda1), params.beta * lambda1, omega0,
                            anchor_prevalence)

    @staticmethod
    def F_eval(cf, omega):
        """
        F(omega) = int phi1 (1 - exp(-omega phi1)) dx.

        Args:
            cf (SIClosedForm): Closed-form data
            omega (float | array): Non-negative argument(s)

        Returns:
            float | numpy.ndarray: F at omega

        Raises:
            DomainError: If omega < 0
        """
        omega = _check_omega(omega, 'F_eval')
        w = cf.partition.cell_weights
        phi = cf.phi1.values
        values = -np.expm1(-np.multiply.outer(omega, phi)) @ (w * phi)
        return float(values) if np.ndim(values) == 0 else values

    @staticmethod
    def prevalence(cf, omega):
        """U(omega) = int (1 - exp(-omega phi1)) dx."""
        omega = _check_omega(omega, 'prevalence')
        w = cf.partition.cell_weights
        values = -np.expm1(-np.multiply.outer(omega, cf.phi1.values)) @ w
        return float(values) if np.ndim(values) == 0 else values

    @staticmethod
    def saturation(cf):
        """Supremum of U: the measure of {phi1 > 0}."""
        return float(cf.partition.cell_weights[cf.phi1.values > 0.0].sum())

    @staticmethod
    def invert_prevalence(cf, ubar):
        """
        omega with U(omega) = ubar, by bisection (U is strictly increasing).

        Raises:
            SaturationError: If ubar is not below the supremum of U
        """
        if ubar <= 0.0:
            return 0.0
        if ubar >= SIClosedFormService.saturation(cf):
            raise SaturationError(f'Prevalence {ubar!r} is not reachable',
                                  module=MODULE, operation='invert_prevalence')
        upper = 1.0
        while SIClosedFormService.prevalence(cf, upper) < ubar:
            upper *= 2.0
            if upper > 1e300:
                raise SaturationError(f'Prevalence {ubar!r} is not reachable',
                                      module=MODULE, operation='invert_prevalence')
        return float(bisect(lambda x: SIClosedFormService.prevalence(cf, x) - ubar,
                            0.0, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                            maxiter=5000))

    @staticmethod
    def omega_solve(cf, t_grid):
        """
        Solve dOmega/dt = rate * F(Omega) from Omega(0) = omega0.

        Times after 0 are integrated forward, times before 0 backward.

        Args:
            cf (SIClosedForm): Closed-form data
            t_grid (array-like): Sorted times

        Returns:
            numpy.ndarray: Omega at t_grid

        Raises:
            OmegaUnderflowError: If Omega reaches 0 or the solver fails
        """
        t_grid = np.asarray(t_grid, dtype=float)
        if t_grid.size > 1 and np.any(np.diff(t_grid) < 0.0):
            raise ParameterError('t_grid must be sorted', module=MODULE, operation='omega_solve')
        omega = np.empty(t_grid.size)

        def rhs(_, y):
            return [cf.rate * SIClosedFormService.F_eval(cf, max(y[0], 0.0))]

        forward = t_grid >= 0.0
        for mask, reverse in ((forward, False), (~forward, True)):
            targets = t_grid[mask][::-1] if reverse else t_grid[mask]
            if targets.size == 0:
                continue
            values = np.full(targets.size, cf.omega0)
            if targets[-1] != 0.0:
                solution = solve_ivp(rhs, (0.0, targets[-1]), [cf.omega0], method='RK45',
                                     t_eval=targets, rtol=Config.OMEGA_REL_TOL,
                                     atol=Config.OMEGA_ABS_TOL)
                if not solution.success:
                    raise OmegaUnderflowError(f'Omega integration failed: {solution.message}',
                                              module=MODULE, operation='omega_solve')
                values = solution.y[0]
                if np.any(values <= 0.0):
                    raise OmegaUnderflowError('Omega reached 0 in finite backward time',
                                              module=MODULE, operation='omega_solve')
            omega[mask] = values[::-1] if reverse else values
        return omega

    @staticmethod
    def omega_curve(cf, t_grid):
        omega = SIClosedFormService.omega_solve(cf, t_grid)
        return OmegaCurve(np.asarray(t_grid, dtype=float), omega,
                          SIClosedFormService.prevalence(cf, omega))

    @staticmethod
    def si_state(cf, t=None, omega=None):
        """State 1 - exp(-Omega(t) phi1) as a Field."""
        if omega is None:
            omega = SIClosedFormService.omega_solve(cf, [t])[0]
        omega = float(_check_omega(omega, 'si_state'))
        return Field(-np.expm1(-omega * cf.phi1.values), cf.partition)

    @staticmethod
    def si_trajectory(cf, t_grid):
        """
        Closed-form SI trajectory with analytic rates.

        Returns:
            Trajectory: Samples at t_grid
        """
        t_grid = np.asarray(t_grid, dtype=float)
        omega = SIClosedFormService.omega_solve(cf, t_grid)
        phi = cf.phi1.values
        exponent = np.multiply.outer(omega, phi)
        states = -np.expm1(-exponent)
        growth = cf.rate * SIClosedFormService.F_eval(cf, omega)
        rates = np.exp(-exponent) * phi * np.reshape(growth, (-1, 1))
        return Trajectory(t_grid, states, cf.partition, cf.phi1, rates,
                          {'source': 'closed_form', 'omega0': cf.omega0})

    @staticmethod
    def chi_values(cf, omega):
        """SI links lambda1 F (phi1_bar - F) at omega."""
        F = SIClosedFormService.F_eval(cf, omega)
        return cf.lambda1 * F * (cf.phi1_bar - F)

    @staticmethod
    def chi_curve(cf, n_samples=100):
        """
        Sample the prevalence-to-SI-links curve parametrically in omega.

        omega runs over a log-spaced grid from 1e-6 to the first power of
        two with U(omega) > 1 - 1e-6.

        Args:
            cf (SIClosedForm): Closed-form data
            n_samples (int): Number of samples (>= 2)

        Returns:
            ChiCurve: Samples of (prevalence, SI links)
        """
        if n_samples < 2:
            raise ParameterError('chi_curve needs at least 2 samples', module=MODULE,
                                 operation='chi_curve')
        target = min(CHI_SATURATION, SIClosedFormService.saturation(cf) - 1e-12)
        omega_max = 1.0
        while SIClosedFormService.prevalence(cf, omega_max) <= target:
            omega_max *= 2.0
        omega = np.logspace(np.log10(CHI_OMEGA_MIN), np.log10(omega_max), n_samples)
        prevalence = SIClosedFormService.prevalence(cf, omega)
        links = SIClosedFormService.chi_values(cf, omega)
        logger.info('Chi curve: %d samples up to omega=%.6g', n_samples, omega_max)
        return ChiCurve(prevalence, links, cf.phi1_bar, omega)

    @staticmethod
    def chi_at(cf, ubar):
        """
        SI links at a given prevalence.

        Raises:
            SaturationError: If ubar is not below the supremum of U
        """
        omega = SIClosedFormService.invert_prevalence(cf, ubar)
        return float(SIClosedFormService.chi_values(cf, omega))

    @staticmethod
    def chi_from_trajectory(kernel, trajectory):
        """Pairs (int u, int (1 - u) Wu) along a trajectory."""
        w = kernel.partition.cell_weights
        states = trajectory.states
        pressure = KernelService.apply_values(kernel, states.T).T
        links = ((1.0 - states) * pressure) @ w
        return ChiCurve(states @ w, links, float('nan'))

    @staticmethod
    def annealed_generating(kernel, omega):
        """
        U and F of an uncorrelated annealed kernel via its generating function.

        With s = sqrt(<k^2>): U = 1 - G(-omega / s) and
        F = (<k> - G'(-omega / s)) / s.

        Raises:
            KernelTypeError: If the kernel is not uncorrelated annealed
        """
        annealed = getattr(kernel, 'annealed', None)
        if not isinstance(kernel, DiscreteBlock) or annealed is None or not annealed.uncorrelated:
            raise KernelTypeError('Generating functions need an uncorrelated annealed kernel',
                                  module=MODULE, operation='annealed_generating')
        omega = _check_omega(omega, 'annealed_generating')
        s = np.sqrt(annealed.second_moment)
        argument = -omega / s
        ubar = 1.0 - annealed.generating(argument)
        F = (annealed.mean_degree - annealed.generating_derivative(argument)) / s
        if np.ndim(ubar) == 0:
            return float(ubar), float(F)
        return ubar, F

    @staticmethod
    def near_critical_curve(spectrum, params, t_grid, c0=0.5):
        """
        Near-critical approximation u(t, x) = A c(t) phi1(x).

        c solves c' = (beta lambda1 - gamma) c (1 - c) with c(0) = c0 and
        the amplitude is A = beta lambda1 - gamma. Time is measured in units
        of the curing time, so the limit A phi1 approximates the endemic
        state when gamma = 1 and beta lambda1 is close to 1.

        Returns:
            Trajectory: Approximation sampled at t_grid

        Raises:
            NoEndemicStateError: If beta * lambda1 <= gamma
        """
        alpha1 = params.alpha(spectrum.lambda1)
        if alpha1 <= 0.0:
            raise NoEndemicStateError('Near-critical curve needs beta * lambda1 > gamma',
                                      module=MODULE, operation='near_critical_curve')
        if params.gamma <= 0.0:
            raise ParameterError('Near-critical curve needs gamma > 0', module=MODULE,
                                 operation='near_critical_curve')
        if not 0.0 < c0 < 1.0:
            raise ParameterError('c0 must lie in (0, 1)', module=MODULE,
                                 operation='near_critical_curve')
        t_grid = np.asarray(t_grid, dtype=float)
        amplitude = alpha1
        c = 1.0 / (1.0 + (1.0 / c0 - 1.0) * np.exp(-alpha1 * t_grid))
        phi = spectrum.phi1.values
        states = amplitude * np.outer(c, phi)
        rates = amplitude * np.outer(alpha1 * c * (1.0 - c), phi)
        return Trajectory(t_grid, states, spectrum.phi1.partition, spectrum.phi1, rates,
                          {'source': 'near_critical', 'amplitude': amplitude})

    @staticmethod
    def near_critical_gap(spectrum, params, endemic):
        """Relative L2 gap between the near-critical limit A phi1 and psi."""
        amplitude = params.alpha(spectrum.lambda1)
        diff = amplitude * spectrum.phi1.values - endemic.psi.values
        return float(spectrum.phi1.with_values(diff).norm() / endemic.psi.norm())

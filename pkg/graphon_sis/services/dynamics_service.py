"""
Dynamics service layer.
This module contains the SIS right-hand side, the adaptive RK 4(5)
integrator, the linearized flow, the endemic solver and the numerical
checks of the linearization and stability bounds.
"""

import logging
import math

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import bisect

from graphon_sis.config import Config
from graphon_sis.models.field import Field
from graphon_sis.models.kernel import DiscreteBlock
from graphon_sis.models.reports import (
    BoundReport,
    EndemicState,
    MonotoneReport,
    PropertyReport,
)
from graphon_sis.models.trajectory import IntegratorConfig, Trajectory
from graphon_sis.services.kernel_service import KernelService
from graphon_sis.utils.errors import (
    DomainError,
    NoEndemicStateError,
    ParameterError,
    SolverError,
    StiffnessError,
    TruncationError,
    UndefinedTimeError,
)

logger = logging.getLogger(__name__)

PROPERTY_SLACK = 1e-8
DEFAULT_SAMPLES = 201


def _weighted_norm(weights, values, axis=-1):
    return np.sqrt(np.sum(weights * values ** 2, axis=axis))


class DynamicsService:
    """Service class for the SIS flow."""

    @staticmethod
    def rhs_values(kernel, params, values):
        """beta (1 - u) Wu - gamma u on raw values (1-D, or cells x k)."""
        pressure = KernelService.apply_values(kernel, values)
        return params.beta * (1.0 - values) * pressure - params.gamma * values

    @staticmethod
    def rhs(kernel, params, u):
        """
        Right-hand side of the SIS flow.

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Infection and curing rates
            u (Field): State on the kernel partition

        Returns:
            Field: du/dt

        Raises:
            DimensionError: If u lives on another partition
        """
        u.require_partition(kernel.partition, operation='rhs')
        return u.with_values(DynamicsService.rhs_values(kernel, params, u.values))

    @staticmethod
    def _phi1(kernel, spectrum):
        if spectrum is not None:
            return spectrum.phi1
        if kernel.is_rank_one:
            return kernel.phi1
        return KernelService.leading_eigenpair(kernel).phi1

    @staticmethod
    def integrate(kernel, params, u0, t_span, cfg=None, sample_times=None, spectrum=None,
                  with_rates=True):
        """
        Integrate the SIS flow with an adaptive embedded RK 4(5) scheme.

        Accepted steps are never projected onto [0, 1]; a step leaving
        [-state_tol, 1 + state_tol] is an error. Samples come from the
        stepper's dense output, whose interpolant may overshoot the box
        between accepted steps: overshoots up to sample_tol are clipped
        and the largest one is reported in stats.

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Infection and curing rates
            u0 (Field): Initial state in [0, 1] per cell
            t_span (tuple): (t_a, t_b) with t_b > t_a
            cfg (IntegratorConfig): Tolerances; defaults when omitted
            sample_times (array-like): Output times within t_span
            spectrum (Spectrum): Supplies phi1 for the c1 summary
            with_rates (bool): Store du/dt at the samples

        Returns:
            Trajectory: Sampled solution

        Raises:
            DomainError: If a step or a sample leaves the domain
            StiffnessError: If the step size collapses
        """
        cfg = cfg or IntegratorConfig()
        u0.require_partition(kernel.partition, operation='integrate')
        t_a, t_b = float(t_span[0]), float(t_span[1])
        if not t_b > t_a:
            raise ParameterError('Integration needs t_b > t_a', operation='integrate')
        if not u0.in_domain(cfg.state_tol):
            raise DomainError('Initial state outside [0, 1]', operation='integrate')
        if sample_times is None:
            sample_times = np.linspace(t_a, t_b, DEFAULT_SAMPLES)
        samples = np.asarray(sample_times, dtype=float)
        if samples.size == 0 or samples[0] < t_a or samples[-1] > t_b:
            raise ParameterError('Sample times must lie within t_span', operation='integrate')
        if samples.size > 1 and np.any(np.diff(samples) <= 0.0):
            raise ParameterError('Sample times must be strictly increasing',
                                 operation='integrate')

        def fun(_, y):
            return DynamicsService.rhs_values(kernel, params, y)

        solver = RK45(
            fun, t_a, np.array(u0.values), t_b,
            rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
        )
        lower, upper = -cfg.state_tol, 1.0 + cfg.state_tol
        min_step = cfg.min_step_ratio * (t_b - t_a)
        states = np.empty((samples.size, kernel.partition.size))
        cursor = 0
        while cursor < samples.size and samples[cursor] <= t_a:
            states[cursor] = u0.values
            cursor += 1
        steps = 0
        short_steps = 0
        while solver.status == 'running' and cursor < samples.size:
            message = solver.step()
            if solver.status == 'failed':
                raise StiffnessError(
                    f'Integrator failed at t={solver.t:.6g}: {message}',
                    operation='integrate', t=solver.t,
                )
            steps += 1
            if solver.y.min() < lower or solver.y.max() > upper:
                raise DomainError(
                    f'State left [0, 1] at t={solver.t:.6g} '
                    f'(min {solver.y.min():.3g}, max {solver.y.max():.3g})',
                    operation='integrate', t=solver.t,
                )
            short_steps = short_steps + 1 if solver.step_size < min_step else 0
            if short_steps >= cfg.stiff_steps and solver.t < t_b:
                raise StiffnessError(
                    f'Step size {solver.step_size:.3g} stayed below {min_step:.3g} for '
                    f'{short_steps} steps at t={solver.t:.6g}; the kernel is too stiff '
                    f'for RK45 (for power-law kernels set phi_cap)',
                    operation='integrate', t=solver.t,
                )
            end = int(np.searchsorted(samples, solver.t, side='right'))
            if end > cursor:
                dense = solver.dense_output()
                block = dense(samples[cursor:end])
                states[cursor:end] = block.T if block.ndim == 2 else block
                cursor = end

        if cursor < samples.size:
            states[cursor:] = solver.y
        overshoot = max(0.0, -states.min(), states.max() - 1.0)
        if overshoot > cfg.sample_tol:
            raise DomainError(
                f'Sampled state left [0, 1] by {overshoot:.3g}', operation='integrate'
            )
        if overshoot > 0.0:
            np.clip(states, 0.0, 1.0, out=states)

        attempts = max((solver.nfev - 2) // 6, steps)
        stats = {
            'steps': steps,
            'rejected': attempts - steps,
            'nfev': int(solver.nfev),
            'sample_overshoot': overshoot,
        }
        rates = None
        if with_rates:
            rates = DynamicsService.rhs_values(kernel, params, states.T).T
        logger.info(
            'Integrated on [%g, %g]: %d steps, %d rejected, %d samples',
            t_a, t_b, stats['steps'], stats['rejected'], samples.size,
        )
        return Trajectory(
            samples, states, kernel.partition, DynamicsService._phi1(kernel, spectrum),
            rates, stats,
        )

    @staticmethod
    def linear_states(kernel, params, u0, times, k_modes=None, basis=None):
        """
        Linearized flow sum_k c_k(0) exp(alpha_k t) phi_k at several times.

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Infection and curing rates
            u0 (Field): Initial state
            times (array-like): Evaluation times
            k_modes (int): Number of leading modes (all when omitted)
            basis (ModalBasis): Precomputed basis

        Returns:
            numpy.ndarray: One row per time

        Raises:
            TruncationError: If more modes are requested than available
        """
        u0.require_partition(kernel.partition, operation='linear_solution')
        basis = basis or KernelService.modal_decomposition(kernel, u0)
        if k_modes is None:
            k_modes = basis.count
        if k_modes < 1 or k_modes > basis.count:
            raise TruncationError(
                f'Requested {k_modes} modes, {basis.count} available',
                operation='linear_solution', available=basis.count,
            )
        w = kernel.partition.cell_weights
        modes = basis.modes[:, :k_modes]
        coefficients = modes.T @ (w * u0.values)
        alphas = params.alpha(basis.eigenvalues[:k_modes])
        growth = np.exp(np.multiply.outer(np.asarray(times, dtype=float), alphas))
        return (growth * coefficients) @ modes.T

    @staticmethod
    def linear_solution(kernel, params, u0, t, k_modes=None, basis=None):
        """Linearized flow at a single time, as a Field."""
        values = DynamicsService.linear_states(kernel, params, u0, [t], k_modes, basis)[0]
        return u0.with_values(values)

    @staticmethod
    def endemic_solve(kernel, params, tol=Config.ENDEMIC_TOL, method='auto', spectrum=None,
                      max_iter=Config.ENDEMIC_MAX_ITER):
        """
        Solve beta (1 - psi) W psi = gamma psi for the nonzero endemic state.

        Rank-1 kernels reduce to a scalar equation for c = <phi1, psi>
        solved by bisection; other kernels iterate psi <- beta W psi /
        (gamma + beta W psi) from psi = 1.

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Supercritical parameters
            tol (float): Residual tolerance
            method (str): 'auto', 'bisection' (rank-1 only) or 'fixed_point'
            spectrum (Spectrum): Leading eigenpair, computed when omitted
            max_iter (int): Fixed-point iteration cap

        Returns:
            EndemicState: psi with its residual

        Raises:
            NoEndemicStateError: If beta * lambda1 <= gamma
            SolverError: If the solver fails to reach tol
        """
        if method not in ('auto', 'bisection', 'fixed_point'):
            raise ParameterError(f'Unknown endemic method {method!r}', operation='endemic_solve')
        spectrum = spectrum or KernelService.leading_eigenpair(kernel)
        if not params.is_supercritical(spectrum.lambda1):
            raise NoEndemicStateError(
                f'beta * lambda1 = {params.beta * spectrum.lambda1:.6g} does not exceed '
                f'gamma = {params.gamma:.6g}',
                operation='endemic_solve',
            )
        partition = kernel.partition
        w = partition.cell_weights

        def residual_of(psi):
            return float(_weighted_norm(w, DynamicsService.rhs_values(kernel, params, psi)))

        if params.gamma == 0.0:
            psi = np.ones(partition.size)
            c_star = float(np.dot(w, kernel.phi1.values)) if kernel.is_rank_one else None
            return EndemicState(Field(psi, partition), residual_of(psi), c_star, 0, 'closed')

        if method == 'bisection' and not kernel.is_rank_one:
            raise ParameterError('Bisection applies to rank-1 kernels only',
                                 operation='endemic_solve')

        if kernel.is_rank_one and method in ('auto', 'bisection'):
            phi = kernel.phi1.values
            rate = params.beta * kernel.lambda1
            a = params.gamma / rate

            def g(c):
                return float(np.dot(w * phi, phi / (a + c * phi))) - 1.0

            upper = 1.0
            for _ in range(200):
                if g(upper) < 0.0:
                    break
                upper *= 2.0
            else:
                raise SolverError('Could not bracket the endemic scalar equation',
                                  operation='endemic_solve')
            c_star = bisect(g, 0.0, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                            maxiter=2000)
            psi = rate * c_star * phi / (params.gamma + rate * c_star * phi)
            residual = residual_of(psi)
            if residual > tol:
                raise SolverError(
                    f'Endemic residual {residual:.3g} above tolerance {tol:.3g}',
                    operation='endemic_solve', residual=residual,
                )
            logger.info('Endemic state by bisection: c=%.15g residual=%.3g', c_star, residual)
            return EndemicState(Field(psi, partition), residual, float(c_star), 0, 'bisection')

        psi = np.ones(partition.size)
        best = math.inf
        residual = residual_of(psi)
        for iteration in range(1, int(max_iter) + 1):
            pressure = params.beta * KernelService.apply_values(kernel, psi)
            updated = pressure / (params.gamma + pressure)
            if not np.all(np.isfinite(updated)):
                raise SolverError('Fixed-point iteration diverged', operation='endemic_solve')
            stalled = np.array_equal(updated, psi)
            psi = updated
            residual = residual_of(psi)
            if residual <= tol:
                break
            if stalled or residual > 1e3 * best:
                raise SolverError(
                    f'Fixed-point iteration stalled at residual {residual:.3g}',
                    operation='endemic_solve', residual=residual,
                )
            best = min(best, residual)
        else:
            raise SolverError(
                f'Fixed-point iteration did not converge in {max_iter} iterations',
                operation='endemic_solve', residual=residual,
            )
        c_star = float(np.dot(w * kernel.phi1.values, psi)) if kernel.is_rank_one else None
        logger.info('Endemic state by fixed point: %d iterations, residual %.3g',
                    iteration, residual)
        return EndemicState(Field(psi, partition), residual, c_star, iteration, 'fixed_point')

    @staticmethod
    def check_cooperative_domination(trajectory, linear, slack=PROPERTY_SLACK):
        """u <= v + slack per cell at every sample, v the linearized flow."""
        excess = float(np.max(trajectory.states - linear))
        return PropertyReport('cooperative_domination', excess <= slack, excess, slack)

    @staticmethod
    def check_c1_bound(trajectory, spectrum, slack=PROPERTY_SLACK):
        """||u(t)||_2 <= sqrt(c1(t) / m) at every sample when m > 0."""
        m = spectrum.m
        if m <= 0.0:
            return PropertyReport('c1_bound', True, 0.0, None, {'skipped': 'min phi1 is zero'})
        bound = np.sqrt(np.maximum(trajectory.c1, 0.0) / m)
        excess = float(np.max(trajectory.l2 - bound))
        return PropertyReport('c1_bound', excess <= slack, excess, slack, {'m': m})

    @staticmethod
    def check_lyapunov_decrease(trajectory, endemic, slack=PROPERTY_SLACK):
        """||u(t) - psi||_2 is non-increasing across samples."""
        w = trajectory.partition.cell_weights
        distance = _weighted_norm(w, trajectory.states - endemic.psi.values)
        increase = float(np.max(np.diff(distance))) if distance.size > 1 else 0.0
        return PropertyReport(
            'lyapunov_decrease', increase <= slack, increase, slack,
            {'initial_distance': float(distance[0]), 'final_distance': float(distance[-1])},
        )

    @staticmethod
    def check_infection_pressure(kernel, trajectory):
        """
        min_x Wu(t, x) stays above half its value at t = 0.

        The halved initial minimum is reported as the measured epsilon_0 tilde.
        """
        pressure = KernelService.apply_values(kernel, trajectory.states.T).min(axis=0)
        eps_tilde = 0.5 * float(pressure[0])
        lowest = float(pressure.min())
        return PropertyReport(
            'infection_pressure', eps_tilde > 0.0 and lowest >= eps_tilde, lowest, eps_tilde,
            {'epsilon0_tilde': eps_tilde},
        )

    @staticmethod
    def verify_linearization_bounds(kernel, params, u0, eps_prime, cfg=None, spectrum=None,
                                    samples=DEFAULT_SAMPLES):
        """
        Measure the linearization error up to the eps'-level time.

        Integrates u and evaluates the linearized flow v on [0, t_bar] with
        t_bar = log(eps' / c1(0)) / alpha1, then checks
        sup ||u - v||_2 <= (beta lambda1 / alpha1) (||u0|| / c1(0))^2 eps'^2,
        ||v(t_bar) / eps' - phi1||_2 <= (||u0|| / c1(0)) exp(-(alpha1 - alpha2) t_bar),
        cooperative domination, the c1 bound and, for block kernels, the
        initial ratio bound 1 / (m^2 J).

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Supercritical parameters
            u0 (Field): Initial state with c1(0) > 0
            eps_prime (float): Target level of c1
            cfg (IntegratorConfig): Integrator settings
            spectrum (Spectrum): Leading eigenpair
            samples (int): Number of sample times

        Returns:
            BoundReport: Measured quantities and checks

        Raises:
            UndefinedTimeError: If c1(0) <= 0 or c1(0) >= eps'
        """
        spectrum = spectrum or KernelService.leading_eigenpair(kernel)
        alpha1 = params.alpha(spectrum.lambda1)
        if alpha1 <= 0.0:
            raise NoEndemicStateError('Linearization bounds need beta * lambda1 > gamma',
                                      operation='verify_linearization_bounds')
        c1 = spectrum.phi1.inner(u0)
        if c1 <= 0.0:
            raise UndefinedTimeError('c1(0) must be positive to define t_bar',
                                     operation='verify_linearization_bounds', c1=c1)
        t_bar = math.log(eps_prime / c1) / alpha1
        if t_bar <= 0.0:
            raise UndefinedTimeError(
                f'c1(0) = {c1:.6g} already reaches eps\' = {eps_prime:.6g}',
                operation='verify_linearization_bounds', c1=c1,
            )
        basis = KernelService.modal_decomposition(kernel, u0)
        lambda2 = float(basis.eigenvalues[1]) if basis.count > 1 else 0.0
        alpha_gap = params.beta * (spectrum.lambda1 - lambda2)
        norm0 = u0.norm()
        ratio = norm0 / c1
        t_hat = math.log(ratio) / alpha_gap if alpha_gap > 0.0 else math.inf

        times = np.linspace(0.0, t_bar, samples)
        trajectory = DynamicsService.integrate(
            kernel, params, u0, (0.0, t_bar), cfg, times, spectrum, with_rates=False
        )
        linear = DynamicsService.linear_states(kernel, params, u0, times, basis=basis)
        w = kernel.partition.cell_weights

        linear_error = float(np.max(_weighted_norm(w, trajectory.states - linear)))
        linear_bound = params.beta * spectrum.lambda1 / alpha1 * ratio ** 2 * eps_prime ** 2
        leading = float(_weighted_norm(w, linear[-1] / eps_prime - spectrum.phi1.values))
        leading_bound = ratio * math.exp(-alpha_gap * t_bar)
        checks = [
            PropertyReport('linear_error', linear_error <= linear_bound, linear_error,
                           linear_bound),
            PropertyReport('leading_term', leading <= leading_bound + PROPERTY_SLACK, leading,
                           leading_bound),
            DynamicsService.check_cooperative_domination(trajectory, linear),
            DynamicsService.check_c1_bound(trajectory, spectrum),
        ]
        if isinstance(kernel, DiscreteBlock):
            m = spectrum.m
            J = kernel.partition.min_weight
            bound = math.inf if m <= 0.0 else 1.0 / (m ** 2 * J)
            checks.append(PropertyReport(
                'discrete_initial_bound', ratio ** 2 <= bound * (1.0 + 1e-12), ratio ** 2, bound,
                {'m': m, 'J': J},
            ))
        hypothesis = params.gamma < params.beta * spectrum.lambda1 < (
            params.gamma + 2.0 * params.beta * (spectrum.lambda1 - lambda2)
        )
        report = BoundReport(t_bar, t_hat, eps_prime, c1, norm0, checks, hypothesis,
                             dict(trajectory.stats))
        logger.info('Linearization bounds on [0, %.6g]: passed=%s', t_bar, report.passed)
        return report

    @staticmethod
    def default_theta0(spectrum, params):
        """0.5 (1 - gamma / (beta lambda1)) / ||phi1||_inf."""
        return 0.5 * (1.0 - params.gamma / (params.beta * spectrum.lambda1)) / (
            spectrum.phi1.sup_norm()
        )

    @staticmethod
    def monotone_envelope(kernel, params, theta, t_span, theta0=None, cfg=None, spectrum=None,
                          samples=DEFAULT_SAMPLES):
        """
        Integrate from theta * phi1 and check per-cell monotone growth.

        A violation is reported in the result, not raised.

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Supercritical parameters
            theta (float): Initial amplitude
            t_span (tuple): Time window
            theta0 (float): Amplitude threshold; default_theta0() when omitted
            cfg (IntegratorConfig): Integrator settings
            spectrum (Spectrum): Leading eigenpair
            samples (int): Number of sample times

        Returns:
            MonotoneReport: Trajectory and verdict

        Raises:
            DomainError: If theta * phi1 leaves [0, 1]
        """
        cfg = cfg or IntegratorConfig()
        spectrum = spectrum or KernelService.leading_eigenpair(kernel)
        if theta < 0.0:
            raise ParameterError('theta must be non-negative', operation='monotone_envelope')
        if not params.is_supercritical(spectrum.lambda1):
            raise NoEndemicStateError('Monotone envelope needs beta * lambda1 > gamma',
                                      operation='monotone_envelope')
        if theta0 is None:
            theta0 = DynamicsService.default_theta0(spectrum, params)
        if theta > theta0:
            logger.warning('theta=%.6g exceeds theta0=%.6g; monotonicity is not guaranteed',
                           theta, theta0)
        u0 = spectrum.phi1.with_values(theta * spectrum.phi1.values)
        if not u0.in_domain():
            raise DomainError('theta * phi1 exceeds 1', operation='monotone_envelope',
                              theta=theta)
        times = np.linspace(t_span[0], t_span[1], samples)
        trajectory = DynamicsService.integrate(kernel, params, u0, t_span, cfg, times, spectrum)
        drops = trajectory.states[:-1] - trajectory.states[1:]
        max_decrease = float(max(drops.max(), 0.0)) if drops.size else 0.0
        passed = max_decrease <= cfg.state_tol
        if not passed:
            logger.warning('Monotone envelope decreased by %.3g', max_decrease)
        return MonotoneReport(trajectory, float(theta), float(theta0), max_decrease, passed)

    @staticmethod
    def trajectory_distance(traj1, traj2):
        """sup over common samples of ||u1(t) - u2(t)||_2, partitions may differ."""
        if traj1.times.size != traj2.times.size or not np.allclose(traj1.times, traj2.times):
            raise ParameterError('Trajectories must share sample times',
                                 operation='trajectory_distance')
        if traj1.partition.same_as(traj2.partition):
            w = traj1.partition.cell_weights
            return float(np.max(_weighted_norm(w, traj1.states - traj2.states)))
        common = traj1.partition.common_refinement(traj2.partition)
        idx1 = traj1.partition.cell_index(common.midpoints)
        idx2 = traj2.partition.cell_index(common.midpoints)
        diff = traj1.states[:, idx1] - traj2.states[:, idx2]
        return float(np.max(_weighted_norm(common.cell_weights, diff)))

    @staticmethod
    def perturbation_sensitivity(reference, coarse, fine, params, u0_value, t_end, cfg=None,
                                 samples=DEFAULT_SAMPLES, slack=0.2,
                                 max_cells=Config.REFINEMENT_MAX_CELLS):
        """
        Check that trajectory deviations scale with kernel distance.

        Integrates the same constant initial state on the reference kernel
        and two perturbations. Passes when sup||u_ref - u_fine|| /
        sup||u_ref - u_coarse|| <= (1 + slack) * d_fine / d_coarse.

        Args:
            reference (KernelSpec): Reference kernel
            coarse (KernelSpec): Perturbation at larger distance
            fine (KernelSpec): Perturbation at smaller distance
            params (EpidemicParams): Infection and curing rates
            u0_value (float): Constant initial state
            t_end (float): Horizon T
            cfg (IntegratorConfig): Integrator settings
            samples (int): Number of sample times
            slack (float): Relative slack on the ratio
            max_cells (int): Cell limit for the kernel distance refinement

        Returns:
            PropertyReport: Measured ratio against its bound
        """
        times = np.linspace(0.0, t_end, samples)

        def run(kernel):
            u0 = Field.constant(u0_value, kernel.partition)
            return DynamicsService.integrate(kernel, params, u0, (0.0, t_end), cfg, times,
                                             with_rates=False)

        base = run(reference)
        sup_coarse = DynamicsService.trajectory_distance(base, run(coarse))
        sup_fine = DynamicsService.trajectory_distance(base, run(fine))
        d_coarse = KernelService.kernel_distance(reference, coarse, max_cells)
        d_fine = KernelService.kernel_distance(reference, fine, max_cells)
        if sup_coarse == 0.0 or d_coarse == 0.0:
            raise ParameterError('Coarse perturbation must differ from the reference',
                                 operation='perturbation_sensitivity')
        measured = sup_fine / sup_coarse
        bound = (1.0 + slack) * d_fine / d_coarse
        return PropertyReport(
            'kernel_perturbation', measured <= bound, measured, bound,
            {
                'sup_coarse': sup_coarse,
                'sup_fine': sup_fine,
                'distance_coarse': d_coarse,
                'distance_fine': d_fine,
                'constant_coarse': sup_coarse / d_coarse,
                'constant_fine': sup_fine / d_fine if d_fine > 0.0 else None,
            },
        )

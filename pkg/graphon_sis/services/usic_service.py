"""
USIC service layer.
This module contains the time-shift alignment of epidemic curves, the sweep
over families of small initial conditions and the construction of the
nontrivial eternal solution.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from graphon_sis.config import Config
from graphon_sis.models.usic import (
    AlignmentReport,
    EternalSolution,
    SweepReport,
    UniquenessReport,
)
from graphon_sis.services.dynamics_service import DynamicsService
from graphon_sis.services.kernel_service import KernelService
from graphon_sis.utils.errors import (
    DimensionError,
    InsufficientHorizonError,
    NoEndemicStateError,
    ParameterError,
    UndefinedTimeError,
    UnreachableLevelError,
)

logger = logging.getLogger(__name__)

STATISTICS = ('c1', 'prevalence')
TREND_SLACK = 0.1
MAX_GAP_RATIO = 0.5
MIN_EARLY_ALIGNMENT = 0.999
EARLY_WINDOW_FACTOR = 10.0


def _statistic(trajectory, statistic):
    if statistic not in STATISTICS:
        raise ParameterError(f'Unknown alignment statistic {statistic!r}', operation='align')
    return trajectory.c1 if statistic == 'c1' else trajectory.prevalence


class UsicService:
    """Service class for alignment and eternal solutions."""

    @staticmethod
    def crossing_time(trajectory, level, statistic='c1'):
        """
        First time the statistic reaches level, interpolated linearly.

        Raises:
            InsufficientHorizonError: If the level is never reached
        """
        values = _statistic(trajectory, statistic)
        hits = np.flatnonzero(values >= level)
        if hits.size == 0:
            raise InsufficientHorizonError(
                f'{statistic} never reaches {level:.6g} before t={trajectory.times[-1]:.6g}',
                operation='align', level=level,
            )
        k = int(hits[0])
        times = trajectory.times
        if k == 0:
            return float(times[0])
        fraction = (level - values[k - 1]) / (values[k] - values[k - 1])
        return float(times[k - 1] + fraction * (times[k] - times[k - 1]))

    @staticmethod
    def align(traj1, traj2, level, horizon, statistic='c1', equilibrium=None, spacing=None):
        """
        Align two trajectories at the first crossing of a level.

        t_i is the first time the statistic of trajectory i reaches level.
        The distance sup_{0 <= s <= horizon} ||u1(t1 + s) - u2(t2 + s)||_2 is
        measured on a common grid resampled by cubic Hermite interpolation.

        Args:
            traj1 (Trajectory): First trajectory
            traj2 (Trajectory): Second trajectory on the same partition
            level (float): Crossing level
            horizon (float): Length of the compared window after the shift
            statistic (str): 'c1' or 'prevalence'
            equilibrium (float): Statistic of the endemic state, if known
            spacing (float): Resampling step; finest stored spacing by default

        Returns:
            AlignmentReport: Shifts, distance and pre-shift sizes

        Raises:
            DimensionError: If the trajectories live on different partitions
            UnreachableLevelError: If level is at or above the equilibrium
            InsufficientHorizonError: If a trajectory is too short
        """
        if not traj1.partition.same_as(traj2.partition):
            raise DimensionError('Aligned trajectories must share a partition',
                                 operation='align')
        if equilibrium is not None and level >= equilibrium:
            raise UnreachableLevelError(
                f'Level {level:.6g} is not below the equilibrium value {equilibrium:.6g}',
                operation='align', level=level, equilibrium=equilibrium,
            )
        if horizon < 0.0:
            raise ParameterError('horizon must be non-negative', operation='align')
        shifts = []
        for trajectory in (traj1, traj2):
            t_cross = UsicService.crossing_time(trajectory, level, statistic)
            if t_cross + horizon > trajectory.times[-1] + 1e-12 * max(1.0, horizon):
                raise InsufficientHorizonError(
                    f'Trajectory ends at {trajectory.times[-1]:.6g}, before '
                    f'{t_cross:.6g} + horizon {horizon:.6g}',
                    operation='align',
                )
            shifts.append(t_cross)

        if spacing is None:
            spacing = min(float(np.min(np.diff(t.times))) if t.times.size > 1 else horizon
                          for t in (traj1, traj2))
        steps = max(int(math.ceil(horizon / spacing - 1e-9)), 1) if horizon > 0.0 else 0
        grid = np.linspace(0.0, horizon, steps + 1)
        end1 = np.minimum(shifts[0] + grid, traj1.times[-1])
        end2 = np.minimum(shifts[1] + grid, traj2.times[-1])
        states1 = traj1.interpolate(end1)
        states2 = traj2.interpolate(end2)
        w = traj1.partition.cell_weights
        distance = float(np.max(np.sqrt(((states1 - states2) ** 2) @ w)))

        pre_shift = 0.0
        for trajectory, t_cross in zip((traj1, traj2), shifts):
            before = trajectory.l2[trajectory.times <= t_cross]
            at_cross = np.clip(trajectory.interpolate([t_cross])[0], 0.0, 1.0)
            sizes = [float(np.sqrt(np.dot(w, at_cross ** 2)))]
            if before.size:
                sizes.append(float(before.max()))
            pre_shift = max(pre_shift, max(sizes))

        return AlignmentReport(shifts[0], shifts[1], distance, pre_shift, float(level),
                               float(horizon), statistic)

    @staticmethod
    def equilibrium_statistic(kernel, params, spectrum, statistic='c1'):
        """c1 or prevalence of the endemic state."""
        endemic = DynamicsService.endemic_solve(kernel, params, spectrum=spectrum)
        if statistic == 'c1':
            return spectrum.phi1.inner(endemic.psi)
        return endemic.psi.integral()

    @staticmethod
    def usic_sweep(kernel, params, initial_family, level, horizon, cfg=None, spectrum=None,
                   statistic='c1', spacing=None, workers=Config.WORKERS):
        """
        Pairwise alignment over a family of small initial conditions.

        Members are integrated concurrently on a grid of step
        spacing (0.01 / alpha1 by default) long enough to reach level and
        cover horizon. The trend summary measures, for each member, the
        aligned distance to the member of smallest norm; it must not grow
        (within 10%) as the norm shrinks.

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Supercritical parameters
            initial_family (list[Field]): Initial states with c1 > 0
            level (float): Crossing level
            horizon (float): Compared window after the shift
            cfg (IntegratorConfig): Integrator settings
            spectrum (Spectrum): Spectrum with lambda2
            statistic (str): 'c1' or 'prevalence'
            spacing (float): Sample spacing
            workers (int): Thread pool width

        Returns:
            SweepReport: Pairwise reports and summaries
        """
        if not initial_family:
            raise ParameterError('The initial family is empty', operation='usic_sweep')
        if spectrum is None or spectrum.lambda2 is None:
            spectrum = KernelService.spectrum(kernel)
        alpha1 = params.alpha(spectrum.lambda1)
        if alpha1 <= 0.0:
            raise NoEndemicStateError('USIC sweep needs beta * lambda1 > gamma',
                                      operation='usic_sweep')
        equilibrium = UsicService.equilibrium_statistic(kernel, params, spectrum, statistic)
        if level >= equilibrium:
            raise UnreachableLevelError(
                f'Level {level:.6g} is not below the equilibrium value {equilibrium:.6g}',
                operation='usic_sweep',
            )
        spacing = spacing or 0.01 / alpha1

        def run(u0):
            c1 = spectrum.phi1.inner(u0)
            if c1 <= 0.0:
                raise UndefinedTimeError('Family members need c1(0) > 0',
                                         operation='usic_sweep', c1=c1)
            t_bar = math.log(level / c1) / alpha1
            t_end = max(0.0, t_bar) + horizon + 10.0 / alpha1
            n = int(math.ceil(t_end / spacing))
            times = np.arange(n + 1) * spacing
            return DynamicsService.integrate(kernel, params, u0, (0.0, times[-1]), cfg, times,
                                             spectrum)

        with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            trajectories = list(executor.map(run, initial_family))

        size = len(trajectories)
        reports = [[None] * size for _ in range(size)]
        for i in range(size):
            for j in range(i, size):
                report = UsicService.align(trajectories[i], trajectories[j], level, horizon,
                                           statistic, equilibrium, spacing)
                reports[i][j] = report
                reports[j][i] = replace(report, t1=report.t2, t2=report.t1)

        norms = np.array([u0.norm() for u0 in initial_family])
        pairs = [(i, j) for i in range(size) for j in range(i + 1, size)]
        max_distance = max((reports[i][j].sup_distance for i, j in pairs), default=0.0)
        max_pre_shift = max(reports[i][i].pre_shift_max for i in range(size))

        restricted = []
        for delta in sorted(set(norms.tolist()), reverse=True):
            inside = [(i, j) for i, j in pairs if norms[i] <= delta and norms[j] <= delta]
            restricted.append({
                'delta': delta,
                'max_sup_distance': max(
                    (reports[i][j].sup_distance for i, j in inside), default=0.0
                ),
            })

        order = np.argsort(-norms, kind='stable')
        smallest = int(order[-1])
        reference = [
            {'index': int(i), 'norm': float(norms[i]),
             'sup_distance': reports[i][smallest].sup_distance}
            for i in order[:-1]
        ]
        trend_ok = all(
            later['sup_distance'] <= (1.0 + TREND_SLACK) * earlier['sup_distance']
            for earlier, later in zip(reference, reference[1:])
        )
        if not trend_ok:
            logger.warning('Aligned distances do not shrink with the initial norm')

        lambda2 = spectrum.lambda2
        hypothesis = params.gamma < params.beta * spectrum.lambda1 < (
            params.gamma + 2.0 * params.beta * (spectrum.lambda1 - lambda2)
        )
        logger.info('USIC sweep over %d members: max sup distance %.3g', size, max_distance)
        return SweepReport(reports, norms, max_distance, max_pre_shift, restricted, reference,
                           trend_ok, hypothesis, trajectories)

    @staticmethod
    def construct_eternal(kernel, params, epsilon0=None, n_stages=8, t_fwd=20.0,
                          samples_per_unit=50, cfg=None, spectrum=None,
                          workers=Config.WORKERS):
        """
        Approximate the nontrivial eternal solution by staged forward runs.

        Stage n starts at t = -n from min(eps_n phi1, 1) with
        eps_n = eps0 exp(-alpha1 n) and runs to t_fwd. Consecutive stages are
        compared on [-(n - 1), t_fwd]; the last stage is returned. The gap
        ratios of the final three stages must stay below 0.5 and the early
        part of the final stage must be aligned with phi1.

        Args:
            kernel (KernelSpec): The kernel
            params (EpidemicParams): Supercritical parameters
            epsilon0 (float): Anchor level; 0.01 alpha1 / (beta lambda1) by default
            n_stages (int): Number of stages
            t_fwd (float): Final time
            samples_per_unit (int): Samples per unit time
            cfg (IntegratorConfig): Integrator settings
            spectrum (Spectrum): Leading eigenpair
            workers (int): Thread pool width

        Returns:
            EternalSolution: Final stage with Cauchy gaps and checks
        """
        if n_stages < 1:
            raise ParameterError('n_stages must be at least 1', operation='construct_eternal')
        spectrum = spectrum or KernelService.leading_eigenpair(kernel)
        alpha1 = params.alpha(spectrum.lambda1)
        if alpha1 <= 0.0:
            raise NoEndemicStateError('Eternal solutions need beta * lambda1 > gamma',
                                      operation='construct_eternal')
        if epsilon0 is None:
            epsilon0 = 0.01 * alpha1 / (params.beta * spectrum.lambda1)
        if epsilon0 <= 0.0:
            raise ParameterError('epsilon0 must be positive', operation='construct_eternal')
        spu = int(samples_per_unit)
        phi = spectrum.phi1
        epsilons = [epsilon0 * math.exp(-alpha1 * n) for n in range(1, n_stages + 1)]

        def run(n):
            times = np.arange(-n * spu, int(round(t_fwd * spu)) + 1) / spu
            u0 = phi.with_values(np.minimum(epsilons[n - 1] * phi.values, 1.0))
            return DynamicsService.integrate(
                kernel, params, u0, (times[0], times[-1]), cfg, times, spectrum,
                with_rates=(n == n_stages),
            )

        with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            stages = list(executor.map(run, range(1, n_stages + 1)))

        w = kernel.partition.cell_weights
        gaps = []
        for previous, current in zip(stages, stages[1:]):
            diff = current.states[spu:] - previous.states
            gaps.append(float(np.max(np.sqrt((diff ** 2) @ w))))
        ratios = [later / earlier if earlier > 0.0 else 0.0
                  for earlier, later in zip(gaps, gaps[1:])]
        converged = all(ratio <= MAX_GAP_RATIO for ratio in ratios[-3:])
        if not converged:
            logger.warning('Cauchy gaps shrink too slowly: ratios %s', ratios[-3:])

        final = stages[-1]
        solution = EternalSolution(
            final, float(epsilon0), epsilons[-1], gaps, ratios, converged,
            bool(final.prevalence[0] <= 2.0 * epsilons[-1]), 0.0,
            max_gap_ratio=MAX_GAP_RATIO, min_alignment=MIN_EARLY_ALIGNMENT,
        )
        quartile = max(1, final.times.size // 4)
        small = final.prevalence[:quartile] <= EARLY_WINDOW_FACTOR * final.prevalence[0]
        window = quartile if small.all() else max(1, int(np.argmin(small)))
        early = float(np.min(solution.alignment_ratio[:window]))
        logger.info('Eternal solution with %d stages: gaps %s, early alignment %.6f',
                    n_stages, gaps, early)
        return replace(solution, early_alignment=early,
                       early_window=(float(final.times[0]), float(final.times[window - 1])))

    @staticmethod
    def uniqueness_check(kernel, params, eps_a, eps_b, n_stages=8, tol=1e-6, t_fwd=20.0,
                         samples_per_unit=50, level=None, cfg=None, spectrum=None,
                         workers=Config.WORKERS):
        """
        Align two eternal approximations built from different anchors.

        The default level is half the equilibrium c1. Both curves are
        compared over the longest window available after their shifts.

        Returns:
            UniquenessReport: Alignment and verdict against tol
        """
        spectrum = spectrum or KernelService.leading_eigenpair(kernel)
        equilibrium = UsicService.equilibrium_statistic(kernel, params, spectrum)
        if level is None:
            level = 0.5 * equilibrium
        eternals = [
            UsicService.construct_eternal(kernel, params, eps, n_stages, t_fwd,
                                          samples_per_unit, cfg, spectrum, workers)
            for eps in (eps_a, eps_b)
        ]
        curves = [e.trajectory.shifted(-e.trajectory.times[0]) for e in eternals]
        remaining = min(
            curve.times[-1] - UsicService.crossing_time(curve, level) for curve in curves
        )
        alignment = UsicService.align(curves[0], curves[1], level, max(remaining, 0.0), 'c1',
                                      equilibrium, 1.0 / samples_per_unit)
        report = UniquenessReport(alignment, float(eps_a), float(eps_b), float(tol))
        logger.info('Uniqueness check: aligned distance %.3g (tol %.3g)',
                    alignment.sup_distance, tol)
        return report

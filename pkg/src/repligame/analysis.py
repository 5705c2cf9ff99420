"""Experiment harness: GRD-versus-MFG errors, discount-rate sweeps, grid refinement and long-run replicator runs."""

import logging
import math
import os
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import IncomparableError, StabilityViolation
from .grd import grd_iterate, grd_solve
from .grid import (
    DensityTrajectory,
    GridSpec,
    InitialKind,
    TerminalKind,
    build_grid,
    initial_density,
    midtime_level,
    refinement_grid,
    terminal_value,
)
from .mfg import FixedPointConfig, MfgSolution, mfg_fixed_point
from .rates import TransitionRateSpec
from .utilities import (
    EnergyParams,
    KernelKind,
    UtilityKernel,
    average_utility,
    build_kernel,
    make_energy_kernel,
    utilities_for,
)

logger = logging.getLogger(__name__)

RowStatus = Literal["converged", "CF"]


def worker_count(threads: int | None) -> int:
    """Pool size for independent solves: ``threads`` if set, else one worker per CPU."""
    return threads or os.cpu_count() or 1


@dataclass(frozen=True)
class Scenario:
    """Everything needed to pose the GRD and its MFG counterpart on one grid."""

    kernel_kind: KernelKind
    rate: TransitionRateSpec
    grid: GridSpec
    deltas: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    init: InitialKind = "uniform"
    terminal: TerminalKind = "zero"
    psi_bar: float = 0.0
    energy: EnergyParams | None = None
    fixed_point: FixedPointConfig = field(default_factory=FixedPointConfig)
    threads: int | None = None

    def on_grid(self, grid: GridSpec) -> "Scenario":
        return replace(self, grid=grid)

    def kernel(self) -> UtilityKernel:
        return build_kernel(self.kernel_kind, self.grid, self.energy)

    def initial(self) -> np.ndarray:
        return initial_density(self.init, self.grid)

    def terminal_gain(self) -> np.ndarray:
        return terminal_value(self.terminal, self.psi_bar, self.grid)

    def solve_mfg(self, delta: float, kernel: UtilityKernel | None = None) -> MfgSolution:
        return mfg_fixed_point(
            self.initial(),
            kernel or self.kernel(),
            self.rate,
            delta,
            self.terminal_gain(),
            self.grid,
            self.fixed_point,
        )


@dataclass
class SweepRow:
    delta: float
    err_density: float | None  # None marks CF
    err_value: float | None
    cr_density: float | None
    cr_value: float | None
    iterations: int
    runtime_seconds: float
    status: RowStatus
    reason: str | None = None


@dataclass
class SweepReport:
    """Rows sorted by delta, plus the solutions they were computed from."""

    rows: list[SweepRow]
    grd: DensityTrajectory
    grd_utilities: np.ndarray = field(repr=False)
    solutions: dict[float, MfgSolution] = field(default_factory=dict, repr=False)

    @property
    def has_failures(self) -> bool:
        return any(row.status == "CF" for row in self.rows)


def midtime_errors(
    grd_traj: DensityTrajectory,
    grd_utilities: np.ndarray,
    mfg: MfgSolution,
    grid: GridSpec,
) -> tuple[float | None, float | None]:
    """Sup-norm gaps at t = T/2 between the GRD and the MFG.

    Returns (density error, utility-versus-value error); both None when the MFG
    did not converge.

    Raises:
        IncomparableError: if the solutions live on different grids
    """
    if grd_traj.grid != grid or mfg.density.grid != grid:
        raise IncomparableError(f"GRD grid {grd_traj.grid} and MFG grid {mfg.density.grid} differ from {grid}")
    if not mfg.converged:
        return None, None
    mid = midtime_level(grid)
    err_density = float(np.max(np.abs(grd_traj.values[mid] - mfg.density.values[mid])))
    err_value = float(np.max(np.abs(grd_utilities[mid] - mfg.value.values[mid])))
    return err_density, err_value


def _rate_chain(points: Sequence[tuple[float, float | None]], base: float) -> list[float | None]:
    rates: list[float | None] = []
    for (prev_x, prev_err), (x, err) in zip(points, points[1:]):
        if prev_err is None or err is None or prev_err <= 0 or err <= 0:
            rates.append(None)
            continue
        rates.append(math.log(prev_err / err) / math.log(base))
    return rates


def convergence_rates(errs: Sequence[tuple[float, float | None]]) -> list[float | None]:
    """Observed order per step of the delta ladder.

    Entry m compares delta_m with delta_(m-1): log(err_(m-1) / err_m) / log(delta_m / delta_(m-1)),
    which is log10 of the error ratio on a x10 ladder. A CF (None) entry breaks
    the chain: the rates on both sides of it are None.
    """
    deltas = [delta for delta, _ in errs]
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("convergence_rates needs strictly increasing deltas")
    rates: list[float | None] = []
    for (prev_d, prev_err), (d, err) in zip(errs, errs[1:]):
        (rate,) = _rate_chain([(prev_d, prev_err), (d, err)], base=d / prev_d)
        rates.append(rate)
    return rates


def delta_sweep(scenario: Scenario) -> SweepReport:
    """Solve the GRD once and the MFG for every delta, then tabulate errors and rates at t = T/2."""
    grid = scenario.grid
    midtime_level(grid)
    kernel = scenario.kernel()
    grd = grd_solve(scenario.initial(), kernel, scenario.rate, grid)
    grd_utilities = utilities_for(kernel, grd.values, grid)
    deltas = sorted(scenario.deltas)

    def run_row(delta: float) -> tuple[SweepRow, MfgSolution | None]:
        start = time.perf_counter()
        try:
            solution = scenario.solve_mfg(delta, kernel)
        except StabilityViolation as e:
            logger.warning("delta=%g marked CF: %s", delta, e)
            row = SweepRow(delta, None, None, None, None, 0, time.perf_counter() - start, "CF", str(e))
            return row, None
        err_density, err_value = midtime_errors(grd, grd_utilities, solution, grid)
        row = SweepRow(
            delta=delta,
            err_density=err_density,
            err_value=err_value,
            cr_density=None,
            cr_value=None,
            iterations=solution.iterations,
            runtime_seconds=time.perf_counter() - start,
            status="converged" if solution.converged else "CF",
            reason=solution.reason,
        )
        logger.info("delta=%g: err_density=%s err_value=%s (%s)", delta, err_density, err_value, row.status)
        return row, solution

    with ThreadPoolExecutor(max_workers=worker_count(scenario.threads)) as pool:
        results = list(pool.map(run_row, deltas))

    rows = [row for row, _ in results]
    density_rates = convergence_rates([(row.delta, row.err_density) for row in rows])
    value_rates = convergence_rates([(row.delta, row.err_value) for row in rows])
    for row, cr_density, cr_value in zip(rows[1:], density_rates, value_rates):
        row.cr_density = cr_density
        row.cr_value = cr_value

    solutions = {row.delta: solution for row, solution in results if solution is not None}
    return SweepReport(rows=rows, grd=grd, grd_utilities=grd_utilities, solutions=solutions)


@dataclass
class RefinementRow:
    n: int
    delta: float
    big_i: int
    big_j: int
    err_density: float | None
    cr_density: float | None
    status: RowStatus


def restrict(fine: np.ndarray, coarse_cells: int) -> np.ndarray:
    """Average nested fine cells onto a coarse grid whose cell count divides the fine one."""
    ratio, remainder = divmod(fine.shape[-1], coarse_cells)
    if remainder or ratio < 1:
        raise IncomparableError(f"{fine.shape[-1]} cells do not nest into {coarse_cells}")
    return fine.reshape(*fine.shape[:-1], coarse_cells, ratio).mean(axis=-1)


def refinement_study(scenario: Scenario, n_levels: int, deltas: Sequence[float]) -> list[RefinementRow]:
    """Midtime MFG densities on the ratio-2 ladder compared with the finest level.

    Level n uses (I0 * 2^(n-1), J0 * 2^(n-1)) where (I0, J0) is the scenario grid;
    level ``n_levels`` is the reference and gets no row.
    """
    if n_levels < 3:
        raise ValueError(f"n_levels >= 3 required, got {n_levels}")
    grids = {n: refinement_grid(scenario.grid, n) for n in range(1, n_levels + 1)}
    for grid in grids.values():
        midtime_level(grid)

    def midtime_density(job: tuple[float, int]) -> np.ndarray | None:
        delta, n = job
        try:
            solution = scenario.on_grid(grids[n]).solve_mfg(delta)
        except StabilityViolation as e:
            logger.warning("refinement n=%d delta=%g failed: %s", n, delta, e)
            return None
        if not solution.converged:
            return None
        return solution.density.midtime.copy()

    jobs = [(float(delta), n) for delta in deltas for n in range(1, n_levels + 1)]
    with ThreadPoolExecutor(max_workers=worker_count(scenario.threads)) as pool:
        middles = dict(zip(jobs, pool.map(midtime_density, jobs)))

    rows: list[RefinementRow] = []
    for delta in deltas:
        reference = middles[(float(delta), n_levels)]
        errors: list[tuple[float, float | None]] = []
        for n in range(1, n_levels):
            coarse = middles[(float(delta), n)]
            if reference is None or coarse is None:
                err = None
            else:
                err = float(np.max(np.abs(coarse - restrict(reference, grids[n].big_j))))
            errors.append((float(n), err))
        rates = [None, *_rate_chain(errors, base=2.0)]
        for (n, err), cr in zip(errors, rates):
            grid = grids[int(n)]
            rows.append(
                RefinementRow(
                    n=int(n),
                    delta=float(delta),
                    big_i=grid.big_i,
                    big_j=grid.big_j,
                    err_density=err,
                    cr_density=cr,
                    status="CF" if err is None else "converged",
                )
            )
    return rows


@dataclass(frozen=True)
class LongrunRow:
    x_bar: float
    t: float
    average_utility: float


def _recorded_levels(times: Sequence[float], dt: float) -> list[int]:
    levels = []
    for t in times:
        level = round(t / dt)
        if t < 0 or abs(level * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"recorded time {t} is not a nonnegative multiple of dt = {dt}")
        levels.append(level)
    return levels


def longrun_grid(times: Sequence[float], dt: float, dx: float) -> GridSpec:
    """Grid of a long-run run: step ``dt`` up to the last recorded time, cells of width ``dx``."""
    last = max(max(_recorded_levels(times, dt)), 1)
    cells = round(1.0 / dx)
    if abs(cells * dx - 1.0) > 1e-12:
        raise ValueError(f"dx = {dx} does not divide [0, 1]")
    return build_grid(last, cells, last * dt)


def longrun_replicator(
    params: EnergyParams,
    x_bar_list: Sequence[float],
    times: Sequence[float],
    dt: float = 0.1,
    dx: float = 0.01,
    threads: int | None = None,
) -> list[LongrunRow]:
    """Average utility of the classical replicator dynamic from a uniform start, per threshold and time."""
    levels = _recorded_levels(times, dt)
    grid = longrun_grid(times, dt, dx)
    wanted = dict(zip(levels, times))
    rate = TransitionRateSpec("power", 1.0)

    def run(x_bar: float) -> list[LongrunRow]:
        kernel = make_energy_kernel(params.with_threshold(x_bar), grid)
        logger.info("long-run replicator: x_bar=%g up to t=%g", x_bar, grid.t_end)
        found = []
        for i, p in grd_iterate(initial_density("uniform", grid), kernel, rate, grid):
            if i in wanted:
                u_bar = average_utility(utilities_for(kernel, p, grid), p, grid)
                found.append(LongrunRow(x_bar=float(x_bar), t=float(wanted[i]), average_utility=u_bar))
            if i >= max(levels):
                break
        return found

    with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
        per_threshold = list(pool.map(run, x_bar_list))
    rows = [row for group in per_threshold for row in group]
    return sorted(rows, key=lambda row: (row.x_bar, row.t))


def myopic_gap(solution: MfgSolution, kernel: UtilityKernel) -> float:
    """max_j |Phi(T/2, x_j) - U(x_j, p(T/2))|: distance of the value function from the instantaneous utility."""
    grid = solution.density.grid
    utility = utilities_for(kernel, solution.density.midtime, grid)
    return float(np.max(np.abs(solution.value.midtime - utility)))


def low_use_mass(density: DensityTrajectory, threshold: float = 0.2, level: int | None = None) -> float:
    """Mass dx * sum_{x_j <= threshold} p_j at ``level`` (the terminal level by default)."""
    grid = density.grid
    row = density.values[grid.big_i if level is None else level]
    return float(grid.dx * np.sum(row[grid.nodes <= threshold]))

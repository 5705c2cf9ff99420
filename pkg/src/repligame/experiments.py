"""Experiment dispatch: run a validated scenario and write its CSV and metadata artifacts."""

import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from . import __version__
from .analysis import (
    Scenario,
    SweepReport,
    delta_sweep,
    longrun_grid,
    longrun_replicator,
    refinement_study,
)
from .config import ScenarioConfig, render
from .errors import StabilityViolation
from .grd import grd_solve
from .grid import GridSpec
from .utilities import energy_equilibrium_report, equilibrium_curve, utilities_for

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONVERGENCE_FAILURE = 2

# Full double precision in every numeric CSV field
CSV_FLOAT = "%.17g"
REPORT_HEADER = "delta,err_density,cr_density,err_value,cr_value,status,iterations,runtime_s"


@dataclass
class RunOutcome:
    """What a run produced; ``summary`` lines are meant for the console."""

    exit_code: int
    files: list[Path] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)


class RunMetadata(BaseModel):
    """Flat metadata written to run.json."""

    package: str = "repligame"
    version: str = __version__
    python_version: str
    numpy_version: str
    experiment: str
    # None when the experiment uses no space-time grid
    grid_i: int | None = None
    grid_j: int | None = None
    grid_t: float | None = None
    dt: float | None = None
    dx: float | None = None
    exit_code: int
    runtime_seconds: float
    files: list[str]
    config: str


def snapshot_levels(grid: GridSpec) -> list[int]:
    """Time levels nearest to t = 0, T/4, T/2, 3T/4 and T."""
    return sorted({round(k * grid.big_i / 4) for k in range(5)})


def _fmt(value: float | None, missing: str = "") -> str:
    return missing if value is None else CSV_FLOAT % value


def _write_columns(path: Path, header: str, columns: list[np.ndarray]) -> Path:
    np.savetxt(path, np.column_stack(columns), delimiter=",", header=header, comments="", fmt=CSV_FLOAT)
    return path


def _write_rows(path: Path, header: str, rows: list[list[str]]) -> Path:
    np.savetxt(path, np.array(rows, dtype=str).reshape(len(rows), -1), delimiter=",", header=header, comments="", fmt="%s")
    return path


def _write_report(path: Path, report: SweepReport) -> Path:
    rows = [
        [
            _fmt(row.delta),
            _fmt(row.err_density, "CF"),
            _fmt(row.cr_density),
            _fmt(row.err_value, "CF"),
            _fmt(row.cr_value),
            row.status,
            str(row.iterations),
            _fmt(row.runtime_seconds),
        ]
        for row in report.rows
    ]
    return _write_rows(path, REPORT_HEADER, rows)


def _write_snapshots(
    directory: Path,
    grid: GridSpec,
    grd_density: np.ndarray,
    grd_utilities: np.ndarray,
    mfg_density: np.ndarray | None = None,
    mfg_value: np.ndarray | None = None,
) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    x = grid.nodes
    for level in snapshot_levels(grid):
        density_columns = [x, grd_density[level]]
        value_columns = [x, grd_utilities[level]]
        density_header, value_header = "x,p_grd", "x,u_grd"
        if mfg_density is not None and mfg_value is not None:
            density_columns.append(mfg_density[level])
            value_columns.append(mfg_value[level])
            density_header += ",p_mfg"
            value_header += ",phi_mfg"
        written.append(_write_columns(directory / f"density_t{level}.csv", density_header, density_columns))
        written.append(_write_columns(directory / f"value_t{level}.csv", value_header, value_columns))
    return written


def _delta_directory(output: Path, delta: float) -> Path:
    return output / f"delta_{delta:g}"


def run_grd(config: ScenarioConfig, scenario: Scenario, output: Path) -> RunOutcome:
    kernel = scenario.kernel()
    trajectory = grd_solve(scenario.initial(), kernel, scenario.rate, scenario.grid)
    utilities = utilities_for(kernel, trajectory.values, scenario.grid)
    files = _write_snapshots(output, scenario.grid, trajectory.values, utilities)
    summary = [f"GRD: {scenario.rate.describe()}, mass defect {trajectory.mass_defect():.3e}"]
    return RunOutcome(EXIT_OK, files, summary)


def run_sweep(config: ScenarioConfig, scenario: Scenario, output: Path) -> RunOutcome:
    report = delta_sweep(scenario)
    files = [_write_report(output / "report.csv", report)]
    single = len(report.rows) == 1
    for row in report.rows:
        solution = report.solutions.get(row.delta)
        if solution is None or not solution.converged:
            continue
        directory = output if single else _delta_directory(output, row.delta)
        files += _write_snapshots(
            directory,
            scenario.grid,
            report.grd.values,
            report.grd_utilities,
            solution.density.values,
            solution.value.values,
        )

    summary = []
    for row in report.rows:
        if row.status == "CF":
            summary.append(f"delta={row.delta:g}: CF ({row.reason})")
        else:
            summary.append(f"delta={row.delta:g}: err_density={row.err_density:.3e} err_value={row.err_value:.3e}")
    exit_code = EXIT_CONVERGENCE_FAILURE if report.has_failures else EXIT_OK
    return RunOutcome(exit_code, files, summary)


def run_refinement(config: ScenarioConfig, scenario: Scenario, output: Path) -> RunOutcome:
    rows = refinement_study(scenario, config.refinement.levels, scenario.deltas)
    table = [
        [
            str(row.n),
            _fmt(row.delta),
            str(row.big_i),
            str(row.big_j),
            _fmt(row.err_density, "CF"),
            _fmt(row.cr_density),
            row.status,
        ]
        for row in rows
    ]
    files = [_write_rows(output / "refinement.csv", "n,delta,I,J,err_density,cr_density,status", table)]
    summary = [
        f"n={row.n} ({row.big_i}x{row.big_j}), delta={row.delta:g}: "
        + ("CF" if row.err_density is None else f"err={row.err_density:.3e}")
        for row in rows
    ]
    exit_code = EXIT_CONVERGENCE_FAILURE if any(row.status == "CF" for row in rows) else EXIT_OK
    return RunOutcome(exit_code, files, summary)


def run_longrun(config: ScenarioConfig, scenario: Scenario, output: Path) -> RunOutcome:
    section = config.longrun
    rows = longrun_replicator(
        config.kernel.energy_params(),
        section.x_bars,
        section.times,
        dt=section.dt,
        dx=section.dx,
        threads=scenario.threads,
    )
    table = np.array([[row.x_bar, row.t, row.average_utility] for row in rows])
    files = [_write_columns(output / "longrun.csv", "x_bar,t,u_bar", list(table.T))]
    summary = [f"x_bar={row.x_bar:g}, t={row.t:g}: average utility {row.average_utility:.4f}" for row in rows]
    return RunOutcome(EXIT_OK, files, summary)


def run_equilibrium(config: ScenarioConfig, scenario: Scenario, output: Path) -> RunOutcome:
    params = config.kernel.energy_params()
    report = energy_equilibrium_report(params)
    x, utility = equilibrium_curve(params)
    files = [_write_columns(output / "equilibrium.csv", "x,u_pure", [x, utility])]
    summary = [
        f"x_bar_1 = {report.x_bar_1:.3f}",
        f"x_bar_2 = {report.x_bar_2:.3f}",
        f"regime: {report.regime} (x_bar = {params.x_bar:g})",
    ]
    for candidate in report.candidate_utilities:
        bound = "" if candidate.attained else " (supremum, not attained)"
        summary.append(f"U({candidate.label} = {candidate.x:.3f}) = {candidate.utility:.3f}{bound}")
    if report.predicted_equilibrium is None:
        summary.append("no pure-strategy equilibrium")
    else:
        summary.append(f"predicted equilibrium at x = {report.predicted_equilibrium:.3f}")
    return RunOutcome(EXIT_OK, files, summary)


_RUNNERS = {
    "grd": run_grd,
    "mfg": run_sweep,
    "delta_sweep": run_sweep,
    "refinement": run_refinement,
    "longrun": run_longrun,
    "equilibrium": run_equilibrium,
}


def _run_grid(config: ScenarioConfig) -> GridSpec | None:
    """The grid the experiment actually solved on."""
    match config.experiment:
        case "equilibrium":
            return None
        case "longrun":
            section = config.longrun
            return longrun_grid(section.times, section.dt, section.dx)
    return config.grid.to_grid()


def _write_metadata(config: ScenarioConfig, outcome: RunOutcome, output: Path, runtime: float) -> Path:
    grid = _run_grid(config)
    grid_fields = {}
    if grid is not None:
        grid_fields = {"grid_i": grid.big_i, "grid_j": grid.big_j, "grid_t": grid.t_end, "dt": grid.dt, "dx": grid.dx}
    metadata = RunMetadata(
        python_version=platform.python_version(),
        numpy_version=np.__version__,
        experiment=config.experiment,
        **grid_fields,
        exit_code=outcome.exit_code,
        runtime_seconds=runtime,
        files=[str(path.relative_to(output)) for path in outcome.files],
        config=render(config),
    )
    path = output / "run.json"
    path.write_text(metadata.model_dump_json(indent=2), encoding="utf-8")
    return path


def run_experiment(config: ScenarioConfig, threads: int | None = None) -> RunOutcome:
    """Dispatch ``config`` to its experiment and write all artifacts under ``config.output_path``.

    Exit codes: 0 on success, 2 if any row failed to converge, 1 on a stability
    violation or an I/O failure (reported with the offending path).
    """
    output = config.output_path
    start = time.perf_counter()
    logger.info("Running %s experiment into %s", config.experiment, output)
    try:
        output.mkdir(parents=True, exist_ok=True)
        scenario = config.to_scenario(threads)
        outcome = _RUNNERS[config.experiment](config, scenario, output)
        outcome.files.append(_write_metadata(config, outcome, output, time.perf_counter() - start))
    except StabilityViolation as e:
        print(f"Error: {e}", file=sys.stderr)
        return RunOutcome(EXIT_ERROR, summary=[f"stability violation: {e.inequality}"])
    except OSError as e:
        print(f"Error: cannot write {e.filename or output}: {e.strerror or e}", file=sys.stderr)
        return RunOutcome(EXIT_ERROR)

    for path in outcome.files:
        logger.info("Wrote %s", path)
    return outcome

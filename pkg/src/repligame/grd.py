"""Explicit Euler solver for the generalized replicator dynamic."""

import logging
from collections.abc import Iterator

import numpy as np

from .errors import StabilityViolation
from .grid import DensityTrajectory, GridSpec, mass
from .rates import TransitionRateSpec, eval_rate
from .utilities import UtilityKernel, utilities_for, utility_bound

logger = logging.getLogger(__name__)

# Tolerance on the unit-mass precondition of a step
STEP_MASS_TOLERANCE = 1e-10


def net_transfer(values: np.ndarray, p: np.ndarray, spec: TransitionRateSpec, dx: float) -> np.ndarray:
    """Per-capita net inflow dx * sum_k [C(v_j - v_k) - C(v_k - v_j)] p_k.

    Only one of C(d) and C(-d) is nonzero, so the bracket is -sign(d) C(|d|) with
    d = v_k - v_j; it is exactly antisymmetric in (j, k).
    """
    gaps = values[None, :] - values[:, None]
    flux = -np.sign(gaps) * eval_rate(spec, np.abs(gaps))
    return dx * (flux @ p)


def grd_stability_lhs(spec: TransitionRateSpec, k_utility: float, dt: float) -> float:
    """Left-hand side of the nonnegativity condition 2 C(2K) dt < 1."""
    return 2.0 * float(eval_rate(spec, 2.0 * k_utility)) * dt


def check_grd_stability(spec: TransitionRateSpec, k_utility: float, dt: float) -> None:
    lhs = grd_stability_lhs(spec, k_utility, dt)
    if lhs >= 1.0:
        raise StabilityViolation(f"2*C(2K)*dt < 1 with K = {k_utility:.6g}, dt = {dt:.6g}", lhs)


def grd_step(
    p_prev: np.ndarray,
    u_prev: np.ndarray,
    spec: TransitionRateSpec,
    grid: GridSpec,
    k_utility: float | None = None,
) -> np.ndarray:
    """One explicit step p_j += dt * p_j * (net inflow toward j).

    Args:
        p_prev: Density at the previous level (nonnegative, unit mass)
        u_prev: Utilities evaluated on ``p_prev``
        spec: Transition rate
        grid: Grid supplying dt and dx
        k_utility: Utility bound K for the stability check; defaults to max |u_prev|

    Raises:
        StabilityViolation: if 2 C(2K) dt >= 1
    """
    p_prev = grid.check_vector(p_prev, "p_prev")
    u_prev = grid.check_vector(u_prev, "u_prev")
    if abs(mass(p_prev, grid) - 1.0) > STEP_MASS_TOLERANCE:
        raise ValueError("p_prev must have unit mass")
    if k_utility is None:
        k_utility = float(np.max(np.abs(u_prev)))
    check_grd_stability(spec, k_utility, grid.dt)
    return transfer_step(p_prev, u_prev, spec, grid)


def transfer_step(p: np.ndarray, values: np.ndarray, spec: TransitionRateSpec, grid: GridSpec) -> np.ndarray:
    """Unchecked explicit step driven by ``values`` (utilities, or a value-function row)."""
    return p + grid.dt * p * net_transfer(values, p, spec, grid.dx)


def grd_iterate(
    p0: np.ndarray,
    kernel: UtilityKernel,
    spec: TransitionRateSpec,
    grid: GridSpec,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (level, density) for levels 0..I without storing the trajectory."""
    p = grid.check_vector(p0, "p0").copy()
    check_grd_stability(spec, utility_bound(kernel), grid.dt)
    yield 0, p
    for i in range(1, grid.big_i + 1):
        p = transfer_step(p, utilities_for(kernel, p, grid), spec, grid)
        yield i, p


def grd_solve(
    p0: np.ndarray,
    kernel: UtilityKernel,
    spec: TransitionRateSpec,
    grid: GridSpec,
) -> DensityTrajectory:
    """Integrate the generalized replicator dynamic from ``p0`` over every time level.

    Raises:
        StabilityViolation: if 2 C(2K) dt >= 1 with K the kernel's utility bound
    """
    if abs(mass(np.asarray(p0, dtype=np.float64), grid) - 1.0) > STEP_MASS_TOLERANCE:
        raise ValueError("p0 must have unit mass")
    logger.info("GRD solve: %s, kernel %s, I=%d, J=%d", spec.describe(), kernel.label, grid.big_i, grid.big_j)
    values = np.empty((grid.big_i + 1, grid.big_j))
    for i, p in grd_iterate(p0, kernel, spec, grid):
        values[i] = p
    return DensityTrajectory(values=values, grid=grid)

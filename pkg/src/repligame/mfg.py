"""Discounted mean field game: backward HJB sweep, forward FP sweep and their relaxed fixed point."""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import StabilityViolation
from .grd import transfer_step
from .grid import DensityTrajectory, GridSpec, ValueTrajectory
from .rates import TransitionRateSpec, eval_primitive, eval_rate, primitive_lipschitz_bound
from .utilities import UtilityKernel, utilities_for

logger = logging.getLogger(__name__)

SolveStatus = Literal["converged", "convergence_failure"]

# Slack allowed on the a-posteriori bound checks (roundoff only)
BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class FixedPointConfig:
    """Settings of the relaxed forward-backward iteration."""

    relaxation: float = 0.25
    max_iters: int = 1000
    tol: float = 1e-9
    divergence_cap: float = 1e6
    # False: sufficient conditions are only logged, realized bounds are checked instead
    enforce_stability: bool = False

    def __post_init__(self):
        if not 0 < self.relaxation <= 1:
            raise ValueError(f"0 < relaxation <= 1 required, got {self.relaxation}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters >= 1 required, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol > 0 required, got {self.tol}")
        if not self.divergence_cap > 0:
            raise ValueError(f"divergence_cap > 0 required, got {self.divergence_cap}")


@dataclass(frozen=True)
class StabilityReport:
    """Sufficient conditions for the explicit schemes.

    ``value_bound_ok``: (delta + L_C) dt < 1, which keeps |Phi| <= K2 in the HJB sweep.
    ``positivity_ok``: 2 C(2 K2) dt < 1, which keeps the FP sweep nonnegative.
    """

    value_bound_ok: bool
    positivity_ok: bool
    l_c: float
    value_bound_lhs: float
    positivity_lhs: float

    @property
    def value_bound_margin(self) -> float:
        return 1.0 - self.value_bound_lhs

    @property
    def positivity_margin(self) -> float:
        return 1.0 - self.positivity_lhs

    @property
    def ok(self) -> bool:
        return self.value_bound_ok and self.positivity_ok

    def violations(self) -> list[str]:
        found = []
        if not self.value_bound_ok:
            found.append(f"(delta + L_C)*dt < 1 fails: {self.value_bound_lhs:.6g}")
        if not self.positivity_ok:
            found.append(f"2*C(2*K2)*dt < 1 fails: {self.positivity_lhs:.6g}")
        return found


@dataclass
class MfgSolution:
    """Outcome of the fixed-point iteration."""

    density: DensityTrajectory
    value: ValueTrajectory
    status: SolveStatus
    iterations: int
    final_residual: float
    k2_bound: float
    delta: float
    stability: StabilityReport
    residuals: list[float] = field(default_factory=list, repr=False)
    reason: str | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def value_bound(psi: np.ndarray, k_utility: float) -> float:
    """K2 = max(|max psi + K|, |min psi - K|), the delta-independent bound on |Phi|."""
    psi = np.asarray(psi, dtype=np.float64)
    return max(abs(float(psi.max()) + k_utility), abs(float(psi.min()) - k_utility))


def stability_report(delta: float, spec: TransitionRateSpec, k2: float, dt: float) -> StabilityReport:
    """Evaluate both sufficient conditions; L_C is the Lipschitz bound of P on [0, 3 K2]."""
    l_c = primitive_lipschitz_bound(spec, 3.0 * k2) if k2 > 0 else 0.0
    value_lhs = (delta + l_c) * dt
    positivity_lhs = 2.0 * float(eval_rate(spec, 2.0 * k2)) * dt
    return StabilityReport(
        value_bound_ok=value_lhs < 1.0,
        positivity_ok=positivity_lhs < 1.0,
        l_c=l_c,
        value_bound_lhs=value_lhs,
        positivity_lhs=positivity_lhs,
    )


def optimal_rate_matrix(phi_row: np.ndarray, spec: TransitionRateSpec) -> np.ndarray:
    """Entry (j, k) = C(Phi_k - Phi_j), the optimal rate of moving from x_j to x_k."""
    phi_row = np.asarray(phi_row, dtype=np.float64)
    return eval_rate(spec, phi_row[None, :] - phi_row[:, None])


def _fp_sweep(value: np.ndarray, p0: np.ndarray, spec: TransitionRateSpec, grid: GridSpec) -> np.ndarray:
    # Step i-1 -> i is driven by the value row at level i
    density = np.empty_like(value)
    density[0] = p0
    for i in range(1, grid.big_i + 1):
        density[i] = transfer_step(density[i - 1], value[i], spec, grid)
    return density


def _hjb_sweep(
    density: np.ndarray,
    kernel: UtilityKernel,
    spec: TransitionRateSpec,
    delta: float,
    psi: np.ndarray,
    grid: GridSpec,
) -> np.ndarray:
    # Level i uses p and U at level i, Phi at level i+1
    dt, dx = grid.dt, grid.dx
    utilities = utilities_for(kernel, density, grid)
    value = np.empty_like(density)
    value[-1] = psi
    decay = 1.0 - delta * dt
    phi = value[-1]
    for i in range(grid.big_i - 1, -1, -1):
        gains = eval_primitive(spec, phi[None, :] - phi[:, None])
        coupling = dx * (gains @ density[i])
        phi = decay * phi + dt * coupling + delta * dt * utilities[i]
        value[i] = phi
    return value


def _handle_condition(ok: bool, inequality: str, lhs: float, enforce: bool) -> None:
    if ok:
        return
    if enforce:
        raise StabilityViolation(inequality, lhs)
    logger.warning("Sufficient condition %s does not hold (lhs = %.6g); checking realized bounds instead", inequality, lhs)


def _check_realized_density(density: np.ndarray) -> None:
    lowest = float(density.min())
    if lowest < 0:
        raise StabilityViolation("p >= 0", lowest, f"FP sweep produced a negative density ({lowest:.6g})")


def _check_realized_value(value: np.ndarray, k2: float) -> None:
    largest = float(np.max(np.abs(value)))
    if not largest <= k2 * (1.0 + BOUND_SLACK) + BOUND_SLACK:
        raise StabilityViolation("|Phi| <= K2", largest, f"HJB sweep left the bound |Phi| <= {k2:.6g} ({largest:.6g})")


def fp_forward(
    value: ValueTrajectory,
    p0: np.ndarray,
    spec: TransitionRateSpec,
    grid: GridSpec,
    k2: float | None = None,
    enforce_stability: bool = True,
) -> DensityTrajectory:
    """Forward Fokker-Planck sweep under the optimal rates of ``value``.

    Args:
        value: Value function at every time level
        p0: Initial density
        spec: Transition rate
        grid: Grid of ``value``
        k2: Bound on |Phi|; defaults to the sup norm of ``value``
        enforce_stability: Raise on a failed sufficient condition instead of checking the result

    Raises:
        StabilityViolation: if 2 C(2 K2) dt >= 1 (enforced) or a density turned negative
    """
    p0 = grid.check_vector(p0, "p0")
    if k2 is None:
        k2 = value.sup_norm()
    lhs = 2.0 * float(eval_rate(spec, 2.0 * k2)) * grid.dt
    _handle_condition(lhs < 1.0, "2*C(2*K2)*dt < 1", lhs, enforce_stability)

    density = _fp_sweep(value.values, p0, spec, grid)
    if not enforce_stability:
        _check_realized_density(density)
    return DensityTrajectory(values=density, grid=grid)


def hjb_backward(
    density: DensityTrajectory,
    kernel: UtilityKernel,
    spec: TransitionRateSpec,
    delta: float,
    psi: np.ndarray,
    grid: GridSpec,
    enforce_stability: bool = True,
) -> ValueTrajectory:
    """Backward HJB sweep from the terminal gain ``psi`` against a given density trajectory.

    Raises:
        StabilityViolation: if (delta + L_C) dt >= 1 (enforced) or |Phi| exceeded K2
    """
    if not delta > 0:
        raise ValueError(f"discount rate delta > 0 required, got {delta}")
    psi = grid.check_vector(psi, "psi")
    k2 = value_bound(psi, kernel.bound_k)
    report = stability_report(delta, spec, k2, grid.dt)
    _handle_condition(report.value_bound_ok, "(delta + L_C)*dt < 1", report.value_bound_lhs, enforce_stability)

    value = _hjb_sweep(density.values, kernel, spec, delta, psi, grid)
    if not enforce_stability:
        _check_realized_value(value, k2)
    return ValueTrajectory(values=value, grid=grid)


def mfg_fixed_point(
    p0: np.ndarray,
    kernel: UtilityKernel,
    spec: TransitionRateSpec,
    delta: float,
    psi: np.ndarray,
    grid: GridSpec,
    cfg: FixedPointConfig | None = None,
) -> MfgSolution:
    """Solve the forward-backward system by relaxed fixed-point iteration on the density.

    The first guess is p0 at every time level. Each iteration runs the HJB sweep on
    the current guess, the FP sweep on the resulting value function, and mixes
    the new density into the guess with weight ``cfg.relaxation``. Failure to
    converge is reported through ``status``; it does not raise.

    Raises:
        StabilityViolation: only when ``cfg.enforce_stability`` and a sufficient condition fails
    """
    cfg = cfg or FixedPointConfig()
    if not delta > 0:
        raise ValueError(f"discount rate delta > 0 required, got {delta}")
    p0 = grid.check_vector(p0, "p0")
    psi = grid.check_vector(psi, "psi")

    k2 = value_bound(psi, kernel.bound_k)
    if spec.truncation_level is None and k2 > 0:
        spec = spec.truncated(3.0 * k2)
    report = stability_report(delta, spec, k2, grid.dt)
    _handle_condition(report.value_bound_ok, "(delta + L_C)*dt < 1", report.value_bound_lhs, cfg.enforce_stability)
    _handle_condition(report.positivity_ok, "2*C(2*K2)*dt < 1", report.positivity_lhs, cfg.enforce_stability)

    logger.info(
        "MFG solve: delta=%g, %s, kernel %s, I=%d, J=%d, K2=%.6g",
        delta,
        spec.describe(),
        kernel.label,
        grid.big_i,
        grid.big_j,
        k2,
    )

    guess = np.tile(p0, (grid.big_i + 1, 1))
    value = np.zeros_like(guess)
    residuals: list[float] = []
    status: SolveStatus = "convergence_failure"
    reason: str | None = f"no convergence within {cfg.max_iters} iterations"
    omega = cfg.relaxation

    for iteration in range(1, cfg.max_iters + 1):
        try:
            value = _hjb_sweep(guess, kernel, spec, delta, psi, grid)
            _check_realized_value(value, k2)
            fresh = _fp_sweep(value, p0, spec, grid)
            _check_realized_density(fresh)
        except StabilityViolation as e:
            reason = str(e)
            break

        relaxed = (1.0 - omega) * guess + omega * fresh
        residual = float(np.max(np.abs(relaxed - guess)))
        residuals.append(residual)
        guess = relaxed
        logger.debug("delta=%g iteration %d: residual %.3e", delta, iteration, residual)

        if not math.isfinite(residual) or residual > cfg.divergence_cap:
            reason = f"residual {residual:.3e} exceeded divergence cap {cfg.divergence_cap:g}"
            break
        if residual <= cfg.tol:
            status, reason = "converged", None
            break

    if status == "converged":
        # Value consistent with the returned density
        value = _hjb_sweep(guess, kernel, spec, delta, psi, grid)
        logger.info("delta=%g converged after %d iterations (residual %.3e)", delta, len(residuals), residuals[-1])
    else:
        logger.warning("delta=%g: convergence failure after %d iterations: %s", delta, len(residuals), reason)

    return MfgSolution(
        density=DensityTrajectory(values=guess, grid=grid),
        value=ValueTrajectory(values=value, grid=grid),
        status=status,
        iterations=len(residuals),
        final_residual=residuals[-1] if residuals else math.inf,
        k2_bound=k2,
        delta=delta,
        stability=report,
        residuals=residuals,
        reason=reason,
    )

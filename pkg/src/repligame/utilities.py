"""Utility kernels of the form U(x, p) = integral of f(x, y) p(y) dy, and energy equilibrium analytics."""

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import DimensionMismatchError
from .grid import GridSpec, mass

KernelKind = Literal["concave", "convex", "energy", "zero"]
Regime = Literal["below_x2", "between", "above_x1"]

# Tolerance on the unit-mass precondition of kernel evaluation
MASS_TOLERANCE = 1e-8


@dataclass(frozen=True)
class UtilityKernel:
    """Tabulated f(x_j, x_k) on the grid nodes."""

    f_table: np.ndarray
    bound_k: float
    symmetric: bool
    label: str

    @property
    def size(self) -> int:
        return self.f_table.shape[0]


@dataclass(frozen=True)
class EnergyParams:
    """Energy-management utility: x^alpha / alpha - sigma (1 + w * share above x_bar) x."""

    alpha: float = 0.5
    sigma: float = 1.25
    w: float = 1.25
    x_bar: float = 0.5

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"0 < alpha < 1 required, got alpha = {self.alpha}")
        if not self.sigma > 1:
            raise ValueError(f"sigma > 1 required, got sigma = {self.sigma}")
        if not self.w > 0:
            raise ValueError(f"w > 0 required, got w = {self.w}")
        if not 0 < self.x_bar <= 1:
            raise ValueError(f"0 < x_bar <= 1 required, got x_bar = {self.x_bar}")

    def with_threshold(self, x_bar: float) -> "EnergyParams":
        return replace(self, x_bar=float(x_bar))


def _kernel(f_table: np.ndarray, label: str, bound_k: float | None = None) -> UtilityKernel:
    symmetric = bool(np.max(np.abs(f_table - f_table.T), initial=0.0) == 0.0)
    if bound_k is None:
        bound_k = float(np.max(np.abs(f_table), initial=0.0))
    return UtilityKernel(f_table=f_table, bound_k=bound_k, symmetric=symmetric, label=label)


def make_potential_kernel(sign: Literal["concave", "convex"], grid: GridSpec) -> UtilityKernel:
    """Quadratic potential-game kernel f(x, y) = -(x - y)^2 (concave) or +(x - y)^2 (convex)."""
    x = grid.nodes
    squared = (x[:, None] - x[None, :]) ** 2
    if sign == "concave":
        table = -squared
    elif sign == "convex":
        table = squared
    else:
        raise ValueError(f"Unknown potential kernel sign: {sign!r}")
    # sup |f| over the continuous square, not just the grid
    return _kernel(table, label=f"{sign} potential", bound_k=1.0)


def make_energy_kernel(params: EnergyParams, grid: GridSpec) -> UtilityKernel:
    """Energy kernel whose integral against p reproduces the energy-management utility.

    The density effect carries the x multiplier and the indicator sits on the
    second argument, counting x_k >= x_bar.
    """
    x = grid.nodes
    own = x**params.alpha / params.alpha - params.sigma * x
    active = (x >= params.x_bar).astype(np.float64)
    table = own[:, None] - params.sigma * params.w * x[:, None] * active[None, :]
    return _kernel(table, label=f"energy (x_bar={params.x_bar:g})")


def make_zero_kernel(grid: GridSpec) -> UtilityKernel:
    return UtilityKernel(f_table=np.zeros((grid.big_j, grid.big_j)), bound_k=0.0, symmetric=True, label="zero")


def build_kernel(kind: KernelKind, grid: GridSpec, energy: EnergyParams | None = None) -> UtilityKernel:
    """Tabulate the kernel named by ``kind`` on ``grid``."""
    match kind:
        case "concave" | "convex":
            return make_potential_kernel(kind, grid)
        case "energy":
            return make_energy_kernel(energy or EnergyParams(), grid)
        case "zero":
            return make_zero_kernel(grid)
    raise ValueError(f"Unknown kernel kind: {kind!r}")


def utilities_for(kernel: UtilityKernel, density: np.ndarray, grid: GridSpec) -> np.ndarray:
    """U = dx * f @ p for a single density or for every row of a trajectory; no mass check."""
    return grid.dx * (density @ kernel.f_table.T)


def kernel_utility(kernel: UtilityKernel, p: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Discrete utility U_j = dx * sum_k f(x_j, x_k) p_k.

    Raises:
        DimensionMismatchError: if p, the kernel and the grid disagree on J
        ValueError: if p is negative somewhere or its mass is not 1
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (grid.big_j,) or kernel.size != grid.big_j:
        raise DimensionMismatchError(
            f"density of shape {p.shape} and kernel of size {kernel.size} do not match J = {grid.big_j}"
        )
    if np.any(p < 0):
        raise ValueError("density must be nonnegative")
    total = mass(p, grid)
    if abs(total - 1.0) > MASS_TOLERANCE:
        raise ValueError(f"density must have unit mass, got {total:.12g}")
    return utilities_for(kernel, p, grid)


def utility_bound(kernel: UtilityKernel) -> float:
    """max |f| over the tabulated grid pairs."""
    return float(np.max(np.abs(kernel.f_table), initial=0.0))


def average_utility(u_vec: np.ndarray, p: np.ndarray, grid: GridSpec) -> float:
    """Population-average utility dx * sum_j U_j p_j."""
    p = np.asarray(p, dtype=np.float64)
    total = mass(p, grid)
    if abs(total - 1.0) > MASS_TOLERANCE:
        raise ValueError(f"density must have unit mass, got {total:.12g}")
    return float(grid.dx * np.dot(u_vec, p))


def pure_strategy_utility(params: EnergyParams, x: float | np.ndarray) -> float | np.ndarray:
    """Utility when the whole population plays x: the density effect is on iff x >= x_bar."""
    x_arr = np.asarray(x, dtype=np.float64)
    factor = np.where(x_arr >= params.x_bar, 1.0 + params.w, 1.0)
    values = x_arr**params.alpha / params.alpha - params.sigma * factor * x_arr
    return float(values) if np.ndim(x) == 0 else values


@dataclass(frozen=True)
class EquilibriumCandidate:
    label: str
    x: float
    utility: float
    attained: bool  # False for a supremum approached from below


@dataclass(frozen=True)
class EquilibriumReport:
    """Pure-strategy analysis of the energy utility."""

    x_bar_1: float
    x_bar_2: float
    regime: Regime
    candidate_utilities: list[EquilibriumCandidate]
    predicted_equilibrium: float | None  # None when no pure strategy is optimal


def energy_thresholds(params: EnergyParams) -> tuple[float, float]:
    """(X1, X2) = (sigma^(-1/(1-alpha)), (sigma (1 + w))^(-1/(1-alpha)))."""
    exponent = -1.0 / (1.0 - params.alpha)
    return params.sigma**exponent, (params.sigma * (1.0 + params.w)) ** exponent


def energy_equilibrium_report(params: EnergyParams) -> EquilibriumReport:
    """Classify x_bar against the thresholds and list the candidate pure-strategy utilities."""
    x1, x2 = energy_thresholds(params)
    if params.x_bar <= x2:
        regime: Regime = "below_x2"
        predicted: float | None = x2
    elif params.x_bar >= x1:
        regime = "above_x1"
        predicted = x1
    else:
        regime = "between"
        predicted = None

    below = params.x_bar**params.alpha / params.alpha - params.sigma * params.x_bar
    candidates = [
        EquilibriumCandidate("x_bar_1", x1, float(pure_strategy_utility(params, x1)), attained=True),
        EquilibriumCandidate("x_bar_2", x2, float(pure_strategy_utility(params, x2)), attained=True),
        EquilibriumCandidate("x_bar", params.x_bar, float(below), attained=False),
    ]
    return EquilibriumReport(
        x_bar_1=x1,
        x_bar_2=x2,
        regime=regime,
        candidate_utilities=candidates,
        predicted_equilibrium=predicted,
    )


def equilibrium_curve(params: EnergyParams, points: int = 1001) -> tuple[np.ndarray, np.ndarray]:
    """Pure-strategy utility sampled on [0, 1] for plotting."""
    x = np.linspace(0.0, 1.0, points)
    return x, pure_strategy_utility(params, x)


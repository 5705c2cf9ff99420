"""Space-time grid, density and value trajectories, initial and terminal data."""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionMismatchError

InitialKind = Literal["uniform", "finite_support"]
TerminalKind = Literal["zero", "linear_gain"]

# Right edge of the finite-support initial condition
FINITE_SUPPORT_EDGE = 3 / 5


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of I time steps over [0, T] and J cells over [0, 1]."""

    big_i: int
    big_j: int
    t_end: float

    def __post_init__(self):
        if self.big_i < 1 or self.big_j < 1:
            raise ValueError(f"grid needs I >= 1 and J >= 1, got I = {self.big_i}, J = {self.big_j}")
        if not self.t_end > 0:
            raise ValueError(f"terminal time T > 0 required, got {self.t_end}")

    @property
    def dt(self) -> float:
        return self.t_end / self.big_i

    @property
    def dx(self) -> float:
        return 1.0 / self.big_j

    @property
    def nodes(self) -> np.ndarray:
        """Cell centers x_j = (j - 1/2) dx.

        The upper half mirrors the lower half so that x_j + x_{J+1-j} == 1 exactly.
        """
        j = self.big_j
        nodes = (2.0 * np.arange(1, j + 1) - 1.0) / (2.0 * j)
        half = j // 2
        nodes[j - half :] = 1.0 - nodes[:half][::-1]
        return nodes

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.big_i + 1) * self.dt

    def level_of(self, t: float) -> int:
        """Time level closest to ``t``."""
        return int(round(t / self.dt))

    def check_vector(self, values: np.ndarray, name: str = "vector") -> np.ndarray:
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape[-1:] != (self.big_j,):
            raise DimensionMismatchError(f"{name} has shape {arr.shape}, expected last axis of length {self.big_j}")
        return arr


def build_grid(big_i: int, big_j: int, t_end: float) -> GridSpec:
    """Build the (I, J, T) grid; rejects nonpositive inputs."""
    return GridSpec(big_i=int(big_i), big_j=int(big_j), t_end=float(t_end))


def refinement_grid(base: GridSpec, n: int) -> GridSpec:
    """Level ``n`` (1-based) of the ratio-2 ladder (I0 * 2^(n-1), J0 * 2^(n-1))."""
    if n < 1:
        raise ValueError(f"refinement level n >= 1 required, got {n}")
    factor = 2 ** (n - 1)
    return build_grid(base.big_i * factor, base.big_j * factor, base.t_end)


def mass(density: np.ndarray, grid: GridSpec) -> float | np.ndarray:
    """Total mass dx * sum_j p_j (per row for a trajectory)."""
    return grid.dx * np.sum(density, axis=-1)


def initial_density(kind: InitialKind, grid: GridSpec) -> np.ndarray:
    """Initial density: uniform, or 5/3 on x <= 3/5 renormalized to unit mass."""
    if kind == "uniform":
        return np.ones(grid.big_j)
    if kind == "finite_support":
        p = np.where(grid.nodes <= FINITE_SUPPORT_EDGE, 5.0 / 3.0, 0.0)
        return p / mass(p, grid)
    raise ValueError(f"Unknown initial density kind: {kind!r}")


def terminal_value(kind: TerminalKind, psi_bar: float, grid: GridSpec) -> np.ndarray:
    """Terminal gain: zero, or psi_bar * (1 - x)."""
    if psi_bar < 0:
        raise ValueError(f"psi_bar >= 0 required, got {psi_bar}")
    if kind == "zero":
        return np.zeros(grid.big_j)
    if kind == "linear_gain":
        return psi_bar * (1.0 - grid.nodes)
    raise ValueError(f"Unknown terminal kind: {kind!r}")


@dataclass
class DensityTrajectory:
    """Density p_{i,j} at every time level, shape (I+1, J)."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        expected = (self.grid.big_i + 1, self.grid.big_j)
        if self.values.shape != expected:
            raise DimensionMismatchError(f"density trajectory has shape {self.values.shape}, expected {expected}")

    def at_level(self, i: int) -> np.ndarray:
        return self.values[i]

    @property
    def midtime(self) -> np.ndarray:
        return self.values[midtime_level(self.grid)]

    def masses(self) -> np.ndarray:
        return mass(self.values, self.grid)

    def mass_defect(self) -> float:
        """Largest deviation of any row from unit mass."""
        return float(np.max(np.abs(self.masses() - 1.0)))


@dataclass
class ValueTrajectory:
    """Value function Phi_{i,j} at every time level, shape (I+1, J)."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        expected = (self.grid.big_i + 1, self.grid.big_j)
        if self.values.shape != expected:
            raise DimensionMismatchError(f"value trajectory has shape {self.values.shape}, expected {expected}")

    def at_level(self, i: int) -> np.ndarray:
        return self.values[i]

    @property
    def midtime(self) -> np.ndarray:
        return self.values[midtime_level(self.grid)]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def midtime_level(grid: GridSpec) -> int:
    """Index of t = T/2; requires an even number of time steps."""
    if grid.big_i % 2:
        raise ValueError(f"t = T/2 needs an even number of time steps, got I = {grid.big_i}")
    return grid.big_i // 2

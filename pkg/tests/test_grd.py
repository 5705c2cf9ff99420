"""Tests for the generalized replicator dynamic solver."""

import numpy as np
import pytest

from repligame.errors import DimensionMismatchError, StabilityViolation
from repligame.grd import grd_iterate, grd_solve, grd_step, net_transfer
from repligame.grid import build_grid, initial_density, mass
from repligame.rates import TransitionRateSpec
from repligame.utilities import UtilityKernel, build_kernel, kernel_utility, make_zero_kernel

REPLICATOR = TransitionRateSpec("power", 1.0)


def _random_density(rng, grid):
    p = rng.uniform(0.1, 1.0, grid.big_j)
    return p / (grid.dx * p.sum())


@pytest.mark.parametrize("big_j", [3, 50, 200])
def test_power_one_step_is_the_classical_replicator(rng, big_j):
    grid = build_grid(10, big_j, 1.0)
    p = _random_density(rng, grid)
    u = rng.uniform(-1.0, 1.0, big_j)
    u_bar = grid.dx * np.dot(u, p)
    expected = p * (1.0 + grid.dt * (u - u_bar))
    np.testing.assert_allclose(grd_step(p, u, REPLICATOR, grid), expected, rtol=1e-12)


def test_net_transfer_is_antisymmetric(rng):
    grid = build_grid(10, 30, 1.0)
    values = rng.normal(size=30)
    gaps = values[None, :] - values[:, None]
    spec = TransitionRateSpec("logarithmic", 2.0)
    # with p = e_k / dx the result picks column k of the flux matrix
    flux = np.column_stack([net_transfer(values, np.eye(30)[k] / grid.dx, spec, grid.dx) for k in range(30)])
    np.testing.assert_array_equal(flux, -flux.T)
    assert np.all(flux[gaps > 0] < 0)


def test_grd_step_preconditions(rng):
    grid = build_grid(10, 20, 1.0)
    p = _random_density(rng, grid)
    with pytest.raises(DimensionMismatchError):
        grd_step(p, np.zeros(21), REPLICATOR, grid)
    with pytest.raises(ValueError, match="unit mass"):
        grd_step(2.0 * p, np.zeros(20), REPLICATOR, grid)
    with pytest.raises(StabilityViolation):
        grd_step(p, np.full(20, 10.0), REPLICATOR, build_grid(1, 20, 1.0))


@pytest.mark.parametrize(
    "spec",
    [REPLICATOR, TransitionRateSpec("positive_exponential", 0.5), TransitionRateSpec("negative_exponential", 1.0)],
    ids=lambda s: s.describe(),
)
def test_grd_solve_preserves_mass_and_sign(small_grid, spec):
    kernel = build_kernel("concave", small_grid)
    trajectory = grd_solve(initial_density("uniform", small_grid), kernel, spec, small_grid)
    assert trajectory.values.shape == (201, 20)
    assert trajectory.mass_defect() <= 1e-12
    assert trajectory.values.min() >= 0.0


def test_grd_concave_concentrates_toward_the_middle(small_grid):
    kernel = build_kernel("concave", small_grid)
    trajectory = grd_solve(initial_density("uniform", small_grid), kernel, REPLICATOR, small_grid)
    final = trajectory.at_level(small_grid.big_i)
    assert final[9] > 1.0 > final[0]
    # symmetric problem stays symmetric up to roundoff
    np.testing.assert_allclose(final, final[::-1], rtol=1e-10)


def test_grd_keeps_the_initial_support_exactly(small_grid):
    kernel = build_kernel("convex", small_grid)
    p0 = initial_density("finite_support", small_grid)
    trajectory = grd_solve(p0, kernel, REPLICATOR, small_grid)
    outside = p0 == 0.0
    assert np.all(trajectory.values[:, outside] == 0.0)
    assert np.all(trajectory.values[:, ~outside] > 0.0)


def test_zero_kernel_leaves_the_density_unchanged(small_grid, rng):
    p0 = _random_density(rng, small_grid)
    trajectory = grd_solve(p0, make_zero_kernel(small_grid), REPLICATOR, small_grid)
    np.testing.assert_array_equal(trajectory.values, np.tile(p0, (small_grid.big_i + 1, 1)))


def test_grd_solve_rejects_unstable_steps():
    grid = build_grid(1, 20, 10.0)
    kernel = build_kernel("concave", grid)
    with pytest.raises(StabilityViolation) as excinfo:
        grd_solve(initial_density("uniform", grid), kernel, REPLICATOR, grid)
    assert excinfo.value.lhs >= 1.0


def test_grd_solve_checks_initial_mass(small_grid):
    with pytest.raises(ValueError, match="unit mass"):
        grd_solve(np.ones(small_grid.big_j) * 0.5, make_zero_kernel(small_grid), REPLICATOR, small_grid)


def test_grd_iterate_matches_grd_solve(small_grid):
    kernel = build_kernel("energy", small_grid)
    p0 = initial_density("uniform", small_grid)
    stored = grd_solve(p0, kernel, REPLICATOR, small_grid)
    for i, p in grd_iterate(p0, kernel, REPLICATOR, small_grid):
        np.testing.assert_array_equal(p, stored.at_level(i))
    assert mass(p, small_grid) == pytest.approx(1.0, abs=1e-12)


def test_energy_step_agrees_with_checked_utilities(small_grid):
    kernel = build_kernel("energy", small_grid)
    p0 = initial_density("uniform", small_grid)
    u0 = kernel_utility(kernel, p0, small_grid)
    stored = grd_solve(p0, kernel, REPLICATOR, small_grid)
    np.testing.assert_allclose(grd_step(p0, u0, REPLICATOR, small_grid), stored.at_level(1), rtol=1e-14)


def test_concave_mass_near_the_middle_grows_every_step(small_grid):
    kernel = build_kernel("concave", small_grid)
    trajectory = grd_solve(initial_density("uniform", small_grid), kernel, REPLICATOR, small_grid)
    middle = (small_grid.nodes >= 0.4) & (small_grid.nodes <= 0.6)
    central_mass = small_grid.dx * trajectory.values[:, middle].sum(axis=1)
    assert np.all(np.diff(central_mass) > 0.0)


@pytest.mark.parametrize("kind", ["concave", "energy"])
def test_adding_a_constant_to_the_kernel_leaves_the_dynamic_unchanged(small_grid, kind):
    kernel = build_kernel(kind, small_grid)
    shifted = UtilityKernel(
        f_table=kernel.f_table + 0.25,
        bound_k=kernel.bound_k + 0.25,
        symmetric=kernel.symmetric,
        label=f"{kernel.label} + 0.25",
    )
    p0 = initial_density("uniform", small_grid)
    base = grd_solve(p0, kernel, REPLICATOR, small_grid)
    moved = grd_solve(p0, shifted, REPLICATOR, small_grid)
    # utilities differ by 0.25 * mass, so agreement is to roundoff
    np.testing.assert_allclose(moved.values, base.values, rtol=1e-10, atol=1e-12)

    u = kernel_utility(kernel, p0, small_grid)
    np.testing.assert_allclose(grd_step(p0, u + 0.25, REPLICATOR, small_grid), grd_step(p0, u, REPLICATOR, small_grid), rtol=1e-14)

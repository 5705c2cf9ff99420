"""Tests for the HJB and FP sweeps and the relaxed fixed point."""

import logging

import numpy as np
import pytest

from repligame.errors import StabilityViolation
from repligame.grid import DensityTrajectory, ValueTrajectory, build_grid, initial_density, terminal_value
from repligame.mfg import (
    FixedPointConfig,
    fp_forward,
    hjb_backward,
    mfg_fixed_point,
    optimal_rate_matrix,
    stability_report,
    value_bound,
)
from repligame.rates import TransitionRateSpec, eval_rate
from repligame.utilities import UtilityKernel, build_kernel, make_zero_kernel

REPLICATOR = TransitionRateSpec("power", 1.0)


def _uniform_trajectory(grid):
    return DensityTrajectory(values=np.ones((grid.big_i + 1, grid.big_j)), grid=grid)


def test_value_bound():
    assert value_bound(np.zeros(10), 1.0) == 1.0
    grid = build_grid(10, 20, 1.0)
    psi = terminal_value("linear_gain", 4.0, grid)
    assert value_bound(psi, 1.0) == pytest.approx(5.0 - 2.0 * grid.dx)


def test_stability_report():
    report = stability_report(100.0, REPLICATOR, 1.0, 0.01)
    assert report.l_c == pytest.approx(3.0)
    assert report.value_bound_lhs == pytest.approx(1.03)
    assert not report.value_bound_ok
    assert report.positivity_ok
    assert report.positivity_margin == pytest.approx(0.96)
    assert not report.ok
    assert len(report.violations()) == 1

    assert stability_report(1.0, REPLICATOR, 1.0, 0.01).ok


def test_optimal_rate_matrix(rng):
    phi = rng.normal(size=15)
    spec = TransitionRateSpec("positive_exponential", 1.5)
    rates = optimal_rate_matrix(phi, spec)
    np.testing.assert_array_equal(np.diag(rates), np.zeros(15))
    assert rates[2, 7] == pytest.approx(eval_rate(spec, phi[7] - phi[2]))
    assert np.all(rates >= 0)
    # only one direction of each pair is active
    assert np.all((rates == 0) | (rates.T == 0))
    np.testing.assert_allclose(optimal_rate_matrix(phi + 3.0, spec), rates, rtol=1e-12, atol=1e-13)


def test_hjb_decays_a_constant_terminal_gain():
    grid = build_grid(200, 10, 10.0)
    psi = np.full(10, 0.5)
    value = hjb_backward(_uniform_trajectory(grid), make_zero_kernel(grid), REPLICATOR, 1.0, psi, grid)
    expected = 0.5 * (1.0 - 1.0 * grid.dt) ** (grid.big_i - np.arange(grid.big_i + 1))
    np.testing.assert_allclose(value.values, np.repeat(expected[:, None], 10, axis=1), rtol=1e-12)


def test_hjb_stays_within_the_value_bound(small_grid):
    kernel = build_kernel("concave", small_grid)
    psi = terminal_value("linear_gain", 1.0, small_grid)
    value = hjb_backward(_uniform_trajectory(small_grid), kernel, REPLICATOR.truncated(6.0), 1.0, psi, small_grid)
    assert value.sup_norm() <= value_bound(psi, kernel.bound_k)
    np.testing.assert_array_equal(value.at_level(small_grid.big_i), psi)


def test_hjb_enforces_the_value_bound_condition(small_grid):
    kernel = build_kernel("concave", small_grid)
    with pytest.raises(StabilityViolation) as excinfo:
        hjb_backward(_uniform_trajectory(small_grid), kernel, REPLICATOR, 100.0, np.zeros(20), small_grid)
    assert "delta + L_C" in excinfo.value.inequality


def test_hjb_unenforced_warns_and_checks_the_result(small_grid, caplog):
    zero = make_zero_kernel(small_grid)
    with caplog.at_level(logging.WARNING, logger="repligame.mfg"):
        value = hjb_backward(
            _uniform_trajectory(small_grid), zero, REPLICATOR, 100.0, np.zeros(20), small_grid, enforce_stability=False
        )
    assert value.sup_norm() == 0.0
    assert "does not hold" in caplog.text

    # (1 - delta dt) = -4 flips and amplifies a nonzero terminal gain
    with pytest.raises(StabilityViolation, match="left the bound"):
        hjb_backward(
            _uniform_trajectory(small_grid), zero, REPLICATOR, 100.0, np.full(20, 0.5), small_grid, enforce_stability=False
        )


def test_hjb_rejects_nonpositive_discount(small_grid):
    with pytest.raises(ValueError, match="delta > 0"):
        hjb_backward(_uniform_trajectory(small_grid), make_zero_kernel(small_grid), REPLICATOR, 0.0, np.zeros(20), small_grid)


def test_fp_under_a_flat_value_keeps_the_density(small_grid):
    p0 = initial_density("finite_support", small_grid)
    value = ValueTrajectory(values=np.full((small_grid.big_i + 1, 20), 0.3), grid=small_grid)
    density = fp_forward(value, p0, REPLICATOR, small_grid)
    np.testing.assert_array_equal(density.values, np.tile(p0, (small_grid.big_i + 1, 1)))


def test_fp_moves_mass_uphill(small_grid):
    # Phi increasing in x pushes mass to the right
    value = ValueTrajectory(values=np.tile(small_grid.nodes, (small_grid.big_i + 1, 1)), grid=small_grid)
    density = fp_forward(value, initial_density("uniform", small_grid), REPLICATOR, small_grid)
    final = density.at_level(small_grid.big_i)
    assert final[-1] > 1.0 > final[0]
    assert density.mass_defect() <= 1e-12
    assert density.values.min() >= 0.0


def test_fp_enforces_positivity_condition():
    grid = build_grid(2, 10, 10.0)
    value = ValueTrajectory(values=np.tile(grid.nodes, (3, 1)), grid=grid)
    with pytest.raises(StabilityViolation, match="2\\*C"):
        fp_forward(value, initial_density("uniform", grid), REPLICATOR, grid)


def test_zero_kernel_fixed_point_is_immediate(small_grid):
    p0 = initial_density("uniform", small_grid)
    solution = mfg_fixed_point(p0, make_zero_kernel(small_grid), REPLICATOR, 1.0, np.zeros(20), small_grid)
    assert solution.converged
    assert solution.iterations == 1
    assert solution.final_residual == 0.0
    np.testing.assert_array_equal(solution.density.values, np.tile(p0, (small_grid.big_i + 1, 1)))
    np.testing.assert_array_equal(solution.value.values, np.zeros((small_grid.big_i + 1, 20)))


@pytest.mark.parametrize("delta", [1.0, 10.0])
def test_concave_fixed_point_converges_with_structure(small_grid, delta):
    kernel = build_kernel("concave", small_grid)
    p0 = initial_density("uniform", small_grid)
    psi = np.zeros(20)
    solution = mfg_fixed_point(p0, kernel, REPLICATOR, delta, psi, small_grid)
    assert solution.converged, solution.reason
    assert solution.final_residual <= 1e-9
    assert solution.residuals[-1] == solution.final_residual
    assert solution.density.mass_defect() <= 1e-10
    assert solution.density.values.min() >= 0.0
    assert solution.value.sup_norm() <= solution.k2_bound
    assert solution.k2_bound == 1.0
    # automatic truncation at 3 K2
    assert solution.stability.l_c == pytest.approx(3.0)


def test_fixed_point_keeps_the_initial_support(small_grid):
    kernel = build_kernel("concave", small_grid)
    p0 = initial_density("finite_support", small_grid)
    solution = mfg_fixed_point(p0, kernel, REPLICATOR, 1.0, np.zeros(20), small_grid)
    assert np.all(solution.density.values[:, p0 == 0.0] == 0.0)


def test_fixed_point_reports_exhausted_iterations(small_grid):
    kernel = build_kernel("concave", small_grid)
    cfg = FixedPointConfig(max_iters=1)
    solution = mfg_fixed_point(initial_density("uniform", small_grid), kernel, REPLICATOR, 1.0, np.zeros(20), small_grid, cfg)
    assert solution.status == "convergence_failure"
    assert not solution.converged
    assert solution.iterations == 1
    assert "no convergence" in solution.reason


def test_fixed_point_turns_a_realized_violation_into_failure(small_grid):
    kernel = build_kernel("concave", small_grid)
    solution = mfg_fixed_point(initial_density("uniform", small_grid), kernel, REPLICATOR, 100.0, np.zeros(20), small_grid)
    assert solution.status == "convergence_failure"
    assert "|Phi|" in solution.reason
    assert not solution.stability.value_bound_ok


def test_fixed_point_can_enforce_the_conditions(small_grid):
    kernel = build_kernel("concave", small_grid)
    cfg = FixedPointConfig(enforce_stability=True)
    with pytest.raises(StabilityViolation):
        mfg_fixed_point(initial_density("uniform", small_grid), kernel, REPLICATOR, 100.0, np.zeros(20), small_grid, cfg)


@pytest.mark.parametrize(
    "kwargs",
    [{"relaxation": 0.0}, {"relaxation": 1.5}, {"max_iters": 0}, {"tol": 0.0}, {"divergence_cap": -1.0}],
)
def test_fixed_point_config_validation(kwargs):
    with pytest.raises(ValueError):
        FixedPointConfig(**kwargs)


def _constant_kernel(c, big_j):
    return UtilityKernel(f_table=np.full((big_j, big_j), c), bound_k=c, symmetric=True, label=f"constant {c:g}")


def test_hjb_under_a_constant_utility_rises_toward_it():
    grid = build_grid(200, 10, 10.0)
    c, delta = 0.5, 1.0
    value = hjb_backward(_uniform_trajectory(grid), _constant_kernel(c, 10), REPLICATOR, delta, np.zeros(10), grid)
    steps_left = grid.big_i - np.arange(grid.big_i + 1)
    expected = c * (1.0 - (1.0 - delta * grid.dt) ** steps_left)
    np.testing.assert_allclose(value.values, np.repeat(expected[:, None], 10, axis=1), rtol=1e-12, atol=1e-15)
    assert np.all(np.diff(value.values[:, 0]) <= 0.0)


def test_hjb_on_a_single_cell_is_a_geometric_recursion():
    grid = build_grid(50, 1, 5.0)
    c, psi, delta = 0.3, 0.8, 2.0
    density = DensityTrajectory(values=np.ones((51, 1)), grid=grid)
    value = hjb_backward(density, _constant_kernel(c, 1), REPLICATOR, delta, np.array([psi]), grid)
    steps_left = grid.big_i - np.arange(grid.big_i + 1)
    expected = c + (psi - c) * (1.0 - delta * grid.dt) ** steps_left
    np.testing.assert_allclose(value.values[:, 0], expected, rtol=1e-12)


def test_fp_two_cell_step():
    grid = build_grid(1, 2, 0.1)
    value = ValueTrajectory(values=np.array([[0.0, 0.5], [0.0, 0.5]]), grid=grid)
    density = fp_forward(value, np.array([1.0, 1.0]), REPLICATOR, grid)
    # inflow to the upper cell: dt * p_2 * dx * C(0.5) * p_1
    np.testing.assert_allclose(density.at_level(1), [1.0 - 0.025, 1.0 + 0.025], rtol=1e-15)
    assert density.masses()[1] == pytest.approx(1.0, abs=1e-15)


def test_fixed_point_reports_divergence(small_grid):
    kernel = build_kernel("concave", small_grid)
    cfg = FixedPointConfig(divergence_cap=1e-12)
    solution = mfg_fixed_point(initial_density("uniform", small_grid), kernel, REPLICATOR, 1.0, np.zeros(20), small_grid, cfg)
    assert solution.status == "convergence_failure"
    assert solution.iterations == 1
    assert "divergence cap" in solution.reason


def test_convex_fixed_point_fails_for_a_small_discount_rate():
    grid = build_grid(2500, 50, 100.0)
    kernel = build_kernel("convex", grid)
    cfg = FixedPointConfig(max_iters=40)
    solution = mfg_fixed_point(initial_density("uniform", grid), kernel, REPLICATOR, 0.01, np.zeros(50), grid, cfg)
    assert solution.status == "convergence_failure"
    assert solution.final_residual > cfg.tol

import numpy as np
import pytest

from core.exceptions import BoundaryNotFoundError, ConfigError, OutOfRangeError, PreconditionError
from core.gridfn import Grid, GridFunction, TailMode, payoff
from core.models import JumpMeasure
from core.operator import (F_payoff, OperatorContext, apply_R, apply_R_l, boundary_objective,
                           check_preconditions, existence_integral, find_boundary, objective_sweep,
                           right_derivative_at_boundary, truncation_gap, two_barrier_R, uniqueness_branch,
                           value_at_zero)

from .conftest import BOUNDARY, perpetual_put


@pytest.fixture(scope='module')
def h(grid):
    return payoff(grid)


@pytest.fixture(scope='module')
def unit_jump_ctx(gbm_model, grid):
    """lambda = 0.1 with every jump of size one"""
    return OperatorContext.build(gbm_model.replace(lam=0.1), grid)


@pytest.fixture(scope='module')
def first_iterate(jump_ctx, h):
    return apply_R(jump_ctx, h)


class TestPayoffGenerator:
    def test_below_strike(self, gbm_ctx):
        assert F_payoff(gbm_ctx, 0.5) == pytest.approx(-0.05, abs=1e-15)

    def test_above_strike(self, gbm_ctx):
        assert F_payoff(gbm_ctx, 2.0) == 0.0

    def test_left_limit_at_strike(self, jump_ctx, jump_model):
        assert F_payoff(jump_ctx, 1.0) == pytest.approx(-jump_model.mu)

    def test_near_zero(self, jump_ctx, jump_model):
        assert F_payoff(jump_ctx, 1e-12) == pytest.approx(-jump_model.rho, rel=1e-9)


class TestContext:
    def test_weights_positive(self, jump_ctx):
        assert np.all(jump_ctx.weights > 0.0)
        assert np.all(np.isfinite(jump_ctx.weights))

    def test_kill_rate_must_match(self, jump_model, grid, gbm_ctx):
        with pytest.raises(ConfigError):
            OperatorContext.build(jump_model, grid, pair=gbm_ctx.pair)

    def test_strike_must_match(self, gbm_model):
        with pytest.raises(ConfigError):
            OperatorContext.build(gbm_model, Grid.log_spaced(2.0))


class TestBoundaryObjective:
    @pytest.mark.parametrize('l', [1.0, 2.0, 50.0])
    def test_vanishes_above_strike_without_jumps(self, gbm_ctx, h, l):
        assert boundary_objective(gbm_ctx, h, l) == 0.0

    def test_root_of_closed_form(self, gbm_ctx, h):
        assert boundary_objective(gbm_ctx, h, BOUNDARY) == pytest.approx(0.0, abs=1e-6)
        assert boundary_objective(gbm_ctx, h, 0.6) < 0.0
        assert boundary_objective(gbm_ctx, h, 0.8) > 0.0

    @pytest.mark.parametrize('l', [1e-3, 200.0])
    def test_out_of_range(self, gbm_ctx, h, l):
        with pytest.raises(OutOfRangeError):
            boundary_objective(gbm_ctx, h, l)

    def test_sweep_changes_sign_once(self, jump_ctx, h):
        values = objective_sweep(jump_ctx, h, np.linspace(0.1, 0.99, 90))
        assert np.count_nonzero(np.diff(np.sign(values))) == 1

    def test_existence_integral_negative(self, jump_ctx):
        assert existence_integral(jump_ctx) < 0.0


class TestFindBoundary:
    def test_closed_form(self, gbm_ctx, h):
        assert find_boundary(gbm_ctx, h) == pytest.approx(BOUNDARY, abs=1e-5)

    def test_independent_of_f_without_jumps(self, gbm_ctx, gbm_solution):
        assert find_boundary(gbm_ctx, gbm_solution.v) == pytest.approx(BOUNDARY, abs=1e-5)

    def test_unit_jumps_first_boundary(self, unit_jump_ctx, h):
        # source lambda h + F is the constant -0.05, so l^(-beta_+) = 1 + 0.4 beta_+
        beta_plus = unit_jump_ctx.pair.beta_plus
        expected = (1.0 + 0.4 * beta_plus) ** (-1.0 / beta_plus)
        l = find_boundary(unit_jump_ctx, h)
        assert l == pytest.approx(expected, abs=1e-6)
        assert l > BOUNDARY

    def test_larger_input_lowers_the_boundary(self, jump_ctx, h, first_iterate):
        v1, l_h = first_iterate
        assert find_boundary(jump_ctx, v1) <= l_h + jump_ctx.tol.root

    def test_rejects_concave_input(self, gbm_ctx, h):
        values = h.values.copy()
        values[gbm_ctx.grid.strike_index + 20] += 0.05
        with pytest.raises(PreconditionError):
            find_boundary(gbm_ctx, h.with_values(values))

    def test_rejects_values_above_strike(self, gbm_ctx, grid):
        with pytest.raises(PreconditionError):
            check_preconditions(gbm_ctx, GridFunction(grid, np.full(grid.n, 1.5)))

    def test_no_sign_change(self, gbm_model):
        # search floor 0.8 sits above the boundary, where G > 0
        ctx = OperatorContext.build(gbm_model, Grid.log_spaced(1.0, 0.08, 100.0, 500))
        with pytest.raises(BoundaryNotFoundError) as err:
            find_boundary(ctx, payoff(ctx.grid))
        assert err.value.brackets == []
        assert err.value.existence_integral > 0.0


class TestApplyRl:
    def test_closed_form_without_jumps(self, gbm_ctx, h, grid):
        g = apply_R_l(gbm_ctx, h, BOUNDARY)
        x = grid.nodes[(grid.nodes > 0.2) & (grid.nodes < 20.0)]
        expected = np.array([perpetual_put(xi) for xi in x])
        np.testing.assert_allclose(g.values[(grid.nodes > 0.2) & (grid.nodes < 20.0)], expected, rtol=1e-12)

    def test_value_at_strike(self, gbm_ctx, h):
        g, _ = apply_R(gbm_ctx, h)
        assert g.eval(1.0) == pytest.approx(0.12320, abs=1e-5)

    def test_continuous_at_boundary(self, jump_ctx, h, first_iterate):
        _, l = first_iterate
        g = apply_R_l(jump_ctx, h, l)
        j = jump_ctx.grid.first_above(l)
        assert g.values[j] == pytest.approx(1.0 - g.grid.nodes[j], abs=1e-4)

    def test_constant_source(self, unit_jump_ctx, grid):
        c = 0.4
        model = unit_jump_ctx.model
        g = apply_R_l(unit_jump_ctx, GridFunction(grid, np.full(grid.n, c)), 0.6)
        pair = unit_jump_ctx.pair
        inside = grid.nodes > 0.6
        homogeneous = (1.0 - 0.6) * np.exp(pair.log_phi(grid.nodes[inside]) - pair.log_phi(0.6))
        gap = g.values[inside] - homogeneous
        assert np.all(gap >= -1e-12)
        assert np.max(gap) <= model.lam * c / model.rho + 1e-12

    def test_normalisation_invariance(self, jump_ctx, jump_model, grid, h):
        scaled = OperatorContext.build(jump_model, grid, pair=jump_ctx.pair.rescaled(1e3, 1e-2))
        assert find_boundary(scaled, h) == pytest.approx(find_boundary(jump_ctx, h), abs=2e-10)
        l = 0.55
        np.testing.assert_allclose(apply_R_l(scaled, h, l).values, apply_R_l(jump_ctx, h, l).values,
                                   rtol=1e-10, atol=1e-14)

    def test_output_between_payoff_and_strike(self, first_iterate, h):
        g, _ = first_iterate
        assert np.all(g.values >= h.values - 1e-12)
        assert np.all(g.values <= 1.0)

    def test_order_preserving(self, jump_ctx, h, first_iterate):
        v1, _ = first_iterate
        v2, _ = apply_R(jump_ctx, v1)
        assert np.all(v2.values >= v1.values - jump_ctx.tol.pde)

    @pytest.mark.parametrize('l', [1.5, 1e-4])
    def test_boundary_out_of_range(self, gbm_ctx, h, l):
        with pytest.raises(OutOfRangeError):
            apply_R_l(gbm_ctx, h, l)


class TestSmoothFit:
    def test_without_jumps(self, gbm_ctx, h):
        assert right_derivative_at_boundary(gbm_ctx, h, BOUNDARY) == pytest.approx(-1.0, abs=1e-10)

    def test_with_jumps(self, jump_ctx, h, first_iterate):
        _, l = first_iterate
        assert right_derivative_at_boundary(jump_ctx, h, l) == pytest.approx(-1.0, abs=jump_ctx.tol.fit)

    def test_off_boundary_slope_differs(self, gbm_ctx, h):
        assert abs(right_derivative_at_boundary(gbm_ctx, h, 0.6) + 1.0) > 1e-2


class TestTwoBarrier:
    def test_source_free(self, gbm_ctx, grid):
        zero = GridFunction(grid, np.zeros(grid.n))
        jb = int(np.argmin(np.abs(grid.nodes - 2.0)))
        barrier = grid.nodes[jb]
        g = two_barrier_R(gbm_ctx, zero, BOUNDARY, barrier)

        x = grid.nodes[(grid.nodes > 0.75) & (grid.nodes < barrier)]
        R_b = barrier ** -3.5
        expected = (1.0 - BOUNDARY) * (x ** -2.5 - R_b * x) / (BOUNDARY ** -2.5 - R_b * BOUNDARY)
        inside = (grid.nodes > 0.75) & (grid.nodes < barrier)
        np.testing.assert_allclose(g.values[inside], expected, rtol=1e-10)

    def test_barrier_at_grid_end(self, jump_ctx, h, first_iterate):
        _, l = first_iterate
        assert truncation_gap(jump_ctx, h, l) <= jump_ctx.tol.trunc

    def test_monotone_approach(self, jump_ctx, h, first_iterate):
        g, l = first_iterate
        inner = (g.grid.nodes > l) & (g.grid.nodes <= 1.5)
        gaps = []
        for barrier in (2.0, 5.0, 10.0):
            killed = two_barrier_R(jump_ctx, h, l, barrier)
            assert np.all(killed.values[inner] <= g.values[inner] + 1e-12)
            gaps.append(np.max(g.values[inner] - killed.values[inner]))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_barrier_below_boundary(self, gbm_ctx, h):
        with pytest.raises(PreconditionError):
            two_barrier_R(gbm_ctx, h, 0.7, 0.6)

    def test_barrier_above_grid(self, gbm_ctx, h):
        with pytest.raises(OutOfRangeError):
            two_barrier_R(gbm_ctx, h, 0.7, 500.0)


class TestUniqueness:
    def _ctx(self, gbm_model, grid, atoms):
        return OperatorContext.build(gbm_model.replace(lam=0.1, jumps=JumpMeasure.discrete(atoms)), grid)

    def test_downward_jumps(self, gbm_model, grid):
        ctx = self._ctx(gbm_model, grid, [(0.8, 0.5), (1.0, 0.5)])
        report = uniqueness_branch(ctx, payoff(grid))
        assert report.branch == 'xi<=1'
        assert report.holds
        assert report.margin == pytest.approx(0.05, abs=1e-12)

    def test_upward_jumps(self, gbm_model, grid):
        ctx = self._ctx(gbm_model, grid, [(1.0, 0.5), (1.4, 0.5)])
        report = uniqueness_branch(ctx, payoff(grid))
        assert report.branch == 'xi>1'
        assert report.holds
        # D+ S h reaches -xi below both atoms, where the bound is tight
        assert report.margin == pytest.approx(0.0, abs=1e-9)


def test_value_at_zero(h):
    assert value_at_zero(h, 0.1, 0.05, 1.0) == 1.0
    assert value_at_zero(h.with_values(np.full(h.grid.n, 1.2)), 1.0, 0.01, 1.0) > 1.0

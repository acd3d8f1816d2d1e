import numpy as np
import pytest

from core.exceptions import ConfigError, DomainError
from core.fundsol import (ZeroMode, boundary_behavior_check, dump_csv, frozen_exponents, gbm_pair,
                          numeric_pair, ode_residual, pair_accuracy, pair_for, wronskian_spread)
from core.gridfn import Grid
from core.models import Tolerances, VolatilityModel
from jumpput import settings

from .conftest import BETA_MINUS


@pytest.fixture(scope='module')
def gbm(gbm_model):
    return gbm_pair(0.2, gbm_model.mu, gbm_model.rho)


@pytest.fixture(scope='module')
def numeric_constant(gbm_model, grid):
    return numeric_pair(VolatilityModel.constant(0.2), gbm_model.mu, gbm_model.rho, grid)


@pytest.fixture(scope='module')
def cev(cev_model, grid):
    return pair_for(cev_model, grid)


class TestClosedForm:
    def test_exponents(self, gbm):
        assert gbm.beta_minus == pytest.approx(BETA_MINUS, rel=1e-14)
        assert gbm.beta_plus == pytest.approx(1.0, rel=1e-14)

    def test_exponents_solve_the_characteristic_equation(self):
        for sigma, mu, rho in [(0.3, 0.02, 0.07), (0.8, -0.01, 0.2)]:
            for beta in frozen_exponents(sigma, mu, rho):
                assert 0.5 * sigma ** 2 * beta * (beta - 1.0) + mu * beta - rho == pytest.approx(0.0, abs=1e-14)

    def test_wronskian_at_strike(self, gbm):
        assert gbm.wronskian(1.0) == pytest.approx(3.5, rel=1e-14)

    def test_values(self, gbm):
        assert gbm.psi(2.0) == pytest.approx(2.0)
        assert gbm.phi(4.0) == pytest.approx(4.0 ** -2.5)
        assert gbm.phi_prime(1.0) == pytest.approx(-2.5)

    def test_pair_for_constant_volatility(self, gbm_model, grid):
        assert pair_for(gbm_model, grid).beta_minus == pytest.approx(BETA_MINUS)

    def test_rejects_level_dependent_volatility(self, gbm_model):
        with pytest.raises(ConfigError):
            gbm_pair(VolatilityModel.cev(0.2, 0.5), gbm_model.mu, gbm_model.rho)

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ConfigError):
            gbm_pair(0.2, 0.05, 0.0)

    @pytest.mark.parametrize('x', [0.0, -1.0])
    def test_domain(self, gbm, x):
        with pytest.raises(DomainError):
            gbm.psi(x)


class TestNumericPair:
    def test_matches_closed_form(self, gbm, numeric_constant):
        x = np.geomspace(0.1, 10.0, 400)
        np.testing.assert_allclose(numeric_constant.psi(x), gbm.psi(x) / gbm.psi(1.0), rtol=1e-6)
        np.testing.assert_allclose(numeric_constant.phi(x), gbm.phi(x) / gbm.phi(1.0), rtol=1e-6)
        np.testing.assert_allclose(numeric_constant.dphi(x), BETA_MINUS, rtol=1e-6)

    def test_normalised_at_strike(self, cev):
        assert cev.log_psi(1.0) == pytest.approx(0.0, abs=1e-12)
        assert cev.log_phi(1.0) == pytest.approx(0.0, abs=1e-12)

    def test_monotone(self, cev, grid):
        assert np.all(cev.dpsi(grid.nodes) > 0.0)
        assert np.all(cev.dphi(grid.nodes) < 0.0)

    def test_ode_residual(self, numeric_constant, cev, gbm, grid):
        assert max(ode_residual(gbm, grid).values()) <= 1e-12
        assert max(ode_residual(numeric_constant, grid).values()) <= 1e-8
        assert max(ode_residual(cev, grid).values()) <= Tolerances.for_strike(1.0).ode

    @pytest.mark.parametrize('name', ['gbm', 'numeric_constant', 'cev'])
    def test_scaled_wronskian_is_constant(self, request, grid, name):
        assert wronskian_spread(request.getfixturevalue(name), grid) <= 1e-6

    def test_power_law_continuation(self, numeric_constant, grid):
        x = 3.0 * grid.x_max
        assert numeric_constant.phi(x) / numeric_constant.phi(grid.x_max) == pytest.approx(3.0 ** BETA_MINUS, rel=1e-6)


class TestPairAccuracy:
    def test_level_dependent_pair_is_within_tolerance(self, cev):
        accuracy = cev.accuracy
        assert accuracy.within_tolerance
        assert accuracy.ode_residual <= settings.TOL_ODE
        assert accuracy.wronskian_spread <= settings.WRONSKIAN_TOL
        assert accuracy.as_dict()['within_tolerance'] is True

    def test_tolerance_comes_from_the_context(self, cev_model, grid):
        pair = pair_for(cev_model, grid, tol_ode=1e-9)
        assert pair.accuracy.tol_ode == 1e-9

    def test_tight_tolerance_warns(self, cev, grid, caplog):
        accuracy = pair_accuracy(cev, grid, tol_ode=1e-30)
        assert not accuracy.within_tolerance
        assert 'ODE residual' in caplog.text

class TestRescaling:
    def test_logs_shift_and_slopes_do_not(self, cev, grid):
        scaled = cev.rescaled(4.0, 0.5)
        x = grid.nodes[::97]
        np.testing.assert_allclose(scaled.psi(x), 4.0 * cev.psi(x), rtol=1e-13)
        np.testing.assert_allclose(scaled.phi(x), 0.5 * cev.phi(x), rtol=1e-13)
        np.testing.assert_array_equal(scaled.dpsi(x), cev.dpsi(x))
        np.testing.assert_allclose(scaled.wronskian(x), 2.0 * cev.wronskian(x), rtol=1e-13)

    def test_original_is_untouched(self, gbm):
        gbm.rescaled(10.0, 10.0)
        assert gbm.psi(1.0) == 1.0

    def test_rejects_nonpositive(self, gbm):
        with pytest.raises(ConfigError):
            gbm.rescaled(0.0, 1.0)


class TestBoundaryBehavior:
    def test_gbm_is_natural_at_both_ends(self, gbm, grid):
        report = boundary_behavior_check(gbm, grid)
        assert report.infinity_natural
        assert report.zero_mode == ZeroMode.NATURAL_LIKE
        assert report.phi_ratio_at_zero > 1.0

    def test_cev_exits_at_zero(self, cev, grid):
        report = boundary_behavior_check(cev, grid)
        assert report.infinity_natural
        assert report.zero_mode == ZeroMode.EXIT_LIKE

    def test_report_serialises_mode(self, gbm, grid):
        assert boundary_behavior_check(gbm, grid).as_dict()['zero_mode'] == 'natural-like'

    def test_short_grid_warns(self, gbm, caplog):
        short = Grid.log_spaced(1.0, 0.5, 1.5, 200)
        report = boundary_behavior_check(gbm, short)
        assert not report.infinity_natural
        assert 'does not look natural' in caplog.text


def test_dump_csv(gbm, grid, tmp_path):
    path = dump_csv(gbm, grid, tmp_path / 'pair.csv')
    table = np.loadtxt(path, delimiter=',', skiprows=1)
    assert path.read_text().splitlines()[0] == 'x,psi,psi_prime,phi,phi_prime,W'
    assert table.shape == (grid.n, 6)
    np.testing.assert_allclose(table[:, 5], gbm.wronskian(grid.nodes), rtol=1e-15)

import numpy as np
import pytest

from core.exceptions import ConfigError, DomainError, InvalidMeasureError
from core.models import (JumpMeasure, Tolerances, VolatilityModel, crude_upper_bound, derive_mu,
                         jump_mean, sigma_eval)


class TestJumpMeasure:
    def test_identity_mean(self):
        assert jump_mean(JumpMeasure.identity()) == 1.0

    def test_symmetric_atoms_mean(self):
        assert jump_mean(JumpMeasure.discrete([(0.5, 0.5), (1.5, 0.5)])) == pytest.approx(1.0, abs=1e-15)

    def test_lognormal_mean_matches_moment(self):
        jumps = JumpMeasure.lognormal(-0.08, 0.4)
        assert jump_mean(jumps) == pytest.approx(1.0, rel=1e-8)
        assert jumps.weights.sum() == pytest.approx(1.0, abs=1e-10)

    def test_lognormal_order_refinement_is_stable(self):
        coarse = jump_mean(JumpMeasure.lognormal(-0.08, 0.4, order=32))
        fine = jump_mean(JumpMeasure.lognormal(-0.08, 0.4, order=64))
        assert abs(coarse - fine) < 1e-8 * fine

    def test_reverse_summation(self):
        atoms = [(0.7, 0.1), (0.9, 0.2), (1.0, 0.3), (1.2, 0.25), (1.6, 0.15)]
        forward = derive_mu(0.05, 0.1, jump_mean(JumpMeasure.discrete(atoms)))
        backward = derive_mu(0.05, 0.1, jump_mean(JumpMeasure.discrete(atoms[::-1])))
        assert abs(forward - backward) < 1e-14 * abs(forward)

    @pytest.mark.parametrize('atoms', [
        [(1.0, 0.5), (2.0, 0.4)],
        [(0.0, 1.0)],
        [(-1.0, 0.5), (2.0, 0.5)],
        [(1.0, 1.5), (2.0, -0.5)],
        [],
    ])
    def test_invalid_measures(self, atoms):
        with pytest.raises(InvalidMeasureError):
            JumpMeasure.discrete(atoms)

    def test_negative_sdlog(self):
        with pytest.raises(InvalidMeasureError):
            JumpMeasure.lognormal(0.0, -0.1)

    def test_atoms_are_read_only(self):
        jumps = JumpMeasure.identity()
        with pytest.raises(ValueError):
            jumps.atoms[0] = 2.0


class TestDrift:
    @pytest.mark.parametrize('r, lam, xi, expected', [
        (0.05, 0.0, 1.0, 0.05),
        (0.05, 0.1, 1.0, 0.05),
        (0.05, 0.2, 0.9, 0.07),
    ])
    def test_derive_mu(self, r, lam, xi, expected):
        assert derive_mu(r, lam, xi) == pytest.approx(expected, abs=1e-15)

    def test_model_mu(self, jump_model):
        assert jump_model.xi == pytest.approx(1.0, rel=1e-8)
        assert jump_model.mu == pytest.approx(0.05, rel=1e-7)
        assert jump_model.rho == pytest.approx(0.15)


class TestVolatility:
    def test_constant(self):
        assert sigma_eval(VolatilityModel.constant(0.2), 37.5) == 0.2

    @pytest.mark.parametrize('x, expected', [(4.0, 0.1), (1.0, 0.2)])
    def test_cev(self, x, expected):
        assert sigma_eval(VolatilityModel.cev(0.2, 0.5), x) == pytest.approx(expected)

    def test_table_is_log_log_linear_and_flat_outside(self):
        vol = VolatilityModel.table([1.0, 4.0], [0.4, 0.1])
        assert vol.sigma(2.0) == pytest.approx(0.2)
        assert vol.sigma(0.5) == pytest.approx(0.4)
        assert vol.sigma(10.0) == pytest.approx(0.1)

    def test_vectorized(self):
        values = VolatilityModel.cev(0.2, 0.5).sigma(np.array([1.0, 4.0, 16.0]))
        np.testing.assert_allclose(values, [0.2, 0.1, 0.05])

    @pytest.mark.parametrize('x', [0.0, -1.0])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            sigma_eval(VolatilityModel.constant(0.2), x)

    def test_table_rejects_large_jumps(self):
        with pytest.raises(ConfigError):
            VolatilityModel.table([1.0, 2.0], [0.01, 0.5])

    @pytest.mark.parametrize('sigma, gamma', [(0.2, 0.0), (0.2, 1.0), (-0.2, 0.5)])
    def test_cev_parameters(self, sigma, gamma):
        with pytest.raises(ConfigError):
            VolatilityModel.cev(sigma, gamma)


class TestMarketModel:
    def test_alpha_defaults_to_rate(self, gbm_model):
        assert gbm_model.alpha == gbm_model.rate

    @pytest.mark.parametrize('changes', [{'rate': 0.0}, {'lam': -0.1}, {'strike': 0.0}, {'alpha': -0.01}])
    def test_invalid_parameters(self, gbm_model, changes):
        with pytest.raises(ConfigError):
            gbm_model.replace(**changes)

    def test_to_dict(self, jump_model):
        data = jump_model.to_dict()
        assert data['lambda'] == 0.1
        assert data['jumps'] == {'kind': 'lognormal', 'meanlog': -0.08, 'sdlog': 0.4, 'order': 32}

    def test_crude_upper_bound(self, jump_model):
        assert crude_upper_bound(jump_model) == pytest.approx(3.0)


class TestTolerances:
    def test_scaled_by_strike(self):
        tol = Tolerances.for_strike(2.0)
        assert tol.shape == pytest.approx(2e-7)
        assert tol.root == pytest.approx(2e-10)
        assert tol.trunc == pytest.approx(2e-6)
        assert tol.fit == 1e-3

    def test_overrides(self):
        assert Tolerances.for_strike(1.0, pde=1e-3).pde == 1e-3

    def test_rejects_zero(self):
        with pytest.raises(ConfigError):
            Tolerances.for_strike(1.0, fit=0.0)

import math

import numpy as np
import pytest

from core.quadrature import cell_integrals, fitted_weights, prefix_sums, suffix_sums


def test_weights_at_zero():
    assert fitted_weights(0.0) == pytest.approx((1.0, 0.5))


@pytest.mark.parametrize('z', [-3.0, -0.7, 0.3, 2.5])
def test_weights_closed_form(z):
    e0, e1 = fitted_weights(z)
    assert e0 == pytest.approx(math.expm1(z) / z, rel=1e-13)
    assert e1 == pytest.approx((z * math.exp(z) - math.expm1(z)) / z ** 2, rel=1e-12)


def test_weights_continuous_across_series_radius():
    inside = np.array(fitted_weights(np.array([0.5 - 1e-9, -0.5 + 1e-9])))
    outside = np.array(fitted_weights(np.array([0.5 + 1e-9, -0.5 - 1e-9])))
    np.testing.assert_allclose(inside, outside, rtol=1e-8)


def test_flat_weight_is_trapezoid():
    assert cell_integrals(1.0, 3.0, 0.7, 0.7, 2.0) == pytest.approx(4.0)
    assert cell_integrals(1.0, 3.0, 0.7, 0.7, 2.0, anchor='right') == pytest.approx(4.0)


@pytest.mark.parametrize('slope', [-2.5, 1.0, 4.0])
def test_exponential_weight_is_exact(slope):
    h = 0.3
    left = cell_integrals(1.0, 1.0, 0.0, slope * h, h)
    right = cell_integrals(1.0, 1.0, 0.0, slope * h, h, anchor='right')
    assert left == pytest.approx(-math.expm1(-slope * h) / slope, rel=1e-13)
    assert right == pytest.approx(math.expm1(slope * h) / slope, rel=1e-13)


def test_unknown_anchor():
    with pytest.raises(ValueError):
        cell_integrals(1.0, 1.0, 0.0, 0.0, 1.0, anchor='middle')


@pytest.fixture
def cells_and_weights():
    rng = np.random.default_rng(7)
    cells = rng.normal(size=40)
    log_weight = np.cumsum(rng.normal(scale=0.5, size=41))
    return cells, log_weight


def test_suffix_sums_match_brute_force(cells_and_weights):
    cells, L = cells_and_weights
    expected = [sum(math.exp(L[j] - L[i]) * cells[i] for i in range(j, cells.size)) for j in range(L.size)]
    np.testing.assert_allclose(suffix_sums(cells, L), expected, rtol=1e-11, atol=1e-12)


def test_prefix_sums_match_brute_force(cells_and_weights):
    cells, L = cells_and_weights
    expected = [sum(math.exp(L[j] - L[i + 1]) * cells[i] for i in range(j)) for j in range(L.size)]
    np.testing.assert_allclose(prefix_sums(cells, L), expected, rtol=1e-11, atol=1e-12)


def test_sums_survive_huge_weights():
    cells = np.ones(3)
    rising = np.array([0.0, 800.0, 1600.0, 2400.0])
    assert suffix_sums(cells, rising)[0] == pytest.approx(1.0, rel=1e-15)
    assert prefix_sums(cells, rising[::-1].copy())[-1] == pytest.approx(1.0, rel=1e-15)

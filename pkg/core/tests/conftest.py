import pytest

from core.gridfn import Grid
from core.models import JumpMeasure, MarketModel, VolatilityModel
from core.operator import OperatorContext
from core.solver import solve

BOUNDARY = 5.0 / 7.0
BETA_MINUS = -2.5


def perpetual_put(x, K=1.0, l=BOUNDARY, beta=BETA_MINUS):
    """Closed-form value without jumps"""
    return K - x if x <= l else (K - l) * (x / l) ** beta


@pytest.fixture(scope='session')
def gbm_model():
    return MarketModel(VolatilityModel.constant(0.2), rate=0.05, lam=0.0, jumps=JumpMeasure.identity(), strike=1.0)


@pytest.fixture(scope='session')
def jump_model():
    return MarketModel(VolatilityModel.constant(0.2), rate=0.05, lam=0.1,
                       jumps=JumpMeasure.lognormal(-0.08, 0.4), strike=1.0)


@pytest.fixture(scope='session')
def cev_model():
    return MarketModel(VolatilityModel.cev(0.2, 0.5), rate=0.05, lam=0.0, jumps=JumpMeasure.identity(), strike=1.0)


@pytest.fixture(scope='session')
def grid():
    return Grid.log_spaced(1.0)


@pytest.fixture(scope='session')
def gbm_ctx(gbm_model, grid):
    return OperatorContext.build(gbm_model, grid)


@pytest.fixture(scope='session')
def jump_ctx(jump_model, grid):
    return OperatorContext.build(jump_model, grid)


@pytest.fixture(scope='session')
def gbm_solution(gbm_model, grid):
    return solve(gbm_model, grid)


@pytest.fixture(scope='session')
def jump_solution(jump_model, grid):
    return solve(jump_model, grid, eps=1e-6, keep_iterates=True)

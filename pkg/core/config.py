import os
import json
import logging
import dataclasses
from dataclasses import dataclass, field

from jumpput import settings
from .exceptions import ConfigError
from .gridfn import Grid
from .models import JumpMeasure, MarketModel, Tolerances, VolatilityModel

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ('lambda', 'sigma', 'strike', 'alpha')
TOLERANCE_KEYS = {field.name for field in dataclasses.fields(Tolerances)}


def _require(data, key, where):
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be an object")
    if key not in data:
        raise ConfigError(f"Missing required key '{key}' in {where}")
    return data[key]


def _number(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    return float(value)


def parse_volatility(data):
    kind = _require(data, 'kind', 'volatility')
    if kind == 'constant':
        return VolatilityModel.constant(_number(_require(data, 'sigma', 'volatility'), 'sigma'))
    if kind == 'cev':
        return VolatilityModel.cev(_number(_require(data, 'sigma', 'volatility'), 'sigma'),
                                   _number(_require(data, 'gamma', 'volatility'), 'gamma'))
    if kind == 'table':
        return VolatilityModel.table(_require(data, 'x', 'volatility'), _require(data, 'sigma_values', 'volatility'))
    raise ConfigError(f"Unknown volatility kind '{kind}'")


def parse_jumps(data):
    kind = _require(data, 'kind', 'jumps')
    if kind == 'discrete':
        atoms = _require(data, 'atoms', 'jumps')
        if not isinstance(atoms, list) or not all(isinstance(a, list) and len(a) == 2 for a in atoms):
            raise ConfigError("'atoms' must be a list of [z, p] pairs")
        return JumpMeasure.discrete(atoms)
    if kind == 'lognormal':
        return JumpMeasure.lognormal(_number(_require(data, 'meanlog', 'jumps'), 'meanlog'),
                                     _number(_require(data, 'sdlog', 'jumps'), 'sdlog'),
                                     data.get('order'))
    raise ConfigError(f"Unknown jump kind '{kind}'")


def parse_model(data):
    strike = _number(_require(data, 'strike', 'model'), 'strike')
    rate = _number(_require(data, 'rate', 'model'), 'rate')
    lam = _number(_require(data, 'lambda', 'model'), 'lambda')
    alpha = data.get('alpha')
    jumps = parse_jumps(data['jumps']) if 'jumps' in data else None
    if jumps is None:
        if lam > 0.0:
            raise ConfigError("Missing required key 'jumps' in model (lambda > 0)")
        jumps = JumpMeasure.identity()
    return MarketModel(
        vol=parse_volatility(_require(data, 'volatility', 'model')),
        rate=rate,
        lam=lam,
        jumps=jumps,
        strike=strike,
        alpha=None if alpha is None else _number(alpha, 'alpha'),
    )


@dataclass(frozen=True)
class GridConfig:
    x_min: float = None
    x_max: float = None
    n: int = None

    def build(self, strike):
        return Grid.log_spaced(strike, self.x_min, self.x_max, self.n)

    def to_dict(self):
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = settings.EPSILON
    tolerances: dict = field(default_factory=dict)

    def tolerances_for(self, strike):
        return Tolerances.for_strike(strike, **self.tolerances)


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = settings.MC_PATHS
    dt: float = settings.MC_DT
    t_max: float = None
    seed: int = settings.MC_SEED
    points: tuple = ()
    allowance: float = settings.MC_ALLOWANCE_FACTOR
    tolerance: float = None


@dataclass(frozen=True)
class RunConfig:
    model: MarketModel
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mc: MCConfig = None
    spots: tuple = ()
    output: str = settings.OUTPUT_DIR

    def with_parameter(self, name, value):
        """Copy with one model parameter replaced, for sweeps"""
        model = self.model
        if name == 'lambda':
            model = model.replace(lam=float(value))
            if model.lam > 0.0 and model.jumps.atoms.size == 1 and model.jumps.atoms[0] == 1.0:
                logger.info("Sweeping lambda with the identity jump law")
        elif name == 'alpha':
            model = model.replace(alpha=float(value))
        elif name == 'strike':
            model = model.replace(strike=float(value))
        elif name == 'sigma':
            if model.vol.kind.value == 'table':
                raise ConfigError('Cannot sweep sigma for a table volatility')
            model = model.replace(vol=dataclasses.replace(model.vol, sigma0=float(value)))
        else:
            raise ConfigError(f"Unknown sweep parameter '{name}'; expected one of {', '.join(SWEEP_PARAMETERS)}")
        return dataclasses.replace(self, model=model)


def _section(data, key, cls, numbers=(), integers=()):
    raw = data.get(key)
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError(f"'{key}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"Unknown keys in {key}: {', '.join(sorted(unknown))}")
    values = {}
    for name, value in raw.items():
        if name in integers:
            values[name] = int(_number(value, name))
        elif name in numbers and value is not None:
            values[name] = _number(value, name)
        else:
            values[name] = value
    return cls(**values)


def parse_config(data):
    if not isinstance(data, dict):
        raise ConfigError('Configuration must be a JSON object')
    model = parse_model(_require(data, 'model', 'configuration'))

    grid = _section(data, 'grid', GridConfig, numbers=('x_min', 'x_max'), integers=('n',)) or GridConfig()
    grid.build(model.strike)
    solver = _section(data, 'solver', SolverConfig, numbers=('epsilon',)) or SolverConfig()
    if not isinstance(solver.tolerances, dict):
        raise ConfigError("'tolerances' must be an object")
    unknown = set(solver.tolerances) - TOLERANCE_KEYS
    if unknown:
        raise ConfigError(f"Unknown tolerance keys: {', '.join(sorted(unknown))}")
    solver.tolerances_for(model.strike)
    if not solver.epsilon > 0.0:
        raise ConfigError(f'epsilon must be positive, got {solver.epsilon}')

    mc = _section(data, 'mc', MCConfig, numbers=('dt', 't_max', 'allowance', 'tolerance'),
                  integers=('n_paths', 'seed'))
    if mc is not None:
        mc = dataclasses.replace(mc, points=tuple(_number(p, 'points') for p in mc.points))
    spots = tuple(_number(s, 'spots') for s in data.get('spots', ()))
    return RunConfig(model, grid, solver, mc, spots, data.get('output', settings.OUTPUT_DIR))


def load_config(path):
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f'Config file not found: {path}') from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f'Config file {path} is not valid JSON: {exc}') from exc
    config = parse_config(data)
    logger.info(f"Loaded configuration from {path}: {config.model}")
    return config


def ensure_output_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f'Cannot create output directory {path}: {exc}') from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f'Output directory {path} is not writable')
    return path

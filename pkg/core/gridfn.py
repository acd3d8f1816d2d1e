import math
import logging
from dataclasses import dataclass, asdict
from enum import Flag

import numpy as np

from jumpput import settings
from .exceptions import ConfigError, DomainError, OutOfRangeError

logger = logging.getLogger(__name__)

LOG_SPACING_TOL = 1e-12


class TailMode(Flag):
    """How a grid function is continued off the grid"""
    NONE = 0
    PAYOFF_BELOW = 1
    PHI_DECAY_ABOVE = 2
    BOTH = 3


@dataclass(frozen=True, eq=False)
class Grid:
    """Log-spaced price nodes with the strike as an exact node"""
    nodes: np.ndarray
    strike: float
    strike_index: int

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        nodes.flags.writeable = False
        object.__setattr__(self, 'nodes', nodes)

        if nodes.ndim != 1 or nodes.size < settings.GRID_MIN_POINTS:
            raise ConfigError(f'Grid needs at least {settings.GRID_MIN_POINTS} nodes, got {nodes.size}')
        if nodes[0] <= 0.0 or np.any(np.diff(nodes) <= 0.0):
            raise ConfigError('Grid nodes must be positive and strictly increasing')
        steps = np.diff(np.log(nodes))
        if np.ptp(steps) > LOG_SPACING_TOL:
            raise ConfigError(f'Grid is not log-spaced (step spread {np.ptp(steps):.3g})')
        if not 0 < self.strike_index < nodes.size - 1 or nodes[self.strike_index] != self.strike:
            raise ConfigError('The strike must be an interior grid node')

    @classmethod
    def log_spaced(cls, strike, x_min=None, x_max=None, n=None):
        """N nodes on [x_min, x_max], shifted so that the strike is a node.

        The cell count below the strike is rounded to an integer, so the upper
        end may move by less than one cell from the requested x_max.
        """
        x_min = strike * settings.GRID_LOWER_FACTOR if x_min is None else float(x_min)
        x_max = strike * settings.GRID_UPPER_FACTOR if x_max is None else float(x_max)
        n = settings.GRID_POINTS if n is None else int(n)
        if not 0.0 < x_min < strike < x_max:
            raise ConfigError(f'Grid must satisfy 0 < x_min < K < x_max, got ({x_min}, {strike}, {x_max})')
        if n < settings.GRID_MIN_POINTS:
            raise ConfigError(f'Grid needs at least {settings.GRID_MIN_POINTS} nodes, got {n}')

        below = math.log(strike / x_min)
        cells_below = round((n - 1) * below / math.log(x_max / x_min))
        cells_below = min(max(cells_below, 1), n - 2)
        du = below / cells_below
        nodes = strike * np.exp(du * (np.arange(n) - cells_below))
        nodes[cells_below] = strike
        return cls(nodes, float(strike), cells_below)

    @classmethod
    def from_nodes(cls, nodes, strike):
        hits = np.flatnonzero(np.asarray(nodes) == strike)
        if hits.size != 1:
            raise ConfigError(f'Strike {strike} is not a node of the stored grid')
        return cls(nodes, float(strike), int(hits[0]))

    @property
    def n(self):
        return self.nodes.size

    @property
    def x_min(self):
        return float(self.nodes[0])

    @property
    def x_max(self):
        return float(self.nodes[-1])

    @property
    def log_nodes(self):
        return np.log(self.nodes)

    @property
    def du(self):
        return math.log(self.nodes[-1] / self.nodes[0]) / (self.n - 1)

    def first_above(self, x):
        """Index of the first node strictly above x"""
        return int(np.searchsorted(self.nodes, x, side='right'))

    def to_dict(self):
        return {'x_min': self.x_min, 'x_max': self.x_max, 'n': self.n,
                'strike': self.strike, 'strike_index': self.strike_index}

    def __str__(self):
        return f"log grid of {self.n} nodes on [{self.x_min:.6g}, {self.x_max:.6g}]"


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-linear function on a grid; carrier for h, Sf and the iterates"""
    grid: Grid
    values: np.ndarray
    tail_mode: TailMode = TailMode.BOTH
    pair: object = None
    strike: float = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise ValueError(f'Expected {self.grid.n} values, got shape {values.shape}')
        if not np.all(np.isfinite(values)):
            raise ValueError('Grid function values must be finite')
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)
        if self.strike is None:
            object.__setattr__(self, 'strike', self.grid.strike)

    def with_values(self, values):
        return GridFunction(self.grid, values, self.tail_mode, self.pair, self.strike)

    def attach(self, pair):
        """Same function, with phi-proportional decay above the grid"""
        return GridFunction(self.grid, self.values, self.tail_mode, pair, self.strike)

    def eval(self, x):
        scalar = np.ndim(x) == 0
        xs = np.asarray(x, dtype=float)
        if np.any(~(xs > 0.0)):
            raise DomainError('Grid functions are only evaluated at positive prices')

        nodes = self.grid.nodes
        flat = xs.ravel()
        out = np.interp(flat, nodes, self.values)
        if self.tail_mode & TailMode.PAYOFF_BELOW:
            below = flat < nodes[0]
            out[below] = np.maximum(self.strike - flat[below], 0.0)
        above = flat > nodes[-1]
        if self.tail_mode & TailMode.PHI_DECAY_ABOVE and self.pair is not None and above.any():
            decay = np.exp(self.pair.log_phi(flat[above]) - self.pair.log_phi(nodes[-1]))
            out[above] = self.values[-1] * decay

        out = out.reshape(xs.shape)
        return float(out) if scalar else out

    __call__ = eval


@dataclass(frozen=True)
class ShapeReport:
    convex: bool
    decreasing: bool
    min_right_slope: float
    bounds_ok: bool

    def slope_ok(self, tol):
        return self.min_right_slope >= -1.0 - tol

    def all_ok(self, tol):
        return self.convex and self.decreasing and self.bounds_ok and self.slope_ok(tol)

    def as_dict(self):
        return asdict(self)


def payoff(grid, K=None, pair=None):
    """h(x) = (K - x)^+ at every node"""
    K = grid.strike if K is None else float(K)
    if K <= 0.0:
        raise ConfigError(f'Strike must be positive, got {K}')
    return GridFunction(grid, np.maximum(K - grid.nodes, 0.0), TailMode.BOTH, pair, K)


def evaluate(f, x):
    return f.eval(x)


def jump_average(f, jumps, x):
    """Sf(x) = sum_i p_i f(x z_i) at arbitrary positive prices"""
    xs = np.asarray(x, dtype=float)
    values = f.eval(xs[..., None] * jumps.atoms) @ jumps.weights
    return float(values) if np.ndim(x) == 0 else values


def apply_S(f, jumps):
    """Jump-averaging operator on the node values of f"""
    return f.with_values(jump_average(f, jumps, f.grid.nodes))


def right_derivatives(f):
    return np.diff(f.values) / np.diff(f.grid.nodes)


def right_derivative(f, j):
    """Forward difference at node j"""
    if not 0 <= j < f.grid.n - 1:
        raise OutOfRangeError(f'Node {j} has no forward neighbour on a grid of {f.grid.n} nodes')
    x = f.grid.nodes
    return (f.values[j + 1] - f.values[j]) / (x[j + 1] - x[j])


def shape_report(f, K=None, tol=None):
    K = f.strike if K is None else float(K)
    tol = settings.TOL_SHAPE_FACTOR * K if tol is None else tol
    slopes = right_derivatives(f)
    h = np.maximum(K - f.grid.nodes, 0.0)
    return ShapeReport(
        convex=bool(np.all(np.diff(slopes) >= -tol)),
        decreasing=bool(np.all(np.diff(f.values) <= tol)),
        min_right_slope=float(slopes.min()),
        bounds_ok=bool(np.all(f.values >= h - tol) and np.all(f.values <= K + tol)),
    )


def sup_norm(f, g):
    return float(np.max(np.abs(np.asarray(f.values) - np.asarray(g.values))))

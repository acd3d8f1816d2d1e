import math
import logging
import dataclasses
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.polynomial.hermite import hermgauss

from jumpput import settings
from .exceptions import ConfigError, DomainError, InvalidMeasureError

logger = logging.getLogger(__name__)


def _frozen_array(values):
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


class JumpKind(str, Enum):
    DISCRETE = 'discrete'
    LOGNORMAL = 'lognormal'


@dataclass(frozen=True, eq=False)
class JumpMeasure:
    """Law of the multiplicative jump size Z as a finite set of weighted atoms"""
    kind: JumpKind
    atoms: np.ndarray
    weights: np.ndarray
    meanlog: float = None
    sdlog: float = None
    order: int = None

    def __post_init__(self):
        atoms = _frozen_array(self.atoms)
        weights = _frozen_array(self.weights)
        if atoms.ndim != 1 or atoms.shape != weights.shape or atoms.size == 0:
            raise InvalidMeasureError('Jump atoms and weights must be matching non-empty vectors')
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise InvalidMeasureError('Jump atoms and weights must be finite')
        if np.any(atoms <= 0.0):
            raise InvalidMeasureError(f'Jump atoms must be strictly positive, got min {atoms.min()}')
        if np.any(weights < 0.0):
            raise InvalidMeasureError('Jump probabilities must be non-negative')

        tol = settings.PROBABILITY_SUM_TOL if self.kind == JumpKind.DISCRETE else settings.QUADRATURE_SUM_TOL
        total = math.fsum(weights)
        if abs(total - 1.0) > tol:
            raise InvalidMeasureError(f'Jump probabilities sum to {total!r}, expected 1 within {tol}')

        object.__setattr__(self, 'kind', JumpKind(self.kind))
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def discrete(cls, atoms):
        """Point masses from (z, p) pairs"""
        pairs = [(float(z), float(p)) for z, p in atoms]
        if not pairs:
            raise InvalidMeasureError('A discrete jump law needs at least one atom')
        z, p = zip(*pairs)
        return cls(JumpKind.DISCRETE, z, p)

    @classmethod
    def lognormal(cls, meanlog, sdlog, order=None):
        """log Z ~ N(meanlog, sdlog^2), discretised by Gauss-Hermite nodes"""
        order = int(order or settings.QUADRATURE_ORDER)
        if order < 1:
            raise InvalidMeasureError('Quadrature order must be positive')
        if not (math.isfinite(meanlog) and math.isfinite(sdlog)) or sdlog < 0.0:
            raise InvalidMeasureError(f'Invalid lognormal parameters ({meanlog}, {sdlog})')
        nodes, weights = hermgauss(order)
        atoms = np.exp(meanlog + math.sqrt(2.0) * sdlog * nodes)
        return cls(JumpKind.LOGNORMAL, atoms, weights / math.sqrt(math.pi),
                   meanlog=float(meanlog), sdlog=float(sdlog), order=order)

    @classmethod
    def identity(cls):
        """Jump to the same price (a no-op jump)"""
        return cls.discrete([(1.0, 1.0)])

    @cached_property
    def mean(self):
        return jump_mean(self)

    def to_dict(self):
        if self.kind == JumpKind.LOGNORMAL:
            return {'kind': self.kind.value, 'meanlog': self.meanlog, 'sdlog': self.sdlog, 'order': self.order}
        return {'kind': self.kind.value, 'atoms': [[float(z), float(p)] for z, p in zip(self.atoms, self.weights)]}

    def __str__(self):
        if self.kind == JumpKind.LOGNORMAL:
            return f"lognormal({self.meanlog}, {self.sdlog}) with {self.order} nodes"
        return f"discrete law with {self.atoms.size} atoms"


class VolKind(str, Enum):
    CONSTANT = 'constant'
    CEV = 'cev'
    TABLE = 'table'


@dataclass(frozen=True, eq=False)
class VolatilityModel:
    """Level-dependent volatility x -> sigma(x)"""
    kind: VolKind
    sigma0: float = None
    gamma: float = 0.0
    table_x: np.ndarray = None
    table_sigma: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', VolKind(self.kind))
        if self.kind == VolKind.TABLE:
            xs = _frozen_array(self.table_x)
            sig = _frozen_array(self.table_sigma)
            if xs.ndim != 1 or xs.shape != sig.shape or xs.size < 2:
                raise ConfigError('Volatility table needs at least two (x, sigma) points')
            if np.any(xs <= 0.0) or np.any(np.diff(xs) <= 0.0):
                raise ConfigError('Volatility table prices must be positive and strictly increasing')
            if np.any(sig <= 0.0) or not np.all(np.isfinite(sig)):
                raise ConfigError('Volatility table values must be positive and finite')
            ratios = np.maximum(sig[1:] / sig[:-1], sig[:-1] / sig[1:])
            if np.any(ratios > settings.TABLE_MAX_RATIO):
                at = int(np.argmax(ratios))
                raise ConfigError(
                    f'Volatility table jumps by a factor {ratios[at]:.3g} between x={xs[at]} and x={xs[at + 1]}'
                )
            object.__setattr__(self, 'table_x', xs)
            object.__setattr__(self, 'table_sigma', sig)
            return

        if self.sigma0 is None or not math.isfinite(self.sigma0) or self.sigma0 <= 0.0:
            raise ConfigError(f'Volatility must be positive, got {self.sigma0}')
        if self.kind == VolKind.CEV and not 0.0 < self.gamma < 1.0:
            raise ConfigError(f'CEV exponent must lie in (0, 1), got {self.gamma}')

    @classmethod
    def constant(cls, sigma):
        return cls(VolKind.CONSTANT, sigma0=float(sigma))

    @classmethod
    def cev(cls, sigma, gamma):
        return cls(VolKind.CEV, sigma0=float(sigma), gamma=float(gamma))

    @classmethod
    def table(cls, x, sigma):
        return cls(VolKind.TABLE, table_x=x, table_sigma=sigma)

    @property
    def is_constant(self):
        return self.kind == VolKind.CONSTANT

    def sigma(self, x):
        """sigma(x) for a scalar or an array of positive prices"""
        x_arr = np.asarray(x, dtype=float)
        if np.any(~(x_arr > 0.0)):
            raise DomainError('Volatility is only defined for positive prices')

        if self.kind == VolKind.CONSTANT:
            out = np.full_like(x_arr, self.sigma0)
        elif self.kind == VolKind.CEV:
            out = self.sigma0 * x_arr ** (-self.gamma)
        else:
            # log-log linear, flat beyond the table
            out = np.exp(np.interp(np.log(x_arr), np.log(self.table_x), np.log(self.table_sigma)))
        return float(out) if np.ndim(x) == 0 else out

    def to_dict(self):
        if self.kind == VolKind.TABLE:
            return {'kind': 'table', 'x': self.table_x.tolist(), 'sigma_values': self.table_sigma.tolist()}
        data = {'kind': self.kind.value, 'sigma': self.sigma0}
        if self.kind == VolKind.CEV:
            data['gamma'] = self.gamma
        return data

    def __str__(self):
        if self.kind == VolKind.CEV:
            return f"CEV(sigma={self.sigma0}, gamma={self.gamma})"
        if self.kind == VolKind.TABLE:
            return f"table volatility ({self.table_x.size} points)"
        return f"constant volatility {self.sigma0}"


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Jump-diffusion market for the perpetual put"""
    vol: VolatilityModel
    rate: float
    lam: float
    jumps: JumpMeasure
    strike: float
    alpha: float = None

    def __post_init__(self):
        if self.alpha is None:
            object.__setattr__(self, 'alpha', self.rate)
        for name in ('rate', 'alpha', 'lam', 'strike'):
            value = getattr(self, name)
            if value is None or not math.isfinite(value):
                raise ConfigError(f'{name} must be a finite number, got {value}')
        if self.rate <= 0.0:
            raise ConfigError(f'rate must be positive, got {self.rate}')
        if self.alpha <= 0.0:
            raise ConfigError(f'alpha must be positive, got {self.alpha}')
        if self.lam < 0.0:
            raise ConfigError(f'lambda must be non-negative, got {self.lam}')
        if self.strike <= 0.0:
            raise ConfigError(f'strike must be positive, got {self.strike}')
        if self.alpha != self.rate:
            logger.info(f"Discount rate alpha={self.alpha} differs from rate r={self.rate}")

    @cached_property
    def xi(self):
        return jump_mean(self.jumps)

    @cached_property
    def mu(self):
        return derive_mu(self.rate, self.lam, self.xi)

    @property
    def rho(self):
        """Kill rate of the jump-free process"""
        return self.alpha + self.lam

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return {
            'strike': self.strike,
            'rate': self.rate,
            'alpha': self.alpha,
            'lambda': self.lam,
            'volatility': self.vol.to_dict(),
            'jumps': self.jumps.to_dict(),
        }

    def __str__(self):
        return (f"K={self.strike}, r={self.rate}, alpha={self.alpha}, lambda={self.lam}, "
                f"{self.vol}, jumps {self.jumps} (xi={self.xi:.6g}, mu={self.mu:.6g})")


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances in absolute units (shape, root and trunc already scaled by K)"""
    shape: float
    root: float
    fit: float = settings.TOL_FIT
    pde: float = settings.TOL_PDE
    trunc: float = settings.TOL_TRUNC_FACTOR
    ode: float = settings.TOL_ODE

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0.0):
                raise ConfigError(f'Tolerance {field.name} must be positive, got {value}')

    @classmethod
    def for_strike(cls, strike, **overrides):
        values = {
            'shape': settings.TOL_SHAPE_FACTOR * strike,
            'root': settings.TOL_ROOT_FACTOR * strike,
            'trunc': settings.TOL_TRUNC_FACTOR * strike,
        }
        values.update({k: float(v) for k, v in overrides.items() if v is not None})
        return cls(**values)


def jump_mean(jumps):
    """xi = E[Z]; the lognormal rule is checked against exp(m + s^2/2)"""
    xi = math.fsum(jumps.atoms * jumps.weights)
    if not math.isfinite(xi):
        raise InvalidMeasureError(f'Jump mean is not finite: {xi}')
    if jumps.kind == JumpKind.LOGNORMAL:
        exact = math.exp(jumps.meanlog + 0.5 * jumps.sdlog ** 2)
        if abs(xi - exact) > settings.LOGNORMAL_MEAN_TOL * exact:
            raise InvalidMeasureError(
                f'Quadrature of order {jumps.order} misses the lognormal mean ({xi!r} vs {exact!r}); '
                f'increase the order'
            )
    return xi


def derive_mu(r, lam, xi):
    """Risk-neutral drift making the discounted price a martingale"""
    return r + lam - lam * xi


def sigma_eval(vol, x):
    return vol.sigma(x)


def crude_upper_bound(model):
    """Bound (1 + lambda/alpha) K on every iterate, before the sharper bound K"""
    return (1.0 + model.lam / model.alpha) * model.strike

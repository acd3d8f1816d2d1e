"""Fundamental solutions psi (increasing) and phi (decreasing) of A u = rho u.

Both are stored through their logarithms L = log u and the log-derivatives
d = x u'/u, as functions of u = log x. In these variables the second-order
equation becomes the Riccati system

    L' = d,    d' = 2 rho / sigma^2 - (2 mu / sigma^2 - 1) d - d^2,

which never overflows and keeps u > 0 by construction, so no renormalisation
pass is needed during integration. Every downstream formula only uses ratios,
so the additive constants in L are free.
"""
import copy
import math
import logging
from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from jumpput import settings
from .exceptions import ConfigError, ConstructionError, DomainError
from .models import VolatilityModel

logger = logging.getLogger(__name__)


def _log_price(x):
    xs = np.asarray(x, dtype=float)
    if np.any(~(xs > 0.0)):
        raise DomainError('Fundamental solutions are only defined for positive prices')
    return np.log(xs)


def _like(value, x):
    return float(value) if np.ndim(x) == 0 else value


def frozen_exponents(sigma, mu, rho):
    """Roots beta_- < 0 < beta_+ of 1/2 sigma^2 b (b - 1) + mu b - rho = 0"""
    s2 = np.asarray(sigma, dtype=float) ** 2
    b = mu - 0.5 * s2
    root = np.sqrt(b * b + 2.0 * s2 * rho)
    return (-b - root) / s2, (-b + root) / s2


def riccati_rhs(d, sigma, mu, rho):
    s2 = sigma * sigma
    return 2.0 * rho / s2 - (2.0 * mu / s2 - 1.0) * d - d * d


class FundamentalPair:
    """Shared evaluators; subclasses provide the raw logs and log-derivatives"""

    def __init__(self, vol, mu, rho):
        if not rho > 0.0:
            raise ConfigError(f'Invalid kill rate {rho}: must be positive')
        self.vol = vol
        self.mu = float(mu)
        self.rho = float(rho)
        self.shift_psi = 0.0
        self.shift_phi = 0.0

    def log_psi(self, x):
        return _like(self._log_psi(_log_price(x)) + self.shift_psi, x)

    def log_phi(self, x):
        return _like(self._log_phi(_log_price(x)) + self.shift_phi, x)

    def dpsi(self, x):
        """x psi'(x) / psi(x)"""
        return _like(self._dpsi(_log_price(x)), x)

    def dphi(self, x):
        """x phi'(x) / phi(x)"""
        return _like(self._dphi(_log_price(x)), x)

    def dpsi_du(self, x):
        return _like(self._dpsi_du(_log_price(x)), x)

    def dphi_du(self, x):
        return _like(self._dphi_du(_log_price(x)), x)

    def psi(self, x):
        return _like(np.exp(self.log_psi(x)), x)

    def phi(self, x):
        return _like(np.exp(self.log_phi(x)), x)

    def psi_prime(self, x):
        return _like(self.psi(x) * self.dpsi(x) / np.asarray(x, dtype=float), x)

    def phi_prime(self, x):
        return _like(self.phi(x) * self.dphi(x) / np.asarray(x, dtype=float), x)

    def log_wronskian(self, x):
        u = _log_price(x)
        gap = self._dpsi(u) - self._dphi(u)
        value = self._log_psi(u) + self.shift_psi + self._log_phi(u) + self.shift_phi + np.log(gap) - u
        return _like(value, x)

    def wronskian(self, x):
        """W = psi' phi - psi phi'"""
        return _like(np.exp(self.log_wronskian(x)), x)

    def rescaled(self, c1, c2):
        """Same pair with psi -> c1 psi and phi -> c2 phi"""
        if not (c1 > 0.0 and c2 > 0.0):
            raise ConfigError('Fundamental solutions may only be rescaled by positive constants')
        pair = copy.copy(self)
        pair.shift_psi = self.shift_psi + math.log(c1)
        pair.shift_phi = self.shift_phi + math.log(c2)
        return pair


class GBMPair(FundamentalPair):
    """Closed form x^beta_+ and x^beta_- for constant volatility"""

    def __init__(self, sigma, mu, rho):
        super().__init__(VolatilityModel.constant(sigma), mu, rho)
        self.sigma = float(sigma)
        beta_minus, beta_plus = frozen_exponents(self.sigma, self.mu, self.rho)
        self.beta_minus = float(beta_minus)
        self.beta_plus = float(beta_plus)

    def _log_psi(self, u):
        return self.beta_plus * u

    def _log_phi(self, u):
        return self.beta_minus * u

    def _dpsi(self, u):
        return np.full_like(u, self.beta_plus)

    def _dphi(self, u):
        return np.full_like(u, self.beta_minus)

    def _dpsi_du(self, u):
        return np.zeros_like(u)

    def _dphi_du(self, u):
        return np.zeros_like(u)

    def __str__(self):
        return f"GBM pair (beta_- = {self.beta_minus:.6g}, beta_+ = {self.beta_plus:.6g})"


class _LogBranch:
    """Hermite reconstruction of (L, d) on the grid, continued as a power law"""

    def __init__(self, u, L, d, d_u):
        self.u0, self.u1 = u[0], u[-1]
        self.L = CubicHermiteSpline(u, L, d)
        self.d = CubicHermiteSpline(u, d, d_u)
        self.d_ends = (d[0], d[-1])
        self.L_ends = (L[0], L[-1])

    def log_value(self, u):
        inside = self.L(np.clip(u, self.u0, self.u1))
        out = np.where(u < self.u0, self.L_ends[0] + self.d_ends[0] * (u - self.u0), inside)
        return np.where(u > self.u1, self.L_ends[1] + self.d_ends[1] * (u - self.u1), out)

    def log_derivative(self, u):
        inside = self.d(np.clip(u, self.u0, self.u1))
        out = np.where(u < self.u0, self.d_ends[0], inside)
        return np.where(u > self.u1, self.d_ends[1], out)

    def log_derivative_du(self, u):
        inside = self.d(np.clip(u, self.u0, self.u1), 1)
        return np.where((u < self.u0) | (u > self.u1), 0.0, inside)


class NumericPair(FundamentalPair):
    """Pair integrated on a grid for a level-dependent volatility"""

    def __init__(self, vol, mu, rho, grid, tol_ode=None):
        super().__init__(vol, mu, rho)
        self.grid = grid
        u = grid.log_nodes
        sigma = vol.sigma(grid.nodes)

        rhs = self._system()
        L_psi, d_psi = self._shoot(rhs, u, self._lead(sigma[0]), forward=True)
        L_phi, d_phi = self._shoot(rhs, u, self._lead(sigma[-1]), forward=False)

        if np.any(d_psi <= 0.0):
            raise ConstructionError(f'psi is not increasing near x={grid.nodes[np.argmin(d_psi)]:.6g}')
        if np.any(d_phi >= 0.0):
            raise ConstructionError(f'phi is not decreasing near x={grid.nodes[np.argmax(d_phi)]:.6g}')

        k = grid.strike_index
        self._psi = _LogBranch(u, L_psi - L_psi[k], d_psi, riccati_rhs(d_psi, sigma, self.mu, self.rho))
        self._phi = _LogBranch(u, L_phi - L_phi[k], d_phi, riccati_rhs(d_phi, sigma, self.mu, self.rho))
        logger.debug(f"Numeric pair on {grid}: d_psi in [{d_psi.min():.4g}, {d_psi.max():.4g}], "
                     f"d_phi in [{d_phi.min():.4g}, {d_phi.max():.4g}]")
        self.accuracy = pair_accuracy(self, grid, tol_ode)

    def _system(self):
        vol, mu, rho = self.vol, self.mu, self.rho

        def rhs(u, y):
            sigma = vol.sigma(math.exp(u))
            return [y[1], riccati_rhs(y[1], sigma, mu, rho)]

        return rhs

    def _lead(self, sigma_end):
        """Distance in log x the integration starts outside the grid"""
        beta_minus, beta_plus = frozen_exponents(sigma_end, self.mu, self.rho)
        return min(settings.ODE_LEAD_DECAYS / float(beta_plus - beta_minus), settings.ODE_LEAD_MAX)

    def _shoot(self, rhs, u, lead, forward):
        """Riccati branch started at its frozen exponent, lead outside the grid end it leaves from"""
        nodes = u if forward else u[::-1]
        start = nodes[0] - lead if forward else nodes[0] + lead
        beta_minus, beta_plus = frozen_exponents(self.vol.sigma(math.exp(start)), self.mu, self.rho)
        d_start = float(beta_plus if forward else beta_minus)
        sol = solve_ivp(rhs, (start, nodes[-1]), [0.0, d_start], method='DOP853',
                        t_eval=nodes, rtol=settings.ODE_RTOL, atol=settings.ODE_ATOL)
        name = 'psi' if forward else 'phi'
        if not sol.success:
            raise ConstructionError(f'Integration of {name} failed: {sol.message}')
        if sol.y.shape[1] != u.size or not np.all(np.isfinite(sol.y)):
            raise ConstructionError(f'Integration of {name} produced non-finite values')
        L, d = sol.y
        return (L, d) if forward else (L[::-1], d[::-1])

    def _log_psi(self, u):
        return self._psi.log_value(u)

    def _log_phi(self, u):
        return self._phi.log_value(u)

    def _dpsi(self, u):
        return self._psi.log_derivative(u)

    def _dphi(self, u):
        return self._phi.log_derivative(u)

    def _dpsi_du(self, u):
        return self._psi.log_derivative_du(u)

    def _dphi_du(self, u):
        return self._phi.log_derivative_du(u)

    def __str__(self):
        return f"numeric pair for {self.vol} on {self.grid}"


def gbm_pair(sigma, mu, rho):
    if isinstance(sigma, VolatilityModel):
        if not sigma.is_constant:
            raise ConfigError('The closed-form pair needs a constant volatility')
        sigma = sigma.sigma0
    if not sigma > 0.0:
        raise ConfigError(f'Volatility must be positive, got {sigma}')
    return GBMPair(sigma, mu, rho)


def numeric_pair(vol, mu, rho, grid, tol_ode=None):
    return NumericPair(vol, mu, rho, grid, tol_ode)


def pair_for(model, grid, numeric=False, tol_ode=None):
    """Closed form when the volatility is constant, otherwise integrated on the grid"""
    if model.vol.is_constant and not numeric:
        return gbm_pair(model.vol.sigma0, model.mu, model.rho)
    return numeric_pair(model.vol, model.mu, model.rho, grid, tol_ode)


def _sample_points(grid):
    x = grid.nodes
    return np.concatenate([x, np.sqrt(x[:-1] * x[1:])])


def ode_residual(pair, grid):
    """Max of |1/2 sigma^2 x^2 u'' + mu x u' - rho u| / (|u| + x|u'|) at nodes and cell midpoints"""
    x = _sample_points(grid)
    half_s2 = 0.5 * pair.vol.sigma(x) ** 2
    out = {}
    for name, d, d_u in (('psi', pair.dpsi(x), pair.dpsi_du(x)), ('phi', pair.dphi(x), pair.dphi_du(x))):
        # divided through by u > 0: x^2 u''/u = d_u + d^2 - d
        residual = half_s2 * (d_u + d * d - d) + pair.mu * d - pair.rho
        out[name] = float(np.max(np.abs(residual) / (1.0 + np.abs(d))))
    return out


def scale_exponent(vol, mu, grid):
    """s(x) = int_{x_min}^{x} 2 mu / (sigma^2(y) y) dy at the grid nodes"""
    u = grid.log_nodes
    sol = solve_ivp(lambda t, y: [2.0 * mu / vol.sigma(math.exp(t)) ** 2], (u[0], u[-1]), [0.0],
                    method='DOP853', t_eval=u, rtol=settings.ODE_RTOL, atol=settings.ODE_ATOL)
    if not sol.success:
        raise ConstructionError(f'Scale density integration failed: {sol.message}')
    return sol.y[0]


def scaled_wronskian(pair, grid):
    """W(x) exp(s(x)); constant across the grid for an exact pair"""
    log_scaled = pair.log_wronskian(grid.nodes) + scale_exponent(pair.vol, pair.mu, grid)
    return np.exp(log_scaled - log_scaled[grid.strike_index])


def wronskian_spread(pair, grid):
    values = scaled_wronskian(pair, grid)
    return float(np.ptp(values) / np.mean(values))



@dataclass(frozen=True)
class PairAccuracy:
    ode_residual: float
    wronskian_spread: float
    tol_ode: float
    wronskian_tol: float

    @property
    def within_tolerance(self):
        return self.ode_residual <= self.tol_ode and self.wronskian_spread <= self.wronskian_tol

    def as_dict(self):
        data = asdict(self)
        data['within_tolerance'] = self.within_tolerance
        return data


def pair_accuracy(pair, grid, tol_ode=None, wronskian_tol=None):
    """ODE residual and scaled-Wronskian spread of a pair against their tolerances"""
    accuracy = PairAccuracy(
        ode_residual=max(ode_residual(pair, grid).values()),
        wronskian_spread=wronskian_spread(pair, grid),
        tol_ode=settings.TOL_ODE if tol_ode is None else float(tol_ode),
        wronskian_tol=settings.WRONSKIAN_TOL if wronskian_tol is None else float(wronskian_tol),
    )
    if accuracy.ode_residual > accuracy.tol_ode:
        logger.warning(f"ODE residual {accuracy.ode_residual:.3g} of {pair} exceeds {accuracy.tol_ode:.3g}")
    if accuracy.wronskian_spread > accuracy.wronskian_tol:
        logger.warning(f"Scaled Wronskian of {pair} varies by {accuracy.wronskian_spread:.3g}, "
                       f"above {accuracy.wronskian_tol:.3g}")
    return accuracy


class ZeroMode(str, Enum):
    EXIT_LIKE = 'exit-like'
    NATURAL_LIKE = 'natural-like'
    UNCLASSIFIED = 'unclassified'


@dataclass(frozen=True)
class BoundaryReport:
    infinity_natural: bool
    zero_mode: ZeroMode
    phi_decay: float
    psi_ratio_at_zero: float
    phi_ratio_at_zero: float
    phi_slope_at_zero: float

    def as_dict(self):
        data = asdict(self)
        data['zero_mode'] = self.zero_mode.value
        return data


def boundary_behavior_check(pair, grid):
    """Compare the trends at the grid ends with the two admitted patterns at zero"""
    x_min, K, x_max = grid.x_min, grid.strike, grid.x_max
    phi_decay = math.exp(pair.log_phi(x_max) - pair.log_phi(K))
    psi_growth = pair.log_psi(x_max) - pair.log_psi(K)
    psi_ratio = math.exp(pair.log_psi(x_min) - pair.log_psi(K))
    phi_ratio = math.exp(pair.log_phi(x_min) - pair.log_phi(K))
    slope = pair.dphi(x_min)

    infinity_natural = phi_decay < settings.INFINITY_DECAY_RATIO and psi_growth > 0.0
    if psi_ratio >= 1.0:
        mode = ZeroMode.UNCLASSIFIED
    elif abs(slope) < settings.EXIT_SLOPE_THRESHOLD:
        # phi levels off: bounded at zero
        mode = ZeroMode.EXIT_LIKE
    elif phi_ratio > 1.0:
        mode = ZeroMode.NATURAL_LIKE
    else:
        mode = ZeroMode.UNCLASSIFIED

    report = BoundaryReport(bool(infinity_natural), mode, phi_decay, psi_ratio, phi_ratio, slope)
    if not infinity_natural:
        logger.warning(f"phi(x_max)/phi(K) = {phi_decay:.3g}; infinity does not look natural on this grid")
    if mode == ZeroMode.UNCLASSIFIED:
        logger.warning(f"Behaviour at zero matches neither admitted pattern: {report.as_dict()}")
    return report


def dump_csv(pair, grid, path):
    x = grid.nodes
    table = np.column_stack([x, pair.psi(x), pair.psi_prime(x), pair.phi(x), pair.phi_prime(x), pair.wronskian(x)])
    np.savetxt(path, table, fmt=settings.CSV_FORMAT, delimiter=',',
               header='x,psi,psi_prime,phi,phi_prime,W', comments='')
    logger.info(f"Fundamental solutions written to {path}")
    return path

"""Monte Carlo oracle: the jump diffusion stopped at the first visit below a threshold.

Paths are independent; each one draws from its own splitmix64 stream whose
64-bit starting state is a bijective hash of the run seed and the path index,
so estimates do not depend on how prange distributes paths over threads and
no two paths of a run share a stream.
"""
import math
import time
import logging
from dataclasses import dataclass, asdict

import numba
import numpy as np
from numba import njit, prange

from jumpput import settings
from .exceptions import ConfigError, StepSizeError
from .models import JumpKind, VolKind

logger = logging.getLogger(__name__)

MIN_PATHS = 1000

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 2.0 ** -53

_VOL_CODES = {VolKind.CONSTANT: 0, VolKind.CEV: 1, VolKind.TABLE: 2}
_JUMP_CODES = {JumpKind.DISCRETE: 0, JumpKind.LOGNORMAL: 1}


def _splitmix(z):
    with np.errstate(over='ignore'):
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def path_seeds(seed, n_paths):
    """64-bit stream state for each path index; distinct for every index below 2**64"""
    base = _splitmix(np.array([seed], dtype=np.uint64))[0]
    with np.errstate(over='ignore'):
        states = base + np.arange(1, n_paths + 1, dtype=np.uint64) * _GOLDEN
    return _splitmix(states)


@njit(cache=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def _uniform(state):
    """Uniform on [0, 1) with 53 random bits"""
    return (_next_u64(state) >> _S11) * _INV53


@njit(cache=True)
def _normal(state):
    u = 1.0 - _uniform(state)
    return math.sqrt(-2.0 * math.log(u)) * math.cos(2.0 * math.pi * _uniform(state))


@njit(cache=True)
def _exponential(state, rate):
    return -math.log(1.0 - _uniform(state)) / rate


@njit(cache=True)
def _sigma(x, vol_kind, sigma0, gamma, table_logx, table_logsigma):
    if vol_kind == 0:
        return sigma0
    if vol_kind == 1:
        return sigma0 * x ** (-gamma)
    return math.exp(np.interp(math.log(x), table_logx, table_logsigma))


@njit(cache=True)
def _draw_jump(state, jump_kind, atoms, cum_weights, meanlog, sdlog):
    if jump_kind == 1:
        return math.exp(meanlog + sdlog * _normal(state))
    u = _uniform(state)
    i = 0
    while i < cum_weights.size - 1 and cum_weights[i] <= u:
        i += 1
    return atoms[i]


@njit(cache=True)
def _one_path(state, x0, l, K, mu, alpha, lam, dt, t_max, vol_kind, sigma0, gamma, table_logx, table_logsigma,
              jump_kind, atoms, cum_weights, meanlog, sdlog):
    x = x0
    t = 0.0
    n_jumps = 0
    if x <= l:
        return max(K - x, 0.0), n_jumps

    next_jump = _exponential(state, lam) if lam > 0.0 else np.inf
    while t < t_max:
        to_jump = next_jump - t
        jumping = to_jump <= dt and next_jump < t_max
        step = to_jump if jumping else min(dt, t_max - t)

        s = _sigma(x, vol_kind, sigma0, gamma, table_logx, table_logsigma)
        x *= math.exp((mu - 0.5 * s * s) * step + s * math.sqrt(step) * _normal(state))
        t += step
        if x <= l:
            return math.exp(-alpha * t) * max(K - x, 0.0), n_jumps

        if jumping:
            x *= _draw_jump(state, jump_kind, atoms, cum_weights, meanlog, sdlog)
            n_jumps += 1
            if x <= l:
                return math.exp(-alpha * t) * max(K - x, 0.0), n_jumps
            next_jump = t + _exponential(state, lam)

    return 0.0, n_jumps


@njit(parallel=True, cache=True)
def _simulate(seeds, x0, l, K, mu, alpha, lam, dt, t_max, vol_kind, sigma0, gamma, table_logx, table_logsigma,
              jump_kind, atoms, cum_weights, meanlog, sdlog):
    n = seeds.size
    payoffs = np.empty(n)
    jumps = np.empty(n, dtype=np.int64)
    for p in prange(n):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[p]
        value, count = _one_path(state, x0, l, K, mu, alpha, lam, dt, t_max, vol_kind, sigma0, gamma,
                                 table_logx, table_logsigma, jump_kind, atoms, cum_weights, meanlog, sdlog)
        payoffs[p] = value
        jumps[p] = count
    return payoffs, jumps


def _configure_threads():
    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(min(int(settings.THREADS), limit) if settings.THREADS else limit)


def _vol_params(vol):
    if vol.kind == VolKind.TABLE:
        return (_VOL_CODES[vol.kind], 0.0, 0.0,
                np.log(np.asarray(vol.table_x, dtype=float)), np.log(np.asarray(vol.table_sigma, dtype=float)))
    dummy = np.zeros(1)
    return _VOL_CODES[vol.kind], float(vol.sigma0), float(vol.gamma), dummy, dummy


def _jump_params(jumps):
    cum = np.cumsum(jumps.weights)
    cum[-1] = 1.0
    if jumps.kind == JumpKind.LOGNORMAL:
        return _JUMP_CODES[jumps.kind], np.asarray(jumps.atoms, dtype=float), cum, jumps.meanlog, jumps.sdlog
    return _JUMP_CODES[jumps.kind], np.asarray(jumps.atoms, dtype=float), cum, 0.0, 0.0


def default_horizon(model):
    return settings.MC_HORIZON_FACTOR / model.alpha


def simulate_paths(model, x0, l, n_paths, seed=settings.MC_SEED, dt=settings.MC_DT, t_max=None):
    """Discounted payoffs and jump counts of n_paths independent paths"""
    t_max = default_horizon(model) if t_max is None else float(t_max)
    if not x0 > 0.0 or not 0.0 < l < model.strike:
        raise ConfigError(f'Need x0 > 0 and 0 < l < K, got x0={x0}, l={l}')
    if not dt > 0.0 or not t_max > 0.0:
        raise ConfigError(f'Need dt > 0 and T_max > 0, got dt={dt}, T_max={t_max}')
    if model.lam > 0.0 and dt >= 1.0 / (10.0 * model.lam):
        raise StepSizeError(f'Step dt={dt} too coarse for jump intensity {model.lam}; need dt < {0.1 / model.lam:g}')

    _configure_threads()
    seeds = path_seeds(seed, n_paths)
    return _simulate(seeds, float(x0), float(l), float(model.strike), float(model.mu), float(model.alpha),
                     float(model.lam), float(dt), float(t_max), *_vol_params(model.vol), *_jump_params(model.jumps))


def simulate_payoff(model, x0, l, seed=settings.MC_SEED, dt=settings.MC_DT, t_max=None):
    """One discounted payoff e^{-alpha tau} (K - X_tau)^+; zero when the horizon is reached first"""
    payoffs, _ = simulate_paths(model, x0, l, 1, seed, dt, t_max)
    return float(payoffs[0])


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_paths: int
    ci95: tuple
    truncation_bound: float
    n_jumps: int

    def as_dict(self):
        data = asdict(self)
        data['ci95'] = list(self.ci95)
        return data


def estimate_value(model, x0, l, n_paths=settings.MC_PATHS, seed=settings.MC_SEED, dt=settings.MC_DT, t_max=None):
    if n_paths < MIN_PATHS:
        raise ConfigError(f'Need at least {MIN_PATHS} paths, got {n_paths}')
    t_max = default_horizon(model) if t_max is None else float(t_max)

    started = time.perf_counter()
    payoffs, jumps = simulate_paths(model, x0, l, n_paths, seed, dt, t_max)
    mean = float(np.mean(payoffs))
    std_error = float(np.std(payoffs, ddof=1) / math.sqrt(n_paths))
    n_jumps = int(jumps.sum())
    if model.lam == 0.0 and n_jumps:
        logger.error(f"{n_jumps} jumps simulated for a model without jumps")

    logger.info(f"MC at x0={x0:g}, l={l:.6g}: {n_paths} paths, mean {mean:.6g} +- {std_error:.2g} "
                f"({time.perf_counter() - started:.2f}s)")
    return MCEstimate(
        mean=mean,
        std_error=std_error,
        n_paths=int(n_paths),
        ci95=(mean - 1.96 * std_error, mean + 1.96 * std_error),
        truncation_bound=math.exp(-model.alpha * t_max) * model.strike,
        n_jumps=n_jumps,
    )


@dataclass(frozen=True)
class PointCheck:
    x: float
    solver_value: float
    mc_mean: float
    std_error: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    boundary: float
    points: list

    @property
    def all_passed(self):
        return all(point.passed for point in self.points)

    def as_dict(self):
        return {
            'boundary': self.boundary,
            'all_passed': self.all_passed,
            'points': [asdict(point) for point in self.points],
        }


def validate_solution(sol, model, points, n_paths=settings.MC_PATHS, seed=settings.MC_SEED, dt=settings.MC_DT,
                      t_max=None, allowance=None, tolerance=None):
    """Compare v with MC under the threshold policy at l; tolerance overrides the statistical threshold"""
    allowance = settings.MC_ALLOWANCE_FACTOR if allowance is None else allowance
    l = sol.boundary
    checks = []
    for x in points:
        estimate = estimate_value(model, x, l, n_paths, seed, dt, t_max)
        value = float(sol.value(x))
        if tolerance is None:
            threshold = (settings.MC_STD_ERRORS * estimate.std_error + estimate.truncation_bound
                         + allowance * model.strike)
        else:
            threshold = float(tolerance)
        passed = bool(abs(value - estimate.mean) <= threshold)
        checks.append(PointCheck(float(x), value, estimate.mean, estimate.std_error, threshold, passed))
        if not passed:
            logger.warning(f"MC mismatch at x={x:g}: solver {value:.6g}, MC {estimate.mean:.6g}, "
                           f"threshold {threshold:.3g}")
    return ValidationReport(l, checks)


def policy_scan(model, x0, thresholds, n_paths=settings.MC_PATHS, seed=settings.MC_SEED, dt=settings.MC_DT,
                t_max=None):
    """Estimates of the threshold policy over a sweep of exercise levels, with common random numbers"""
    return [estimate_value(model, x0, l, n_paths, seed, dt, t_max) for l in thresholds]


def within_best(estimates, index):
    """True when estimate `index` lies within one combined 95% interval of the best estimate"""
    best = max(estimates, key=lambda e: e.mean)
    chosen = estimates[index]
    combined = 1.96 * math.hypot(best.std_error, chosen.std_error)
    return best.mean - chosen.mean <= combined

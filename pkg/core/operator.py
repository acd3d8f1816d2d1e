"""Green-function operator R_l, the boundary objective G and the map R f = R_{l[f]} f.

All integrals are taken in u = log y. With k = 2 / (sigma^2 (d_psi - d_phi))
the Green weight becomes 2 dy / (y^2 sigma^2 W) = k du / (psi phi), so every
term is a log-space ratio of psi or phi and none of them depends on how the
fundamental solutions are normalised.

G is carried as G_hat(l) = psi(l) G(l), which has the sign of G and stays of
order one on the whole grid. The payoff generator F = (A - rho) h has an
affine density on (0, K) and a point mass 1/2 sigma^2(K) K^2 at the strike.
"""
import math
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from jumpput import settings
from .exceptions import BoundaryNotFoundError, ConfigError, ConstructionError, OutOfRangeError, PreconditionError
from .fundsol import pair_for
from .gridfn import GridFunction, TailMode, apply_S, jump_average, right_derivatives, shape_report
from .models import Tolerances
from .quadrature import cell_integrals, prefix_sums, suffix_sums

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class JumpSource:
    """Per-iterate data: S f, the source q = lambda S f and the scaled objective at the nodes"""
    f: GridFunction
    sf: GridFunction
    q: np.ndarray
    suffix: np.ndarray
    objective: np.ndarray


@dataclass(frozen=True, eq=False)
class OperatorContext:
    model: object
    pair: object
    grid: object
    tol: Tolerances
    x: np.ndarray = field(init=False, repr=False)
    u: np.ndarray = field(init=False, repr=False)
    widths: np.ndarray = field(init=False, repr=False)
    log_psi: np.ndarray = field(init=False, repr=False)
    log_phi: np.ndarray = field(init=False, repr=False)
    gap: np.ndarray = field(init=False, repr=False)
    k: np.ndarray = field(init=False, repr=False)
    log_ratio: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    payoff_part: np.ndarray = field(init=False, repr=False)
    atom: np.ndarray = field(init=False, repr=False)
    atom_at_strike: float = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        model, pair, grid = self.model, self.pair, self.grid
        if abs(pair.rho - model.rho) > 1e-12 * model.rho:
            raise ConfigError(f'Pair kill rate {pair.rho} does not match alpha + lambda = {model.rho}')
        if grid.strike != model.strike:
            raise ConfigError(f'Grid strike {grid.strike} does not match model strike {model.strike}')

        x = grid.nodes
        u = grid.log_nodes
        log_psi = pair.log_psi(x)
        log_phi = pair.log_phi(x)
        gap = pair.dpsi(x) - pair.dphi(x)
        k = 2.0 / (model.vol.sigma(x) ** 2 * gap)
        with np.errstate(over='ignore'):
            weights = k * np.exp(-log_psi - log_phi - u)
        if not (np.all(np.isfinite(weights)) and np.all(weights > 0.0)):
            raise ConstructionError('Green weights are not positive and finite on the grid')

        values = {
            'x': x, 'u': u, 'widths': np.diff(u), 'log_psi': log_psi, 'log_phi': log_phi,
            'gap': gap, 'k': k, 'log_ratio': log_phi - log_psi, 'weights': weights,
        }
        for name, value in values.items():
            value = np.asarray(value, dtype=float)
            value.flags.writeable = False
            object.__setattr__(self, name, value)

        m = grid.strike_index
        K = model.strike
        object.__setattr__(self, 'payoff_part', self._payoff_suffix())
        atom = np.zeros_like(x)
        atom[:m] = np.exp(log_psi[:m] - log_psi[m]) * K / gap[m]
        object.__setattr__(self, 'atom', atom)
        object.__setattr__(self, 'atom_at_strike', float(K / gap[m]))

    @classmethod
    def build(cls, model, grid, pair=None, tol=None):
        tol = Tolerances.for_strike(model.strike) if tol is None else tol
        pair = pair_for(model, grid, tol_ode=tol.ode) if pair is None else pair
        return cls(model, pair, grid, tol)

    def _payoff_suffix(self):
        # F = a + b y on (0, K); the y-part is carried with weight log psi - u
        model, m = self.model, self.grid.strike_index
        a = -model.rho * model.strike
        b = model.rho - model.mu
        below = np.arange(self.x.size - 1) < m
        k, L, u = self.k, self.log_psi, self.u

        cells_a = np.where(below, cell_integrals(a * k[:-1], a * k[1:], L[:-1], L[1:], self.widths), 0.0)
        cells_b = np.where(below, cell_integrals(b * k[:-1], b * k[1:], L[:-1] - u[:-1], L[1:] - u[1:],
                                                 self.widths), 0.0)
        return suffix_sums(cells_a, L) + self.x * suffix_sums(cells_b, L - u)

    def source(self, f):
        """S f and the scaled objective at the nodes, cached for the latest f"""
        cached = self._cache.get(id(f))
        if cached is not None and cached.f is f:
            return cached

        sf = apply_S(f, self.model.jumps)
        q = self.model.lam * sf.values
        kq = self.k * q
        L = self.log_psi
        suffix = suffix_sums(cell_integrals(kq[:-1], kq[1:], L[:-1], L[1:], self.widths), L)
        objective = suffix + self.payoff_part + self.atom
        src = JumpSource(f, sf, q, suffix, objective)
        self._cache.clear()
        self._cache[id(f)] = src
        return src

    def k_at(self, x):
        pair = self.pair
        return 2.0 / (self.model.vol.sigma(x) ** 2 * (pair.dpsi(x) - pair.dphi(x)))

    @property
    def boundary_floor(self):
        return settings.BOUNDARY_FLOOR_FACTOR * self.grid.x_min


def F_payoff(ctx, x):
    """(A - rho) h off the strike; left limit at x = K"""
    model = ctx.model
    xs = np.asarray(x, dtype=float)
    value = np.where(xs <= model.strike, -model.mu * xs - model.rho * (model.strike - xs), 0.0)
    return float(value) if np.ndim(x) == 0 else value


def _payoff(ctx, x):
    return max(ctx.model.strike - x, 0.0)


def _check_range(ctx, l):
    if not ctx.boundary_floor <= l <= ctx.grid.x_max:
        raise OutOfRangeError(
            f'Boundary candidate {l:.6g} outside [{ctx.boundary_floor:.6g}, {ctx.grid.x_max:.6g}]'
        )


def _scaled_suffix(ctx, src, l):
    """S_hat(l) = int_l^inf e^{L_psi(l) - L_psi} k q du and the pieces needed for F"""
    j0 = ctx.grid.first_above(l)
    u_l = math.log(l)
    L_l = ctx.pair.log_psi(l)
    k_l = ctx.k_at(l)
    q_l = ctx.model.lam * jump_average(src.f, ctx.model.jumps, l)
    width = ctx.u[j0] - u_l
    partial = cell_integrals(k_l * q_l, ctx.k[j0] * src.q[j0], L_l, ctx.log_psi[j0], width)
    carry = math.exp(L_l - ctx.log_psi[j0])
    return partial + carry * src.suffix[j0], j0, u_l, L_l, k_l, carry


def _scaled_objective(ctx, src, l):
    """G_hat(l) = psi(l) G(l)"""
    if l >= ctx.grid.x_max:
        return 0.0
    value, j0, u_l, L_l, k_l, carry = _scaled_suffix(ctx, src, l)
    value += carry * ctx.payoff_part[j0]
    model = ctx.model
    if l < model.strike:
        a = -model.rho * model.strike
        b = model.rho - model.mu
        width = ctx.u[j0] - u_l
        value += cell_integrals(a * k_l, a * ctx.k[j0], L_l, ctx.log_psi[j0], width)
        value += l * cell_integrals(b * k_l, b * ctx.k[j0], L_l - u_l, ctx.log_psi[j0] - ctx.u[j0], width)
        value += math.exp(L_l - ctx.log_psi[ctx.grid.strike_index]) * ctx.atom_at_strike
    return float(value)


def boundary_objective(ctx, f, l):
    """G(l) = int_l^inf 2 phi / (y^2 sigma^2 W) (lambda S f + F) dy"""
    _check_range(ctx, l)
    src = ctx.source(f)
    return _scaled_objective(ctx, src, l) * math.exp(-ctx.pair.log_psi(l))


def check_preconditions(ctx, f):
    tol = ctx.tol.shape
    report = shape_report(f, ctx.model.strike, tol)
    problems = []
    if not report.convex:
        problems.append('not convex')
    if not report.decreasing:
        problems.append('not decreasing')
    if not report.slope_ok(tol):
        problems.append(f'right derivative {report.min_right_slope:.6g} below -1')
    if f.values.min() < -tol or f.values.max() > ctx.model.strike + tol:
        problems.append(f'values outside [0, {ctx.model.strike}]')
    if problems:
        raise PreconditionError(f"Input function rejected: {', '.join(problems)}")
    return report


def _scan(ctx, src):
    """Objective at the floor, at the nodes between floor and K, and at K-"""
    grid = ctx.grid
    m = grid.strike_index
    j_lo = int(np.searchsorted(ctx.x, ctx.boundary_floor, side='right'))
    points = np.concatenate([[ctx.boundary_floor], ctx.x[j_lo:m], [ctx.model.strike]])
    values = np.concatenate([
        [_scaled_objective(ctx, src, ctx.boundary_floor)],
        src.objective[j_lo:m],
        [src.suffix[m] + ctx.payoff_part[m] + ctx.atom_at_strike],
    ])
    return points, values


def find_boundary(ctx, f):
    """Unique root l[f] in (10 x_min, K) of the boundary objective"""
    check_preconditions(ctx, f)
    src = ctx.source(f)
    points, values = _scan(ctx, src)
    positive = values >= 0.0
    changes = np.flatnonzero(positive[:-1] != positive[1:])
    brackets = [(float(points[i]), float(points[i + 1])) for i in changes]
    logger.debug(f"Boundary scan over {points.size} points found brackets {brackets}")

    if len(brackets) != 1:
        integral = existence_integral(ctx)
        reason = 'no sign change' if not brackets else f'{len(brackets)} sign changes'
        raise BoundaryNotFoundError(
            f'Boundary objective has {reason} in ({points[0]:.6g}, {points[-1]:.6g}); '
            f'existence integral = {integral:.6g} (a boundary exists when it is negative)',
            brackets=brackets, existence_integral=integral,
        )

    i = int(changes[0])
    a, b = points[i], points[i + 1]
    a_positive = bool(positive[i])
    while b - a > ctx.tol.root:
        mid = 0.5 * (a + b)
        if (_scaled_objective(ctx, src, mid) >= 0.0) == a_positive:
            a = mid
        else:
            b = mid
    return float(0.5 * (a + b))


def _green_solve(ctx, src, l, barrier_index=None):
    """Node values of the Green representation on (l, barrier], h elsewhere"""
    grid, pair = ctx.grid, ctx.pair
    n = grid.n
    j0 = grid.first_above(l)
    jb = n - 1 if barrier_index is None else barrier_index
    idx = slice(j0, jb + 1)

    L_psi_l = pair.log_psi(l)
    L_phi_l = pair.log_phi(l)
    log_ratio_l = L_phi_l - L_psi_l
    h_l = _payoff(ctx, l)

    # 1 - R(x)/R(l) and 1 - R(barrier)/R(x), R = phi/psi
    off_l = -np.expm1(ctx.log_ratio[idx] - log_ratio_l)
    if barrier_index is None:
        off_b = np.ones_like(off_l)
        denom = 1.0
    else:
        off_b = -np.expm1(ctx.log_ratio[jb] - ctx.log_ratio[idx])
        denom = -math.expm1(ctx.log_ratio[jb] - log_ratio_l)

    kq = ctx.k[idx] * src.q[idx]
    L_psi = ctx.log_psi[idx]
    c_up = kq * off_b
    cells = cell_integrals(c_up[:-1], c_up[1:], L_psi[:-1], L_psi[1:], ctx.widths[j0:jb])
    upper = suffix_sums(cells, L_psi)

    c_low = np.concatenate([[0.0], kq * off_l])
    log_weight = np.concatenate([[L_phi_l], ctx.log_phi[idx]])
    widths = np.concatenate([[ctx.u[j0] - math.log(l)], ctx.widths[j0:jb]])
    cells = cell_integrals(c_low[:-1], c_low[1:], log_weight[:-1], log_weight[1:], widths, anchor='right')
    lower = prefix_sums(cells, log_weight)[1:]

    inside = (off_l * upper + off_b * lower + h_l * np.exp(ctx.log_phi[idx] - L_phi_l) * off_b) / denom
    if barrier_index is not None:
        h_b = _payoff(ctx, ctx.x[jb])
        inside += h_b * np.exp(L_psi - ctx.log_psi[jb]) * off_l / denom

    values = np.maximum(ctx.model.strike - ctx.x, 0.0)
    values[idx] = inside
    return GridFunction(grid, values, TailMode.BOTH, pair, ctx.model.strike)


def _check_boundary(ctx, l):
    if not ctx.grid.x_min < l < ctx.model.strike:
        raise OutOfRangeError(f'Boundary {l:.6g} must lie in ({ctx.grid.x_min:.6g}, {ctx.model.strike})')


def apply_R_l(ctx, f, l):
    """R_l f: h on (0, l], the Green representation with source lambda S f above l"""
    _check_boundary(ctx, l)
    return _green_solve(ctx, ctx.source(f), l)


def apply_R(ctx, f):
    l = find_boundary(ctx, f)
    return apply_R_l(ctx, f, l), l


def two_barrier_R(ctx, f, l, barrier):
    """Same operator killed at the upper barrier too, with value h(barrier) there"""
    _check_boundary(ctx, l)
    if barrier > ctx.grid.x_max * (1.0 + 1e-12):
        raise OutOfRangeError(f'Barrier {barrier:.6g} above x_max = {ctx.grid.x_max:.6g}')
    if not barrier > l:
        raise PreconditionError(f'Barrier {barrier:.6g} must lie above the boundary {l:.6g}')
    jb = int(np.argmin(np.abs(ctx.u - math.log(barrier))))
    if jb < ctx.grid.first_above(l):
        raise PreconditionError(f'Barrier {barrier:.6g} shares a grid cell with the boundary {l:.6g}')
    return _green_solve(ctx, ctx.source(f), l, barrier_index=jb)


def truncation_gap(ctx, f, l, g=None):
    """Distance between the one-barrier operator and the one killed at x_max, on x <= 10 K"""
    g = apply_R_l(ctx, f, l) if g is None else g
    killed = two_barrier_R(ctx, f, l, ctx.grid.x_max)
    inner = ctx.x <= settings.TRUNCATION_CHECK_FACTOR * ctx.model.strike
    return float(np.max(np.abs(g.values[inner] - killed.values[inner])))


def right_derivative_at_boundary(ctx, f, l):
    """(R_l f)'(l+) from the closed-form derivative of the Green representation"""
    _check_boundary(ctx, l)
    src = ctx.source(f)
    scaled, *_ = _scaled_suffix(ctx, src, l)
    pair = ctx.pair
    return float(((pair.dpsi(l) - pair.dphi(l)) * scaled + pair.dphi(l) * _payoff(ctx, l)) / l)


def existence_integral(ctx, eps=None):
    """Boundary objective for f = K at eps; a boundary exists for every 0 <= f <= K when negative"""
    eps = ctx.boundary_floor if eps is None else eps
    ceiling = GridFunction(ctx.grid, np.full(ctx.grid.n, ctx.model.strike), TailMode.NONE, None, ctx.model.strike)
    return boundary_objective(ctx, ceiling, eps)


@dataclass(frozen=True)
class UniquenessReport:
    branch: str
    holds: bool
    margin: float

    def as_dict(self):
        return asdict(self)


def uniqueness_branch(ctx, f):
    """Which monotonicity argument makes the root unique, and by how much it holds on (0, K)"""
    model = ctx.model
    src = ctx.source(f)
    below = ctx.x < model.strike
    if model.xi > 1.0:
        slope = model.lam * right_derivatives(src.sf) + model.alpha + model.lam - model.mu
        margin = float(np.min(slope[below[:-1]]))
        return UniquenessReport('xi>1', margin >= -ctx.tol.shape, margin)
    integrand = src.q + F_payoff(ctx, ctx.x)
    margin = float(-np.max(integrand[below]))
    return UniquenessReport('xi<=1', margin >= -ctx.tol.shape, margin)


def value_at_zero(f, lam, alpha, K):
    """Value of the absorbed state: max{lambda/(lambda+alpha) f(0+), h(0)}"""
    return max(lam / (lam + alpha) * float(f.values[0]), float(K))


def objective_sweep(ctx, f, ls):
    return np.array([boundary_objective(ctx, f, float(l)) for l in ls])

import math
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from jumpput import settings
from .exceptions import (BoundaryNotFoundError, ConfigError, IterationError, PreconditionError,
                         ShapeViolationError)
from .fundsol import NumericPair, boundary_behavior_check
from .gridfn import Grid, apply_S, payoff, shape_report, sup_norm
from .models import crude_upper_bound
from .operator import (F_payoff, OperatorContext, apply_R, existence_integral, right_derivative_at_boundary,
                       truncation_gap, uniqueness_branch, value_at_zero)

logger = logging.getLogger(__name__)


def a_priori_iterations(lam, alpha, eps, K):
    """Smallest n >= 1 with (lambda / (lambda + alpha))^n K <= eps"""
    if not alpha > 0.0 or lam < 0.0 or not eps > 0.0:
        raise ConfigError(f'Need alpha > 0, lambda >= 0 and eps > 0, got ({alpha}, {lam}, {eps})')
    if lam == 0.0 or K <= eps:
        return 1
    rate = lam / (lam + alpha)
    n = max(1, math.ceil(math.log(eps / K) / math.log(rate)))
    # the logarithms can be off by one ulp either way
    while rate ** n * K > eps:
        n += 1
    while n > 1 and rate ** (n - 1) * K <= eps:
        n -= 1
    return n


def rate_bound(lam, alpha, n, K):
    return (lam / (lam + alpha)) ** n * K


@dataclass
class Diagnostics:
    smooth_fit_gap: float
    max_pde_residual_continuation: float
    max_vi_violation_stopping: float
    min_excess: float
    shape_report: dict
    monotonicity_violation: float = 0.0
    value_at_zero: float = None
    existence_integral: float = None
    uniqueness: dict = None
    truncation_gap: float = None
    boundary_behavior: dict = None
    pair_accuracy: dict = None

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class Solution:
    """Converged value function with its boundary sequence and per-iteration deltas"""
    v: object
    boundaries: list
    n_iter: int
    deltas: list
    diagnostics: Diagnostics
    model: object
    epsilon: float
    iterates: list = None
    context: object = field(default=None, repr=False)

    @property
    def grid(self):
        return self.v.grid

    @property
    def boundary(self):
        return self.boundaries[-1]

    @property
    def rate_bounds(self):
        model = self.model
        return [rate_bound(model.lam, model.alpha, n, model.strike) for n in range(1, self.n_iter + 1)]

    def value(self, x):
        """V(x); the payoff itself on the stopping region x <= l"""
        out = self.v.eval(x)
        stopped = np.asarray(x, dtype=float) <= self.boundary
        if np.ndim(x) == 0:
            return self.model.strike - float(x) if stopped else out
        return np.where(stopped, self.model.strike - np.asarray(x, dtype=float), out)

    def trace_rows(self):
        """(n, l_n, sup delta, rate bound) for n = 1 .. n_iter"""
        return [(n, self.boundaries[n], self.deltas[n - 1], bound)
                for n, bound in zip(range(1, self.n_iter + 1), self.rate_bounds)]


def continuation_residual(ctx, g, sg, l, upper=None):
    """Log-coordinate residual of (A - rho) g + lambda S g at nodes whose stencil lies in (l, upper)"""
    model = ctx.model
    upper = settings.PDE_CHECK_FACTOR * model.strike if upper is None else upper
    x, values = ctx.x, g.values
    du = ctx.grid.du
    j = np.arange(1, x.size - 1)
    j = j[(x[j - 1] > l) & (x[j + 1] < upper)]
    if j.size == 0:
        return 0.0, float('nan')

    g_u = (values[j + 1] - values[j - 1]) / (2.0 * du)
    g_uu = (values[j + 1] - 2.0 * values[j] + values[j - 1]) / du ** 2
    half_s2 = 0.5 * model.vol.sigma(x[j]) ** 2
    residual = half_s2 * (g_uu - g_u) + model.mu * g_u - model.rho * values[j] + model.lam * sg.values[j]
    scaled = np.abs(residual) / (model.rho * model.strike)
    at = int(np.argmax(scaled))
    return float(scaled[at]), float(x[j[at]])


def stopping_violation(ctx, sg, l):
    """Largest F + lambda S g over nodes in (10 x_min, l); the variational inequality wants <= 0"""
    x = ctx.x
    inside = (x > ctx.boundary_floor) & (x < l)
    if not inside.any():
        return 0.0, float('nan')
    values = F_payoff(ctx, x[inside]) + ctx.model.lam * sg.values[inside]
    at = int(np.argmax(values))
    return float(values[at]), float(x[inside][at])


def _min_excess(v, l):
    grid = v.grid
    beyond = np.arange(grid.n) > grid.first_above(l)
    h = np.maximum(v.strike - grid.nodes, 0.0)
    return float(np.min(v.values[beyond] - h[beyond]))


def _check_iterate(ctx, v, n):
    tol = ctx.tol.shape
    report = shape_report(v, ctx.model.strike, tol)
    ceiling = crude_upper_bound(ctx.model)
    if not report.all_ok(tol) or v.values.max() > ceiling + tol:
        raise ShapeViolationError(
            f'Iterate {n} violates the shape constraints {report.as_dict()}; the grid is too coarse', iteration=n,
        )
    return report


def _sweep(ctx, v, n):
    try:
        return apply_R(ctx, v)
    except (BoundaryNotFoundError, PreconditionError) as exc:
        raise IterationError(f'Boundary search failed at iterate {n}: {exc}', iteration=n) from exc


def diagnose(ctx, v, previous, l, monotonicity_violation=0.0):
    """Checks on the final iterate v = R_l previous"""
    model = ctx.model
    sv = apply_S(v, model.jumps)
    pde, _ = continuation_residual(ctx, v, sv, l)
    vi, _ = stopping_violation(ctx, sv, l)
    numeric = isinstance(ctx.pair, NumericPair)
    behavior = boundary_behavior_check(ctx.pair, ctx.grid) if numeric else None

    gap = truncation_gap(ctx, previous, l, g=v)
    if gap > ctx.tol.trunc:
        logger.warning(f"Truncation gap {gap:.3g} exceeds {ctx.tol.trunc:.3g}; widen the grid")

    return Diagnostics(
        smooth_fit_gap=abs(right_derivative_at_boundary(ctx, previous, l) + 1.0),
        max_pde_residual_continuation=pde,
        max_vi_violation_stopping=max(vi, 0.0),
        min_excess=_min_excess(v, l),
        shape_report=shape_report(v, model.strike, ctx.tol.shape).as_dict(),
        monotonicity_violation=monotonicity_violation,
        value_at_zero=value_at_zero(v, model.lam, model.alpha, model.strike),
        existence_integral=existence_integral(ctx),
        uniqueness=uniqueness_branch(ctx, v).as_dict(),
        truncation_gap=gap,
        boundary_behavior=behavior.as_dict() if behavior else None,
        pair_accuracy=ctx.pair.accuracy.as_dict() if numeric else None,
    )


def solve(model, grid=None, eps=None, tol=None, pair=None, keep_iterates=False):
    """Iterate v_{n+1} = R v_n from v_0 = h.

    The first sweep produces v_1 = R h. Row n = 1, 2, ... then records
    l[v_n] and |v_{n+1} - v_n|, stopping at the a-priori count or once the
    sup-norm delta has been below eps twice in a row.
    """
    grid = Grid.log_spaced(model.strike) if grid is None else grid
    eps = settings.EPSILON if eps is None else float(eps)
    ctx = OperatorContext.build(model, grid, pair=pair, tol=tol)
    cap = a_priori_iterations(model.lam, model.alpha, eps, model.strike)
    logger.info(f"Solving for {model} on {grid}; at most {cap} iterations to eps={eps:g}")

    h = payoff(grid, model.strike, ctx.pair)
    v, l = _sweep(ctx, h, 0)
    _check_iterate(ctx, v, 1)
    boundaries = [l]
    deltas = []
    iterates = [h, v] if keep_iterates else None
    monotonicity = max(0.0, float(np.max(h.values - v.values)))

    small_in_a_row = 0
    previous = h
    n = 0
    while n < cap and small_in_a_row < 2:
        n += 1
        v_next, l = _sweep(ctx, v, n)
        _check_iterate(ctx, v_next, n + 1)
        delta = sup_norm(v_next, v)
        bound = rate_bound(model.lam, model.alpha, n, model.strike)
        monotonicity = max(monotonicity, float(np.max(v.values - v_next.values)))
        if l > boundaries[-1] + ctx.tol.root:
            logger.warning(f"Boundary increased at iterate {n}: {boundaries[-1]:.10f} -> {l:.10f}")
        logger.info(f"Iteration {n}: l = {l:.8f}, sup delta = {delta:.3e}, bound = {bound:.3e}")

        boundaries.append(l)
        deltas.append(delta)
        previous, v = v, v_next
        if keep_iterates:
            iterates.append(v)
        small_in_a_row = small_in_a_row + 1 if delta <= eps else 0

    if deltas[-1] > eps:
        logger.warning(f"Stopped at the a-priori cap {cap} with delta {deltas[-1]:.3e} > eps")

    diagnostics = diagnose(ctx, v, previous, boundaries[-1], monotonicity)
    logger.info(f"Boundary {boundaries[-1]:.8f} after {n} iterations; smooth-fit gap "
                f"{diagnostics.smooth_fit_gap:.3e}, PDE residual {diagnostics.max_pde_residual_continuation:.3e}")
    return Solution(v, boundaries, n, deltas, diagnostics, model, eps, iterates, ctx)


@dataclass(frozen=True)
class QVIReport:
    max_continuation_residual: float
    continuation_residual_at: float
    max_vi_violation: float
    vi_violation_at: float
    stopping_mismatch: float
    min_excess: float
    min_excess_at: float
    smooth_fit_gap: float

    def passes(self, tol):
        return (self.max_continuation_residual <= tol.pde
                and self.max_vi_violation <= tol.pde
                and self.stopping_mismatch <= tol.shape
                and self.min_excess > 0.0
                and self.smooth_fit_gap <= tol.fit)

    def as_dict(self):
        return asdict(self)


def _one_sided_slope(v, l):
    """D+ v(l) from the quadratic through (l, h(l)) and the next two nodes"""
    grid = v.grid
    j0 = grid.first_above(l)
    x0, x1, x2 = l, grid.nodes[j0], grid.nodes[j0 + 1]
    y0, y1, y2 = max(v.strike - l, 0.0), v.values[j0], v.values[j0 + 1]
    s01 = (y1 - y0) / (x1 - x0)
    s12 = (y2 - y1) / (x2 - x1)
    # derivative at x0 of the Newton form
    return s01 - (s12 - s01) / (x2 - x0) * (x1 - x0)


def qvi_report(sol, ctx=None):
    """Recompute the QVI residuals with a stencil in x, independent of the solver's log stencil"""
    ctx = sol.context if ctx is None else ctx
    model = ctx.model
    v, l = sol.v, sol.boundary
    x, values = v.grid.nodes, v.values
    h = np.maximum(model.strike - x, 0.0)
    sv = apply_S(v, model.jumps)

    j = np.arange(1, x.size - 1)
    j = j[(x[j - 1] > l) & (x[j + 1] < settings.PDE_CHECK_FACTOR * model.strike)]
    left, right = x[j] - x[j - 1], x[j + 1] - x[j]
    d1 = (values[j + 1] * left ** 2 - values[j - 1] * right ** 2
          - values[j] * (left ** 2 - right ** 2)) / (left * right * (left + right))
    d2 = 2.0 * (values[j + 1] * left + values[j - 1] * right
                - values[j] * (left + right)) / (left * right * (left + right))
    residual = (0.5 * model.vol.sigma(x[j]) ** 2 * x[j] ** 2 * d2 + model.mu * x[j] * d1
                - model.rho * values[j] + model.lam * sv.values[j])
    scaled = np.abs(residual) / (model.rho * model.strike)
    at = int(np.argmax(scaled))

    stopped = (x > ctx.boundary_floor) & (x < l)
    vi = F_payoff(ctx, x[stopped]) + model.lam * sv.values[stopped]
    vi_at = int(np.argmax(vi))
    mismatch = float(np.max(np.abs(values[x <= l] - h[x <= l]))) if np.any(x <= l) else 0.0

    beyond = np.arange(x.size) > v.grid.first_above(l)
    excess = values[beyond] - h[beyond]
    excess_at = int(np.argmin(excess))

    report = QVIReport(
        max_continuation_residual=float(scaled[at]),
        continuation_residual_at=float(x[j[at]]),
        max_vi_violation=max(float(vi[vi_at]), 0.0),
        vi_violation_at=float(x[stopped][vi_at]),
        stopping_mismatch=mismatch,
        min_excess=float(excess[excess_at]),
        min_excess_at=float(x[beyond][excess_at]),
        smooth_fit_gap=abs(_one_sided_slope(v, l) + 1.0),
    )
    logger.info(f"QVI report: {report.as_dict()}")
    return report


def fixed_point_residual(sol, ctx=None):
    """|R v - v| in sup norm; at most 2 eps for a converged solution"""
    ctx = sol.context if ctx is None else ctx
    g, _ = apply_R(ctx, sol.v)
    return sup_norm(g, sol.v)

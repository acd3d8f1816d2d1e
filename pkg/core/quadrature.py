"""Weighted cell integrals on the uniform log-price grid.

Every integral in the Green-function formulas has the shape

    int e^{L(a) - L(u)} c(u) du,    u = log(y),

where L is a log fundamental solution taken linear across a cell and c is a
source taken linear across a cell. The exponential weight is integrated
exactly; for a flat L this is the trapezoid rule. Sums over cells are carried
in log space so that ratios like phi(x)/phi(y) never overflow.
"""
import numpy as np

_SERIES_RADIUS = 0.5
_SERIES_TERMS = 16


def fitted_weights(z):
    """E0(z) = int_0^1 e^{zt} dt and E1(z) = int_0^1 t e^{zt} dt"""
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    e0 = np.empty_like(z)
    e1 = np.empty_like(z)

    small = np.abs(z) < _SERIES_RADIUS
    zs = z[small]
    term = np.ones_like(zs)
    s0 = np.zeros_like(zs)
    s1 = np.zeros_like(zs)
    for n in range(_SERIES_TERMS):
        # term = z^n / n!
        s0 += term / (n + 1)
        s1 += term / (n + 2)
        term = term * zs / (n + 1)
    e0[small] = s0
    e1[small] = s1

    zl = z[~small]
    em1 = np.expm1(zl)
    e0[~small] = em1 / zl
    e1[~small] = (zl * np.exp(zl) - em1) / zl ** 2

    if scalar:
        return float(e0[0]), float(e1[0])
    return e0, e1


def cell_integrals(c_left, c_right, log_left, log_right, width, anchor='left'):
    """Integral of e^{L(anchor) - L(u)} c(u) over cells of the given width"""
    if anchor == 'left':
        e0, e1 = fitted_weights(np.asarray(log_left) - np.asarray(log_right))
        return width * (c_left * (e0 - e1) + c_right * e1)
    if anchor == 'right':
        e0, e1 = fitted_weights(np.asarray(log_right) - np.asarray(log_left))
        return width * (c_right * (e0 - e1) + c_left * e1)
    raise ValueError(f'Unknown anchor {anchor!r}')


def _signed_parts(values):
    yield 1.0, np.maximum(values, 0.0)
    yield -1.0, np.maximum(-values, 0.0)


def suffix_sums(cells, log_weight):
    """S_j = sum_{i >= j} e^{L_j - L_i} J_i over cells i (left-anchored); S_{n-1} = 0"""
    out = np.zeros(log_weight.size)
    for sign, part in _signed_parts(np.asarray(cells, dtype=float)):
        with np.errstate(divide='ignore'):
            terms = np.log(part) - log_weight[:-1]
        acc = np.logaddexp.accumulate(terms[::-1])[::-1]
        out[:-1] += sign * np.exp(log_weight[:-1] + acc)
    return out


def prefix_sums(cells, log_weight):
    """P_j = sum_{i < j} e^{L_j - L_{i+1}} I_i over cells i (right-anchored); P_0 = 0"""
    out = np.zeros(log_weight.size)
    for sign, part in _signed_parts(np.asarray(cells, dtype=float)):
        with np.errstate(divide='ignore'):
            terms = np.log(part) - log_weight[1:]
        acc = np.logaddexp.accumulate(terms)
        out[1:] += sign * np.exp(log_weight[1:] + acc)
    return out

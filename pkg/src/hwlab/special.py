"""Regularized incomplete gamma functions and the chi-square deviation law."""
from __future__ import annotations

import math

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _prefactor(a: float, x: float) -> float:
    return math.exp(-x + a * math.log(x) - math.lgamma(a))


def _series_p(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * _prefactor(a, x)
    raise ArithmeticError(f"incomplete gamma series failed for a={a}, x={x}")


def _continued_fraction_q(a: float, x: float) -> float:
    # modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * _prefactor(a, x)
    raise ArithmeticError(f"incomplete gamma continued fraction failed for a={a}, x={x}")


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _series_p(a, x)
    return 1.0 - _continued_fraction_q(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _series_p(a, x)
    return _continued_fraction_q(a, x)


def chi_square_deviation(k: int, t: float) -> float:
    """``P(|Q - k| >= t)`` for ``Q`` chi-square with ``k`` degrees of freedom."""
    if k < 1:
        raise ValueError("degrees of freedom must be positive")
    if t <= 0:
        return 1.0
    a = 0.5 * k
    upper = gammainc_upper(a, 0.5 * (k + t))
    lower = gammainc_lower(a, 0.5 * (k - t)) if t < k else 0.0
    return min(1.0, upper + lower)


def chi_square_oracle(k: int, t):
    """Vectorised :func:`chi_square_deviation`."""
    arr = np.asarray(t, dtype=float)
    out = np.array([chi_square_deviation(k, float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out

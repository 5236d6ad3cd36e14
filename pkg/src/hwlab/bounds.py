"""Closed-form tail bounds for quadratic forms and the quantile/median tools.

Every evaluator takes the unnamed absolute constant ``C`` as an argument and
accepts a scalar or array ``t``.  Two-regime exponents follow one
convention: a zero scale makes its branch infinite, so the minimum selects
the other one; when both scales vanish the bound is vacuous (2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidParams


def _nonneg(**params) -> None:
    for name, value in params.items():
        if not (math.isfinite(value) and value >= 0):
            raise InvalidParams(f"{name} must be finite and nonnegative, got {value}")


def _pos(**params) -> None:
    for name, value in params.items():
        if not (math.isfinite(value) and value > 0):
            raise InvalidParams(f"{name} must be finite and positive, got {value}")


def _t(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidParams("t must be finite and nonnegative")
    return arr


def _out(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def _two_regime_exponent(t: np.ndarray, quad_scale: float, lin_scale: float) -> np.ndarray:
    """``min(t**2 / quad_scale, t / lin_scale)``; zero scales read as +inf branches."""
    if quad_scale == 0 and lin_scale == 0:
        return np.zeros_like(t)
    quad = t * t / quad_scale if quad_scale > 0 else np.inf
    lin = t / lin_scale if lin_scale > 0 else np.inf
    return np.minimum(quad, lin)


def _check_hs_op(hs: float, op: float) -> None:
    _nonneg(hs=hs, op=op)
    if op > hs * (1.0 + 1e-9):
        raise InvalidParams(f"operator norm {op} exceeds Hilbert-Schmidt norm {hs}")


def classic_hw(t, hs: float, op: float, K: float, C: float):
    """``2 exp(-min(t^2 / (C K^4 hs^2), t / (C K^2 op)))``."""
    _check_hs_op(hs, op)
    _pos(K=K, C=C)
    t = _t(t)
    return _out(2.0 * np.exp(-_two_regime_exponent(t, C * K**4 * hs**2, C * K**2 * op)))


def vu_wang(t, hs: float, op: float, K: float, n: float, C: float):
    """Dimension-dependent bound
    ``C log n exp(-(1/C) K^-2 min(t^2 / (hs^2 log n), t / op))``.

    Not clamped.  The exponent constant enters as ``1/C`` so that the bound
    is nondecreasing in ``C`` like every other evaluator here.
    """
    _check_hs_op(hs, op)
    _pos(K=K, C=C)
    if not n >= 2:
        raise InvalidParams(f"dimension must be at least 2, got {n}")
    t = _t(t)
    log_n = math.log(n)
    expo = _two_regime_exponent(t, C * K**2 * hs**2 * log_n, C * K**2 * op)
    return _out(C * log_n * np.exp(-expo))


def convex_hw(t, hs: float, op: float, K: float, covnorm: float, C: float):
    """``2 exp(-(1/C) min(t^2 / (K^2 hs^2 covnorm), t / (K^2 op)))``."""
    _check_hs_op(hs, op)
    _nonneg(covnorm=covnorm)
    _pos(K=K, C=C)
    t = _t(t)
    return _out(2.0 * np.exp(-_two_regime_exponent(t, C * K**2 * hs**2 * covnorm, C * K**2 * op)))


def convex_hw_worst_case(t, hs: float, op: float, K: float, C: float):
    """The covariance-free form ``2 exp(-(1/C) min(t^2 / (2 K^4 hs^2), t / (K^2 op)))``."""
    _check_hs_op(hs, op)
    _pos(K=K, C=C)
    t = _t(t)
    return _out(2.0 * np.exp(-_two_regime_exponent(t, C * 2.0 * K**4 * hs**2, C * K**2 * op)))


def uniform_hw(t, family_norm: float, sup_op: float, K: float, C: float):
    """``2 exp(-(1/C) min(t^2 / (K^2 ||X||_A^2), t / (K^2 sup ||A||)))``."""
    _nonneg(family_norm=family_norm, sup_op=sup_op)
    _pos(K=K, C=C)
    t = _t(t)
    return _out(2.0 * np.exp(-_two_regime_exponent(t, C * K**2 * family_norm**2, C * K**2 * sup_op)))


def mixed_tail(t, a: float, b: float, C: float):
    """``2 exp(-(1/C) min(t^2 / a^2, t / b))``; regimes cross at ``t = a^2 / b``."""
    _pos(a=a, b=b, C=C)
    t = _t(t)
    return _out(2.0 * np.exp(-_two_regime_exponent(t, C * a * a, C * b)))


def kl_deviation(t, sigma_norm: float, r: float, n: float, C: float):
    """Deviation threshold ``C ||S|| (1 + sqrt(r/n)) sqrt(t/n) + ||S|| t / n``
    for the empirical covariance operator, valid with probability at least
    ``1 - exp(-t)`` when ``t >= 1``.  A magnitude, not a probability."""
    _nonneg(sigma_norm=sigma_norm, r=r)
    _pos(C=C)
    if not n >= 1:
        raise InvalidParams(f"sample count must be at least 1, got {n}")
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 1):
        raise InvalidParams("t must be at least 1")
    return _out(C * sigma_norm * (1.0 + math.sqrt(r / n)) * np.sqrt(t / n) + sigma_norm * t / n)


def quantile_lower_bound(mean: float, K: float, p: float) -> float:
    """Lower bound ``E Z - K sqrt(log(2/p))`` on the smallest p-th quantile
    of a variable with sub-Gaussian deviations from its mean."""
    _pos(K=K)
    if not 0.0 < p < 1.0:
        raise InvalidParams(f"p must lie in (0, 1), got {p}")
    return mean - K * math.sqrt(math.log(2.0 / p))


def median_mean_gap(a: float, b: float) -> float:
    """``sqrt(pi) a + 2 b``, a bound on ``|E Z - Med Z|`` under a mixed tail."""
    _nonneg(a=a, b=b)
    return math.sqrt(math.pi) * a + 2.0 * b


def as_probability(bound):
    """Clamp a raw two-sided bound (which may reach 2) into [0, 1]."""
    return _out(np.clip(np.asarray(bound, dtype=float), 0.0, 1.0))


class BoundKind(str, Enum):
    CLASSIC_HW = "classic-hw"
    VU_WANG = "vu-wang"
    CONVEX_HW = "convex-hw"
    UNIFORM_HW = "uniform-hw"
    MIXED_TAIL = "mixed-tail"
    KL_DEVIATION = "kl-deviation"


_EVALUATORS = {
    BoundKind.CLASSIC_HW: (classic_hw, ("hs", "op", "K")),
    BoundKind.VU_WANG: (vu_wang, ("hs", "op", "K", "n")),
    BoundKind.CONVEX_HW: (convex_hw, ("hs", "op", "K", "covnorm")),
    BoundKind.UNIFORM_HW: (uniform_hw, ("family_norm", "sup_op", "K")),
    BoundKind.MIXED_TAIL: (mixed_tail, ("a", "b")),
    BoundKind.KL_DEVIATION: (kl_deviation, ("sigma_norm", "r", "n")),
}


def parameter_names(kind) -> tuple[str, ...]:
    return _EVALUATORS[BoundKind(kind)][1]


@dataclass(frozen=True)
class BoundSpec:
    """A bound with every parameter fixed except possibly ``C``."""

    kind: BoundKind
    params: dict = field(default_factory=dict)
    constant_C: float = 1.0

    def __post_init__(self):
        kind = BoundKind(self.kind)
        object.__setattr__(self, "kind", kind)
        names = parameter_names(kind)
        missing = [p for p in names if p not in self.params]
        extra = [p for p in self.params if p not in names]
        if missing or extra:
            raise InvalidParams(f"{kind.value}: missing {missing}, unexpected {extra}")
        object.__setattr__(self, "params", {k: float(self.params[k]) for k in names})
        _pos(C=self.constant_C)

    def __call__(self, t, C: float | None = None):
        fn, names = _EVALUATORS[self.kind]
        return fn(t, *(self.params[k] for k in names), C=self.constant_C if C is None else C)

    def with_constant(self, C: float) -> "BoundSpec":
        return BoundSpec(self.kind, dict(self.params), C)

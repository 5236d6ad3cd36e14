"""Empirical tails with DKW bands, constant fitting, and the experiment runner.

The constant fits are quantised to the quarter-octave grid
``2**(k/4)``, ``k = -8..40``; the reported ``C`` is the smallest grid value
whose bound dominates the upper confidence band at every grid point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import bounds as bnd
from . import linalg
from .bounds import BoundKind, BoundSpec
from .distributions import Sampler, dkw_halfwidth, moments
from .errors import InsufficientSamples, InvalidConfig, InvalidParams
from .quadform import (MatrixFamily, centered_qform_samples, family_norm,
                       sup_qform_samples)
from .rng import STREAM_AUXILIARY
from .special import chi_square_oracle  # noqa: F401

C_GRID = tuple(2.0 ** (k / 4.0) for k in range(-8, 41))
MIN_SAMPLES = 100


class CenterMode(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"


@dataclass(frozen=True, eq=False)
class TailCurve:
    """Empirical ``P(|Z - center| >= t)`` with a DKW band of halfwidth ``eps``."""

    t_grid: np.ndarray
    survival: np.ndarray
    band_halfwidth: float
    n_samples: int
    confidence: float
    center_mode: CenterMode
    center: float
    side: str = "two-sided"

    @property
    def band_lo(self) -> np.ndarray:
        return np.clip(self.survival - self.band_halfwidth, 0.0, 1.0)

    @property
    def band_hi(self) -> np.ndarray:
        return np.clip(self.survival + self.band_halfwidth, 0.0, 1.0)


def _grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0 or np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise InvalidConfig("t_grid must be a non-empty strictly increasing sequence of nonnegative reals")
    return t


def empirical_tail(samples, t_grid, confidence: float = 0.99, center_mode="mean", *,
                   center: float | None = None, side: str = "two-sided") -> TailCurve:
    """Two-sided empirical tail of ``samples`` around their mean or median.

    ``center`` overrides the sample statistic with a known value (e.g. an
    analytic expectation).  ``side="upper"`` or ``"lower"`` gives one-sided
    curves, for diagnostics only.
    """
    z = np.asarray(samples, dtype=float).ravel()
    if z.size < MIN_SAMPLES:
        raise InsufficientSamples(f"need at least {MIN_SAMPLES} samples, got {z.size}")
    mode = CenterMode(center_mode)
    t = _grid(t_grid)
    if center is None:
        center = float(np.mean(z)) if mode is CenterMode.MEAN else float(np.median(z))
    if side == "two-sided":
        dev = np.abs(z - center)
    elif side == "upper":
        dev = z - center
    elif side == "lower":
        dev = center - z
    else:
        raise InvalidConfig(f"unknown side {side!r}")
    dev = np.sort(dev)
    survival = (z.size - np.searchsorted(dev, t, side="left")) / z.size
    return TailCurve(t, survival, dkw_halfwidth(z.size, confidence), z.size, confidence,
                     mode, float(center), side)


@dataclass(frozen=True)
class FitResult:
    constant_C: float
    feasible: bool
    margin: float


def fit_constant(curve: TailCurve, spec: BoundSpec, grid=C_GRID) -> FitResult:
    """Smallest grid ``C`` with ``bound(t; C) >= survival(t) + eps`` on the whole curve.

    When no grid value works the largest is returned with ``feasible=False``
    and a negative margin.
    """
    if spec.kind is BoundKind.KL_DEVIATION:
        raise InvalidParams("kl-deviation is a threshold, not a tail probability")
    target = curve.survival + curve.band_halfwidth
    margin = -math.inf
    for C in grid:
        margin = float(np.min(np.asarray(spec(curve.t_grid, C)) - target))
        if margin >= 0.0:
            return FitResult(float(C), True, margin)
    return FitResult(float(grid[-1]), False, margin)


# experiment runner ---------------------------------------------------------

@dataclass
class TailConfig:
    """One tail experiment: ``Z = X^T A X - E X^T A X`` for a single matrix,
    or ``Z = max_k (X^T A_k X - a_k)`` for a family."""

    sampler: Sampler
    n_samples: int
    seed: int
    matrix: np.ndarray | None = None
    family: MatrixFamily | None = None
    t_grid: np.ndarray | None = None
    bounds: tuple[str, ...] = ("convex-hw",)
    bound_params: dict = field(default_factory=dict)
    confidence: float = 0.99
    center: str = "auto"
    family_norm_samples: int | None = None
    auto_grid_points: int = 101

    def validate(self) -> None:
        if (self.matrix is None) == (self.family is None):
            raise InvalidConfig("give exactly one of matrix or family")
        if self.n_samples < MIN_SAMPLES:
            raise InvalidConfig(f"n_samples must be at least {MIN_SAMPLES}")
        dim = self.matrix.shape[0] if self.matrix is not None else self.family.dimension
        if dim != self.sampler.dimension:
            raise InvalidConfig(f"matrix dimension {dim} differs from sampler dimension {self.sampler.dimension}")
        for kind in self.bounds:
            try:
                kind = BoundKind(kind)
            except ValueError:
                raise InvalidConfig(f"unknown bound kind {kind!r}") from None
            if kind is BoundKind.KL_DEVIATION:
                raise InvalidConfig("kl-deviation belongs to the covariance experiment")
            if kind is BoundKind.MIXED_TAIL and not {"a", "b"} <= set(self.bound_params.get(kind.value, {})):
                raise InvalidConfig("mixed-tail needs explicit a and b")
            if self.family is not None and kind is not BoundKind.UNIFORM_HW and kind is not BoundKind.MIXED_TAIL:
                raise InvalidConfig(f"{kind.value} applies to a single matrix, not a family")


@dataclass
class TailReport:
    config: TailConfig
    curve: TailCurve
    specs: list[BoundSpec]
    fits: list[FitResult]
    derived: dict

    def columns(self) -> dict[str, np.ndarray]:
        cols = {
            "t": self.curve.t_grid,
            "survival": self.curve.survival,
            "band_lo": self.curve.band_lo,
            "band_hi": self.curve.band_hi,
        }
        for i, (spec, fit) in enumerate(zip(self.specs, self.fits), start=1):
            cols[f"bound_{i}"] = np.asarray(spec(self.curve.t_grid, fit.constant_C), dtype=float)
        return cols

    @property
    def all_feasible(self) -> bool:
        return all(f.feasible for f in self.fits)

    def metadata(self) -> dict:
        return {
            "derived": self.derived,
            "bounds": [
                {"column": f"bound_{i}", "kind": s.kind.value, "params": s.params,
                 "fitted_C": f.constant_C, "feasible": f.feasible, "margin": f.margin}
                for i, (s, f) in enumerate(zip(self.specs, self.fits), start=1)
            ],
            "curve": {"n_samples": self.curve.n_samples, "confidence": self.curve.confidence,
                      "band_halfwidth": self.curve.band_halfwidth,
                      "center_mode": self.curve.center_mode.value, "center": self.curve.center},
        }


def _derive_params(cfg: TailConfig, fam: MatrixFamily | None, threads: int) -> dict:
    s = cfg.sampler
    out: dict = {"K": s.K, "n": s.dimension}
    if cfg.matrix is not None:
        a = cfg.matrix
        out["hs"] = linalg.hs_norm(a)
        out["op"] = min(linalg.op_norm(a), out["hs"])
        _, cov = moments(s, cfg.seed, cfg.n_samples, threads)
        out["covnorm"] = linalg.op_norm(cov)
    if any(BoundKind(k) is BoundKind.UNIFORM_HW for k in cfg.bounds):
        fam = fam or MatrixFamily((cfg.matrix,), np.zeros(1))
        n_fn = cfg.family_norm_samples or cfg.n_samples
        est, se = family_norm(fam, s, n_fn, cfg.seed, stream=STREAM_AUXILIARY, threads=threads)
        out["family_norm"] = est
        out["family_norm_se"] = se
        out["sup_op"] = fam.sup_opnorm
    return out


def run_tail_experiment(cfg: TailConfig, threads: int = 1) -> TailReport:
    """Sample the statistic, build its tail curve and fit every requested bound."""
    cfg.validate()
    fam = None
    if cfg.matrix is not None:
        z = centered_qform_samples(cfg.matrix, cfg.sampler, cfg.n_samples, cfg.seed,
                                   center=cfg.center, threads=threads)
        center = 0.0
    else:
        fam = cfg.family
        z = sup_qform_samples(fam, cfg.sampler, cfg.n_samples, cfg.seed, threads=threads)
        center = None
    if cfg.t_grid is None:
        c = center if center is not None else float(np.mean(z))
        top = float(np.max(np.abs(z - c)))
        t_grid = np.linspace(0.0, top if top > 0 else 1.0, cfg.auto_grid_points)
    else:
        t_grid = cfg.t_grid
    curve = empirical_tail(z, t_grid, cfg.confidence, CenterMode.MEAN, center=center)
    derived = _derive_params(cfg, fam, threads)
    specs, fits = [], []
    for kind in cfg.bounds:
        kind = BoundKind(kind)
        names = bnd.parameter_names(kind)
        params = {k: derived[k] for k in names if k in derived}
        params.update(cfg.bound_params.get(kind.value, {}))
        spec = BoundSpec(kind, params)
        fit = fit_constant(curve, spec)
        specs.append(spec.with_constant(fit.constant_C))
        fits.append(fit)
    return TailReport(cfg, curve, specs, fits, derived)


# lemma checks --------------------------------------------------------------

def smallest_quantile(sorted_z: np.ndarray, p: float) -> float:
    """``inf{t : P(Z <= t) >= p}`` under the empirical law."""
    n = sorted_z.size
    k = min(max(math.ceil(p * n - 1e-12), 1), n)
    return float(sorted_z[k - 1])


def fit_mixed_tail(samples, confidence: float = 0.99, n_grid: int = 256) -> tuple[float, float]:
    """Scales ``(a, b)`` with ``2 exp(-min(t^2/a^2, t/b))`` above the upper
    DKW band of ``P(|Z - Med Z| >= t)``.

    Grid points below a split are assigned to the Gaussian branch and the
    rest to the exponential one; the split minimising ``sqrt(pi) a + 2 b``
    is kept.
    """
    z = np.asarray(samples, dtype=float).ravel()
    med = float(np.median(z))
    top = float(np.max(np.abs(z - med)))
    if top == 0.0:
        return 1e-300, 1e-300
    t = np.linspace(0.0, top, n_grid + 1)[1:]
    curve = empirical_tail(z, t, confidence, CenterMode.MEDIAN)
    log_ratio = np.log(2.0 / np.clip(curve.survival + curve.band_halfwidth, None, 1.0))
    need_a = t / np.sqrt(log_ratio)
    need_b = t / log_ratio
    prefix_a = np.maximum.accumulate(need_a)
    suffix_b = np.maximum.accumulate(need_b[::-1])[::-1]
    best = None
    for j in range(1, t.size):
        a, b = prefix_a[j - 1], suffix_b[j]
        cost = math.sqrt(math.pi) * a + 2.0 * b
        if best is None or cost < best[0]:
            best = (cost, float(a), float(b))
    return best[1], best[2]


@dataclass(frozen=True)
class QuantileCheck:
    p: float
    quantile: float
    bound: float
    allowance: float
    passed: bool


@dataclass(frozen=True)
class GapCheck:
    mean: float
    median: float
    gap: float
    bound: float
    allowance: float
    a: float
    b: float
    passed: bool


@dataclass(frozen=True)
class CheckReport:
    quantiles: list[QuantileCheck]
    gap: GapCheck

    @property
    def violations(self) -> list:
        bad: list = [q for q in self.quantiles if not q.passed]
        if not self.gap.passed:
            bad.append(self.gap)
        return bad

    @property
    def ok(self) -> bool:
        return not self.violations


def lemma_checks(samples, K: float, p_grid, a: float | None = None, b: float | None = None,
                 confidence: float = 0.99) -> CheckReport:
    """Check the quantile lower bound and the mean/median gap on samples.

    (i) ``q_p >= mean - K sqrt(log(2/p)) - allowance`` where the allowance is
    ``q_p - q_{p - eps}`` (one DKW halfwidth pushed through the empirical
    quantile map).  (ii) ``|mean - median| <= sqrt(pi) a + 2 b + allowance``
    with allowance ``max(q_{1/2+eps} - q_{1/2}, q_{1/2} - q_{1/2-eps})`` plus
    three standard errors of the mean.  Missing ``(a, b)`` are fitted.
    """
    z = np.sort(np.asarray(samples, dtype=float).ravel())
    if z.size < MIN_SAMPLES:
        raise InsufficientSamples(f"need at least {MIN_SAMPLES} samples, got {z.size}")
    eps = dkw_halfwidth(z.size, confidence)
    mean = float(np.mean(z))
    rows = []
    for p in p_grid:
        q = smallest_quantile(z, p)
        lower = smallest_quantile(z, max(p - eps, 0.0))
        bound = bnd.quantile_lower_bound(mean, K, p)
        allowance = q - lower
        rows.append(QuantileCheck(float(p), q, bound, allowance, q >= bound - allowance))
    if a is None or b is None:
        a, b = fit_mixed_tail(z, confidence)
    med = float(np.median(z))
    gap = abs(mean - med)
    spread = max(smallest_quantile(z, 0.5 + eps) - med, med - smallest_quantile(z, 0.5 - eps))
    allowance = spread + 3.0 * float(np.std(z)) / math.sqrt(z.size)
    bound = bnd.median_mean_gap(a, b)
    return CheckReport(rows, GapCheck(mean, med, gap, bound, allowance, a, b,
                                      gap <= bound + allowance))

"""Gaussian covariance estimation in finite-dimensional normed spaces.

A centred Gaussian vector is represented through a Karhunen-Loeve basis
``x_1, ..., x_m`` of ``R^d`` as ``G = sum_j g_j x_j`` with i.i.d. standard
normal ``g_j``, so its covariance is ``Sigma = sum_j x_j x_j^T``.  Two
geometries are supported because both allow exact operator norms over the
dual unit ball: the Euclidean norm (dual ball the Euclidean ball) and the
sup-norm (dual ball the l1 ball, with extreme points ``+-e_i``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg
from .bounds import kl_deviation
from .errors import DegenerateCovariance, DimensionMismatch, InvalidConfig
from .montecarlo import C_GRID
from .rng import BLOCK_SIZE, STREAM_AUXILIARY, STREAM_MAIN, generator, map_blocks, map_items

MIN_RANK_SAMPLES = 10_000
MIN_REPLICATIONS = 50
QUANTILE_WARN_COUNT = 20


class Geometry(str, Enum):
    EUCLIDEAN = "euclidean"
    SUP = "sup"


@dataclass(frozen=True, eq=False)
class KLBasis:
    """Basis vectors stored as the rows of ``vectors`` (shape ``m x d``)."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidConfig("a basis needs at least one vector of positive length")
        if not np.all(np.isfinite(v)):
            raise InvalidConfig("basis vectors must be finite")
        object.__setattr__(self, "vectors", v)

    @classmethod
    def identity(cls, d: int) -> "KLBasis":
        return cls(np.eye(d))

    @property
    def ambient_dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def covariance(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def scaled(self, c: float) -> "KLBasis":
        return KLBasis(c * self.vectors)


def kl_sample(basis: KLBasis, n: int, seed: int, *, stream: int = STREAM_MAIN,
              replication: int = 0, threads: int = 1) -> np.ndarray:
    """``n`` rows ``G_i = sum_j g_ij x_j``, generated block by block from the
    stream addressed by ``(seed, stream, replication, block)``."""
    if n < 1:
        raise InvalidConfig("need at least one sample")
    m = basis.vectors.shape[0]

    def block(i, size):
        g = generator(seed, stream, replication, i).standard_normal((size, m))
        return g @ basis.vectors

    return np.concatenate(map_blocks(block, n, threads))


def empirical_cov(samples) -> np.ndarray:
    """``(1/n) sum_k G_k G_k^T`` (the sample is assumed centred)."""
    g = np.asarray(samples, dtype=float)
    if g.ndim != 2 or g.shape[0] < 1:
        raise InvalidConfig("samples must be a non-empty 2-D array")
    return (g.T @ g) / g.shape[0]


def _geometry(geom) -> Geometry:
    try:
        return Geometry(geom)
    except ValueError:
        raise InvalidConfig(f"unknown geometry {geom!r}") from None


def op_distance(sig_hat, sig, geom) -> float:
    """``sup_{u, v in B*} u^T (sig_hat - sig) v``.

    Euclidean: the largest absolute eigenvalue of the difference.  Sup: the
    bilinear form over the l1 ball is maximised at signed coordinate vectors,
    giving the largest absolute entry.
    """
    a, b = linalg.as_matrix(sig_hat), linalg.as_matrix(sig)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} are not matching square matrices")
    delta = a - b
    if _geometry(geom) is Geometry.SUP:
        return float(np.max(np.abs(delta)))
    if not np.any(delta):
        return 0.0
    return float(np.max(np.abs(linalg.eigh(linalg.symmetrize(delta)).eigenvalues)))


def sigma_norm(basis: KLBasis, geom) -> float:
    """``sup_{u in B*} u^T Sigma u``: the spectral norm for the Euclidean
    geometry, ``max_i Sigma_ii`` for the sup geometry (Sigma is PSD)."""
    sig = basis.covariance
    if _geometry(geom) is Geometry.SUP:
        return float(np.max(np.diag(sig)))
    if not np.any(sig):
        return 0.0
    return float(np.max(linalg.eigh(sig).eigenvalues))


def vector_norms(x, geom) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if _geometry(geom) is Geometry.SUP:
        return np.max(np.abs(x), axis=-1)
    return np.sqrt(np.sum(x * x, axis=-1))


def mean_norm(basis: KLBasis, geom, n_mc: int, seed: int, *, threads: int = 1) -> tuple[float, float]:
    """Monte Carlo ``E ||G||`` and its standard error, from the auxiliary stream."""
    if n_mc < 2:
        raise InvalidConfig("need at least two samples")
    geom = _geometry(geom)
    m = basis.vectors.shape[0]

    def block(i, size):
        g = generator(seed, STREAM_AUXILIARY, 0, i).standard_normal((size, m))
        return vector_norms(g @ basis.vectors, geom)

    norms = np.concatenate(map_blocks(block, n_mc, threads))
    return float(norms.mean()), float(norms.std(ddof=1) / math.sqrt(n_mc))


@dataclass(frozen=True)
class EffectiveRank:
    r: float
    mean_norm: float
    sigma_norm: float
    std_error: float

    def __iter__(self):
        return iter((self.r, self.mean_norm, self.sigma_norm, self.std_error))


def effective_rank(basis: KLBasis, geom, n_mc: int = 100_000, seed: int = 0, *,
                   threads: int = 1) -> EffectiveRank:
    """``r = (E ||G||)^2 / ||Sigma||``; ``std_error`` is the delta-method
    standard error of ``r`` from that of ``E ||G||``."""
    if n_mc < MIN_RANK_SAMPLES:
        raise InvalidConfig(f"effective rank needs at least {MIN_RANK_SAMPLES} samples")
    s = sigma_norm(basis, geom)
    if s == 0.0:
        raise DegenerateCovariance("covariance is zero; effective rank undefined")
    e, se = mean_norm(basis, geom, n_mc, seed, threads=threads)
    return EffectiveRank(e * e / s, e, s, 2.0 * e * se / s)


def gordon_chevet_rhs(basis: KLBasis, n: int, geom=Geometry.EUCLIDEAN, *, n_mc: int = 100_000,
                      seed: int = 0, threads: int = 1) -> float:
    """``||Sigma||^(1/2) sqrt(n) + E ||G||`` bounding ``E ||Gamma||`` for the
    operator ``Gamma u = (<G_k, u>)_{k <= n}`` from the dual space to l2^n."""
    if n < 1:
        raise InvalidConfig("n must be at least 1")
    e, _ = mean_norm(basis, geom, n_mc, seed, threads=threads)
    return math.sqrt(sigma_norm(basis, geom)) * math.sqrt(n) + e


def gamma_norm(samples, geom) -> float:
    """``sup_{u in B*} |(<G_k, u>)_k|_2`` for the rows ``G_k`` of ``samples``."""
    g = np.asarray(samples, dtype=float)
    if _geometry(geom) is Geometry.SUP:
        return float(np.max(np.sqrt(np.sum(g * g, axis=0))))
    return linalg.op_norm(g)


def gamma_norm_mc(basis: KLBasis, n: int, replications: int, seed: int, geom=Geometry.EUCLIDEAN,
                  *, threads: int = 1) -> tuple[float, float]:
    """Monte Carlo ``E ||Gamma||`` with standard error, one replication per stream."""
    if replications < 2:
        raise InvalidConfig("need at least two replications")
    vals = np.array(map_items(
        lambda r: gamma_norm(kl_sample(basis, n, seed, replication=r), geom), replications, threads))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replications))


# the deviation experiment --------------------------------------------------

@dataclass(frozen=True, eq=False)
class CovExperiment:
    basis: KLBasis
    geometry: Geometry = Geometry.EUCLIDEAN
    n: int = 200
    replications: int = 500
    seed: int = 0
    t_values: tuple[float, ...] = (1.0, 2.0, 3.0)
    constant_C: float | None = None
    n_mc: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "geometry", _geometry(self.geometry))
        object.__setattr__(self, "t_values", tuple(float(t) for t in self.t_values))

    def validate(self) -> None:
        if self.n < 2:
            raise InvalidConfig("n must be at least 2")
        if self.replications < MIN_REPLICATIONS:
            raise InvalidConfig(f"need at least {MIN_REPLICATIONS} replications")
        if not self.t_values or any(not (math.isfinite(t) and t >= 1) for t in self.t_values):
            raise InvalidConfig("every t must be finite and at least 1")
        if self.constant_C is not None and not (math.isfinite(self.constant_C) and self.constant_C > 0):
            raise InvalidConfig("C must be positive")
        if self.n_mc < MIN_RANK_SAMPLES:
            raise InvalidConfig(f"n_mc must be at least {MIN_RANK_SAMPLES}")

    def config_echo(self) -> dict:
        return {"geometry": self.geometry.value, "n": self.n, "replications": self.replications,
                "seed": self.seed, "t_values": list(self.t_values), "constant_C": self.constant_C,
                "n_mc": self.n_mc, "basis_shape": list(self.basis.vectors.shape)}


def upper_quantile(values: np.ndarray, level: float) -> float:
    """The smallest order statistic whose empirical CDF reaches ``level``."""
    v = np.sort(np.asarray(values, dtype=float))
    k = max(math.ceil(level * v.size) - 1, 0)
    return float(v[min(k, v.size - 1)])


@dataclass(frozen=True, eq=False)
class DeviationReport:
    t: np.ndarray
    empirical_quantile: np.ndarray
    threshold: np.ndarray
    fitted_C: np.ndarray
    passed: np.ndarray
    constant_C: float | None
    deviations: np.ndarray
    mean_deviation: float
    mean_std_error: float
    rank: EffectiveRank | None
    config: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.passed))

    def columns(self) -> dict[str, np.ndarray]:
        return {"t": self.t, "empirical_quantile": self.empirical_quantile,
                "threshold": self.threshold, "fitted_C": self.fitted_C,
                "pass": self.passed.astype(int)}

    def metadata(self) -> dict:
        rank = None if self.rank is None else {
            "r": self.rank.r, "mean_norm": self.rank.mean_norm,
            "sigma_norm": self.rank.sigma_norm, "std_error": self.rank.std_error}
        return {"experiment": "covest", "config": self.config, "constant_C": self.constant_C,
                "mean_deviation": self.mean_deviation, "mean_std_error": self.mean_std_error,
                "effective_rank": rank}


def deviation_experiment(cfg: CovExperiment, threads: int = 1) -> DeviationReport:
    """Replicate ``D_r = ||Sigma_hat_r - Sigma||`` and compare the upper
    ``1 - exp(-t)`` quantile of ``|D_r - mean D|`` against the threshold.

    A row passes when the quantile is at most the threshold plus three
    standard errors of the replication mean.  ``fitted_C`` is the smallest
    grid constant meeting that rule at the row's ``t`` (``nan`` if none); when
    no constant is supplied the report uses the largest of them, the smallest
    grid value passing every row.
    """
    cfg.validate()
    sig = cfg.basis.covariance
    dev = np.array(map_items(
        lambda r: op_distance(empirical_cov(kl_sample(cfg.basis, cfg.n, cfg.seed, replication=r)),
                              sig, cfg.geometry),
        cfg.replications, threads))
    mean = float(dev.mean())
    se = float(dev.std(ddof=1) / math.sqrt(dev.size))
    centred = np.abs(dev - mean)
    t = np.array(cfg.t_values)
    for tv in t:
        if cfg.replications * math.exp(-tv) < QUANTILE_WARN_COUNT:
            warnings.warn(f"only {cfg.replications * math.exp(-tv):.1f} replications expected beyond "
                          f"the quantile at t={tv}; the estimate is unreliable", RuntimeWarning)
    q = np.array([upper_quantile(centred, 1.0 - math.exp(-tv)) for tv in t])
    allowance = 3.0 * se

    if sigma_norm(cfg.basis, cfg.geometry) == 0.0:
        rank = None
        def threshold(C):
            return np.zeros_like(t)
    else:
        rank = effective_rank(cfg.basis, cfg.geometry, cfg.n_mc, cfg.seed, threads=threads)
        def threshold(C):
            return np.asarray(kl_deviation(t, rank.sigma_norm, rank.r, cfg.n, C), dtype=float)

    fitted = np.full(t.shape, np.nan)
    for C in C_GRID:
        ok = q <= threshold(C) + allowance
        fitted = np.where(np.isnan(fitted) & ok, C, fitted)
    if cfg.constant_C is not None:
        C_used = cfg.constant_C
    elif np.all(np.isfinite(fitted)):
        C_used = float(np.max(fitted))
    else:
        C_used = C_GRID[-1]
    thr = threshold(C_used)
    passed = q <= thr + allowance
    return DeviationReport(t, q, thr, fitted, passed, C_used, dev, mean, se, rank, cfg.config_echo())

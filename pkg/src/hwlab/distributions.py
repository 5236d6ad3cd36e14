"""Random vectors with (convex) concentration, and empirical checks of it.

A sampler carries its concentration constant ``K`` and whether the
sub-Gaussian bound ``2 exp(-t**2 / K**2)`` is claimed for every 1-Lipschitz
function (``FULL_LIPSCHITZ``) or only for convex ones (``CONVEX_ONLY``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, ClassVar, NamedTuple

import numpy as np

from . import linalg
from .errors import InvalidConfig
from .rng import STREAM_AUXILIARY, STREAM_CALIBRATION, STREAM_MAIN, generator, map_blocks

DEFAULT_PRODUCT_K = 4.0


class Flavor(str, Enum):
    FULL_LIPSCHITZ = "full-lipschitz"
    CONVEX_ONLY = "convex-only"


class SamplerKind(str, Enum):
    STANDARD_GAUSSIAN = "gaussian"
    GAUSSIAN_WITH_COV = "gaussian-cov"
    RADEMACHER_PRODUCT = "rademacher"
    BOUNDED_PRODUCT = "bounded"
    SAMPLING_WITHOUT_REPLACEMENT = "without-replacement"
    AFFINE = "affine"


class Sampler:
    """Common interface.  Concrete samplers are frozen dataclasses."""

    kind: ClassVar[SamplerKind]
    flavor: Flavor

    @property
    def dimension(self) -> int:
        raise NotImplementedError

    @property
    def K(self) -> float:
        raise NotImplementedError

    @property
    def mean(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def covariance(self) -> np.ndarray | None:
        """Analytic covariance, or ``None`` when unknown."""
        return None

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind.value, "n": self.dimension, "K": self.K, "flavor": self.flavor.value}


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise InvalidConfig(f"{name} must be positive and finite, got {value}")
    return value


def _dimension(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidConfig(f"dimension must be a positive integer, got {n!r}")
    return int(n)


@dataclass(frozen=True, eq=False)
class StandardGaussian(Sampler):
    n: int
    kind: ClassVar[SamplerKind] = SamplerKind.STANDARD_GAUSSIAN
    flavor: ClassVar[Flavor] = Flavor.FULL_LIPSCHITZ

    def __post_init__(self):
        object.__setattr__(self, "n", _dimension(self.n))

    dimension = property(lambda self: self.n)
    K = property(lambda self: math.sqrt(2.0))
    mean = property(lambda self: np.zeros(self.n))
    covariance = property(lambda self: np.eye(self.n))

    def draw(self, rng, size):
        return rng.standard_normal((size, self.n))


@dataclass(frozen=True, eq=False)
class GaussianWithCov(Sampler):
    """Centred Gaussian ``cov**0.5 @ g``.  Default ``K = sqrt(2 ||cov||)``,
    the Lipschitz constant of the square-root map times the standard one."""

    cov: np.ndarray
    constant: float | None = None
    root: np.ndarray = field(init=False, repr=False)
    kind: ClassVar[SamplerKind] = SamplerKind.GAUSSIAN_WITH_COV
    flavor: ClassVar[Flavor] = Flavor.FULL_LIPSCHITZ

    def __post_init__(self):
        try:
            cov = linalg.as_matrix(self.cov)
            root = linalg.sqrtm_psd(cov)
        except (ValueError, ArithmeticError) as exc:
            raise InvalidConfig(f"invalid covariance: {exc}") from None
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "root", root)
        if self.constant is None:
            top = float(np.max(linalg.eigh(cov).eigenvalues))
            object.__setattr__(self, "constant", math.sqrt(2.0 * top) if top > 0 else math.sqrt(2.0))
        else:
            object.__setattr__(self, "constant", _positive("K", self.constant))

    dimension = property(lambda self: self.cov.shape[0])
    K = property(lambda self: self.constant)
    mean = property(lambda self: np.zeros(self.dimension))
    covariance = property(lambda self: self.cov.copy())

    def draw(self, rng, size):
        return rng.standard_normal((size, self.dimension)) @ self.root


@dataclass(frozen=True, eq=False)
class RademacherProduct(Sampler):
    n: int
    constant: float = DEFAULT_PRODUCT_K
    kind: ClassVar[SamplerKind] = SamplerKind.RADEMACHER_PRODUCT
    flavor: ClassVar[Flavor] = Flavor.CONVEX_ONLY

    def __post_init__(self):
        object.__setattr__(self, "n", _dimension(self.n))
        object.__setattr__(self, "constant", _positive("K", self.constant))

    dimension = property(lambda self: self.n)
    K = property(lambda self: self.constant)
    mean = property(lambda self: np.zeros(self.n))
    covariance = property(lambda self: np.eye(self.n))

    def draw(self, rng, size):
        return np.where(rng.random((size, self.n)) < 0.5, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class BoundedProduct(Sampler):
    """Independent uniform coordinates on ``[-half_width, half_width]``.
    Default ``K`` is ``4 * half_width``."""

    n: int
    half_width: float = 1.0
    constant: float | None = None
    kind: ClassVar[SamplerKind] = SamplerKind.BOUNDED_PRODUCT
    flavor: ClassVar[Flavor] = Flavor.CONVEX_ONLY

    def __post_init__(self):
        object.__setattr__(self, "n", _dimension(self.n))
        h = _positive("half_width", self.half_width)
        object.__setattr__(self, "half_width", h)
        k = DEFAULT_PRODUCT_K * h if self.constant is None else self.constant
        object.__setattr__(self, "constant", _positive("K", k))

    dimension = property(lambda self: self.n)
    K = property(lambda self: self.constant)
    mean = property(lambda self: np.zeros(self.n))
    covariance = property(lambda self: np.eye(self.n) * self.half_width**2 / 3.0)

    def draw(self, rng, size):
        return self.half_width * (2.0 * rng.random((size, self.n)) - 1.0)


@dataclass(frozen=True, eq=False)
class SamplingWithoutReplacement(Sampler):
    """An ordered sample of ``m`` items drawn without replacement.

    Coordinates are exchangeable with variance ``s2`` (population variance)
    and pairwise covariance ``-s2 / (N - 1)``.  Default ``K`` is four times
    the population half-range.
    """

    population: np.ndarray
    m: int
    constant: float | None = None
    kind: ClassVar[SamplerKind] = SamplerKind.SAMPLING_WITHOUT_REPLACEMENT
    flavor: ClassVar[Flavor] = Flavor.CONVEX_ONLY

    def __post_init__(self):
        pop = np.asarray(self.population, dtype=float).ravel()
        if pop.size < 1 or not np.all(np.isfinite(pop)):
            raise InvalidConfig("population must be a non-empty finite vector")
        m = _dimension(self.m)
        if m > pop.size:
            raise InvalidConfig(f"cannot draw {m} items from a population of {pop.size}")
        object.__setattr__(self, "population", pop)
        object.__setattr__(self, "m", m)
        if self.constant is None:
            half_range = 0.5 * float(pop.max() - pop.min())
            k = DEFAULT_PRODUCT_K * (half_range if half_range > 0 else 1.0)
        else:
            k = self.constant
        object.__setattr__(self, "constant", _positive("K", k))

    dimension = property(lambda self: self.m)
    K = property(lambda self: self.constant)

    @property
    def mean(self):
        return np.full(self.m, float(np.mean(self.population)))

    @property
    def covariance(self):
        size = self.population.size
        s2 = float(np.var(self.population))
        if size == 1:
            return np.zeros((1, 1))
        off = -s2 / (size - 1)
        return np.full((self.m, self.m), off) + np.eye(self.m) * (s2 - off)

    def draw(self, rng, size):
        keys = rng.random((size, self.population.size))
        idx = np.argsort(keys, axis=1, kind="stable")[:, : self.m]
        return self.population[idx]


@dataclass(frozen=True, eq=False)
class Affine(Sampler):
    """``U @ X + b`` for an orthogonal ``U``; keeps the base's ``K`` and flavor."""

    base: Sampler
    U: np.ndarray
    b: np.ndarray
    kind: ClassVar[SamplerKind] = SamplerKind.AFFINE

    def __post_init__(self):
        n = self.base.dimension
        try:
            u = linalg.as_matrix(self.U)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None
        b = np.asarray(self.b, dtype=float).ravel()
        if u.shape != (n, n) or b.shape != (n,):
            raise InvalidConfig(f"affine map must be {n}x{n} with a length-{n} shift")
        if not linalg.is_orthogonal(u):
            raise InvalidConfig("U must be orthogonal to 1e-10")
        object.__setattr__(self, "U", u)
        object.__setattr__(self, "b", b)

    flavor = property(lambda self: self.base.flavor)
    dimension = property(lambda self: self.base.dimension)
    K = property(lambda self: self.base.K)
    mean = property(lambda self: self.U @ self.base.mean + self.b)

    @property
    def covariance(self):
        cov = self.base.covariance
        return None if cov is None else self.U @ cov @ self.U.T

    def draw(self, rng, size):
        return self.base.draw(rng, size) @ self.U.T + self.b


def sample(s: Sampler, seed: int, count: int, *, stream: int = STREAM_MAIN,
           threads: int = 1) -> np.ndarray:
    """``count`` i.i.d. rows from ``s``; a pure function of ``(s, seed, count, stream)``."""
    if isinstance(count, bool) or int(count) != count or count < 1:
        raise InvalidConfig(f"count must be a positive integer, got {count!r}")

    def block(i, size):
        return s.draw(generator(seed, stream, i), size)

    return np.concatenate(map_blocks(block, int(count), threads), axis=0)


def moments(s: Sampler, seed: int, n_calibration: int,
            threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``s``: analytic when known, otherwise estimated
    from an independent calibration stream."""
    cov = s.covariance
    if cov is not None:
        return s.mean, cov
    x = sample(s, seed, n_calibration, stream=STREAM_CALIBRATION, threads=threads)
    mu = x.mean(axis=0)
    xc = x - mu
    return mu, xc.T @ xc / x.shape[0]


def dkw_halfwidth(n_samples: int, confidence: float) -> float:
    """Dvoretzky-Kiefer-Wolfowitz halfwidth ``sqrt(ln(2/delta) / (2N))``."""
    if not 0.0 < confidence < 1.0:
        raise InvalidConfig(f"confidence must lie in (0, 1), got {confidence}")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n_samples))


@dataclass(frozen=True)
class Violation:
    function_index: int
    function_kind: str
    t: float
    survival: float
    band_lo: float
    bound: float


@dataclass(frozen=True)
class ViolationReport:
    violations: list[Violation]
    K: float
    n_functions: int
    n_samples: int
    confidence: float

    @property
    def empty(self) -> bool:
        return not self.violations


TestFunction = tuple[str, Callable[[np.ndarray], np.ndarray], float | None]


def _unit(rng, n, count=None):
    shape = (n,) if count is None else (count, n)
    u = rng.standard_normal(shape)
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def convex_test_functions(s: Sampler, n_functions: int, seed: int) -> list[TestFunction]:
    """Random convex 1-Lipschitz functions: unit linear forms, maxima of 2 to
    8 affine forms with unit slopes, and Euclidean distance to a point.

    Each entry is ``(kind, fn, exact_mean)``; ``exact_mean`` is known only
    for the linear forms.
    """
    rng = generator(seed, STREAM_AUXILIARY, 0)
    n = s.dimension
    mu = s.mean
    cov = s.covariance
    spread = math.sqrt(float(np.trace(cov)) / n) if cov is not None else 1.0
    out: list[TestFunction] = []
    for j in range(n_functions):
        kind = ("linear", "max-linear", "distance")[j % 3]
        if kind == "linear":
            u = _unit(rng, n)
            out.append((kind, lambda x, u=u: x @ u, float(u @ mu)))
        elif kind == "max-linear":
            k = int(rng.integers(2, 9))
            slopes = _unit(rng, n, k)
            offsets = spread * rng.standard_normal(k)
            out.append((kind, lambda x, a=slopes, c=offsets: np.max(x @ a.T + c, axis=1), None))
        else:
            p = mu + spread * rng.standard_normal(n)
            out.append((kind, lambda x, p=p: np.linalg.norm(x - p, axis=1), None))
    return out


def verify_concentration(s: Sampler, n_functions: int, n_samples: int, seed: int,
                         t_grid, *, K: float | None = None, confidence: float = 0.99,
                         threads: int = 1) -> ViolationReport:
    """Test the convex concentration inequality on random test functions.

    For each function ``phi`` the two-sided tail of ``phi(X) - E phi(X)`` is
    estimated on ``t_grid``; the mean comes from an independent calibration
    sample unless it is known exactly.  A pair ``(phi, t)`` is reported when
    even the lower DKW band lies above ``2 exp(-t**2 / K**2)``, i.e. when the
    data are incompatible with the declared constant.
    """
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise InvalidConfig("t_grid must be a non-empty increasing sequence of positive reals")
    K = s.K if K is None else _positive("K", K)
    x = sample(s, seed, n_samples, threads=threads)
    x_cal = sample(s, seed, n_samples, stream=STREAM_CALIBRATION, threads=threads)
    eps = dkw_halfwidth(n_samples, confidence)
    bound = 2.0 * np.exp(-(t**2) / K**2)
    found = []
    for j, (kind, fn, exact_mean) in enumerate(convex_test_functions(s, n_functions, seed)):
        center = exact_mean if exact_mean is not None else float(np.mean(fn(x_cal)))
        dev = np.sort(np.abs(fn(x) - center))
        survival = (n_samples - np.searchsorted(dev, t, side="left")) / n_samples
        lo = survival - eps
        for ti, si, li, bi in zip(t, survival, lo, bound):
            if li > bi:
                found.append(Violation(j, kind, float(ti), float(si), float(li), float(bi)))
    return ViolationReport(found, K, n_functions, n_samples, confidence)


class CovCheck(NamedTuple):
    estimate: float
    bound: float
    passed: bool
    std_error: float


def cov_opnorm_check(s: Sampler, n_samples: int, seed: int, *, K: float | None = None,
                     threads: int = 1) -> CovCheck:
    """Compare the operator norm of the empirical covariance with ``2 K**2``.

    Samples are centred at the analytic mean (or at the sample mean when the
    mean is unknown).  The allowance is three standard errors of the
    variance along the leading empirical eigenvector.
    """
    K = s.K if K is None else _positive("K", K)
    x = sample(s, seed, n_samples, threads=threads)
    mu = s.mean if s.covariance is not None else x.mean(axis=0)
    xc = x - mu
    emp = xc.T @ xc / n_samples
    split = linalg.eigh(emp)
    estimate = float(split.eigenvalues[0])
    proj = (xc @ split.eigen_basis[:, 0]) ** 2
    se = float(np.std(proj) / math.sqrt(n_samples))
    bound = 2.0 * K * K
    return CovCheck(estimate, bound, estimate <= bound + 3.0 * se, se)

"""Tangent-plane envelopes of weighted quadratics and Lipschitz extensions.

For nonnegative weights ``mu`` let ``phi(y) = sum mu_i y_i**2`` and
``B = {y : sqrt(sum mu_i**2 y_i**2) <= R}``.  The envelope

    f(y) = max_{x in B} <grad phi(x), y - x> + phi(x)

agrees with ``phi`` on ``B``, lies below it elsewhere, is convex, and is
Lipschitz with constant ``max_{x in B} |grad phi(x)| = 2 R``.

The inner maximisation is solved through its one-dimensional dual: the
maximiser is ``x_i = y_i / (1 + nu mu_i)`` with ``nu >= 0`` chosen so the
constraint is active, found by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import Sampler, sample
from .errors import BisectionFailure, DimensionMismatch, EmptyWitnessSet, InvalidConfig
from .rng import STREAM_AUXILIARY, STREAM_CALIBRATION, generator

MAX_DOUBLINGS = 200
PG_ITERATION_CAP = 10_000


def _weights(mu) -> np.ndarray:
    w = np.asarray(mu, dtype=float).ravel()
    if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InvalidConfig("weights must be a non-empty vector of finite nonnegative reals")
    return w


@dataclass(frozen=True, eq=False)
class WeightedQuadratic:
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _weights(self.weights))

    @property
    def dimension(self) -> int:
        return self.weights.size

    def _y(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim not in (1, 2) or y.shape[-1] != self.dimension:
            raise DimensionMismatch(f"expected vectors of length {self.dimension}, got shape {y.shape}")
        return y

    def gradient(self, y) -> np.ndarray:
        return 2.0 * self.weights * self._y(y)


def phi(w: WeightedQuadratic, y):
    """``sum mu_i y_i**2`` for a vector or row-wise."""
    y = w._y(y)
    out = (y * y) @ w.weights
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class TruncationSet:
    """``B = {y : sqrt(sum mu_i**2 y_i**2) <= radius}``.

    ``provenance`` records what the radius was built from, typically
    ``{"weighted_second_moment": sum mu_i**2 E Y_i**2, "t": t}`` for
    ``R = sqrt(weighted_second_moment) + sqrt(t max mu) / 2``.
    """

    weights: np.ndarray
    radius: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "weights", _weights(self.weights))
        r = float(self.radius)
        if not (math.isfinite(r) and r >= 0):
            raise InvalidConfig(f"radius must be finite and nonnegative, got {r}")
        object.__setattr__(self, "radius", r)

    @classmethod
    def from_moments(cls, weights, second_moments, t: float) -> "TruncationSet":
        """Radius from ``E Y_i**2`` and the deviation level ``t``."""
        w = _weights(weights)
        ey2 = np.asarray(second_moments, dtype=float).ravel()
        if ey2.shape != w.shape or np.any(ey2 < 0):
            raise InvalidConfig("second moments must be nonnegative, one per weight")
        if not t >= 0:
            raise InvalidConfig("t must be nonnegative")
        s2 = float(np.sum(w * w * ey2))
        radius = math.sqrt(s2) + 0.5 * math.sqrt(t * float(w.max()))
        return cls(w, radius, {"weighted_second_moment": s2, "t": float(t),
                               "second_moments": ey2.tolist()})

    @classmethod
    def from_sampler(cls, weights, s: Sampler, t: float, *, seed: int = 0,
                     n_mc: int = 100_000) -> "TruncationSet":
        """As :meth:`from_moments` with ``E Y_i**2`` taken from the sampler,
        analytically when its covariance is known and by Monte Carlo otherwise."""
        cov = s.covariance
        if cov is not None:
            ey2 = np.diag(cov) + s.mean**2
            source = "analytic"
        else:
            x = sample(s, seed, n_mc, stream=STREAM_CALIBRATION)
            ey2 = np.mean(x * x, axis=0)
            source = f"monte-carlo({n_mc})"
        out = cls.from_moments(weights, ey2, t)
        out.provenance["source"] = source
        return out

    @property
    def lipschitz_constant(self) -> float:
        """``max_{x in B} |grad phi(x)| = 2 R``."""
        return 2.0 * self.radius

    def gradient_size(self, y) -> np.ndarray | float:
        """``sqrt(sum mu_i**2 y_i**2)``, half the gradient norm of ``phi``."""
        y = np.asarray(y, dtype=float)
        out = np.sqrt(((self.weights * y) ** 2).sum(axis=-1))
        return float(out) if np.ndim(out) == 0 else out

    def contains(self, y) -> np.ndarray | bool:
        out = self.gradient_size(y) <= self.radius
        return bool(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EnvelopeSolution:
    value: np.ndarray
    argmax: np.ndarray
    nu: np.ndarray
    inside: np.ndarray


def _check(w: WeightedQuadratic, B: TruncationSet, tol: float) -> None:
    if not np.array_equal(w.weights, B.weights):
        raise InvalidConfig("quadratic and truncation set use different weights")
    if not 0 < tol <= 1e-4:
        raise InvalidConfig("tol must lie in (0, 1e-4]")


def envelope_solve(w: WeightedQuadratic, B: TruncationSet, y, tol: float = 1e-13) -> EnvelopeSolution:
    """Evaluate the envelope at one point or at each row of ``y``.

    Points in ``B`` return ``phi(y)`` exactly with ``nu = 0``.  Outside,
    ``nu`` is bracketed by doubling and refined by bisection until the
    bracket is below ``tol`` relative; the returned maximiser is taken from
    the feasible end of the bracket.  Zero-weight coordinates keep
    ``x_i = y_i``.
    """
    _check(w, B, tol)
    y = w._y(y)
    single = y.ndim == 1
    ys = np.atleast_2d(y)
    mu = w.weights
    R = B.radius
    inside = B.gradient_size(ys) <= R
    nu = np.zeros(ys.shape[0])
    x = ys.copy()
    out = ys[~inside]
    if out.size:
        if R == 0.0:
            xo = np.where(mu > 0, 0.0, out)
            nu[~inside] = np.inf
        else:
            def size(v):
                return np.sqrt((((mu * out) / (1.0 + v[:, None] * mu)) ** 2).sum(axis=1))

            lo = np.zeros(out.shape[0])
            hi = np.ones(out.shape[0])
            for _ in range(MAX_DOUBLINGS):
                over = size(hi) > R
                if not np.any(over):
                    break
                lo = np.where(over, hi, lo)
                hi = np.where(over, 2.0 * hi, hi)
            else:
                raise BisectionFailure("could not bracket the dual variable")
            while True:
                open_ = hi - lo > tol * hi
                if not np.any(open_):
                    break
                mid = 0.5 * (lo + hi)
                over = size(mid) > R
                lo = np.where(open_ & over, mid, lo)
                hi = np.where(open_ & ~over, mid, hi)
            xo = out / (1.0 + hi[:, None] * mu)
            nu[~inside] = hi
        x[~inside] = xo
    value = np.where(inside, (ys * ys) @ mu, 2.0 * ((x * ys) @ mu) - (x * x) @ mu)
    if single:
        return EnvelopeSolution(float(value[0]), x[0], float(nu[0]), bool(inside[0]))
    return EnvelopeSolution(value, x, nu, inside)


def envelope_f(w: WeightedQuadratic, B: TruncationSet, y, tol: float = 1e-13):
    """``max_{x in B} <grad phi(x), y - x> + phi(x)``."""
    return envelope_solve(w, B, y, tol).value


def envelope_projected_gradient(w: WeightedQuadratic, B: TruncationSet, y,
                                max_iter: int = PG_ITERATION_CAP) -> float:
    """Reference solver for cross-checks: projected gradient ascent.

    In the variables ``z_i = mu_i x_i`` the feasible set is the Euclidean
    ball of radius ``R`` and the objective ``sum (2 y_i z_i - z_i**2 / mu_i)``
    has gradient Lipschitz constant ``2 / min mu``; steps of the reciprocal
    size are used.  Zero-weight coordinates do not enter.
    """
    y = w._y(y)
    if y.ndim != 1:
        raise DimensionMismatch("projected-gradient reference takes one point")
    mu = w.weights
    act = mu > 0
    if not np.any(act):
        return 0.0
    m, ya = mu[act], y[act]
    R = B.radius
    step = 0.5 * float(m.min())
    z = m * ya
    norm = np.linalg.norm(z)
    if norm > R:
        z *= R / norm
    for _ in range(max_iter):
        z_new = z + step * (2.0 * ya - 2.0 * z / m)
        norm = np.linalg.norm(z_new)
        if norm > R:
            z_new *= R / norm
        if np.max(np.abs(z_new - z)) <= 1e-15 * max(R, 1.0):
            z = z_new
            break
        z = z_new
    return float(np.sum(2.0 * ya * z - z * z / m))


# witnesses and the McShane extension ---------------------------------------

@dataclass(frozen=True, eq=False)
class LipschitzWitnessSet:
    """Points with function values and a Lipschitz constant valid on them."""

    points: np.ndarray
    values: np.ndarray
    lipschitz_M: float

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float).ravel()
        if pts.shape[0] == 0 or pts.size == 0:
            raise EmptyWitnessSet("witness set is empty")
        if vals.shape != (pts.shape[0],):
            raise InvalidConfig("need one value per witness point")
        M = float(self.lipschitz_M)
        if not (math.isfinite(M) and M >= 0):
            raise InvalidConfig("Lipschitz constant must be finite and nonnegative")
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        excess = np.abs(vals[:, None] - vals[None, :]) - M * dist
        slack = 1e-12 * max(float(np.max(np.abs(vals))), 1.0)
        if np.max(excess) > slack:
            raise InvalidConfig("values are not M-Lipschitz on the witness points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lipschitz_M", M)

    @classmethod
    def from_envelope(cls, w: WeightedQuadratic, B: TruncationSet, points) -> "LipschitzWitnessSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not np.all(B.contains(pts)):
            raise InvalidConfig("witness points must lie in the truncation set")
        return cls(pts, envelope_f(w, B, pts), B.lipschitz_constant)


def mcshane_extend(witnesses: LipschitzWitnessSet, y):
    """``min_j f(x_j) + M |y - x_j|``, an M-Lipschitz extension."""
    if witnesses.points.shape[0] == 0:
        raise EmptyWitnessSet("witness set is empty")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != witnesses.points.shape[1]:
        raise DimensionMismatch("point dimension differs from the witnesses")
    dist = np.linalg.norm(y[..., None, :] - witnesses.points, axis=-1)
    out = np.min(witnesses.values + witnesses.lipschitz_M * dist, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# property verification -----------------------------------------------------

def sample_in_set(B: TruncationSet, rng: np.random.Generator, count: int,
                  radius_range: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Points whose scaled vector ``(mu_i y_i)`` is uniform in direction with
    norm ``R * s``; ``s`` is distributed as the radius of a uniform point in
    the unit ball, conditioned to ``radius_range``.  Zero-weight coordinates
    are standard Gaussian."""
    mu = B.weights
    act = mu > 0
    d = int(act.sum())
    y = rng.standard_normal((count, mu.size))
    if d:
        u = rng.standard_normal((count, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        lo, hi = radius_range
        s = (lo**d + rng.random(count) * (hi**d - lo**d)) ** (1.0 / d)
        y[:, act] = u * (B.radius * s)[:, None] / mu[act]
    return y


@dataclass(frozen=True)
class PropertyViolation:
    check: str
    points: tuple
    detail: str


@dataclass(frozen=True)
class PropertyReport:
    violations: list[PropertyViolation]
    counts: dict
    lipschitz_M: float

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_envelope(w: WeightedQuadratic, B: TruncationSet, n_inner: int, n_outer: int,
                    n_pairs: int, seed: int, tol: float = 1e-9, lipschitz_tol: float = 1e-6,
                    solver_tol: float = 1e-13) -> PropertyReport:
    """Check coincidence on ``B``, domination outside it, the Lipschitz bound
    ``2 R`` and midpoint convexity on random points."""
    if min(n_inner, n_outer, n_pairs) < 100:
        raise InvalidConfig("every count must be at least 100")
    rng = generator(seed, STREAM_AUXILIARY, 0)
    M = B.lipschitz_constant
    bad: list[PropertyViolation] = []

    inner = sample_in_set(B, rng, n_inner, (0.0, 1.0))
    inner = inner[B.contains(inner)]
    f_in = envelope_f(w, B, inner, solver_tol)
    p_in = phi(w, inner)
    err = np.abs(f_in - p_in) > tol * np.maximum(np.abs(p_in), 1e-300)
    for i in np.flatnonzero(err):
        bad.append(PropertyViolation("coincidence", (inner[i].tolist(),), f"f={f_in[i]!r} phi={p_in[i]!r}"))

    has_outside = bool(np.any(w.weights > 0))
    n_out = 0
    if has_outside:
        outer = sample_in_set(B, rng, n_outer, (1.0, 3.0)) if B.radius > 0 else rng.standard_normal((n_outer, w.dimension))
        outer = outer[~B.contains(outer)]
        n_out = outer.shape[0]
        f_out = envelope_f(w, B, outer, solver_tol)
        p_out = phi(w, outer)
        for i in np.flatnonzero(f_out > p_out + tol * np.abs(p_out)):
            bad.append(PropertyViolation("domination", (outer[i].tolist(),), f"f={f_out[i]!r} phi={p_out[i]!r}"))

    u = sample_in_set(B, rng, n_pairs, (0.0, 3.0))
    v = sample_in_set(B, rng, n_pairs, (0.0, 3.0))
    fu, fv = envelope_f(w, B, u, solver_tol), envelope_f(w, B, v, solver_tol)
    dist = np.linalg.norm(u - v, axis=1)
    for i in np.flatnonzero(np.abs(fu - fv) > M * dist * (1.0 + lipschitz_tol)):
        bad.append(PropertyViolation("lipschitz", (u[i].tolist(), v[i].tolist()),
                                     f"|f(u)-f(v)|={abs(fu[i] - fv[i])!r} M|u-v|={M * dist[i]!r}"))
    fm = envelope_f(w, B, 0.5 * (u + v), solver_tol)
    scale = np.maximum(np.maximum(np.abs(fu), np.abs(fv)), 1.0)
    for i in np.flatnonzero(fm > 0.5 * (fu + fv) + tol * scale):
        bad.append(PropertyViolation("convexity", (u[i].tolist(), v[i].tolist()),
                                     f"f(mid)={fm[i]!r} mean={0.5 * (fu[i] + fv[i])!r}"))
    counts = {"inner": int(inner.shape[0]), "outer": n_out, "pairs": n_pairs}
    return PropertyReport(bad, counts, M)

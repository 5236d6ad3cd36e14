"""Quadratic forms, centred quadratic-form statistics and finite suprema."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .distributions import GaussianWithCov, Sampler, StandardGaussian, moments, sample
from .errors import DimensionMismatch, InvalidConfig
from .rng import STREAM_CALIBRATION, STREAM_MAIN, map_blocks, BLOCK_SIZE


def _square(a) -> np.ndarray:
    m = linalg.as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def _points(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != n:
        raise DimensionMismatch(f"expected vectors of length {n}, got shape {x.shape}")
    return x


def qform(a, x) -> float | np.ndarray:
    """``x.T @ a @ x`` for one vector, or row-wise for a 2-D array of vectors."""
    a = _square(a)
    x = _points(x, a.shape[0])
    if x.ndim == 1:
        return float(x @ a @ x)
    return np.einsum("ij,ij->i", x @ a, x)


def expected_qform(a, mean, cov) -> float:
    """``E X^T A X = tr(A cov) + mean^T A mean``."""
    a = _square(a)
    return float(np.sum(a * cov.T) + mean @ a @ mean)


def _is_gaussian(s: Sampler) -> bool:
    while True:
        if isinstance(s, (StandardGaussian, GaussianWithCov)):
            return True
        base = getattr(s, "base", None)
        if base is None:
            return False
        s = base


def _center(a, s: Sampler, n_samples: int, seed: int, center: str, threads: int) -> float:
    if center not in ("auto", "analytic", "calibrate"):
        raise InvalidConfig(f"unknown centering mode {center!r}")
    if center == "calibrate" and _is_gaussian(s):
        raise InvalidConfig("Gaussian samplers must be centred analytically")
    if center == "analytic" and s.covariance is None:
        raise InvalidConfig("sampler has no analytic covariance")
    if center != "calibrate" and s.covariance is not None:
        return expected_qform(a, s.mean, s.covariance)
    x = sample(s, seed, n_samples, stream=STREAM_CALIBRATION, threads=threads)
    return float(np.mean(qform(a, x)))


def centered_qform_samples(a, s: Sampler, n_samples: int, seed: int, *,
                           center: str = "auto", threads: int = 1) -> np.ndarray:
    """Draws of ``Z = X^T A X - E X^T A X``.

    The expectation uses the trace formula when the sampler's covariance is
    known; ``center="calibrate"`` instead estimates it from an independent
    run of equal size on a disjoint stream (refused for Gaussian samplers).
    """
    a = _square(a)
    if a.shape[0] != s.dimension:
        raise DimensionMismatch(f"matrix is {a.shape[0]}-dimensional, sampler is {s.dimension}")
    c = _center(a, s, n_samples, seed, center, threads)
    x = sample(s, seed, n_samples, stream=STREAM_MAIN, threads=threads)
    return qform(a, x) - c


@dataclass(frozen=True, eq=False)
class MatrixFamily:
    """A finite family of n x n matrices with the centers ``E X^T A_k X``."""

    members: tuple[np.ndarray, ...]
    centers: np.ndarray
    _sym: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        members = tuple(_square(m) for m in self.members)
        if not members:
            raise InvalidConfig("a matrix family needs at least one member")
        n = members[0].shape[0]
        if any(m.shape != (n, n) for m in members):
            raise DimensionMismatch("all family members must share one dimension")
        centers = np.asarray(self.centers, dtype=float).ravel()
        if centers.shape != (len(members),) or not np.all(np.isfinite(centers)):
            raise InvalidConfig("need one finite center per member")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "_sym", np.stack([m + m.T for m in members]))

    @classmethod
    def for_sampler(cls, members, s: Sampler, *, seed: int = 0, n_calibration: int = 100_000,
                    threads: int = 1) -> "MatrixFamily":
        mean, cov = moments(s, seed, n_calibration, threads)
        members = [_square(m) for m in members]
        return cls(tuple(members), np.array([expected_qform(m, mean, cov) for m in members]))

    @property
    def dimension(self) -> int:
        return self.members[0].shape[0]

    def __len__(self) -> int:
        return len(self.members)

    @property
    def sup_opnorm(self) -> float:
        return max(linalg.op_norm(m) for m in self.members)

    def values(self, x) -> np.ndarray:
        """Centred forms ``x^T A_k x - a_k`` with the member index last."""
        x = _points(x, self.dimension)
        xa = np.einsum("...i,kij->...kj", x, np.stack(self.members))
        return np.einsum("...kj,...j->...k", xa, x) - self.centers


def sup_qform(fam: MatrixFamily, x) -> float | np.ndarray:
    """``max_k (x^T A_k x - a_k)`` for a vector or row-wise."""
    v = fam.values(x)
    return float(v.max()) if v.ndim == 1 else v.max(axis=-1)


def active_gradient(fam: MatrixFamily, x) -> np.ndarray:
    """Gradient ``(A + A^T) x`` of the maximising member (lowest index on ties)."""
    x = _points(x, fam.dimension)
    k = np.argmax(fam.values(x), axis=-1)
    sym = fam._sym[k]
    if x.ndim == 1:
        return sym @ x
    return np.einsum("bij,bj->bi", sym, x)


def family_norm_integrand(fam: MatrixFamily, x) -> np.ndarray | float:
    """``max_k |(A_k + A_k^T) x|``."""
    x = _points(x, fam.dimension)
    norms = np.linalg.norm(np.einsum("kij,...j->...ki", fam._sym, x), axis=-1)
    return float(norms.max()) if x.ndim == 1 else norms.max(axis=-1)


def family_norm(fam: MatrixFamily, s: Sampler, n_samples: int, seed: int, *,
                stream: int = STREAM_MAIN, threads: int = 1) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of ``E max_k |(A_k + A_k^T) X|``."""
    if n_samples < 100:
        raise InvalidConfig("family_norm needs at least 100 samples")
    if fam.dimension != s.dimension:
        raise DimensionMismatch("family and sampler dimensions differ")
    if not np.any(fam._sym):
        return 0.0, 0.0
    x = sample(s, seed, n_samples, stream=stream, threads=threads)
    vals = np.concatenate(map_blocks(
        lambda i, size: family_norm_integrand(fam, x[i * BLOCK_SIZE: i * BLOCK_SIZE + size]),
        n_samples, threads))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


def sup_qform_samples(fam: MatrixFamily, s: Sampler, n_samples: int, seed: int, *,
                      threads: int = 1) -> np.ndarray:
    """Draws of ``Z = max_k (X^T A_k X - a_k)``."""
    if fam.dimension != s.dimension:
        raise DimensionMismatch("family and sampler dimensions differ")
    x = sample(s, seed, n_samples, stream=STREAM_MAIN, threads=threads)
    return np.concatenate(map_blocks(
        lambda i, size: sup_qform(fam, x[i * BLOCK_SIZE: i * BLOCK_SIZE + size]),
        n_samples, threads))

"""Dense real linear algebra: norms, symmetrization and a Jacobi eigensolver.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Every function
here is pure; nothing keeps state between calls.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence, NotSymmetric

POWER_ITERATION_CAP = 10_000
JACOBI_SWEEP_CAP = 100
_EPS = np.finfo(float).eps


def as_matrix(a) -> np.ndarray:
    """Validate ``a`` as a finite 2-D float array and return it as such."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch("matrix entries must be finite")
    return m


def _square(a) -> np.ndarray:
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def _pow2_scale(m: np.ndarray) -> float:
    """A power of two near ``max |m_ij|``; dividing by it is exact and keeps
    squared entries away from underflow and overflow."""
    top = float(np.max(np.abs(m))) if m.size else 0.0
    if top == 0.0:
        return 1.0
    return math.ldexp(1.0, math.frexp(top)[1])


def hs_norm(a) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    m = as_matrix(a)
    c = _pow2_scale(m)
    m = m / c
    return float(np.sqrt(np.sum(m * m))) * c


def op_norm(a, tol: float = 1e-10, seed: int = 0) -> float:
    """Largest singular value of ``a`` by power iteration on ``a.T @ a``.

    The start vector is drawn from ``seed``; if it happens to be annihilated
    by ``a`` the iteration restarts once from ``seed + 1``.  Iteration stops
    once the Rayleigh quotient has stabilised: its last change, extrapolated
    geometrically with the observed contraction rate, is below ``tol``
    relative.  A run that reaches the cap with a plain relative change below
    ``tol`` (a nearly degenerate top singular value) is also accepted.
    """
    if not 0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")
    m = as_matrix(a)
    if not np.any(m):
        return 0.0
    if m.shape[1] == 1:
        return hs_norm(m)
    c = _pow2_scale(m)
    m = m / c
    gram = m.T @ m
    for attempt in range(2):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed + attempt, 0x5EED])))
        v = rng.standard_normal(m.shape[1])
        v /= np.linalg.norm(v)
        w = gram @ v
        lam = float(v @ w)
        if lam <= 0.0:
            continue
        prev_step = None
        for _ in range(POWER_ITERATION_CAP):
            v = w / np.linalg.norm(w)
            w = gram @ v
            new = float(v @ w)
            step = abs(new - lam)
            lam = new
            if step == 0.0:
                return float(np.sqrt(new)) * c
            if prev_step is not None:
                rate = step / prev_step
                if rate < 1.0 and step * rate / (1.0 - rate) <= tol * new:
                    return float(np.sqrt(new)) * c
            prev_step = step
        if prev_step <= tol * lam:
            return float(np.sqrt(lam)) * c
        raise NonConvergence(f"power iteration did not stabilise in {POWER_ITERATION_CAP} steps")
    raise NonConvergence("power iteration stalled on a zero projection twice")


def symmetrize(a) -> np.ndarray:
    m = _square(a)
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class SpectrumSplit:
    """Eigendecomposition ``s = U diag(eigenvalues) U.T`` with the spectrum
    split into nonnegative positive and negative parts."""

    eigen_basis: np.ndarray
    eigenvalues: np.ndarray
    positive_part: np.ndarray
    negative_part: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigen_basis
        return (u * self.eigenvalues) @ u.T


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair exactly once."""
    m = n + (n % 2)
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = idx[i], idx[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def eigh(s, tol: float = 1e-12) -> SpectrumSplit:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Rotations on disjoint index pairs commute, so each round-robin round is
    applied as one vectorised update.  Eigenvalues are returned in descending
    order, ties broken by original diagonal position.
    """
    a = _square(s).copy()
    n = a.shape[0]
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise NotSymmetric("matrix is not symmetric to 1e-12 relative")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    fro = np.sqrt(np.sum(a * a))
    if n > 1 and fro > 0.0:
        target = max(1e-2 * tol, n * _EPS) * fro
        rounds = _round_robin(n)
        sweeps = 0
        while True:
            offdiag = a - np.diag(np.diag(a))
            off = np.sqrt(np.sum(offdiag * offdiag))
            if off <= target:
                break
            if sweeps == JACOBI_SWEEP_CAP:
                raise NonConvergence(f"Jacobi did not converge in {JACOBI_SWEEP_CAP} sweeps")
            sweeps += 1
            for p, q in rounds:
                apq = a[p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                p, q, apq = p[active], q[active], apq[active]
                # a subnormal apq overflows tau to inf, which gives t = 0 (no rotation)
                with np.errstate(over="ignore"):
                    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = cp * c - cq * sn
                a[:, q] = cp * sn + cq * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c[:, None] * rp - sn[:, None] * rq
                a[q, :] = sn[:, None] * rp + c[:, None] * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = vp * c - vq * sn
                v[:, q] = vp * sn + vq * c
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    v = v[:, order]
    return SpectrumSplit(
        eigen_basis=v,
        eigenvalues=lam,
        positive_part=np.where(lam > 0.0, lam, 0.0),
        negative_part=np.where(lam < 0.0, -lam, 0.0),
    )


def sqrtm_psd(s, tol: float = 1e-12) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix."""
    split = eigh(s, tol)
    lam = split.eigenvalues
    floor = -1e-10 * max(np.max(np.abs(lam)), 1.0)
    if lam.size and lam[-1] < floor:
        raise ValueError("matrix is not positive semidefinite")
    u = split.eigen_basis
    return (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.T


def is_orthogonal(u, tol: float = 1e-10) -> bool:
    m = as_matrix(u)
    if m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) <= tol)


def format_float(x: float) -> str:
    """17 significant digits; round-trips every double."""
    return f"{float(x):.17g}"


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    """Read the plain-text matrix format: a ``rows cols`` header line then
    one whitespace-separated row per line."""
    with open(path) as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln and not ln.startswith("#")]
    if not lines:
        raise DimensionMismatch(f"{path}: empty matrix file")
    try:
        rows, cols = (int(tok) for tok in lines[0].split())
        data = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise DimensionMismatch(f"{path}: {exc}") from None
    if len(data) != rows or any(len(r) != cols for r in data):
        raise DimensionMismatch(f"{path}: header says {rows}x{cols} but body disagrees")
    return as_matrix(np.array(data, dtype=float).reshape(rows, cols))


def write_matrix(path: str | os.PathLike, a) -> None:
    m = as_matrix(a)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(format_float(x) for x in row) + "\n")


def read_vectors(path: str | os.PathLike) -> np.ndarray:
    """Whitespace-separated vectors, one per line; returns a 2-D array."""
    with open(path) as fh:
        rows = [ln.split() for ln in (raw.strip() for raw in fh) if ln and not ln.startswith("#")]
    try:
        data = [[float(tok) for tok in r] for r in rows]
    except ValueError as exc:
        raise DimensionMismatch(f"{path}: {exc}") from None
    if not data or len({len(r) for r in data}) != 1:
        raise DimensionMismatch(f"{path}: vectors must be non-empty and of equal length")
    out = np.array(data, dtype=float)
    if not np.all(np.isfinite(out)):
        raise DimensionMismatch(f"{path}: entries must be finite")
    return out

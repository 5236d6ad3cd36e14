"""Parsing of the command-line mini-languages and the INI configuration file.

Grammar summary

* t-grid: ``start:stop:step`` (``stop`` included when hit to 1e-9 steps) or
  a comma-separated list.
* matrix: ``identity<n>``, ``zero<n>``, ``randsym<n>[@seed]``,
  ``diag:v1,v2,...`` or a path to a matrix text file.
* family: ``randsym<n>x<k>[@seed]`` or a directory holding ``manifest.txt``
  whose lines are ``filename [center]``.
* basis: ``identity<d>`` or a matrix text file whose rows are the basis vectors.
"""
from __future__ import annotations

import configparser
import hashlib
import math
import re
from pathlib import Path
from typing import Callable

import numpy as np

from . import linalg
from .distributions import (Affine, BoundedProduct, GaussianWithCov, RademacherProduct,
                            Sampler, SamplingWithoutReplacement, StandardGaussian)
from .errors import InvalidConfig
from .quadform import MatrixFamily
from .rng import STREAM_AUXILIARY, generator

MANIFEST = "manifest.txt"


def parse_float_list(text: str) -> np.ndarray:
    try:
        vals = [float(tok) for tok in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise InvalidConfig(f"not a list of numbers: {text!r}") from None
    if not vals:
        raise InvalidConfig("empty list")
    return np.array(vals)


def parse_t_grid(text: str) -> np.ndarray:
    """``start:stop:step`` or a comma list; the result must be increasing."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidConfig(f"t-grid must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise InvalidConfig(f"t-grid must be start:stop:step, got {text!r}") from None
        if not (math.isfinite(start) and math.isfinite(stop) and step > 0 and stop >= start):
            raise InvalidConfig(f"invalid t-grid {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = start + step * np.arange(count)
    else:
        grid = parse_float_list(text)
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise InvalidConfig("t-grid must be nonnegative and strictly increasing")
    return grid


def random_symmetric(n: int, seed: int) -> np.ndarray:
    """``(G + G^T) / 2`` with standard normal ``G`` from the auxiliary stream."""
    g = generator(seed, STREAM_AUXILIARY, 7).standard_normal((n, n))
    return 0.5 * (g + g.T)


_SIZED = re.compile(r"^(identity|zero|randsym)(\d+)(?:@(\d+))?$")
_FAMILY = re.compile(r"^randsym(\d+)x(\d+)(?:@(\d+))?$")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def parse_matrix(text: str) -> np.ndarray:
    text = str(text).strip()
    m = _SIZED.match(text)
    if m:
        kind, n, seed = m.group(1), int(m.group(2)), int(m.group(3) or 0)
        if n < 1:
            raise InvalidConfig("matrix size must be positive")
        if kind == "identity":
            return np.eye(n)
        if kind == "zero":
            return np.zeros((n, n))
        return random_symmetric(n, seed)
    if text.startswith("diag:"):
        return np.diag(parse_float_list(text[5:]))
    path = Path(text)
    if not path.is_file():
        raise InvalidConfig(f"{text!r} is neither a matrix spec nor a file")
    return linalg.read_matrix(path)


def parse_family(text: str, make_sampler: Callable[[int], Sampler], *, seed: int = 0,
                 threads: int = 1) -> tuple[MatrixFamily, Sampler]:
    """Load a family; ``make_sampler(dimension)`` supplies the law used for
    centers the manifest does not give."""
    text = str(text).strip()
    m = _FAMILY.match(text)
    if m:
        n, k, base = int(m.group(1)), int(m.group(2)), int(m.group(3) or 0)
        if n < 1 or k < 1:
            raise InvalidConfig("family sizes must be positive")
        members = [random_symmetric(n, base + i) for i in range(k)]
        s = make_sampler(n)
        return MatrixFamily.for_sampler(members, s, seed=seed, threads=threads), s
    root = Path(text)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise InvalidConfig(f"{text!r} is neither a family spec nor a directory with {MANIFEST}")
    names, centers = [], []
    for raw in manifest.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) > 2:
            raise InvalidConfig(f"{manifest}: expected 'filename [center]', got {raw!r}")
        names.append(parts[0])
        try:
            centers.append(float(parts[1]) if len(parts) == 2 else None)
        except ValueError:
            raise InvalidConfig(f"{manifest}: bad center in {raw!r}") from None
    if not names:
        raise InvalidConfig(f"{manifest} lists no matrices")
    members = [linalg.read_matrix(root / name) for name in names]
    s = make_sampler(members[0].shape[0])
    if all(c is not None for c in centers):
        return MatrixFamily(tuple(members), np.array(centers)), s
    fam = MatrixFamily.for_sampler(members, s, seed=seed, threads=threads)
    filled = [c if c is not None else fam.centers[i] for i, c in enumerate(centers)]
    return MatrixFamily(fam.members, np.array(filled)), s


def parse_basis(text: str) -> np.ndarray:
    text = str(text).strip()
    m = re.match(r"^identity(\d+)$", text)
    if m:
        return np.eye(int(m.group(1)))
    path = Path(text)
    if not path.is_file():
        raise InvalidConfig(f"{text!r} is neither a basis spec nor a file")
    return linalg.read_matrix(path)


def build_sampler(kind: str, n: int, *, K: float | None = None, half_width: float = 1.0,
                  cov: str | None = None, population: str | None = None,
                  affine_u: str | None = None, affine_b: str | None = None) -> Sampler:
    """Sampler from its CLI description; ``n`` is the dimension (the sample
    size ``m`` for sampling without replacement)."""
    if kind == "gaussian":
        if K is not None:
            raise InvalidConfig("the standard Gaussian constant is fixed at sqrt(2)")
        s: Sampler = StandardGaussian(n)
    elif kind == "gaussian-cov":
        if cov is None:
            raise InvalidConfig("gaussian-cov needs a covariance matrix")
        s = GaussianWithCov(parse_matrix(cov), K)
    elif kind == "rademacher":
        s = RademacherProduct(n) if K is None else RademacherProduct(n, K)
    elif kind == "bounded":
        s = BoundedProduct(n, half_width, K)
    elif kind == "without-replacement":
        if population is None:
            raise InvalidConfig("without-replacement needs a population")
        pop = parse_float_list(Path(population).read_text() if Path(population).is_file() else population)
        s = SamplingWithoutReplacement(pop, n, K)
    else:
        raise InvalidConfig(f"unknown sampler {kind!r}")
    if s.dimension != n:
        raise InvalidConfig(f"sampler dimension {s.dimension} differs from {n}")
    if (affine_u is None) != (affine_b is None):
        raise InvalidConfig("an affine map needs both U and b")
    if affine_u is not None:
        s = Affine(s, parse_matrix(affine_u), parse_float_list(
            Path(affine_b).read_text() if Path(affine_b).is_file() else affine_b))
    return s


def read_config(path, section: str) -> dict[str, str]:
    """Key/value pairs of ``[section]`` (keys normalised to underscores)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise InvalidConfig(f"malformed config {path}: {exc}") from None
    if not parser.has_section(section):
        raise InvalidConfig(f"config {path} has no [{section}] section")
    return {k.replace("-", "_"): v for k, v in parser.items(section)}

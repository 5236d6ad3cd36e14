"""Command-line entry point.

Every subcommand writes ``<subcommand>.csv`` (or ``.json``) and a
``<subcommand>.meta.json`` sidecar into ``--output-dir``.  Options may come
from the ``[<subcommand>]`` section of an INI file given with ``--config``;
flags override file values.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 property-check violation (the report is still written).
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, linalg
from . import bounds as bnd
from .config import (build_sampler, file_digest, parse_basis, parse_family, parse_float_list,
                     parse_matrix, parse_t_grid, read_config)
from .covest import CovExperiment, Geometry, KLBasis, deviation_experiment
from .distributions import cov_opnorm_check, sample, verify_concentration
from .envelope import (TruncationSet, WeightedQuadratic, envelope_solve, phi, verify_envelope)
from .errors import ConfigError, InvalidConfig, NumericalError
from .montecarlo import TailConfig, lemma_checks, run_tail_experiment
from .quadform import centered_qform_samples
from .report import write_report
from .rng import check_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VIOLATION = 4


# option tables -------------------------------------------------------------

def _int(v) -> int:
    try:
        f = float(v)
        i = int(f)
    except (TypeError, ValueError, OverflowError):
        raise InvalidConfig(f"expected an integer, got {v!r}") from None
    if i != f:
        raise InvalidConfig(f"expected an integer, got {v!r}")
    return i


def _float(v) -> float:
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise InvalidConfig(f"expected a number, got {v!r}") from None
    if not math.isfinite(f):
        raise InvalidConfig(f"expected a finite number, got {v!r}")
    return f


def _str(v) -> str:
    return str(v).strip()


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    text = str(v).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"expected a boolean, got {v!r}")


def _list(v) -> list[str]:
    if isinstance(v, list):
        return v
    return [tok for tok in str(v).replace(",", " ").split() if tok]


@dataclass(frozen=True)
class Opt:
    name: str
    conv: Callable[[Any], Any]
    default: Any = None
    help: str = ""
    required: bool = False
    repeat: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


COMMON = [
    Opt("seed", _int, 0, "64-bit seed (default 0)"),
    Opt("output-dir", _str, ".", "directory receiving the report"),
    Opt("format", _str, "csv", "csv or json"),
    Opt("threads", _int, 1, "worker threads; results do not depend on it"),
]

SAMPLER = [
    Opt("sampler", _str, "gaussian",
        "gaussian, gaussian-cov, rademacher, bounded or without-replacement"),
    Opt("K", _float, None, "override the sampler's concentration constant"),
    Opt("half-width", _float, 1.0, "half-width for the bounded sampler"),
    Opt("cov", _str, None, "covariance matrix spec for gaussian-cov"),
    Opt("population", _str, None, "population list or file for without-replacement"),
    Opt("affine-u", _str, None, "orthogonal matrix spec of an affine image"),
    Opt("affine-b", _str, None, "shift list or file of an affine image"),
]

TAIL_COMMON = [
    Opt("N", _int, 100_000, "Monte Carlo sample size"),
    Opt("t-grid", _str, None, "start:stop:step or a list (default: automatic)"),
    Opt("confidence", _float, 0.99, "DKW band confidence"),
    Opt("param", _str, [], "bound parameter override key=value", repeat=True),
]

BOUND_PARAMS = ["hs", "op", "K", "covnorm", "n", "family-norm", "sup-op", "a", "b", "sigma-norm", "r"]

SUBCOMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "bound": ("evaluate a closed-form bound on a t-grid", [
        Opt("kind", _str, None, " / ".join(k.value for k in bnd.BoundKind), required=True),
        *[Opt(p, _float, None, f"bound parameter {p}") for p in BOUND_PARAMS],
        Opt("C", _float, 1.0, "absolute constant"),
        Opt("t-grid", _str, None, "start:stop:step or a list", required=True),
    ]),
    "tail": ("empirical tail of a centred quadratic form with fitted bounds", [
        Opt("matrix", _str, None, "identity<n>, zero<n>, randsym<n>[@seed], diag:... or a file",
            required=True),
        *SAMPLER, *TAIL_COMMON,
        Opt("bounds", _list, ["convex-hw"], "comma list of bound kinds"),
        Opt("center", _str, "auto", "auto, analytic or calibrate"),
    ]),
    "uniform-tail": ("empirical tail of a supremum over a matrix family", [
        Opt("family", _str, None, "randsym<n>x<k>[@seed] or a directory with manifest.txt",
            required=True),
        *SAMPLER, *TAIL_COMMON,
        Opt("bounds", _list, ["uniform-hw"], "comma list of bound kinds"),
        Opt("family-norm-samples", _int, None, "sample size for the family norm"),
    ]),
    "envelope": ("evaluate the tangent-plane envelope at given points", [
        Opt("weights", _str, None, "weight list or file", required=True),
        Opt("points", _str, None, "file of points, one per line", required=True),
        Opt("radius", _float, None, "radius R of the truncation set"),
        Opt("t", _float, None, "deviation level forming R with --second-moments"),
        Opt("second-moments", _str, None, "list or file of E Y_i^2"),
        Opt("verify", _bool, False, "also run the randomized property checks"),
        Opt("n-inner", _int, 1000, "points inside B for --verify"),
        Opt("n-outer", _int, 1000, "points outside B for --verify"),
        Opt("n-pairs", _int, 1000, "pairs for --verify"),
        Opt("tol", _float, 1e-9, "relative tolerance for --verify"),
    ]),
    "covest": ("covariance-estimation deviation experiment", [
        Opt("basis", _str, None, "identity<d> or a matrix file with rows x_j", required=True),
        Opt("geometry", _str, "euclidean", "euclidean or sup"),
        Opt("n", _int, 200, "samples per replication"),
        Opt("replications", _int, 500, "number of replications"),
        Opt("t-values", _str, "1,2,3", "list of t >= 1"),
        Opt("C", _float, None, "constant (default: fitted)"),
        Opt("n-mc", _int, 100_000, "samples for the effective rank"),
    ]),
    "verify-concentration": ("test convex concentration on random test functions", [
        *SAMPLER,
        Opt("dim", _int, None, "dimension", required=True),
        Opt("functions", _int, 30, "number of test functions"),
        Opt("N", _int, 100_000, "Monte Carlo sample size"),
        Opt("t-grid", _str, "0.25:8:0.25", "start:stop:step or a list"),
        Opt("declared-K", _float, None, "constant to test (default: the sampler's)"),
        Opt("confidence", _float, 0.99, "DKW band confidence"),
    ]),
    "lemmas": ("quantile and mean/median checks on samples", [
        *SAMPLER,
        Opt("dim", _int, None, "dimension (defaults to the matrix size)"),
        Opt("statistic", _str, "coordinate", "coordinate (first coordinate) or qform"),
        Opt("matrix", _str, None, "matrix spec for the qform statistic"),
        Opt("samples", _str, None, "file of scalar samples (overrides sampling)"),
        Opt("N", _int, 100_000, "Monte Carlo sample size"),
        Opt("declared-K", _float, None, "sub-Gaussian constant (default: the sampler's)"),
        Opt("p-grid", _str, "0.01,0.05,0.1,0.25,0.5", "quantile levels"),
        Opt("a", _float, None, "mixed-tail a (default: fitted)"),
        Opt("b", _float, None, "mixed-tail b (default: fitted)"),
        Opt("confidence", _float, 0.99, "DKW band confidence"),
    ]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hwlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"hwlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, (text, opts) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help=f"INI file with a [{name}] section")
        for opt in COMMON + opts:
            p.add_argument(f"--{opt.name}", dest=opt.dest, default=None,
                           action="append" if opt.repeat else "store", help=opt.help)
    return parser


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, config-file values and flags, in increasing priority."""
    opts = COMMON + SUBCOMMANDS[args.subcommand][1]
    known = {o.dest: o for o in opts}
    file_values: dict[str, Any] = {}
    if args.config:
        file_values = read_config(args.config, args.subcommand)
        unknown = sorted(set(file_values) - set(known))
        if unknown:
            raise InvalidConfig(f"unknown keys in [{args.subcommand}]: {', '.join(unknown)}")
    out: dict[str, Any] = {}
    for dest, opt in known.items():
        raw = getattr(args, dest)
        if raw is None and dest in file_values:
            raw = file_values[dest]
            if opt.repeat:
                raw = [ln.strip() for ln in str(raw).splitlines() if ln.strip()]
        if raw is None:
            if opt.required:
                raise InvalidConfig(f"--{opt.name} is required")
            out[dest] = opt.default
        elif opt.repeat:
            out[dest] = [opt.conv(v) for v in raw]
        else:
            out[dest] = opt.conv(raw)
    check_seed(out["seed"])
    if out["format"] not in ("csv", "json"):
        raise InvalidConfig("--format must be csv or json")
    if out["threads"] < 1:
        raise InvalidConfig("--threads must be at least 1")
    return out


def _echo(cfg: dict) -> dict:
    """Config for the sidecar: run-local knobs dropped, input files hashed."""
    echo = {k: v for k, v in cfg.items() if k not in ("threads", "output_dir", "format")}
    digests = {}
    for k, v in echo.items():
        if isinstance(v, str) and v and Path(v).is_file():
            digests[k] = file_digest(v)
    if digests:
        echo["input_sha256"] = digests
    return echo


def _list_or_file(text: str) -> np.ndarray:
    path = Path(text)
    return parse_float_list(path.read_text() if path.is_file() else text)


def _sampler(cfg: dict, n: int):
    return build_sampler(cfg["sampler"], n, K=cfg["K"], half_width=cfg["half_width"],
                         cov=cfg["cov"], population=cfg["population"],
                         affine_u=cfg["affine_u"], affine_b=cfg["affine_b"])


def _params(pairs: list[str]) -> dict[str, float]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise InvalidConfig(f"--param expects key=value, got {pair!r}")
        out[key.strip().replace("-", "_")] = _float(value)
    return out


def _bound_params(kinds, overrides: dict[str, float]) -> dict[str, dict]:
    per_kind = {}
    for kind in kinds:
        names = bnd.parameter_names(kind)
        per_kind[bnd.BoundKind(kind).value] = {k: v for k, v in overrides.items() if k in names}
    return per_kind


# subcommands ---------------------------------------------------------------

def cmd_bound(cfg: dict) -> tuple[dict, dict, int]:
    kind = bnd.BoundKind(cfg["kind"]) if cfg["kind"] in {k.value for k in bnd.BoundKind} else None
    if kind is None:
        raise InvalidConfig(f"unknown bound kind {cfg['kind']!r}")
    t = parse_t_grid(cfg["t_grid"])
    params = {}
    for name in bnd.parameter_names(kind):
        value = cfg[name]
        if value is None:
            raise InvalidConfig(f"{kind.value} needs --{name.replace('_', '-')}")
        params[name] = value
    spec = bnd.BoundSpec(kind, params, cfg["C"])
    values = np.asarray(spec(t), dtype=float)
    return {"t": t, "bound": values}, {}, EXIT_OK


def _tail_report(tail_cfg: TailConfig, threads: int) -> tuple[dict, dict, int]:
    rep = run_tail_experiment(tail_cfg, threads)
    return rep.columns(), rep.metadata(), EXIT_OK if rep.all_feasible else EXIT_VIOLATION


def cmd_tail(cfg: dict) -> tuple[dict, dict, int]:
    a = parse_matrix(cfg["matrix"])
    s = _sampler(cfg, a.shape[0])
    overrides = _params(cfg["param"])
    _validate_kinds(cfg["bounds"])
    tail_cfg = TailConfig(
        sampler=s, n_samples=cfg["N"], seed=cfg["seed"], matrix=a,
        t_grid=None if cfg["t_grid"] is None else parse_t_grid(cfg["t_grid"]),
        bounds=tuple(cfg["bounds"]), bound_params=_bound_params(cfg["bounds"], overrides),
        confidence=cfg["confidence"], center=cfg["center"])
    return _tail_report(tail_cfg, cfg["threads"])


def cmd_uniform_tail(cfg: dict) -> tuple[dict, dict, int]:
    fam, s = parse_family(cfg["family"], lambda n: _sampler(cfg, n), seed=cfg["seed"],
                          threads=cfg["threads"])
    overrides = _params(cfg["param"])
    _validate_kinds(cfg["bounds"])
    tail_cfg = TailConfig(
        sampler=s, n_samples=cfg["N"], seed=cfg["seed"], family=fam,
        t_grid=None if cfg["t_grid"] is None else parse_t_grid(cfg["t_grid"]),
        bounds=tuple(cfg["bounds"]), bound_params=_bound_params(cfg["bounds"], overrides),
        confidence=cfg["confidence"], family_norm_samples=cfg["family_norm_samples"])
    return _tail_report(tail_cfg, cfg["threads"])


def _validate_kinds(kinds) -> None:
    valid = {k.value for k in bnd.BoundKind}
    for k in kinds:
        if k not in valid:
            raise InvalidConfig(f"unknown bound kind {k!r}")


def cmd_envelope(cfg: dict) -> tuple[dict, dict, int]:
    mu = _list_or_file(cfg["weights"])
    w = WeightedQuadratic(mu)
    if cfg["radius"] is not None:
        if cfg["t"] is not None or cfg["second_moments"] is not None:
            raise InvalidConfig("give either --radius or --t with --second-moments")
        B = TruncationSet(mu, cfg["radius"], {"radius": cfg["radius"]})
    elif cfg["t"] is not None and cfg["second_moments"] is not None:
        B = TruncationSet.from_moments(mu, _list_or_file(cfg["second_moments"]), cfg["t"])
    else:
        raise InvalidConfig("give either --radius or --t with --second-moments")
    y = linalg.read_vectors(cfg["points"])
    sol = envelope_solve(w, B, y)
    cols = {"index": np.arange(y.shape[0]), "phi": phi(w, y), "f": sol.value,
            "inside": sol.inside.astype(int), "nu": sol.nu}
    meta = {"radius": B.radius, "lipschitz_M": B.lipschitz_constant, "provenance": B.provenance}
    status = EXIT_OK
    if cfg["verify"]:
        rep = verify_envelope(w, B, cfg["n_inner"], cfg["n_outer"], cfg["n_pairs"], cfg["seed"],
                              cfg["tol"])
        meta["verification"] = {"ok": rep.ok, "counts": rep.counts, "violations": [
            {"check": v.check, "detail": v.detail, "points": [list(p) for p in v.points]}
            for v in rep.violations]}
        if not rep.ok:
            status = EXIT_VIOLATION
    return cols, meta, status


def cmd_covest(cfg: dict) -> tuple[dict, dict, int]:
    try:
        geom = Geometry(cfg["geometry"])
    except ValueError:
        raise InvalidConfig(f"unknown geometry {cfg['geometry']!r}") from None
    exp = CovExperiment(KLBasis(parse_basis(cfg["basis"])), geom, cfg["n"], cfg["replications"],
                        cfg["seed"], tuple(parse_float_list(cfg["t_values"])), cfg["C"], cfg["n_mc"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        rep = deviation_experiment(exp, cfg["threads"])
    for w in caught:
        print(f"hwlab: warning: {w.message}", file=sys.stderr)
    return rep.columns(), rep.metadata(), EXIT_OK if rep.feasible else EXIT_VIOLATION


def cmd_verify_concentration(cfg: dict) -> tuple[dict, dict, int]:
    s = _sampler(cfg, cfg["dim"])
    t = parse_t_grid(cfg["t_grid"])
    if t[0] == 0.0:
        t = t[1:]
    rep = verify_concentration(s, cfg["functions"], cfg["N"], cfg["seed"], t,
                               K=cfg["declared_K"], confidence=cfg["confidence"],
                               threads=cfg["threads"])
    cov = cov_opnorm_check(s, cfg["N"], cfg["seed"], K=cfg["declared_K"], threads=cfg["threads"])
    v = rep.violations
    cols = {"function_index": [x.function_index for x in v], "function_kind": [x.function_kind for x in v],
            "t": [x.t for x in v], "survival": [x.survival for x in v],
            "band_lo": [x.band_lo for x in v], "bound": [x.bound for x in v]}
    meta = {"K": rep.K, "n_functions": rep.n_functions, "n_violations": len(v),
            "covariance_check": cov._asdict(), "sampler": s.describe()}
    ok = rep.empty and cov.passed
    return cols, meta, EXIT_OK if ok else EXIT_VIOLATION


def cmd_lemmas(cfg: dict) -> tuple[dict, dict, int]:
    if cfg["samples"] is not None:
        z = linalg.read_vectors(cfg["samples"]).ravel()
        if cfg["declared_K"] is None:
            raise InvalidConfig("--declared-K is required with --samples")
        K = cfg["declared_K"]
    elif cfg["statistic"] == "coordinate":
        if cfg["dim"] is None:
            raise InvalidConfig("--dim is required for the coordinate statistic")
        s = _sampler(cfg, cfg["dim"])
        z = sample(s, cfg["seed"], cfg["N"], threads=cfg["threads"])[:, 0]
        K = s.K if cfg["declared_K"] is None else cfg["declared_K"]
    elif cfg["statistic"] == "qform":
        if cfg["matrix"] is None or cfg["declared_K"] is None:
            raise InvalidConfig("the qform statistic needs --matrix and --declared-K")
        a = parse_matrix(cfg["matrix"])
        s = _sampler(cfg, a.shape[0])
        z = centered_qform_samples(a, s, cfg["N"], cfg["seed"], threads=cfg["threads"])
        K = cfg["declared_K"]
    else:
        raise InvalidConfig(f"unknown statistic {cfg['statistic']!r}")
    rep = lemma_checks(z, K, parse_float_list(cfg["p_grid"]), cfg["a"], cfg["b"], cfg["confidence"])
    q = rep.quantiles
    cols = {"p": [r.p for r in q], "quantile": [r.quantile for r in q], "bound": [r.bound for r in q],
            "allowance": [r.allowance for r in q], "pass": [int(r.passed) for r in q]}
    g = rep.gap
    meta = {"K": K, "gap_check": {"mean": g.mean, "median": g.median, "gap": g.gap, "bound": g.bound,
                                  "allowance": g.allowance, "a": g.a, "b": g.b, "passed": g.passed}}
    return cols, meta, EXIT_OK if rep.ok else EXIT_VIOLATION


COMMANDS = {
    "bound": cmd_bound,
    "tail": cmd_tail,
    "uniform-tail": cmd_uniform_tail,
    "envelope": cmd_envelope,
    "covest": cmd_covest,
    "verify-concentration": cmd_verify_concentration,
    "lemmas": cmd_lemmas,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        columns, meta, status = COMMANDS[args.subcommand](cfg)
        meta = {"subcommand": args.subcommand, "seed": cfg["seed"], "config": _echo(cfg), **meta}
        paths = write_report(cfg["output_dir"], args.subcommand.replace("-", "_"), columns, meta,
                             cfg["format"])
    except (ConfigError, ValueError) as exc:
        print(f"hwlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"hwlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"hwlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    if status == EXIT_VIOLATION:
        print("hwlab: property check failed; see the report", file=sys.stderr)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

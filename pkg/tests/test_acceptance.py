"""Acceptance criteria, one test per criterion at the stated sizes and tolerances.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""
import filecmp
import itertools
import math

import numpy as np
import pytest
from scipy import stats

from hwlab import bounds as bnd
from hwlab import linalg
from hwlab.bounds import BoundSpec
from hwlab.cli import run
from hwlab.config import random_symmetric
from hwlab.covest import (CovExperiment, Geometry, KLBasis, deviation_experiment, empirical_cov,
                          gamma_norm_mc, gordon_chevet_rhs, kl_sample, op_distance)
from hwlab.distributions import StandardGaussian
from hwlab.envelope import (LipschitzWitnessSet, TruncationSet, WeightedQuadratic, envelope_f,
                            envelope_projected_gradient, mcshane_extend, sample_in_set,
                            verify_envelope)
from hwlab.montecarlo import (TailConfig, empirical_tail, fit_constant, lemma_checks,
                              run_tail_experiment)
from hwlab.quadform import MatrixFamily, centered_qform_samples
from hwlab.rng import generator
from hwlab.special import chi_square_oracle

pytestmark = pytest.mark.acceptance

P_GRID = [0.01, 0.05, 0.1, 0.25, 0.5]


def test_criterion_01_chi_square_oracle_agreement():
    z = centered_qform_samples(np.eye(16), StandardGaussian(16), 200_000, 0)
    t = np.arange(0.0, 40.0 + 1e-9, 0.5)
    curve = empirical_tail(z, t, confidence=0.99, center=0.0)
    err = np.abs(curve.survival - chi_square_oracle(16, t))
    print(f"max |empirical - oracle| = {err.max():.5f}, band halfwidth = {curve.band_halfwidth:.5f}")
    assert np.all(err <= curve.band_halfwidth)


@pytest.mark.parametrize("seed", range(5))
def test_criterion_02_convex_hw_feasibility(seed):
    a = random_symmetric(32, seed)
    cfg = TailConfig(StandardGaussian(32), 100_000, seed, matrix=a, bounds=("convex-hw",),
                     bound_params={"convex-hw": {"covnorm": 1.0, "K": math.sqrt(2)}})
    rep = run_tail_experiment(cfg)
    fit = rep.fits[0]
    print(f"seed {seed}: fitted C = {fit.constant_C:.4g}, margin = {fit.margin:.3g}")
    assert fit.feasible and fit.constant_C <= 64
    assert np.all(np.asarray(rep.specs[0](rep.curve.t_grid)) >= rep.curve.band_hi)


def test_criterion_03_uniform_hw_feasibility():
    members = [random_symmetric(16, 100 + k) for k in range(50)]
    s = StandardGaussian(16)
    fam = MatrixFamily.for_sampler(members, s)
    cfg = TailConfig(s, 100_000, 3, family=fam, bounds=("uniform-hw",),
                     family_norm_samples=100_000)
    rep = run_tail_experiment(cfg)
    fit = rep.fits[0]
    print(f"family norm = {rep.derived['family_norm']:.4f} +- {rep.derived['family_norm_se']:.4f}, "
          f"fitted C = {fit.constant_C:.4g}")
    assert fit.feasible and fit.constant_C <= 64


def test_criterion_04_convex_hw_improves_vu_wang():
    K = math.sqrt(2)
    for seed in range(3):
        a = random_symmetric(32, seed)
        hs, op = linalg.hs_norm(a), linalg.op_norm(a)
        t = np.linspace(0.0, 50 * K * K * hs, 1000)
        for n in (8, 64, 512):
            ours = bnd.convex_hw(t, hs, op, K, 1.0, 2.0)
            theirs = bnd.vu_wang(t, hs, op, K, n, 2.0)
            assert np.all(ours <= theirs), (seed, n)


def test_criterion_05_quantile_lower_bound():
    z = generator(5, 0, 0).standard_normal(100_000)
    rep = lemma_checks(z, math.sqrt(2), P_GRID)
    for q in rep.quantiles:
        print(f"p={q.p}: q_p={q.quantile:.4f} bound={q.bound:.4f} allowance={q.allowance:.4f}")
    assert all(q.passed for q in rep.quantiles)
    for p in P_GRID:
        assert stats.norm.ppf(p) >= -math.sqrt(2) * math.sqrt(math.log(2 / p))
    assert stats.norm.ppf(0.01) == pytest.approx(-2.326, abs=1e-3)
    assert -math.sqrt(2 * math.log(200)) == pytest.approx(-3.256, abs=1e-3)


@pytest.mark.parametrize("law", ["gaussian", "centred-exponential"])
def test_criterion_06_median_mean_gap(law):
    rng = generator(6, 0, 0)
    z = rng.standard_normal(100_000) if law == "gaussian" else rng.standard_exponential(100_000) - 1.0
    gap = lemma_checks(z, math.sqrt(2), [0.5]).gap
    print(f"{law}: |mean - median| = {gap.gap:.4f}, bound = {gap.bound:.4f} (a={gap.a:.3f}, b={gap.b:.3f})")
    assert gap.passed


def _envelope_instance(k):
    rng = generator(7, 5, k)
    n = int(rng.integers(1, 65))
    mu = rng.uniform(0.0, 3.0, n)
    mu[rng.random(n) < 0.1] = 0.0
    if not np.any(mu):
        mu[0] = 1.0
    B = TruncationSet.from_moments(mu, rng.uniform(0.2, 3.0, n), t=float(rng.uniform(0.1, 10.0)))
    return WeightedQuadratic(mu), B


def test_criterion_07_envelope_properties():
    for k in range(20):
        w, B = _envelope_instance(k)
        rep = verify_envelope(w, B, 1000, 1000, 10_000, seed=k, tol=1e-9, lipschitz_tol=1e-6)
        assert rep.ok, (k, rep.violations[:2])
        assert rep.counts["inner"] == 1000 and rep.counts["outer"] == 1000

    worst = 0.0
    for k in range(100):
        rng = generator(7, 6, k)
        n = int(rng.integers(1, 65))
        mu = rng.uniform(0.25, 2.0, n)
        w, B = WeightedQuadratic(mu), TruncationSet(mu, float(rng.uniform(0.5, 5.0)))
        y = sample_in_set(B, rng, 1, (0.2, 4.0))[0]
        f, ref = envelope_f(w, B, y), envelope_projected_gradient(w, B, y)
        worst = max(worst, abs(f - ref) / abs(ref))
    print(f"worst bisection/projected-gradient relative gap = {worst:.3g}")
    assert worst <= 1e-8

    for k in range(20):
        rng = generator(7, 7, k)
        n = int(rng.integers(1, 65))
        R = float(rng.uniform(0.1, 5.0))
        w, B = WeightedQuadratic(np.ones(n)), TruncationSet(np.ones(n), R)
        y = sample_in_set(B, rng, 200, (1.0001, 5.0))
        r = np.linalg.norm(y, axis=1)
        np.testing.assert_allclose(envelope_f(w, B, y), R * (2 * r - R), rtol=1e-9)


def test_criterion_08_mcshane_extension():
    w, B = _envelope_instance(3)
    rng = generator(8, 0, 0)
    wit = LipschitzWitnessSet.from_envelope(w, B, sample_in_set(B, rng, 300))
    np.testing.assert_array_equal(mcshane_extend(wit, wit.points), envelope_f(w, B, wit.points))
    spread = 2.0 * np.max(np.abs(wit.points), axis=0) + 1.0
    u = rng.uniform(-1, 1, (10_000, w.dimension)) * spread
    v = rng.uniform(-1, 1, (10_000, w.dimension)) * spread
    gap = np.abs(mcshane_extend(wit, u) - mcshane_extend(wit, v))
    allowed = wit.lipschitz_M * np.linalg.norm(u - v, axis=1)
    assert np.all(gap <= allowed * (1 + 1e-12))


def _brute_sup_distance(delta, m=41):
    d = delta.shape[0]
    pts = []
    for wts in itertools.product(np.linspace(0, 1, m), repeat=d):
        if abs(sum(wts) - 1) < 1e-12:
            for signs in itertools.product((-1, 1), repeat=d):
                pts.append(np.array(signs) * np.array(wts))
    u = np.array(pts)
    return float(np.max(u @ delta @ u.T))


def test_criterion_09_covariance_deviation_experiment():
    cfg = CovExperiment(KLBasis.identity(20), Geometry.EUCLIDEAN, n=200, replications=500, seed=9,
                        t_values=(1.0, 2.0, 3.0))
    rep = deviation_experiment(cfg)
    for row in zip(rep.t, rep.empirical_quantile, rep.threshold, rep.fitted_C):
        print("t=%g quantile=%.4f threshold=%.4f fitted C=%.4g" % row)
    assert np.all(np.isfinite(rep.fitted_C)) and np.max(rep.fitted_C) <= 64
    assert rep.feasible

    scaled = CovExperiment(cfg.basis.scaled(2.0), Geometry.EUCLIDEAN, n=200, replications=500,
                           seed=9, t_values=(1.0, 2.0, 3.0))
    rep2 = deviation_experiment(scaled)
    np.testing.assert_array_equal(rep2.passed, rep.passed)
    np.testing.assert_allclose(rep2.deviations, 4 * rep.deviations, rtol=1e-10)
    np.testing.assert_allclose(rep2.threshold, 4 * rep.threshold, rtol=1e-10)

    basis = KLBasis(generator(9, 1, 0).standard_normal((3, 3)))
    sup_cfg = CovExperiment(basis, Geometry.SUP, n=50, replications=60, seed=9, t_values=(1.0,))
    sup_rep = deviation_experiment(sup_cfg)
    sig = basis.covariance
    for r in range(10):
        sig_hat = empirical_cov(kl_sample(basis, 50, 9, replication=r))
        brute = _brute_sup_distance(sig_hat - sig)
        assert op_distance(sig_hat, sig, "sup") == pytest.approx(brute, abs=1e-6)
        assert sup_rep.deviations[r] == op_distance(sig_hat, sig, "sup")


def test_criterion_10_gordon_chevet():
    basis = KLBasis.identity(16)
    est, se = gamma_norm_mc(basis, 25, 500, 10)
    rhs = gordon_chevet_rhs(basis, 25)
    print(f"E||Gamma|| ~ {est:.4f} +- {se:.4f}, right-hand side = {rhs:.4f}")
    assert est <= rhs + 3 * se


def _cli_runs(tmp_path):
    pts = tmp_path / "points.txt"
    pts.write_text("3 0 1\n0.1 0.2 0.3\n-2 5 1\n")
    linalg.write_matrix(tmp_path / "m0.txt", random_symmetric(4, 1))
    linalg.write_matrix(tmp_path / "m1.txt", np.eye(4))
    (tmp_path / "manifest.txt").write_text("m0.txt\nm1.txt 4\n")
    cfg = tmp_path / "covest.ini"
    cfg.write_text("[covest]\nbasis = identity6\nn = 30\nreplications = 120\nt-values = 1,2\n"
                   "n-mc = 10000\n")
    return {
        "bound": ["--kind", "convex-hw", "--hs", "1", "--op", "1", "--K", "1.414", "--covnorm", "1",
                  "--C", "8", "--t-grid", "0:10:0.1"],
        "tail": ["--matrix", "identity16", "--sampler", "gaussian", "--N", "30000", "--seed", "7"],
        "uniform-tail": ["--family", str(tmp_path), "--sampler", "rademacher", "--N", "20000",
                         "--family-norm-samples", "10000"],
        "envelope": ["--weights", "1,0.5,2", "--t", "2", "--second-moments", "1,1,1",
                     "--points", str(pts), "--verify", "true"],
        "covest": ["--config", str(cfg)],
        "verify-concentration": ["--dim", "5", "--sampler", "bounded", "--N", "20000"],
        "lemmas": ["--statistic", "qform", "--matrix", "diag:1,-1,2", "--declared-K", "8",
                   "--N", "20000"],
    }


def test_criterion_11_cli_determinism(tmp_path):
    runs = _cli_runs(tmp_path)
    for name, args in runs.items():
        dirs = []
        for label, threads in (("a", 1), ("b", 1), ("c", 4)):
            out = tmp_path / f"{name}-{label}"
            code = run([name, *args, "--seed", "11", "--threads", str(threads),
                        "--output-dir", str(out)] if "--seed" not in args else
                       [name, *args, "--threads", str(threads), "--output-dir", str(out)])
            assert code in (0, 4), (name, code)
            dirs.append(out)
        files = sorted(p.name for p in dirs[0].iterdir())
        assert len(files) == 2, files
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
        assert not mismatch and not errors, (name, mismatch)
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[2], files, shallow=False)
        assert not mismatch and not errors, (name, mismatch)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))

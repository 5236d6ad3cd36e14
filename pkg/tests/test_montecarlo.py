import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hwlab.bounds import BoundSpec
from hwlab.distributions import RademacherProduct, StandardGaussian, dkw_halfwidth
from hwlab.errors import InsufficientSamples, InvalidConfig, InvalidParams
from hwlab.montecarlo import (C_GRID, CenterMode, TailConfig, empirical_tail, fit_constant,
                              fit_mixed_tail, lemma_checks, run_tail_experiment,
                              smallest_quantile)
from hwlab.quadform import MatrixFamily
from hwlab.special import chi_square_oracle


def test_c_grid_is_quarter_octaves():
    assert C_GRID[0] == 2.0**-2 and C_GRID[-1] == 2.0**10
    assert len(C_GRID) == 49
    np.testing.assert_allclose(np.diff(np.log2(C_GRID)), 0.25)


def test_empirical_tail_counts_ties_as_exceedances():
    z = np.array([-2.0, -1.0, 0.0, 1.0, 2.0] * 20)
    curve = empirical_tail(z, [0.0, 1.0, 1.5, 2.0, 2.5])
    np.testing.assert_allclose(curve.survival, [1.0, 0.8, 0.4, 0.4, 0.0])
    assert curve.center == 0.0


def test_empirical_tail_median_center():
    z = np.concatenate([np.zeros(99), [1000.0]])
    curve = empirical_tail(z, [0.5], center_mode="median")
    assert curve.center == 0.0
    assert curve.survival[0] == pytest.approx(0.01)


def test_empirical_tail_needs_samples():
    with pytest.raises(InsufficientSamples):
        empirical_tail(np.zeros(10), [1.0])


def test_empirical_tail_rejects_bad_grid():
    with pytest.raises(InvalidConfig):
        empirical_tail(np.zeros(200), [1.0, 0.5])


def test_band_is_clipped():
    curve = empirical_tail(np.zeros(100), [0.0, 1.0])
    assert np.all(curve.band_lo >= 0) and np.all(curve.band_hi <= 1)
    assert curve.band_halfwidth == pytest.approx(dkw_halfwidth(100, 0.99))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_survival_is_nonincreasing(seed):
    z = np.random.default_rng(seed).standard_normal(300)
    curve = empirical_tail(z, np.linspace(0, 4, 30))
    assert np.all(np.diff(curve.survival) <= 0)


def test_fit_constant_is_smallest_feasible_grid_value():
    z = np.random.default_rng(0).standard_normal(20_000)
    curve = empirical_tail(z, np.linspace(0, 4, 41))
    spec = BoundSpec("mixed-tail", {"a": 1.0, "b": 1.0})
    fit = fit_constant(curve, spec)
    assert fit.feasible and fit.margin >= 0
    k = C_GRID.index(fit.constant_C)
    if k > 0:
        below = np.asarray(spec(curve.t_grid, C_GRID[k - 1]))
        assert np.any(below < curve.survival + curve.band_halfwidth)


def test_fit_constant_reports_infeasible():
    z = np.concatenate([np.zeros(100), np.full(100, 1e6)])
    curve = empirical_tail(z, [1e5], center=0.0)
    fit = fit_constant(curve, BoundSpec("mixed-tail", {"a": 1e-3, "b": 1e-3}))
    assert not fit.feasible and fit.margin < 0


def test_fit_constant_refuses_threshold_bounds():
    curve = empirical_tail(np.zeros(200), [1.0])
    with pytest.raises(InvalidParams):
        fit_constant(curve, BoundSpec("kl-deviation", {"sigma_norm": 1, "r": 1, "n": 10}))


def test_chi_square_tail_within_band():
    cfg = TailConfig(StandardGaussian(6), 60_000, 3, matrix=np.eye(6),
                     t_grid=np.arange(0, 20.5, 0.5))
    rep = run_tail_experiment(cfg)
    err = np.abs(rep.curve.survival - chi_square_oracle(6, rep.curve.t_grid))
    assert np.all(err <= rep.curve.band_halfwidth)
    assert rep.all_feasible


def test_tail_report_columns_and_metadata():
    cfg = TailConfig(RademacherProduct(4), 5000, 1, matrix=np.diag([1.0, 2.0, -1.0, 0.5]),
                     bounds=("convex-hw", "classic-hw"))
    rep = run_tail_experiment(cfg)
    cols = rep.columns()
    assert list(cols) == ["t", "survival", "band_lo", "band_hi", "bound_1", "bound_2"]
    assert cols["t"].size == 101
    meta = rep.metadata()
    assert meta["derived"]["hs"] == pytest.approx(math.sqrt(6.25))
    assert [b["kind"] for b in meta["bounds"]] == ["convex-hw", "classic-hw"]


def test_tail_experiment_thread_independent():
    cfg = TailConfig(StandardGaussian(3), 10_000, 5, matrix=np.eye(3))
    a, b = run_tail_experiment(cfg, 1), run_tail_experiment(cfg, 4)
    np.testing.assert_array_equal(a.curve.survival, b.curve.survival)
    assert a.fits == b.fits


def test_uniform_experiment_on_family():
    fam = MatrixFamily.for_sampler([np.eye(3), np.diag([1.0, -1.0, 0.0])], StandardGaussian(3))
    cfg = TailConfig(StandardGaussian(3), 10_000, 2, family=fam, bounds=("uniform-hw",),
                     family_norm_samples=5000)
    rep = run_tail_experiment(cfg)
    assert rep.all_feasible
    assert rep.derived["sup_op"] == pytest.approx(1.0)


def test_tail_config_validation():
    with pytest.raises(InvalidConfig):
        TailConfig(StandardGaussian(2), 1000, 0).validate()
    with pytest.raises(InvalidConfig):
        TailConfig(StandardGaussian(2), 1000, 0, matrix=np.eye(3)).validate()
    with pytest.raises(InvalidConfig):
        TailConfig(StandardGaussian(2), 1000, 0, matrix=np.eye(2), bounds=("mixed-tail",)).validate()


def test_smallest_quantile():
    z = np.arange(1.0, 11.0)
    assert smallest_quantile(z, 0.1) == 1.0
    assert smallest_quantile(z, 0.15) == 2.0
    assert smallest_quantile(z, 1.0) == 10.0


def test_fit_mixed_tail_dominates_band():
    z = np.random.default_rng(4).standard_exponential(20_000) - 1.0
    a, b = fit_mixed_tail(z)
    curve = empirical_tail(z, np.linspace(0.05, z.max() - np.median(z), 60), center_mode="median")
    bound = 2 * np.exp(-np.minimum(curve.t_grid**2 / a**2, curve.t_grid / b))
    assert np.all(bound >= curve.survival + curve.band_halfwidth - 1e-12)


@pytest.mark.parametrize("draw", ["normal", "exponential"])
def test_lemma_checks_pass(draw):
    rng = np.random.default_rng(7)
    z = rng.standard_normal(50_000) if draw == "normal" else rng.standard_exponential(50_000) - 1
    rep = lemma_checks(z, math.sqrt(2), [0.01, 0.05, 0.1, 0.25, 0.5])
    assert rep.ok, rep.violations


def test_lemma_checks_flag_an_understated_constant():
    z = 10 * np.random.default_rng(1).standard_normal(50_000)
    rep = lemma_checks(z, 0.1, [0.01])
    assert not rep.quantiles[0].passed


def test_center_mode_values():
    assert CenterMode("mean") is CenterMode.MEAN

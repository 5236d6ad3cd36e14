import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hwlab.distributions import GaussianWithCov, RademacherProduct, StandardGaussian
from hwlab.errors import DimensionMismatch, InvalidConfig
from hwlab.quadform import (MatrixFamily, active_gradient, centered_qform_samples,
                            expected_qform, family_norm, family_norm_integrand, qform, sup_qform,
                            sup_qform_samples)

finite = st.floats(-100, 100, allow_nan=False)


def test_qform_examples():
    assert qform(np.eye(3), np.array([1.0, 2.0, 2.0])) == 9.0
    assert qform(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([2.0, 3.0])) == 6.0
    np.testing.assert_array_equal(qform(np.eye(2), np.array([[1.0, 0.0], [3.0, 4.0]])), [1.0, 25.0])


def test_qform_dimension_check():
    with pytest.raises(DimensionMismatch):
        qform(np.eye(3), np.ones(2))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 4), elements=finite), arrays(np.float64, 4, elements=finite))
def test_qform_sees_only_symmetric_part(a, x):
    sym = (a + a.T) / 2
    assert qform(a, x) == pytest.approx(qform(sym, x), rel=1e-9, abs=1e-6)


def test_expected_qform_trace_formula():
    a = np.array([[1.0, 2.0], [0.0, 3.0]])
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    mean = np.array([1.0, -1.0])
    assert expected_qform(a, mean, cov) == pytest.approx(np.trace(a @ cov) + mean @ a @ mean)


def test_centered_samples_have_zero_mean():
    a = np.diag([1.0, 2.0, 3.0])
    z = centered_qform_samples(a, StandardGaussian(3), 200_000, 4)
    se = z.std() / math.sqrt(z.size)
    assert abs(z.mean()) < 5 * se


def test_identity_gives_centred_chi_square():
    z = centered_qform_samples(np.eye(5), StandardGaussian(5), 100_000, 1)
    assert z.var() == pytest.approx(10.0, rel=0.03)


def test_gaussian_refuses_calibration():
    with pytest.raises(InvalidConfig):
        centered_qform_samples(np.eye(2), GaussianWithCov(np.eye(2)), 1000, 0, center="calibrate")


def test_calibrated_center_close_to_analytic():
    a = np.array([[1.0, 0.3], [0.3, -2.0]])
    s = RademacherProduct(2)
    z_cal = centered_qform_samples(a, s, 50_000, 2, center="calibrate")
    z_an = centered_qform_samples(a, s, 50_000, 2, center="analytic")
    assert abs(z_cal.mean() - z_an.mean()) < 0.05


def test_centered_samples_thread_independent():
    a = np.eye(4)
    s = StandardGaussian(4)
    np.testing.assert_array_equal(centered_qform_samples(a, s, 9000, 3, threads=1),
                                  centered_qform_samples(a, s, 9000, 3, threads=3))


def make_family():
    members = (np.eye(2), np.diag([2.0, -1.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    return MatrixFamily.for_sampler(members, StandardGaussian(2))


def test_family_centers_are_traces():
    np.testing.assert_allclose(make_family().centers, [2.0, 1.0, 0.0])


def test_sup_qform_and_active_gradient():
    fam = make_family()
    x = np.array([1.0, 1.0])
    # values: 2-2=0, 1-1=0, 2-0=2
    assert sup_qform(fam, x) == 2.0
    np.testing.assert_array_equal(active_gradient(fam, x), [2.0, 2.0])


def test_active_gradient_breaks_ties_by_lowest_index():
    fam = MatrixFamily((np.eye(2), 2 * np.eye(2)), np.zeros(2))
    np.testing.assert_array_equal(active_gradient(fam, np.zeros(2)), [0.0, 0.0])
    x = np.array([[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_array_equal(active_gradient(fam, x), [[0.0, 0.0], [4.0, 0.0]])


def test_family_norm_integrand():
    fam = make_family()
    x = np.array([1.0, 0.0])
    # |2x| = 2, |(4,0)| = 4, |(0,2)| = 2
    assert family_norm_integrand(fam, x) == 4.0


def test_singleton_family_norm_matches_gaussian_formula():
    fam = MatrixFamily((np.eye(3),), np.array([3.0]))
    est, se = family_norm(fam, StandardGaussian(3), 100_000, 0)
    # E |2X| for a standard normal in R^3 is 2 * 2 sqrt(2/pi)
    assert abs(est - 4 * math.sqrt(2 / math.pi)) < 4 * se


def test_zero_family_has_zero_norm():
    fam = MatrixFamily((np.zeros((2, 2)),), np.zeros(1))
    assert family_norm(fam, StandardGaussian(2), 100, 0) == (0.0, 0.0)


def test_family_norm_needs_samples():
    with pytest.raises(InvalidConfig):
        family_norm(make_family(), StandardGaussian(2), 50, 0)


def test_sup_samples_dominate_each_member():
    fam = make_family()
    s = StandardGaussian(2)
    z = sup_qform_samples(fam, s, 5000, 1)
    x_first = centered_qform_samples(fam.members[0], s, 5000, 1)
    assert np.all(z >= x_first - 1e-12)


def test_family_validation():
    with pytest.raises(DimensionMismatch):
        MatrixFamily((np.eye(2), np.eye(3)), np.zeros(2))
    with pytest.raises(InvalidConfig):
        MatrixFamily((np.eye(2),), np.zeros(2))

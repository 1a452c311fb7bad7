import numpy as np
import pytest
from numpy.testing import assert_allclose

from roughdyadic.core.errors import InsufficientSamplesError, RejectedInputError
from roughdyadic.models import Verdict
from roughdyadic.verify.estimators import (
    MIN_SAMPLES,
    SlopeFit,
    calibrated_check,
    compute_c_theta,
    estimate_lq,
    estimate_probability,
    fit_slope,
    floor_probabilities,
    monotone_verdict,
    slope_verdict,
)


def test_estimate_lq_of_zeros():
    assert estimate_lq(np.zeros(500), 2.0) == (0.0, 0.0)


@pytest.mark.parametrize("q", [2.0, 4.0])
def test_estimate_lq_gaussian(rng, q):
    # E|N(0,1)|^2 = 1 and E|N(0,1)|^4 = 3
    exact = {2.0: 1.0, 4.0: 3.0 ** 0.25}[q]
    estimate, stderr = estimate_lq(rng.standard_normal(40_000), q)
    assert stderr > 0.0
    assert abs(estimate - exact) < 4.0 * stderr


def test_estimate_lq_rejections():
    with pytest.raises(RejectedInputError):
        estimate_lq(np.ones(500), 0.5)
    with pytest.raises(InsufficientSamplesError):
        estimate_lq(np.ones(MIN_SAMPLES - 1), 2.0)


def test_estimate_probability():
    p, se = estimate_probability(np.array([True, False, False, True]))
    assert p == 0.5
    assert se == pytest.approx(0.25)
    with pytest.raises(InsufficientSamplesError):
        estimate_probability(np.array([], dtype=bool))


def test_fit_slope_recovers_exact_rates():
    scales = np.arange(2, 9)
    fit = fit_slope(scales, 3.0 * 2.0 ** (-1.5 * scales))
    assert fit.slope == pytest.approx(-1.5)
    assert fit.intercept == pytest.approx(np.log2(3.0))
    assert fit.residual == pytest.approx(0.0, abs=1e-12)


def test_fit_slope_propagates_point_errors():
    scales = np.array([1.0, 2.0, 3.0])
    values = np.array([1.0, 0.5, 0.25])
    fit = fit_slope(scales, values, stderrs=[0.0, 0.0, 0.0])
    assert fit.stderr == 0.0
    noisy = fit_slope(scales, values, stderrs=[0.01, 0.01, 0.01])
    # weights are (-1/2, 0, 1/2); each point contributes se / (v ln 2)
    expected = np.sqrt((0.5 * 0.01 / np.log(2.0)) ** 2 + (0.5 * 0.01 / (0.25 * np.log(2.0))) ** 2)
    assert_allclose(noisy.stderr, expected)


@pytest.mark.parametrize(
    ("scales", "values"),
    [([1, 2], [1.0, 0.5]), ([1, 2, 3], [1.0, 0.0, 0.5]), ([2, 2, 2], [1.0, 0.5, 0.25]), ([1, 2, 3], [1.0, np.inf, 1.0])],
)
def test_fit_slope_rejections(scales, values):
    with pytest.raises(RejectedInputError):
        fit_slope(scales, values)


def test_slope_verdicts():
    fit = SlopeFit(slope=-1.4, intercept=0.0, residual=0.0, stderr=0.01)
    assert slope_verdict(fit, -1.5, "eq", 0.15) is Verdict.PASS
    assert slope_verdict(fit, -1.5, "eq", 0.05) is Verdict.FAIL
    assert slope_verdict(fit, -1.5, "le", 0.05) is Verdict.FAIL
    assert slope_verdict(fit, -1.5, "ge", 0.05) is Verdict.PASS
    wide = SlopeFit(slope=-1.4, intercept=0.0, residual=0.0, stderr=0.2)
    assert slope_verdict(wide, -1.5, "eq", 0.15) is Verdict.INCONCLUSIVE
    with pytest.raises(RejectedInputError):
        slope_verdict(fit, -1.5, "near", 0.15)


def test_compute_c_theta():
    assert compute_c_theta(1.0, 0.0) == pytest.approx(1.0)
    assert compute_c_theta(2.0, 0.0) == pytest.approx(3.0)
    values = [compute_c_theta(0.5, gamma) for gamma in (0.0, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(RejectedInputError):
        compute_c_theta(0.0, 0.5)


def test_calibrated_check():
    scales = np.arange(1, 7)
    probabilities = 0.2 * 2.0 ** (-1.0 * scales)
    stderrs = np.full(scales.size, 1e-4)
    passed = calibrated_check(scales, probabilities, stderrs, rate=1.0)
    assert passed.verdict is Verdict.PASS
    assert passed.constant == pytest.approx(0.2)
    assert_allclose(passed.bounds, 4.0 * probabilities)

    slow = 0.2 * 2.0 ** (-0.2 * scales)
    assert calibrated_check(scales, slow, stderrs, rate=1.0).verdict is Verdict.FAIL
    assert calibrated_check(scales, slow, np.ones(scales.size), rate=1.0).verdict is Verdict.INCONCLUSIVE


def test_floor_probabilities():
    values, hit_zero = floor_probabilities([0.2, 0.0, 0.01], 1000)
    assert_allclose(values, [0.2, 0.0005, 0.01])
    assert hit_zero
    values, hit_zero = floor_probabilities([0.3, 0.1], 50)
    assert_allclose(values, [0.3, 0.1])
    assert not hit_zero
    with pytest.raises(RejectedInputError):
        floor_probabilities([0.1], 0)


@pytest.mark.parametrize(
    "estimates, stderrs, expected",
    [
        ([0.5, 0.3, 0.3, 0.1], [0.02] * 4, Verdict.PASS),
        # a rise inside the combined two-sigma band cannot be told apart from noise
        ([0.5, 0.3, 0.32, 0.1], [0.02] * 4, Verdict.INCONCLUSIVE),
        ([0.5, 0.3, 0.45, 0.1], [0.02] * 4, Verdict.FAIL),
        # exact estimates leave no room for any rise
        ([0.5, 0.3, 0.31], [0.0] * 3, Verdict.FAIL),
        ([0.4], [0.01], Verdict.PASS),
    ],
)
def test_monotone_verdict(estimates, stderrs, expected):
    assert monotone_verdict(estimates, stderrs) is expected


def test_monotone_verdict_needs_matching_errors():
    with pytest.raises(RejectedInputError):
        monotone_verdict([0.5, 0.4], [0.01])

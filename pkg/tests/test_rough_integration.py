import numpy as np
import pytest
from numpy.testing import assert_allclose

from roughdyadic.core.errors import ConvergenceError, DimensionMismatchError, RejectedInputError
from roughdyadic.rough.level2_lift import AnchoredLift, DyadicLift, PolygonalLift
from roughdyadic.rough.rough_integration import (
    OneForm,
    cosine_form,
    identity_form,
    integrate,
    integrate_path,
    linear_form,
    local_approx,
    riemann_stieltjes_affine,
)
from roughdyadic.rough.tensor_algebra import chen_mul, tensor_distance


def test_identity_form_recovers_the_lift(small_path):
    lift = DyadicLift(small_path, 5)
    value = integrate(identity_form(2), lift)
    exact = lift.increment(0.0, 1.0)
    assert_allclose(value.level1, exact.level1, rtol=0, atol=1e-14)
    assert tensor_distance(value, exact) <= 1e-10

    partial = integrate(identity_form(2), lift, 0.25, 0.75)
    assert tensor_distance(partial, lift.increment(0.25, 0.75)) <= 1e-10


def test_linear_form_matches_riemann_stieltjes(small_path, rng):
    form = linear_form(rng.standard_normal((3, 2, 2)), rng.standard_normal((3, 2)))
    lift = DyadicLift(small_path, 8)
    value = integrate(form, lift, schedule=range(8, 19), tol=1e-6)
    expected = riemann_stieltjes_affine(form, small_path.grid_values(8))
    assert value.level1.shape == (3,)
    assert_allclose(value.level1, expected, rtol=1e-10, atol=1e-12)


def test_cosine_form_level_one_is_a_difference_of_sines(small_path):
    lift = DyadicLift(small_path, 4)
    value = integrate(cosine_form(2), lift, schedule=range(4, 15), tol=1e-6)
    w0, w1 = lift.position_at(np.array([0.0, 1.0]))
    assert_allclose(value.level1, np.sin(w1) - np.sin(w0), atol=1e-5)


def test_local_approx_on_a_segment():
    form = identity_form(2)
    inc = PolygonalLift(np.array([[0.0, 0.0], [1.0, 2.0]])).increment(0.0, 1.0)
    approx = local_approx(form, np.zeros(2), inc)
    assert_allclose(approx.level1, [1.0, 2.0])
    assert_allclose(approx.level2, 0.5 * np.outer([1.0, 2.0], [1.0, 2.0]))


def test_integrate_path_is_chen_consistent(small_path):
    running = integrate_path(cosine_form(2), DyadicLift(small_path, 4))
    assert isinstance(running, AnchoredLift)
    assert running.times.size == 2**6 + 1
    halves = chen_mul(running.increment(0.0, 0.5), running.increment(0.5, 1.0))
    assert tensor_distance(halves, running.increment(0.0, 1.0)) <= 1e-12


def test_integrate_path_of_identity_is_the_driver(small_path):
    lift = DyadicLift(small_path, 3)
    running = integrate_path(identity_form(2), lift, level=5)
    sig1, sig2 = lift.signature_at(running.times)
    assert_allclose(running.sig1, sig1, atol=1e-12)
    assert_allclose(running.sig2, sig2, atol=1e-12)


def test_one_form_validation():
    assert cosine_form(3).validate(np.random.default_rng(1).standard_normal((5, 3))) < 1e-4
    wrong = OneForm(
        f=lambda x: np.einsum("bk,kj->bkj", np.sin(x), np.eye(2)),
        df=lambda x: np.zeros((x.shape[0], 2, 2, 2)),
        dim=2,
        out_dim=2,
        vectorized=True,
    )
    with pytest.raises(RejectedInputError):
        wrong.validate(np.ones((2, 2)))


def test_integration_errors(small_path):
    lift = DyadicLift(small_path, 4)
    with pytest.raises(DimensionMismatchError):
        integrate(identity_form(3), lift)
    with pytest.raises(RejectedInputError):
        integrate(identity_form(2), lift, 0.5, 0.5)
    with pytest.raises(RejectedInputError):
        integrate(identity_form(2), lift, schedule=[])
    anchored = integrate_path(identity_form(2), lift)
    with pytest.raises(RejectedInputError):
        integrate(identity_form(2), anchored)
    with pytest.raises(ConvergenceError) as excinfo:
        integrate(cosine_form(2), lift, schedule=[4, 5], tol=1e-15)
    assert excinfo.value.level == 5
    assert excinfo.value.previous is not None and excinfo.value.last is not None


def test_integral_of_t_dt_on_the_diagonal():
    # x_t = (t, t): the level-2 entries are all int_0^1 t dt
    diagonal = PolygonalLift(np.linspace(0.0, 1.0, 17)[:, None] * np.ones((1, 2)))
    value = integrate(identity_form(2), diagonal)
    assert_allclose(value.level1, [1.0, 1.0], atol=1e-14)
    assert_allclose(value.level2, np.full((2, 2), 0.5), atol=1e-14)
    half = integrate(identity_form(2), diagonal, 0.0, 0.5)
    assert_allclose(half.level2, np.full((2, 2), 0.125), atol=1e-14)


@pytest.mark.parametrize("form_name", ["identity", "linear", "cosine"])
@pytest.mark.parametrize("s, u, t", [(0.0, 0.5, 1.0), (0.125, 0.3, 0.9)])
def test_integrals_over_adjacent_intervals_compose(small_path, form_name, s, u, t):
    forms = {
        "identity": identity_form(2),
        "linear": linear_form(np.random.default_rng(4).standard_normal((2, 2, 2))),
        "cosine": cosine_form(2),
    }
    form = forms[form_name]
    lift = DyadicLift(small_path, 3)
    options = {"schedule": range(3, 20), "tol": 1e-9}
    joined = chen_mul(integrate(form, lift, s, u, **options), integrate(form, lift, u, t, **options))
    assert tensor_distance(joined, integrate(form, lift, s, t, **options)) <= 1e-7

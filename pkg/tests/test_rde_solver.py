import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from roughdyadic.core.errors import BlowUpError, DimensionMismatchError, RejectedInputError, UnknownCaseError
from roughdyadic.rough.dyadic_paths import DyadicBrownianPath, generate, polygonal
from roughdyadic.rough.rde_solver import (
    REFERENCE_CASES,
    VectorFieldSpec,
    dump_trajectory_csv,
    reference_case,
    solve_wz,
    stratonovich_reference,
    wz_sequence,
)


def test_rk4_is_fourth_order():
    case = reference_case("exp_scalar")
    # constant velocity, so every segment errs with the same sign
    path = DyadicBrownianPath.from_values(np.linspace(0.0, 2.0, 9))
    exact = np.exp(2.0)
    errors = [
        abs(solve_wz(case.spec, case.y0, polygonal(path, 3), substeps, guard_tol=None).y[-1, 0] - exact)
        for substeps in (1, 2, 4)
    ]
    slope = np.polyfit(np.log2([1, 2, 4]), np.log2(errors), 1)[0]
    assert -4.6 < slope < -3.4


def test_blow_up_is_reported():
    spec = VectorFieldSpec(dim_in=1, dim_out=1, f=lambda y: (y**2).reshape(1, 1))
    driver = polygonal(DyadicBrownianPath.from_values(np.array([[0.0], [1.0]])), 0)
    with pytest.raises(BlowUpError) as excinfo:
        solve_wz(spec, np.array([10.0]), driver, substeps=4, guard_tol=None)
    assert excinfo.value.time == 1.0
    assert np.isfinite(excinfo.value.state).all()


@pytest.mark.parametrize("case_id", list(REFERENCE_CASES))
def test_reference_cases_match_closed_forms(case_id):
    case = reference_case(case_id)
    path = generate(case.spec.dim_in, 6, 5)
    result = solve_wz(case.spec, case.y0, polygonal(path, 6), substeps=8)
    exact = stratonovich_reference(case_id, path, level=6)
    assert result.y.shape == exact.shape
    assert_allclose(result.y, exact, rtol=0, atol=1e-8)


def test_guard_diagnostics():
    case = reference_case("exp_scalar")
    driver = polygonal(generate(1, 4, 2), 4)
    guarded = solve_wz(case.spec, case.y0, driver, substeps=2, guard_tol=1e-12)
    assert guarded.diagnostics is not None
    assert guarded.diagnostics.substeps.shape == (16,)
    assert np.all(guarded.diagnostics.substeps >= 4)
    assert solve_wz(case.spec, case.y0, driver, substeps=2, guard_tol=None).diagnostics is None


def test_partial_interval_and_vertex_times():
    case = reference_case("exp_scalar")
    driver = polygonal(generate(1, 3, 2), 3)
    result = solve_wz(case.spec, case.y0, driver, t0=0.25, t1=0.75)
    assert_allclose(result.times, np.arange(2, 7) / 8)
    with pytest.raises(RejectedInputError):
        solve_wz(case.spec, case.y0, driver, t0=0.3)
    with pytest.raises(DimensionMismatchError):
        solve_wz(case.spec, np.ones(2), driver)
    with pytest.raises(DimensionMismatchError):
        solve_wz(reference_case("rotation_area").spec, np.zeros(3), driver)


def test_wong_zakai_gaps_shrink():
    case = reference_case("exp_scalar")
    first, last = [], []
    for seed in range(5):
        steps = wz_sequence(case.spec, case.y0, generate(1, 8, seed), range(1, 8), substeps=4)
        assert [step.m for step in steps] == list(range(1, 8))
        assert all(np.isfinite(step.dp_gap) and step.dp_gap > 0.0 for step in steps)
        first.append(steps[0].dp_gap)
        last.append(steps[-1].dp_gap)
    assert np.median(last) < np.median(first)


def test_wz_sequence_needs_a_finer_path():
    case = reference_case("exp_scalar")
    with pytest.raises(RejectedInputError):
        wz_sequence(case.spec, case.y0, generate(1, 5, 0), [3, 5])
    with pytest.raises(RejectedInputError):
        wz_sequence(case.spec, case.y0, generate(1, 5, 0), [])


def test_unknown_case_and_validation():
    with pytest.raises(UnknownCaseError):
        reference_case("lorenz")
    rotation = reference_case("rotation_area")
    rotation.spec.validate(np.random.default_rng(0).standard_normal((4, 3)))
    broken = VectorFieldSpec(
        dim_in=1, dim_out=1, f=lambda y: (y**2).reshape(1, 1), jac=lambda y: np.ones((1, 1, 1))
    )
    with pytest.raises(RejectedInputError):
        broken.validate(np.array([[3.0]]))


def test_trajectory_csv(tmp_path):
    case = reference_case("rotation_area")
    result = solve_wz(case.spec, case.y0, polygonal(generate(2, 3, 1), 3))
    target = dump_trajectory_csv(result, tmp_path / "trajectory.csv")
    frame = pd.read_csv(target)
    assert list(frame.columns) == ["t", "y1", "y2", "y3"]
    assert_allclose(frame[["y1", "y2", "y3"]].to_numpy(), result.y, rtol=1e-15)
    assert result.lift.dim == 3


@pytest.mark.parametrize("case_id", list(REFERENCE_CASES))
@pytest.mark.parametrize("guard_tol", [None, 1e-10])
def test_flow_property(case_id, guard_tol):
    case = reference_case(case_id)
    driver = polygonal(generate(case.spec.dim_in, 5, 17), 5)
    whole = solve_wz(case.spec, case.y0, driver, guard_tol=guard_tol)
    head = solve_wz(case.spec, case.y0, driver, guard_tol=guard_tol, t1=0.5)
    tail = solve_wz(case.spec, head.y[-1], driver, guard_tol=guard_tol, t0=0.5)
    assert_allclose(np.vstack([head.y, tail.y[1:]]), whole.y, rtol=1e-14, atol=1e-15)
    assert_allclose(np.concatenate([head.times, tail.times[1:]]), whole.times)


def test_exp_scalar_is_exact_at_vertices_for_every_level():
    case = reference_case("exp_scalar")
    path = generate(1, 8, 23)
    endpoints = []
    for m in range(2, 9):
        result = solve_wz(case.spec, case.y0, polygonal(path, m), guard_tol=1e-13)
        assert_allclose(result.y[:, 0], case.y0[0] * np.exp(path.grid_values(m)[:, 0]), rtol=1e-10)
        endpoints.append(result.y[-1, 0])
    assert np.ptp(endpoints) <= 1e-9 * abs(endpoints[0])


@pytest.mark.slow
def test_exp_scalar_endpoint_at_level_twelve():
    case = reference_case("exp_scalar")
    errors = []
    for seed in range(25):
        path = generate(1, 12, seed)
        result = solve_wz(case.spec, case.y0, polygonal(path, 12), substeps=4, guard_tol=None)
        errors.append(abs(result.y[-1, 0] - case.y0[0] * np.exp(path.values[-1, 0])))
    assert np.median(errors) <= 1e-3

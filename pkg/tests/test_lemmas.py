import numpy as np
import pytest

from roughdyadic.core.errors import RejectedInputError, SpecViolationError, UnknownCaseError
from roughdyadic.models import RateCheckSpec, RhoParams, Verdict
from roughdyadic.verify.lemmas import LEMMAS, j21_rate, union_bound_decomposition_check, verify_lemma

LEMMA_IDS = {
    "lem1a", "le1", "le2", "le3", "le4", "le5", "le6", "le7", "le8", "le9",
    "lem-19", "sobolev", "j2.1", "th8", "4-21-8", "4-22-5a", "union",
}


def _rows(result, statistic):
    return [row for row in result.rows if row.statistic == statistic]


def test_registry_is_complete():
    assert set(LEMMAS) == LEMMA_IDS
    assert all(check.summary for check in LEMMAS.values())
    assert LEMMAS["lem1a"].reference == "lemma lem1a"
    assert LEMMAS["th8"].reference == "theorem th8"
    assert LEMMAS["j2.1"].reference == "proposition j2.1"
    assert all(check.reference.endswith(lemma_id) for lemma_id, check in LEMMAS.items())


def test_unknown_lemma(quick_spec):
    with pytest.raises(UnknownCaseError):
        verify_lemma("le42", quick_spec)


def test_lem1a_quick(quick_spec):
    result = verify_lemma("lem1a", quick_spec)
    zeros = [row for row in _rows(result, "||X1||_q") if row.n <= row.m]
    assert zeros and all(row.estimate == 0.0 for row in zeros)
    fitted = {row.slope for row in result.rows if row.slope is not None}
    assert len(fitted) == 5
    assert result.verdict is Verdict.PASS
    assert all(row.citation[0] == "lemma lem1a" and row.citation[1] for row in result.rows)


def test_le2_quick(quick_spec):
    result = verify_lemma("le2", quick_spec)
    sweeps = [row for row in _rows(result, "||sum xi (x) xi~||_q")]
    assert {row.q for row in sweeps} == {2.0, 4.0}
    assert all(abs(row.slope - 0.5) < 0.1 for row in sweeps)
    for row in _rows(result, "||sum xi (x) xi~||_2 - d sqrt(N)"):
        assert abs(row.estimate) <= 5.0 * row.stderr


def test_le3_and_le4_quick(quick_spec):
    bounded = verify_lemma("le3", quick_spec)
    assert bounded.verdict is Verdict.PASS
    ratios = [row for row in bounded.rows if row.statistic.endswith("max/min")]
    assert len(ratios) == 2 and all(1.0 <= row.estimate <= 4.0 for row in ratios)

    decay = verify_lemma("le4", quick_spec)
    slopes = {row.statistic: row.slope for row in decay.rows}
    assert len(slopes) == 2
    assert all(slope < 0.0 for slope in slopes.values())
    assert decay.verdict is Verdict.PASS


def test_checks_are_reproducible(quick_spec):
    first = verify_lemma("le6", quick_spec)
    second = verify_lemma("le6", quick_spec.model_copy(update={"threads": 2}))
    assert [row.estimate for row in first.rows] == [row.estimate for row in second.rows]


def test_pointwise_bounds_hold(quick_spec):
    result = verify_lemma("lem-19", quick_spec)
    pointwise = [row for row in result.rows if row.statistic.startswith("pointwise")]
    assert len(pointwise) == 16
    assert all(row.estimate == 1.0 for row in pointwise)


def test_th8_rejects_large_beta(quick_spec):
    spec = RateCheckSpec(**{**quick_spec.model_dump(), "beta": 0.05})
    with pytest.raises(SpecViolationError):
        verify_lemma("th8", spec)


def test_th8_quick(quick_spec):
    result = verify_lemma("th8", quick_spec)
    rows = result.rows
    assert [row.m for row in rows] == list(quick_spec.m_range)
    assert all(row.kind == "probability surrogate" for row in rows)
    assert all(row.anchor.startswith("theorem th8: ") for row in rows)
    # C1 is the median at the first m, so at most half the paths exceed it there
    assert rows[0].estimate <= 0.5
    assert rows[-1].estimate < rows[0].estimate
    assert rows[0].slope is not None and rows[0].slope < 0.0
    assert {row.verdict for row in rows} == {result.verdict}
    assert result.verdict is not Verdict.FAIL


def test_le1_quick(quick_spec):
    result = verify_lemma("le1", quick_spec)
    assert len(result.rows) == 3 * len(quick_spec.m_range)
    assert all(np.isfinite(row.estimate) and row.estimate >= 0.0 for row in result.rows)
    assert all(row.anchor.startswith("lemma le1: ") for row in result.rows)


def test_j21_constraints(quick_spec):
    # p = 2.5, N = 6: (p - 2)/2 - (theta + beta) = 0.22
    assert j21_rate(quick_spec, 1) == pytest.approx(0.22 * 2 * 6 / 2.5 - 1.0)
    assert j21_rate(quick_spec, 2) > j21_rate(quick_spec, 1)
    with pytest.raises(SpecViolationError):
        verify_lemma("j2.1", RateCheckSpec(**{**quick_spec.model_dump(), "rate_n_tilde": 1}))
    with pytest.raises(SpecViolationError):
        verify_lemma("j2.1", RateCheckSpec(**{**quick_spec.model_dump(), "theta": 0.2}))


def test_union_decomposition_holds_on_random_sums(rng):
    params = RhoParams()
    sums = rng.exponential(size=(1000, 4)) * 2.0 ** -np.arange(4)
    report = union_bound_decomposition_check(sums, 4, params, theta=0.02)
    assert report.fired > 0
    assert report.holds


def test_union_decomposition_edge_cases():
    params = RhoParams()
    sums = np.array([[3.0, 0.0, 0.0]])
    # everything on the first level: still witnessed just below the total
    concentrated = union_bound_decomposition_check(sums, 3, params, theta=0.02, lam=2.99)
    assert concentrated.fired == 1 and concentrated.holds
    vacuous = union_bound_decomposition_check(sums, 3, params, theta=0.02, lam=1e12)
    assert vacuous.fired == 0 and vacuous.holds
    with pytest.raises(RejectedInputError):
        union_bound_decomposition_check(sums, 4, params, theta=0.02)


def test_union_quick(quick_spec):
    result = verify_lemma("union", quick_spec)
    assert len(result.rows) == 2 * len(quick_spec.m_range)
    assert result.verdict is Verdict.PASS


@pytest.mark.slow
@pytest.mark.parametrize("lemma_id", ["lem1a", "le6", "le2", "lem-19", "th8", "le1"])
def test_acceptance_defaults(lemma_id):
    result = verify_lemma(lemma_id, RateCheckSpec(seed=1))
    assert result.verdict is Verdict.PASS

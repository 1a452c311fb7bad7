import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from roughdyadic.core.errors import DimensionMismatchError, RejectedInputError
from roughdyadic.models import RhoParams, TailMode
from roughdyadic.rough.dyadic_paths import generate
from roughdyadic.rough.level2_lift import AnchoredLift, DyadicLift, PolygonalLift, ZeroLift, grid_signatures
from roughdyadic.rough.variation_metrics import (
    d_p_grid,
    d_p_signatures,
    default_anchors,
    le1_bound,
    level_power_sum,
    p_variation_grid,
    power_geometric_sum,
    rho,
    single_path_bounds,
    single_path_ratios,
    tail_weight,
)


def test_power_geometric_sum_closed_forms():
    assert_allclose(power_geometric_sum(0.0, 0.5, 1), 2.0, rtol=1e-13)
    # sum (1 + i) r**i = 1 / (1 - r)**2
    assert_allclose(power_geometric_sum(1.0, 0.5, 1), 4.0, rtol=1e-13)
    with pytest.raises(RejectedInputError):
        power_geometric_sum(0.5, 1.0, 1)
    with pytest.raises(RejectedInputError):
        power_geometric_sum(0.5, 0.5, 0)


def test_analytic_tail_matches_long_truncation():
    analytic = RhoParams(p=2.5, gamma=0.5)
    truncated = RhoParams(p=2.5, gamma=0.5, n_max=300, tail_mode=TailMode.TRUNCATE)
    for level in (1, 4, 9):
        assert_allclose(tail_weight(analytic, level), tail_weight(truncated, level), rtol=1e-12)


@pytest.mark.parametrize("j", [1, 2])
def test_rho_agrees_with_direct_level_sums(small_path, j):
    params = RhoParams(p=2.4, gamma=0.6, n_max=12, tail_mode=TailMode.TRUNCATE)
    lift, zero = DyadicLift(small_path, 3), ZeroLift(small_path.dim)
    axes = -1 if j == 1 else (-2, -1)
    direct = sum(
        n**params.gamma * np.sum(np.linalg.norm(lift.increments(n, j), axis=axes) ** (params.p / j))
        for n in range(1, params.n_max + 1)
    )
    assert_allclose(rho(j, lift, zero, params), direct ** (j / params.p), rtol=1e-10)


def test_level_power_sum_linear_scaling(small_path):
    coarse, fine = DyadicLift(small_path, 2), DyadicLift(small_path, 4)
    for n in range(0, 8):
        for j in (1, 2):
            axes = -1 if j == 1 else (-2, -1)
            diff = fine.increments(n, j) - coarse.increments(n, j)
            direct = np.sum(np.linalg.norm(diff, axis=axes) ** (2.5 / j))
            assert_allclose(level_power_sum(fine, coarse, n, j, 2.5), direct, rtol=1e-10)


def test_analytic_rho_ignores_n_max(small_path):
    lift, zero = DyadicLift(small_path, 5), ZeroLift(small_path.dim)
    short, long = RhoParams(n_max=3), RhoParams(n_max=60)
    for j in (1, 2):
        assert rho(j, lift, zero, short) == rho(j, lift, zero, long)
    truncated = RhoParams(n_max=400, tail_mode=TailMode.TRUNCATE)
    assert_allclose(rho(1, lift, zero, truncated), rho(1, lift, zero, long), rtol=1e-10)


def test_rho_is_a_distance_between_lifts(small_path, rho_params):
    a, b, c = (DyadicLift(small_path, m) for m in (2, 4, 6))
    for j in (1, 2):
        assert rho(j, a, a, rho_params) == 0.0
        assert_allclose(rho(j, a, b, rho_params), rho(j, b, a, rho_params), rtol=1e-12)
    assert rho(1, a, c, rho_params) <= rho(1, a, b, rho_params) + rho(1, b, c, rho_params) + 1e-12


def test_analytic_tail_needs_linear_inputs(small_path, rho_params):
    times = np.linspace(0.0, 1.0, 3)
    anchored = AnchoredLift(times, np.zeros((3, 2)), np.zeros((3, 2, 2)))
    with pytest.raises(RejectedInputError):
        rho(1, anchored, ZeroLift(2), rho_params)
    with pytest.raises(RejectedInputError):
        rho(3, ZeroLift(2), ZeroLift(2), rho_params)


def _brute_force_p_variation(values: np.ndarray, exponent: float) -> float:
    """Largest sum of |values[b] - values[a]|**exponent over every subset of interior anchors."""
    last = values.shape[0] - 1
    cost = np.linalg.norm((values[None] - values[:, None]).reshape(last + 1, last + 1, -1), axis=-1) ** exponent
    best = 0.0
    for size in range(last):
        for inner in itertools.combinations(range(1, last), size):
            points = np.array((0, *inner, last))
            best = max(best, float(np.sum(cost[points[:-1], points[1:]])))
    return best


def _check_against_brute_force(rng: np.random.Generator, cases: int, max_anchors: int) -> None:
    for _ in range(cases):
        size = int(rng.integers(2, max_anchors + 1))
        j = int(rng.integers(1, 3))
        p = float(rng.uniform(2.1, 3.5))
        shape = (size, 2) if j == 1 else (size, 2, 2)
        values = rng.standard_normal(shape)
        anchors = np.sort(rng.choice(np.linspace(0.0, 1.0, 65), size, replace=False))
        got = p_variation_grid(lambda i: values[i] - values[:i], anchors, p, j)
        assert_allclose(got, _brute_force_p_variation(values, p / j) ** (j / p), rtol=1e-12)


def test_p_variation_matches_brute_force(rng):
    _check_against_brute_force(rng, cases=60, max_anchors=10)


@pytest.mark.slow
def test_p_variation_matches_brute_force_at_scale(rng):
    _check_against_brute_force(rng, cases=1000, max_anchors=14)


def test_p_variation_rejects_bad_anchors():
    def incr(i):
        return np.zeros((i, 1))

    with pytest.raises(RejectedInputError):
        p_variation_grid(incr, np.array([0.0]), 2.5, 1)
    with pytest.raises(RejectedInputError):
        p_variation_grid(incr, np.array([0.0, 0.5, 0.5]), 2.5, 1)
    with pytest.raises(DimensionMismatchError):
        p_variation_grid(lambda i: np.zeros((i + 1, 1)), np.array([0.0, 0.5, 1.0]), 2.5, 1)


def test_p_variation_batches_over_leading_axes(rng):
    anchors = np.linspace(0.0, 1.0, 7)
    values = rng.standard_normal((5, anchors.size, 3))
    batched = p_variation_grid(lambda i: values[:, i, None] - values[:, :i], anchors, 2.5, 1)
    assert batched.shape == (5,)
    for k in range(5):
        single = p_variation_grid(lambda i: values[k, i] - values[k, :i], anchors, 2.5, 1)
        assert batched[k] == pytest.approx(single, rel=1e-13)


def test_d_p_grid_metric_properties(small_path):
    a, b, c = (DyadicLift(small_path, m) for m in (3, 4, 6))
    anchors = default_anchors(6)
    p = 2.5
    assert d_p_grid(a, a, anchors, p) == 0.0
    assert_allclose(d_p_grid(a, b, anchors, p), d_p_grid(b, a, anchors, p), rtol=1e-12)
    assert d_p_grid(a, c, anchors, p) <= d_p_grid(a, b, anchors, p) + d_p_grid(b, c, anchors, p) + 1e-12
    # finer anchor grids admit more partitions
    assert d_p_grid(a, c, default_anchors(3), p) <= d_p_grid(a, c, anchors, p) + 1e-12


def test_d_p_metric_axioms_on_random_triples(rng):
    triples, level, p = 1000, 4, 2.5
    anchors = default_anchors(level)
    grid = anchors.size.bit_length() - 1
    a, b, c = (grid_signatures(np.cumsum(rng.standard_normal((triples, 2**level + 1, 2)), axis=1), grid) for _ in range(3))
    ab, ba = d_p_signatures(a, b, anchors, p), d_p_signatures(b, a, anchors, p)
    bc, ac = d_p_signatures(b, c, anchors, p), d_p_signatures(a, c, anchors, p)
    assert np.all(d_p_signatures(a, a, anchors, p) == 0.0)
    assert np.all(ab > 0.0)
    assert_allclose(ab, ba, rtol=1e-10)
    assert np.all(ac <= ab + bc + 1e-10)
    # the batched form agrees with the lift-based one
    lift_a = PolygonalLift(np.cumsum(np.ones((2**level + 1, 2)), axis=0))
    lift_b = PolygonalLift(np.zeros((2**level + 1, 2)))
    single = d_p_grid(lift_a, lift_b, anchors, p)
    stacked = d_p_signatures(lift_a.signature_at(anchors), lift_b.signature_at(anchors), anchors, p)
    assert stacked == pytest.approx(single, rel=1e-13)


@pytest.mark.parametrize("m, cap", [(2, 12), (3, 12), (5, 3)])
def test_batched_d_p_matches_per_path_lifts(m, cap):
    paths = [generate(2, 7, seed) for seed in range(4)]
    anchors = default_anchors(m, cap)
    grid = anchors.size.bit_length() - 1
    fine = grid_signatures(np.stack([path.grid_values(m + 1) for path in paths]), grid)
    coarse = grid_signatures(np.stack([path.grid_values(m) for path in paths]), grid)
    batched = d_p_signatures(fine, coarse, anchors, 2.5)
    single = [d_p_grid(DyadicLift(path, m + 1), DyadicLift(path, m), anchors, 2.5) for path in paths]
    assert_allclose(batched, single, rtol=1e-10)


def test_le1_bound_and_anchors():
    assert le1_bound(1.0, 2.0, 3.0, 4.0) == 7.0
    assert le1_bound(0.5, 2.0, 1.0, 1.0) == 2.0
    assert_allclose(le1_bound(np.array([1.0, 0.5]), np.array([2.0, 2.0]), np.array([3.0, 1.0]), np.array([4.0, 1.0])), [7.0, 2.0])
    with pytest.raises(RejectedInputError):
        le1_bound(-1.0, 0.0, 0.0, 0.0)
    with pytest.raises(RejectedInputError):
        le1_bound(np.array([1.0, np.nan]), 0.0, 0.0, 0.0)
    assert default_anchors(3).size == 17
    assert default_anchors(20, cap=5).size == 33


def test_single_path_bounds(small_path, rho_params):
    lift = DyadicLift(small_path, 5)
    anchors = default_anchors(5)
    bounds = single_path_bounds(lift, rho_params, anchors)
    assert bounds.rho1 > 0.0 and bounds.rho2 > 0.0
    assert np.isfinite(bounds.ratio1) and bounds.ratio1 > 0.0
    assert np.isfinite(bounds.ratio2) and bounds.ratio2 > 0.0
    zero_bounds = single_path_bounds(ZeroLift(2), rho_params, np.linspace(0.0, 1.0, 5))
    assert zero_bounds.ratio1 == 0.0

    sig1, sig2 = lift.signature_at(anchors)
    ratio1, ratio2 = single_path_ratios(
        sig1[None], sig2[None], anchors, rho_params.p, np.array([bounds.rho1]), np.array([bounds.rho2])
    )
    assert_allclose(ratio1, [bounds.ratio1], rtol=1e-12)
    assert_allclose(ratio2, [bounds.ratio2], rtol=1e-12)


@pytest.mark.parametrize("j", [1, 2])
def test_rho_of_the_straight_line_sums_the_series(j):
    # w_t = t: every level-n interval has |X1| = 2^(-n) and |X2| = 2^(-2n) / 2
    params = RhoParams(p=2.5, gamma=0.5)
    line = PolygonalLift(np.array([[0.0], [1.0]]))
    n = np.arange(1, 400)
    level = 2.0**-n if j == 1 else 0.5 * 4.0**-n
    series = np.sum(n**params.gamma * 2.0**n * level ** (params.p / j))
    assert_allclose(rho(j, line, ZeroLift(1), params), series ** (j / params.p), rtol=1e-12)

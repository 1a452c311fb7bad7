"""p-variation distances on anchor grids and the dyadic rho_j functionals."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np

from roughdyadic.core.errors import DimensionMismatchError, RejectedInputError
from roughdyadic.models import RhoParams, TailMode
from roughdyadic.rough.level2_lift import DyadicIncrements, ZeroLift

SERIES_RTOL = 1e-14


@lru_cache(maxsize=None)
def power_geometric_sum(gamma: float, ratio: float, start: int) -> float:
    """sum_{i >= 0} (start + i)**gamma * ratio**i, for 0 < ratio < 1 and start >= 1.

    Summation stops once the geometric bound on the remainder falls below
    SERIES_RTOL of the partial sum.
    """
    if not 0.0 < ratio < 1.0 or start < 1:
        raise RejectedInputError(f"series needs 0 < ratio < 1 and start >= 1, got {ratio}, {start}")
    total = 0.0
    i = 0
    while True:
        n = start + i
        total += n**gamma * ratio**i
        following = (n + 1) ** gamma * ratio ** (i + 1)
        growth = ratio * (1.0 + 1.0 / (n + 1)) ** gamma
        if growth < 1.0 and following / (1.0 - growth) < SERIES_RTOL * total:
            return total
        i += 1


def tail_weight(params: RhoParams, level: int) -> float:
    """sum over n > level admitted by params of n**gamma * 2**(-(n - level)(p - 1)).

    For a pair of paths that are linear on every level-`level` interval, the
    level-n power sum is 2**(-(n - level)(p - 1)) times the level-`level` one,
    so this is the weight of everything finer than `level`.
    """
    ratio = 2.0 ** -(params.p - 1.0)
    if params.tail_mode is TailMode.ANALYTIC_TAIL:
        return ratio * power_geometric_sum(params.gamma, ratio, level + 1)
    return sum(n**params.gamma * ratio ** (n - level) for n in range(level + 1, params.n_max + 1))


def _joint_level(a: DyadicIncrements, b: DyadicIncrements) -> int | None:
    if a.linear_level is None or b.linear_level is None:
        return None
    return max(a.linear_level, b.linear_level)


def _norms(values: np.ndarray, j: int) -> np.ndarray:
    if j == 1:
        return np.linalg.norm(values, axis=-1)
    return np.linalg.norm(values, axis=(-2, -1))


def _check_j(j: int) -> None:
    if j not in (1, 2):
        raise RejectedInputError(f"level j must be 1 or 2, got {j}")


def level_power_sum(a: DyadicIncrements, b: DyadicIncrements, n: int, j: int, p: float) -> float:
    """sum_k |a_j - b_j|**(p/j) over the 2**n intervals of level n."""
    _check_j(j)
    if a.dim != b.dim:
        raise RejectedInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    level = _joint_level(a, b)
    if level is not None and n > level:
        return 2.0 ** (-(n - level) * (p - 1.0)) * level_power_sum(a, b, level, j, p)
    diff = a.increments(n, j) - b.increments(n, j)
    return float(np.sum(_norms(diff, j) ** (p / j)))


def weighted_level_sum(level_sum: Callable[[int], Any], level: int, params: RhoParams) -> Any:
    """sum_n n**gamma level_sum(n) for a pair that is linear beyond `level`.

    Levels up to `level` (capped at n_max when truncating) are summed directly,
    finer ones through `tail_weight`. `level_sum` may return arrays (batches).
    """
    direct_top = level if params.tail_mode is TailMode.ANALYTIC_TAIL else min(level, params.n_max)
    total = sum(n**params.gamma * level_sum(n) for n in range(1, direct_top + 1))
    weight = tail_weight(params, level)
    if weight > 0.0:
        total = total + weight * level_sum(level)
    return total


def rho(j: int, a: DyadicIncrements, b: DyadicIncrements, params: RhoParams) -> float:
    """rho_j(a, b) = (sum_n n**gamma sum_k |a_j - b_j|**(p/j))**(j/p)."""
    _check_j(j)
    p, gamma = params.p, params.gamma
    level = _joint_level(a, b)
    if level is None:
        if params.tail_mode is TailMode.ANALYTIC_TAIL:
            raise RejectedInputError("the analytic tail needs inputs that are linear beyond some dyadic level")
        total = sum(n**gamma * level_power_sum(a, b, n, j, p) for n in range(1, params.n_max + 1))
        return total ** (j / p)

    total = weighted_level_sum(lambda n: level_power_sum(a, b, n, j, p), level, params)
    return total ** (j / p)


def interval_increments(sig1: np.ndarray, sig2: np.ndarray, i: int, j: int) -> np.ndarray:
    """Level-j increments over [t_l, t_i] for every l < i, from running signatures at the anchors.

    `sig1` and `sig2` have shapes (..., K, d) and (..., K, d, d); leading axes
    are carried through, so the result is (..., i, d) or (..., i, d, d).
    """
    head1 = sig1[..., :i, :]
    step1 = sig1[..., i, None, :] - head1
    if j == 1:
        return step1
    return sig2[..., i, None, :, :] - sig2[..., :i, :, :] - np.einsum("...ki,...kj->...kij", head1, step1)


def p_variation_grid(
    incr: Callable[[int], np.ndarray], anchors: np.ndarray, p: float, j: int
) -> float | np.ndarray:
    """Largest sum_S |incr|**(p/j) over partitions S drawn from `anchors`, to the power j/p.

    `incr(i)` returns the level-j increments over [t_l, t_i] for l = 0..i-1,
    stacked on the axis before the tensor axes. Leading axes are independent
    paths and give an array of results. The dynamic program is
    V[i] = max_{l < i} V[l] + |incr(i)[l]|**(p/j).
    """
    _check_j(j)
    anchors = np.asarray(anchors, dtype=float)
    if anchors.ndim != 1 or anchors.size < 2:
        raise RejectedInputError(f"p-variation needs at least 2 anchors, got {anchors.size}")
    if np.any(np.diff(anchors) <= 0.0):
        raise RejectedInputError("anchors must be strictly increasing")
    exponent = p / j
    if exponent < 1.0:
        raise RejectedInputError(f"p/j must be >= 1, got {exponent}")
    best = None
    for i in range(1, anchors.size):
        costs = _norms(incr(i), j) ** exponent
        if costs.shape[-1] != i:
            raise DimensionMismatchError(f"incr({i}) must give {i} increments, got {costs.shape[-1]}")
        if best is None:
            best = np.zeros(costs.shape[:-1] + (anchors.size,))
        best[..., i] = np.max(best[..., :i] + costs, axis=-1)
    result = best[..., -1] ** (1.0 / exponent)
    return float(result) if result.ndim == 0 else result


def d_p_signatures(
    sig_a: tuple[np.ndarray, np.ndarray], sig_b: tuple[np.ndarray, np.ndarray], anchors: np.ndarray, p: float
) -> float | np.ndarray:
    """d_p between two lifts given their running signatures at shared anchors (batched like p_variation_grid)."""
    (a1, a2), (b1, b2) = sig_a, sig_b
    if a1.shape != b1.shape:
        raise DimensionMismatchError(f"signature shapes differ: {a1.shape} vs {b1.shape}")
    first = p_variation_grid(lambda i: interval_increments(a1, a2, i, 1) - interval_increments(b1, b2, i, 1), anchors, p, 1)
    second = p_variation_grid(lambda i: interval_increments(a1, a2, i, 2) - interval_increments(b1, b2, i, 2), anchors, p, 2)
    return np.maximum(first, second) if isinstance(first, np.ndarray) else max(first, second)


def d_p_grid(lift_a, lift_b, anchors: np.ndarray, p: float) -> float:
    """max_{k = 1, 2} of the anchor-restricted p-variation of the level-k increment differences."""
    anchors = np.asarray(anchors, dtype=float)
    if lift_a.dim != lift_b.dim:
        raise RejectedInputError(f"dimension mismatch: {lift_a.dim} vs {lift_b.dim}")
    return d_p_signatures(lift_a.signature_at(anchors), lift_b.signature_at(anchors), anchors, p)


def le1_bound(rho1_ab, rho2_ab, rho1_a, rho1_b) -> float | np.ndarray:
    """max{rho1(A,B), rho2(A,B), rho1(A,B) (rho1(A) + rho1(B))}, without the constant.

    Accepts scalars or equally shaped arrays (one entry per path).
    """
    values = [np.asarray(v, dtype=float) for v in (rho1_ab, rho2_ab, rho1_a, rho1_b)]
    if any(np.any((v < 0.0) | np.isnan(v)) for v in values):
        raise RejectedInputError(f"le1_bound inputs must be nonnegative, got {rho1_ab, rho2_ab, rho1_a, rho1_b}")
    r1_ab, r2_ab, r1_a, r1_b = values
    bound = np.maximum(np.maximum(r1_ab, r2_ab), r1_ab * (r1_a + r1_b))
    return float(bound) if bound.ndim == 0 else bound


def default_anchors(m: int, cap: int = 12) -> np.ndarray:
    """Dyadic grid of level min(m + 1, cap)."""
    level = min(m + 1, cap)
    return np.linspace(0.0, 1.0, 2**level + 1)


@dataclass(frozen=True)
class SinglePathBounds:
    pv1: float
    pv2: float
    rho1: float
    rho2: float

    @property
    def ratio1(self) -> float:
        """(sup sum |w1|**p)**(1/p) / rho1."""
        return self.pv1 / self.rho1 if self.rho1 > 0.0 else 0.0

    @property
    def ratio2(self) -> float:
        """(sup sum |w2|**(p/2))**(2/p) / (rho1**2 + rho2)."""
        scale = self.rho1**2 + self.rho2
        return self.pv2 / scale if scale > 0.0 else 0.0


def single_path_bounds(lift, params: RhoParams, anchors: np.ndarray) -> SinglePathBounds:
    zero = ZeroLift(lift.dim)
    anchors = np.asarray(anchors, dtype=float)
    sig1, sig2 = lift.signature_at(anchors)
    return SinglePathBounds(
        pv1=p_variation_grid(lambda i: interval_increments(sig1, sig2, i, 1), anchors, params.p, 1),
        pv2=p_variation_grid(lambda i: interval_increments(sig1, sig2, i, 2), anchors, params.p, 2),
        rho1=rho(1, lift, zero, params),
        rho2=rho(2, lift, zero, params),
    )


def single_path_ratios(
    sig1: np.ndarray, sig2: np.ndarray, anchors: np.ndarray, p: float, rho1: np.ndarray, rho2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched SinglePathBounds.ratio1 / ratio2 from running signatures (paths, K, ...) and per-path rho values."""
    pv1 = p_variation_grid(lambda i: interval_increments(sig1, sig2, i, 1), anchors, p, 1)
    pv2 = p_variation_grid(lambda i: interval_increments(sig1, sig2, i, 2), anchors, p, 2)
    scale = rho1**2 + rho2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio1 = np.where(rho1 > 0.0, pv1 / rho1, 0.0)
        ratio2 = np.where(scale > 0.0, pv2 / scale, 0.0)
    return ratio1, ratio2

"""Level-2 lifts of polygonal paths.

Two independent routes to the same numbers: the generic route folds straight
segments with Chen's product (``lift_polygonal``, ``PolygonalLift``), the
dyadic route evaluates the closed forms for the polygonal approximations
w^(m) of a dyadic path (``dyadic_level1``, ``dyadic_level2``, ``dyadic_diff``,
``DyadicLift``, ``diff_increments``). Each is the test oracle for the other.
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from roughdyadic.core.errors import DimensionMismatchError, RejectedInputError
from roughdyadic.rough.dyadic_paths import (
    DyadicBrownianPath,
    PolygonalPath,
    parent_index,
    xi,
    xi_level,
)
from roughdyadic.rough.tensor_algebra import GroupTensor2, chen_fold, running_products


class DyadicIncrements(Protocol):
    """Anything that yields level-j increments over all dyadic intervals of a level."""

    dim: int

    @property
    def linear_level(self) -> int | None: ...

    def increments(self, n: int, j: int) -> np.ndarray: ...


@dataclass(frozen=True)
class LiftedIncrement:
    value: GroupTensor2
    s: float
    t: float


def lift_segment(delta: np.ndarray) -> GroupTensor2:
    """Signature of the straight segment with increment `delta`: (1, delta, delta (x) delta / 2)."""
    delta = np.asarray(delta, dtype=float)
    return GroupTensor2(delta, 0.5 * np.outer(delta, delta))


def _check_interval(s: float, t: float) -> None:
    if not 0.0 <= s < t <= 1.0:
        raise RejectedInputError(f"need 0 <= s < t <= 1, got s={s}, t={t}")


def lift_polygonal(poly: PolygonalPath, s: float, t: float) -> GroupTensor2:
    """Chen product of the (partial) straight pieces of `poly` covering [s, t]."""
    _check_interval(s, t)
    segments = 2**poly.level
    first = min(int(math.floor(s * segments)), segments - 1)
    last = int(math.ceil(t * segments))
    index = np.arange(first, last)
    lo = np.maximum(index / segments, s)
    hi = np.minimum((index + 1) / segments, t)
    fractions = (hi - lo) * segments
    deltas = fractions[:, None] * poly.increments[index]
    halves = 0.5 * np.einsum("ni,nj->nij", deltas, deltas)
    return chen_fold(deltas, halves)


def _check_indices(path: DyadicBrownianPath, m: int, n: int, k: int, need: int) -> None:
    if m < 0 or need > path.resolution:
        raise RejectedInputError(f"level m={m} needs path resolution >= {need}, have {path.resolution}")
    if n < 0:
        raise RejectedInputError(f"level n must be >= 0, got {n}")
    if k < 1 or k > 2**n:
        raise RejectedInputError(f"index k={k} outside 1..{2**n}")


def _block_area(block: np.ndarray) -> np.ndarray:
    """A - A^T with A = sum_s (sum_{r<s} x_r) (x) x_s, i.e. sum_{r<s} [x_r, x_s]."""
    before = np.cumsum(block, axis=-2) - block
    area = np.einsum("...bi,...bj->...ij", before, block)
    return area - np.swapaxes(area, -1, -2)


def dyadic_level1(path: DyadicBrownianPath, m: int, n: int, k: int) -> np.ndarray:
    """First level of w^(m) over [(k-1)/2**n, k/2**n]."""
    _check_indices(path, m, n, k, need=m)
    if n <= m:
        return xi(path, n, k)
    return 2.0 ** (m - n) * xi(path, m, parent_index(n, k, m))


def dyadic_level2(path: DyadicBrownianPath, m: int, n: int, k: int) -> np.ndarray:
    """Second level of w^(m) over [(k-1)/2**n, k/2**n]."""
    _check_indices(path, m, n, k, need=m)
    if n < m:
        width = 2 ** (m - n)
        block = xi_level(path, m)[(k - 1) * width : k * width]
        coarse = xi(path, n, k)
        return 0.5 * np.outer(coarse, coarse) + 0.5 * _block_area(block)
    coarse = xi(path, m, parent_index(n, k, m))
    return 0.5 * 4.0 ** (m - n) * np.outer(coarse, coarse)


def dyadic_diff(path: DyadicBrownianPath, m: int, n: int, k: int, level: int) -> np.ndarray:
    """X_j = w^(m+1),j - w^(m),j over [(k-1)/2**n, k/2**n], j = `level`."""
    _check_indices(path, m, n, k, need=m + 1)
    if level == 1:
        if n <= m:
            return np.zeros(path.dim)
        fine = xi(path, m + 1, parent_index(n, k, m + 1))
        coarse = xi(path, m, parent_index(n, k, m))
        return 2.0 ** (m + 1 - n) * fine - 2.0 ** (m - n) * coarse
    if level == 2:
        if n <= m:
            width = 2 ** (m - n)
            pairs = xi_level(path, m + 1)[2 * (k - 1) * width : 2 * k * width]
            odd, even = pairs[0::2], pairs[1::2]
            return 0.5 * (np.einsum("ri,rj->ij", odd, even) - np.einsum("ri,rj->ij", even, odd))
        return dyadic_level2(path, m + 1, n, k) - dyadic_level2(path, m, n, k)
    raise RejectedInputError(f"level must be 1 or 2, got {level}")


_interval_cache: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()
_interval_lock = threading.Lock()


def interval_lift(path: DyadicBrownianPath, m: int, n: int, k: int) -> LiftedIncrement:
    """Memoized lift of w^(m) over the k-th level-n interval."""
    key = (m, n, k)
    with _interval_lock:
        cached = _interval_cache.setdefault(path, {}).get(key)
    if cached is not None:
        return cached
    value = GroupTensor2(dyadic_level1(path, m, n, k), dyadic_level2(path, m, n, k))
    lifted = LiftedIncrement(value=value, s=(k - 1) / 2**n, t=k / 2**n)
    with _interval_lock:
        _interval_cache.setdefault(path, {})[key] = lifted
    return lifted


def _refine(level1: np.ndarray, factor: int) -> tuple[np.ndarray, np.ndarray]:
    """Split every straight piece into `factor` equal parts."""
    sub = np.repeat(level1 / factor, factor, axis=0)
    return sub, 0.5 * np.einsum("ni,nj->nij", sub, sub)


class PolygonalLift:
    """Level-2 lift of the piecewise-linear path through `vertices` at k / 2**level."""

    def __init__(self, vertices: np.ndarray):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        segments = vertices.shape[0] - 1
        if segments < 1 or segments & (segments - 1):
            raise RejectedInputError(f"a lift needs 2**L + 1 vertices, got {vertices.shape[0]}")
        vertices.setflags(write=False)
        self.vertices = vertices
        self.dim = vertices.shape[1]
        self.level = segments.bit_length() - 1
        deltas = np.diff(vertices, axis=0)
        self._deltas = np.vstack([deltas, np.zeros((1, self.dim))])
        self._sig1, self._sig2 = running_products(deltas, 0.5 * np.einsum("ni,nj->nij", deltas, deltas))
        self._cache: dict[tuple[int, int], np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def linear_level(self) -> int | None:
        return self.level

    @property
    def origin(self) -> np.ndarray:
        return self.vertices[0]

    def signature_at(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Running signature S(0, t) at each time; shapes (K, d) and (K, d, d)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any((times < 0.0) | (times > 1.0)):
            raise RejectedInputError("signature times must lie in [0, 1]")
        segments = 2**self.level
        scaled = times * segments
        k = np.minimum(np.floor(scaled).astype(int), segments)
        frac = scaled - k
        partial = frac[:, None] * self._deltas[k]
        base1 = self._sig1[k]
        sig1 = base1 + partial
        sig2 = (
            self._sig2[k]
            + np.einsum("ki,kj->kij", base1, partial)
            + 0.5 * np.einsum("ki,kj->kij", partial, partial)
        )
        return sig1, sig2

    def position_at(self, times: np.ndarray) -> np.ndarray:
        sig1, _ = self.signature_at(times)
        return self.origin + sig1

    def increment(self, s: float, t: float) -> GroupTensor2:
        _check_interval(s, t)
        sig1, sig2 = self.signature_at(np.array([s, t]))
        level1 = sig1[1] - sig1[0]
        return GroupTensor2(level1, sig2[1] - sig2[0] - np.outer(sig1[0], level1))

    def _grid_increments(self, n: int, j: int) -> np.ndarray:
        step = 2 ** (self.level - n)
        a1, b1 = self._sig1[0:-1:step], self._sig1[step::step]
        level1 = b1 - a1
        if j == 1:
            return level1
        a2, b2 = self._sig2[0:-1:step], self._sig2[step::step]
        return b2 - a2 - np.einsum("ki,kj->kij", a1, level1)

    def _compute_increments(self, n: int, j: int) -> np.ndarray:
        if n <= self.level:
            return self._grid_increments(n, j)
        sub1, sub2 = _refine(self._grid_increments(self.level, 1), 2 ** (n - self.level))
        return sub1 if j == 1 else sub2

    def increments(self, n: int, j: int) -> np.ndarray:
        """Level-j increments over all 2**n dyadic intervals of level n."""
        if j not in (1, 2):
            raise RejectedInputError(f"level j must be 1 or 2, got {j}")
        if n < 0:
            raise RejectedInputError(f"level n must be >= 0, got {n}")
        key = (n, j)
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            cached = self._compute_increments(n, j)
            cached.setflags(write=False)
            with self._lock:
                self._cache[key] = cached
        return cached


class DyadicLift(PolygonalLift):
    """Lift of w^(m), with dyadic increments taken from the closed forms."""

    def __init__(self, path: DyadicBrownianPath, m: int):
        if m < 0 or m > path.resolution:
            raise RejectedInputError(f"level m={m} exceeds path resolution {path.resolution}")
        super().__init__(path.grid_values(m))
        self.path = path
        self.m = m

    def _compute_increments(self, n: int, j: int) -> np.ndarray:
        m = self.m
        if j == 1:
            if n <= m:
                return xi_level(self.path, n)
            return np.repeat(2.0 ** (m - n) * xi_level(self.path, m), 2 ** (n - m), axis=0)
        if n <= m:
            coarse = xi_level(self.path, n)
            blocks = xi_level(self.path, m).reshape(2**n, 2 ** (m - n), self.dim)
            return 0.5 * np.einsum("ki,kj->kij", coarse, coarse) + 0.5 * _block_area(blocks)
        fine = xi_level(self.path, m)
        squares = 0.5 * 4.0 ** (m - n) * np.einsum("ki,kj->kij", fine, fine)
        return np.repeat(squares, 2 ** (n - m), axis=0)


class ZeroLift:
    """The constant path at the origin; rho against it measures a single path."""

    def __init__(self, dim: int):
        self.dim = dim

    @property
    def linear_level(self) -> int | None:
        return 0

    def increments(self, n: int, j: int) -> np.ndarray:
        shape = (2**n, self.dim) if j == 1 else (2**n, self.dim, self.dim)
        return np.zeros(shape)

    def signature_at(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        count = np.atleast_1d(times).size
        return np.zeros((count, self.dim)), np.zeros((count, self.dim, self.dim))


class AnchoredLift:
    """Running signature known only on a grid of times (e.g. a rough integral)."""

    def __init__(self, times: np.ndarray, sig1: np.ndarray, sig2: np.ndarray, origin: np.ndarray | None = None):
        times = np.asarray(times, dtype=float)
        if sig1.shape[0] != times.size or sig2.shape[:2] != sig1.shape[:1] + sig1.shape[1:]:
            raise DimensionMismatchError(
                f"signature arrays {sig1.shape}, {sig2.shape} do not match {times.size} times"
            )
        self.times = times
        self.sig1 = sig1
        self.sig2 = sig2
        self.dim = sig1.shape[1]
        self.origin = np.zeros(self.dim) if origin is None else np.asarray(origin, dtype=float)

    @property
    def linear_level(self) -> int | None:
        return None

    def signature_at(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        index = np.searchsorted(self.times, times)
        index = np.minimum(index, self.times.size - 1)
        if not np.array_equal(self.times[index], times):
            raise RejectedInputError("AnchoredLift is only known at its anchor times")
        return self.sig1[index], self.sig2[index]

    def position_at(self, times: np.ndarray) -> np.ndarray:
        return self.origin + self.signature_at(times)[0]

    def increment(self, s: float, t: float) -> GroupTensor2:
        _check_interval(s, t)
        sig1, sig2 = self.signature_at(np.array([s, t]))
        level1 = sig1[1] - sig1[0]
        return GroupTensor2(level1, sig2[1] - sig2[0] - np.outer(sig1[0], level1))

    def increments(self, n: int, j: int) -> np.ndarray:
        grid = np.linspace(0.0, 1.0, 2**n + 1)
        sig1, sig2 = self.signature_at(grid)
        level1 = np.diff(sig1, axis=0)
        if j == 1:
            return level1
        return sig2[1:] - sig2[:-1] - np.einsum("ki,kj->kij", sig1[:-1], level1)


def grid_signatures(vertices: np.ndarray, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Running signatures of stacked polygonal paths at the 2**level + 1 dyadic grid times.

    `vertices` has shape (..., 2**m + 1, d), the values at k / 2**m. Segments
    are split evenly when the grid is finer than the vertices, which leaves
    the path unchanged.
    """
    vertices = np.asarray(vertices, dtype=float)
    segments = vertices.shape[-2] - 1
    if segments < 1 or segments & (segments - 1):
        raise RejectedInputError(f"a lift needs 2**m + 1 vertices, got {vertices.shape[-2]}")
    if level < 0:
        raise RejectedInputError(f"grid level must be >= 0, got {level}")
    m = segments.bit_length() - 1
    finest = max(m, level)
    deltas = np.diff(vertices, axis=-2)
    if finest > m:
        factor = 2 ** (finest - m)
        deltas = np.repeat(deltas / factor, factor, axis=-2)
    sig1, sig2 = running_products(deltas, 0.5 * np.einsum("...ni,...nj->...nij", deltas, deltas))
    step = 2 ** (finest - level)
    return sig1[..., ::step, :], sig2[..., ::step, :, :]


def diff_increments(path: DyadicBrownianPath, m: int, n: int, j: int) -> np.ndarray:
    """X_j over all level-n intervals, from the closed forms; shape (2**n, d) or (2**n, d, d)."""
    if m < 0 or m + 1 > path.resolution:
        raise RejectedInputError(f"differences at level m={m} need resolution >= {m + 1}")
    dim = path.dim
    if j == 1:
        if n <= m:
            return np.zeros((2**n, dim))
        fine = np.repeat(2.0 ** (m + 1 - n) * xi_level(path, m + 1), 2 ** (n - m - 1), axis=0)
        coarse = np.repeat(2.0 ** (m - n) * xi_level(path, m), 2 ** (n - m), axis=0)
        return fine - coarse
    if j == 2:
        if n <= m:
            pairs = xi_level(path, m + 1).reshape(2**m, 2, dim)
            odd, even = pairs[:, 0], pairs[:, 1]
            brackets = np.einsum("ri,rj->rij", odd, even) - np.einsum("ri,rj->rij", even, odd)
            return 0.5 * brackets.reshape(2**n, 2 ** (m - n), dim, dim).sum(axis=1)
        return DyadicLift(path, m + 1).increments(n, 2) - DyadicLift(path, m).increments(n, 2)
    raise RejectedInputError(f"level j must be 1 or 2, got {j}")


def _matrix_or_vector_norm(values: np.ndarray, j: int) -> np.ndarray:
    if j == 1:
        return np.linalg.norm(values, axis=-1)
    return np.linalg.norm(values, axis=(-2, -1))


def lift_power_sums(xi_m: np.ndarray, m: int, n: int, j: int, p: float) -> np.ndarray:
    """sum_k |w^(m),j over the k-th level-n interval|**(p/j) for a batch of paths.

    `xi_m` holds level-m increments, shape (..., 2**m, d).
    """
    if n > m:
        return 2.0 ** (-(n - m) * (p - 1.0)) * lift_power_sums(xi_m, m, m, j, p)
    lead, dim = xi_m.shape[:-2], xi_m.shape[-1]
    blocks = xi_m.reshape(lead + (2**n, 2 ** (m - n), dim))
    coarse = blocks.sum(axis=-2)
    if j == 1:
        values = coarse
    else:
        values = 0.5 * np.einsum("...ki,...kj->...kij", coarse, coarse) + 0.5 * _block_area(blocks)
    return np.sum(_matrix_or_vector_norm(values, j) ** (p / j), axis=-1)


def diff_power_sums(eta: np.ndarray, m: int, n: int, j: int, p: float) -> np.ndarray:
    """sum_k |X_j over the k-th level-n interval|**(p/j) for a batch of paths.

    `eta` holds level-(m+1) increments, shape (..., 2**(m+1), d).
    """
    lead, dim = eta.shape[:-2], eta.shape[-1]
    pairs = eta.reshape(lead + (2**m, 2, dim))
    odd, even = pairs[..., 0, :], pairs[..., 1, :]
    if j == 1:
        if n <= m:
            return np.zeros(lead)
        gap = np.linalg.norm(odd - even, axis=-1)
        return 2.0 ** (n - m) * np.sum((2.0 ** (m - n) * gap) ** p, axis=-1)
    if n <= m:
        brackets = 0.5 * (np.einsum("...ri,...rj->...rij", odd, even) - np.einsum("...ri,...rj->...rij", even, odd))
        coarse = brackets.reshape(lead + (2**n, 2 ** (m - n), dim, dim)).sum(axis=-3)
        return np.sum(_matrix_or_vector_norm(coarse, 2) ** (p / 2.0), axis=-1)
    total = odd + even
    coarse_sq = 0.125 * np.einsum("...ri,...rj->...rij", total, total)
    fine = np.stack(
        [
            0.5 * np.einsum("...ri,...rj->...rij", odd, odd) - coarse_sq,
            0.5 * np.einsum("...ri,...rj->...rij", even, even) - coarse_sq,
        ],
        axis=-3,
    )
    base = np.sum(_matrix_or_vector_norm(fine, 2).reshape(lead + (-1,)) ** (p / 2.0), axis=-1)
    return 2.0 ** (-(n - m - 1) * (p - 1.0)) * base

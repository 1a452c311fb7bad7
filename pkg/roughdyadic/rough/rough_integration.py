"""Integration of 1-forms against level-2 rough paths.

The integral over [s, t] is the limit, over dyadic refinements of [s, t], of
the Chen products of the local approximations

    y1 = f(w_u) w1_{u,v} + Df(w_u) w2_{u,v},    y2 = (f (x) f)(w_u) w2_{u,v}

taken over the pieces [u, v] of the partition.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

from roughdyadic.core.errors import ConvergenceError, DimensionMismatchError, RejectedInputError
from roughdyadic.rough.level2_lift import AnchoredLift
from roughdyadic.rough.tensor_algebra import GroupTensor2, chen_fold, running_products, tensor_distance

logger = logging.getLogger(__name__)

FD_STEP = 1e-6


@dataclass(frozen=True)
class OneForm:
    """An R^out-valued 1-form on R^dim.

    `f(x)` has shape (out_dim, dim); `df(x)[a, k, j]` is d f_ak / d x_j. With
    `vectorized=True` both accept a batch of points (K, dim) and return a
    leading K axis.
    """

    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    dim: int
    out_dim: int
    vectorized: bool = False

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise DimensionMismatchError(f"1-form on R^{self.dim} evaluated at points of dim {points.shape[1]}")
        if self.vectorized:
            values = np.asarray(self.f(points), dtype=float)
        else:
            values = np.stack([np.asarray(self.f(x), dtype=float) for x in points])
        if values.shape != (points.shape[0], self.out_dim, self.dim):
            raise DimensionMismatchError(f"f returned shape {values.shape[1:]}, expected {(self.out_dim, self.dim)}")
        return values

    def derivative(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.vectorized:
            values = np.asarray(self.df(points), dtype=float)
        else:
            values = np.stack([np.asarray(self.df(x), dtype=float) for x in points])
        expected = (points.shape[0], self.out_dim, self.dim, self.dim)
        if values.shape != expected:
            raise DimensionMismatchError(f"df returned shape {values.shape[1:]}, expected {expected[1:]}")
        return values

    def validate(self, points: np.ndarray, h: float = FD_STEP, rtol: float = 1e-4) -> float:
        """Compare df with central differences of f; returns the largest relative error."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        analytic = self.derivative(points)
        worst = 0.0
        for j in range(self.dim):
            step = np.zeros(self.dim)
            step[j] = h
            numeric = (self.evaluate(points + step) - self.evaluate(points - step)) / (2.0 * h)
            scale = np.maximum(1.0, np.abs(analytic[..., j]))
            worst = max(worst, float(np.max(np.abs(numeric - analytic[..., j]) / scale)))
        if worst > rtol:
            raise RejectedInputError(f"df disagrees with finite differences of f (relative error {worst:.3g})")
        return worst


def identity_form(dim: int) -> OneForm:
    def f(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim))

    def df(x: np.ndarray) -> np.ndarray:
        return np.zeros((x.shape[0], dim, dim, dim))

    return OneForm(f, df, dim, dim, vectorized=True)


def linear_form(coefficients: np.ndarray, offset: np.ndarray | None = None) -> OneForm:
    """f(x)[a, k] = offset[a, k] + sum_j coefficients[a, k, j] x_j."""
    coefficients = np.asarray(coefficients, dtype=float)
    out_dim, dim, _ = coefficients.shape
    offset = np.zeros((out_dim, dim)) if offset is None else np.asarray(offset, dtype=float)

    def f(x: np.ndarray) -> np.ndarray:
        return offset + np.einsum("akj,bj->bak", coefficients, x)

    def df(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(coefficients, (x.shape[0],) + coefficients.shape)

    return OneForm(f, df, dim, out_dim, vectorized=True)


def cosine_form(dim: int) -> OneForm:
    """f(x) = diag(cos x); its integral along any path has level 1 equal to sin(w_t) - sin(w_s)."""

    def f(x: np.ndarray) -> np.ndarray:
        return np.einsum("bk,kj->bkj", np.cos(x), np.eye(dim))

    def df(x: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[0], dim, dim, dim))
        index = np.arange(dim)
        out[:, index, index, index] = -np.sin(x)
        return out

    return OneForm(f, df, dim, dim, vectorized=True)


def _local_terms(
    values: np.ndarray, derivs: np.ndarray, level1: np.ndarray, level2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    y1 = np.einsum("bak,bk->ba", values, level1) + np.einsum("baki,bik->ba", derivs, level2)
    y2 = np.einsum("bai,bij,bcj->bac", values, level2, values)
    return y1, y2


def local_approx(form: OneForm, w_s: np.ndarray, inc: GroupTensor2) -> GroupTensor2:
    """(f(w_s) w1 + Df(w_s) w2, (f (x) f)(w_s) w2)."""
    if inc.dim != form.dim:
        raise DimensionMismatchError(f"increment of dim {inc.dim} against a 1-form on R^{form.dim}")
    point = np.asarray(w_s, dtype=float)[None, :]
    y1, y2 = _local_terms(form.evaluate(point), form.derivative(point), inc.level1[None], inc.level2[None])
    return GroupTensor2(y1[0], y2[0])


def _partition_terms(form: OneForm, lift, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sig1, sig2 = lift.signature_at(times)
    level1 = sig1[1:] - sig1[:-1]
    level2 = sig2[1:] - sig2[:-1] - np.einsum("ki,kj->kij", sig1[:-1], level1)
    points = lift.position_at(times[:-1])
    return _local_terms(form.evaluate(points), form.derivative(points), level1, level2)


def _check_lift(form: OneForm, lift) -> None:
    if lift.dim != form.dim:
        raise DimensionMismatchError(f"driver of dim {lift.dim} against a 1-form on R^{form.dim}")


def integrate(
    form: OneForm,
    lift,
    s: float = 0.0,
    t: float = 1.0,
    *,
    schedule: Iterable[int] | None = None,
    tol: float = 1e-10,
) -> GroupTensor2:
    """Chen products of local approximations over dyadic refinements of [s, t].

    `schedule` lists the refinement levels tried in order (2**level pieces);
    by default 0 .. driver level + 2. Stops when two successive iterates are
    within `tol` in every level; raises ConvergenceError otherwise.
    """
    _check_lift(form, lift)
    if not 0.0 <= s < t <= 1.0:
        raise RejectedInputError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    if schedule is None:
        if getattr(lift, "level", None) is None:
            raise RejectedInputError("pass a refinement schedule for drivers without a dyadic level")
        schedule = range(0, lift.level + 3)
    levels = list(schedule)
    if not levels:
        raise RejectedInputError("refinement schedule is empty")

    previous: GroupTensor2 | None = None
    current: GroupTensor2 | None = None
    for level in levels:
        times = np.linspace(s, t, 2**level + 1)
        y1, y2 = _partition_terms(form, lift, times)
        previous, current = current, chen_fold(y1, y2)
        if previous is not None:
            gap = tensor_distance(previous, current)
            logger.debug("Refinement level %d: gap %.3g", level, gap)
            if gap < tol:
                return current
    raise ConvergenceError(
        f"integral over [{s}, {t}] did not settle to {tol:g} by refinement level {levels[-1]}",
        previous=previous,
        last=current,
        level=levels[-1],
    )


def integrate_path(form: OneForm, lift, level: int | None = None) -> AnchoredLift:
    """Running signature of the integral over [0, 1] on the dyadic partition of `level`."""
    _check_lift(form, lift)
    if level is None:
        level = lift.level + 2
    times = np.linspace(0.0, 1.0, 2**level + 1)
    y1, y2 = _partition_terms(form, lift, times)
    sig1, sig2 = running_products(y1, y2)
    return AnchoredLift(times, sig1, sig2)


def riemann_stieltjes_affine(form: OneForm, vertices: np.ndarray) -> np.ndarray:
    """sum_k f(midpoint_k) (x_k - x_{k-1}); exact for affine f on a polygonal path."""
    vertices = np.asarray(vertices, dtype=float)
    midpoints = 0.5 * (vertices[:-1] + vertices[1:])
    return np.einsum("bak,bk->a", form.evaluate(midpoints), np.diff(vertices, axis=0))


ONE_FORMS: dict[str, Callable[[int], OneForm]] = {
    "identity": identity_form,
    "cosine": cosine_form,
}

"""Wong-Zakai approximations: ODEs driven by the polygonal paths w^(m).

On the k-th segment of w^(m) the driver moves with constant velocity
v = 2**m xi_m^k, so the equation dy = f(y) dw^(m) + f0(y) dt becomes the
autonomous ODE y' = f(y) v + f0(y), stepped with classical RK4.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.linalg import expm

from roughdyadic.core.errors import (
    BlowUpError,
    DimensionMismatchError,
    RejectedInputError,
    UnknownCaseError,
)
from roughdyadic.rough.dyadic_paths import DyadicBrownianPath, PolygonalPath, polygonal
from roughdyadic.rough.level2_lift import DyadicLift, PolygonalLift
from roughdyadic.rough.variation_metrics import d_p_grid, default_anchors

logger = logging.getLogger(__name__)

FD_STEP = 1e-6


@dataclass(frozen=True)
class VectorFieldSpec:
    """dy = f(y) dw + f0(y) dt with f(y) of shape (dim_out, dim_in).

    Optional `jac(y)[a, i, b]` = d f_ai / d y_b and `jac0(y)[a, b]` = d f0_a / d y_b
    are only used by `validate`.
    """

    dim_in: int
    dim_out: int
    f: Callable[[np.ndarray], np.ndarray]
    f0: Callable[[np.ndarray], np.ndarray] | None = None
    jac: Callable[[np.ndarray], np.ndarray] | None = None
    jac0: Callable[[np.ndarray], np.ndarray] | None = None

    def velocity_field(self, v: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        if self.f0 is None:
            return lambda y: self.f(y) @ v
        return lambda y: self.f(y) @ v + self.f0(y)

    def validate(self, states: np.ndarray, h: float = FD_STEP, rtol: float = 1e-4) -> None:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        for y in states:
            values = np.asarray(self.f(y), dtype=float)
            if values.shape != (self.dim_out, self.dim_in):
                raise DimensionMismatchError(f"f returned shape {values.shape}, expected {(self.dim_out, self.dim_in)}")
            if not np.all(np.isfinite(values)):
                raise RejectedInputError(f"f is not finite at y={y.tolist()}")
            if self.f0 is not None and not np.all(np.isfinite(self.f0(y))):
                raise RejectedInputError(f"f0 is not finite at y={y.tolist()}")
            for fn, jac in ((self.f, self.jac), (self.f0, self.jac0)):
                if fn is None or jac is None:
                    continue
                analytic = np.asarray(jac(y), dtype=float)
                for b in range(self.dim_out):
                    step = np.zeros(self.dim_out)
                    step[b] = h
                    numeric = (np.asarray(fn(y + step)) - np.asarray(fn(y - step))) / (2.0 * h)
                    if not np.allclose(numeric, analytic[..., b], rtol=rtol, atol=rtol):
                        raise RejectedInputError(f"Jacobian disagrees with finite differences at y={y.tolist()}")


@dataclass(frozen=True)
class SolveDiagnostics:
    error_estimates: np.ndarray
    substeps: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.max(self.error_estimates)) if self.error_estimates.size else 0.0


@dataclass
class SolveResult:
    times: np.ndarray
    y: np.ndarray
    diagnostics: SolveDiagnostics | None = None

    @cached_property
    def lift(self) -> PolygonalLift:
        """Lift of the piecewise-linear interpolation of the trajectory."""
        if self.times[0] != 0.0 or self.times[-1] != 1.0:
            raise RejectedInputError("only trajectories over [0, 1] can be lifted")
        return PolygonalLift(self.y)


def _rk4(g: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float, steps: int) -> np.ndarray:
    for _ in range(steps):
        k1 = g(y)
        k2 = g(y + 0.5 * h * k1)
        k3 = g(y + 0.5 * h * k2)
        k4 = g(y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def _vertex_index(t: float, segments: int) -> int:
    scaled = t * segments
    index = int(round(scaled))
    if abs(scaled - index) > 1e-12 or not 0 <= index <= segments:
        raise RejectedInputError(f"time {t} is not a vertex of the level-{segments.bit_length() - 1} grid")
    return index


def solve_wz(
    spec: VectorFieldSpec,
    y0: np.ndarray,
    driver: PolygonalPath,
    substeps: int = 4,
    *,
    guard_tol: float | None = 1e-10,
    max_substeps: int = 64,
    t0: float = 0.0,
    t1: float = 1.0,
) -> SolveResult:
    """Solve the equation driven by `driver` with RK4, recording the state at its vertices.

    With `guard_tol` set, each segment is also solved with twice the substeps
    and the count keeps doubling (up to `max_substeps`) while the two results
    differ by more than `guard_tol`; the finer result is kept.
    """
    if substeps < 1:
        raise RejectedInputError(f"substeps must be >= 1, got {substeps}")
    if driver.dim != spec.dim_in:
        raise DimensionMismatchError(f"driver of dim {driver.dim} for a system driven in R^{spec.dim_in}")
    y = np.array(y0, dtype=float).reshape(-1)
    if y.size != spec.dim_out:
        raise DimensionMismatchError(f"y0 has {y.size} components, state space is R^{spec.dim_out}")

    segments = 2**driver.level
    first, last = _vertex_index(t0, segments), _vertex_index(t1, segments)
    if first >= last:
        raise RejectedInputError(f"need t0 < t1, got {t0}, {t1}")
    velocities = driver.increments * segments
    h = 1.0 / segments

    states = [y]
    estimates: list[float] = []
    used: list[int] = []
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(first, last):
            g = spec.velocity_field(velocities[k])
            steps = substeps
            coarse = _rk4(g, y, h / steps, steps)
            if guard_tol is not None:
                fine = _rk4(g, y, h / (2 * steps), 2 * steps)
                gap = float(np.max(np.abs(fine - coarse)))
                while gap > guard_tol and 2 * steps < max_substeps:
                    steps *= 2
                    coarse = fine
                    fine = _rk4(g, y, h / (2 * steps), 2 * steps)
                    gap = float(np.max(np.abs(fine - coarse)))
                if steps > substeps:
                    logger.debug("Segment %d: doubled to %d substeps (gap %.3g)", k, 2 * steps, gap)
                coarse = fine
                estimates.append(gap)
                used.append(2 * steps)
            if not np.all(np.isfinite(coarse)):
                time = (k + 1) * h
                raise BlowUpError(f"solution blew up before t={time:g}", time=time, state=y)
            y = coarse
            states.append(y)

    diagnostics = None
    if guard_tol is not None:
        diagnostics = SolveDiagnostics(np.array(estimates), np.array(used))
    times = np.arange(first, last + 1) * h
    return SolveResult(times=times, y=np.array(states), diagnostics=diagnostics)


@dataclass(frozen=True)
class WZStep:
    m: int
    result: SolveResult
    dp_gap: float
    sup_gap: float


def wz_sequence(
    spec: VectorFieldSpec,
    y0: np.ndarray,
    path: DyadicBrownianPath,
    m_range: Iterable[int],
    substeps: int = 4,
    *,
    p: float = 2.5,
    anchor_level_cap: int = 12,
    guard_tol: float | None = 1e-10,
) -> list[WZStep]:
    """Solve for each m and compare with the solution at m + 1 in d_p (on anchors) and sup norm."""
    levels = sorted(set(m_range))
    if not levels:
        raise RejectedInputError("m_range must not be empty")
    if levels[-1] + 1 > path.resolution:
        raise RejectedInputError(f"m up to {levels[-1]} needs path resolution >= {levels[-1] + 1}")

    solved: dict[int, SolveResult] = {}

    def solution(m: int) -> SolveResult:
        if m not in solved:
            solved[m] = solve_wz(spec, y0, polygonal(path, m), substeps, guard_tol=guard_tol)
        return solved[m]

    steps = []
    for m in levels:
        coarse, fine = solution(m), solution(m + 1)
        dp_gap = d_p_grid(fine.lift, coarse.lift, default_anchors(m, anchor_level_cap), p)
        sup_gap = float(np.max(np.abs(fine.y[::2] - coarse.y)))
        logger.debug("m=%d: d_p gap %.3g, sup gap %.3g", m, dp_gap, sup_gap)
        steps.append(WZStep(m=m, result=coarse, dp_gap=dp_gap, sup_gap=sup_gap))
    return steps


@dataclass(frozen=True)
class ReferenceCase:
    case_id: str
    spec: VectorFieldSpec
    y0: np.ndarray = field(repr=False)
    description: str = ""


def _exp_scalar() -> ReferenceCase:
    spec = VectorFieldSpec(
        dim_in=1,
        dim_out=1,
        f=lambda y: y.reshape(1, 1),
        jac=lambda y: np.ones((1, 1, 1)),
    )
    return ReferenceCase("exp_scalar", spec, np.array([1.0]), "dy = y dw, y = y0 exp(w)")


COMMUTING_GENERATORS = (
    np.array([[0.2, 0.5], [-0.5, 0.2]]),
    np.array([[0.1, -0.3], [0.3, 0.1]]),
)


def _commuting_linear() -> ReferenceCase:
    a1, a2 = COMMUTING_GENERATORS

    def f(y: np.ndarray) -> np.ndarray:
        state = y.reshape(2, 2)
        return np.stack([(a1 @ state).reshape(-1), (a2 @ state).reshape(-1)], axis=1)

    spec = VectorFieldSpec(dim_in=2, dim_out=4, f=f)
    return ReferenceCase(
        "commuting_linear", spec, np.eye(2).reshape(-1), "dY = A1 Y dw1 + A2 Y dw2, Y = exp(A1 w1 + A2 w2) Y0"
    )


def _rotation_area() -> ReferenceCase:
    def f(y: np.ndarray) -> np.ndarray:
        return np.array([[1.0, 0.0], [0.0, 1.0], [-0.5 * y[1], 0.5 * y[0]]])

    def jac(y: np.ndarray) -> np.ndarray:
        out = np.zeros((3, 2, 3))
        out[2, 0, 1] = -0.5
        out[2, 1, 0] = 0.5
        return out

    spec = VectorFieldSpec(dim_in=2, dim_out=3, f=f, jac=jac)
    return ReferenceCase(
        "rotation_area", spec, np.array([0.5, -0.25, 0.1]), "third coordinate accumulates the Levy area"
    )


REFERENCE_CASES: dict[str, Callable[[], ReferenceCase]] = {
    "exp_scalar": _exp_scalar,
    "commuting_linear": _commuting_linear,
    "rotation_area": _rotation_area,
}


def reference_case(case_id: str) -> ReferenceCase:
    try:
        return REFERENCE_CASES[case_id]()
    except KeyError as e:
        raise UnknownCaseError(f"unknown case {case_id!r}; choose from {', '.join(REFERENCE_CASES)}") from e


def stratonovich_reference(
    case_id: str, path: DyadicBrownianPath, level: int | None = None, y0: np.ndarray | None = None
) -> np.ndarray:
    """Exact solution at the dyadic times of `level` (default: the path resolution)."""
    case = reference_case(case_id)
    if path.dim != case.spec.dim_in:
        raise DimensionMismatchError(f"case {case_id} is driven in R^{case.spec.dim_in}, path has dim {path.dim}")
    start = case.y0 if y0 is None else np.asarray(y0, dtype=float).reshape(-1)
    level = path.resolution if level is None else level
    w = path.grid_values(level)

    if case_id == "exp_scalar":
        return start[None, :] * np.exp(w)
    if case_id == "commuting_linear":
        a1, a2 = COMMUTING_GENERATORS
        state = start.reshape(2, 2)
        return np.stack([(expm(a1 * w1 + a2 * w2) @ state).reshape(-1) for w1, w2 in w])
    # rotation_area: the area comes from the finest polygonal lift of the path
    lift = DyadicLift(path, path.resolution)
    _, sig2 = lift.signature_at(np.linspace(0.0, 1.0, 2**level + 1))
    area = 0.5 * (sig2[:, 0, 1] - sig2[:, 1, 0])
    a, b, c = start
    third = c + 0.5 * (a * w[:, 1] - b * w[:, 0]) + area
    return np.column_stack([a + w[:, 0], b + w[:, 1], third])


def dump_trajectory_csv(result: SolveResult, target: Path) -> Path:
    columns = {"t": result.times}
    for i in range(result.y.shape[1]):
        columns[f"y{i + 1}"] = result.y[:, i]
    pd.DataFrame(columns).to_csv(target, index=False, float_format="%.17g")
    logger.info("Wrote trajectory (%d points) to %s", result.times.size, target)
    return target

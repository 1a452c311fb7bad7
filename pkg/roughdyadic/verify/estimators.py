"""Monte Carlo estimators, log2 slope fits and the calibrated-constant protocol."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from roughdyadic.core.errors import InsufficientSamplesError, RejectedInputError
from roughdyadic.models import Verdict
from roughdyadic.rough.variation_metrics import power_geometric_sum

logger = logging.getLogger(__name__)

MIN_SAMPLES = 100
CALIBRATION_MARGIN = 4.0


def estimate_lq(values: np.ndarray, q: float) -> tuple[float, float]:
    """(E|F|^q)^(1/q) from samples of F, with a delta-method standard error."""
    if q < 1:
        raise RejectedInputError(f"q must be >= 1, got {q}")
    values = np.abs(np.asarray(values, dtype=float).reshape(-1))
    if values.size < MIN_SAMPLES:
        raise InsufficientSamplesError(f"L^q estimates need at least {MIN_SAMPLES} samples, got {values.size}")
    powers = values**q
    mean = float(np.mean(powers))
    if mean == 0.0:
        return 0.0, 0.0
    mean_se = float(np.std(powers, ddof=1)) / math.sqrt(values.size)
    estimate = mean ** (1.0 / q)
    return estimate, estimate * mean_se / (q * mean)


def estimate_probability(events: np.ndarray) -> tuple[float, float]:
    events = np.asarray(events, dtype=bool).reshape(-1)
    if events.size == 0:
        raise InsufficientSamplesError("probability estimate from zero samples")
    p = float(np.mean(events))
    return p, math.sqrt(p * (1.0 - p) / events.size)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    stderr: float


def fit_slope(
    scales: Sequence[float], values: Sequence[float], stderrs: Sequence[float] | None = None
) -> SlopeFit:
    """Least squares of log2(value) on scale.

    With per-point standard errors the slope error is propagated from them
    (the slope is linear in the log values); otherwise the regression's own
    standard error is reported.
    """
    x = np.asarray(scales, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.size < 3 or x.size != v.size:
        raise RejectedInputError(f"slope fits need at least 3 matching points, got {x.size} and {v.size}")
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise RejectedInputError("slope fits need positive finite values")
    if np.ptp(x) == 0.0:
        raise RejectedInputError("slope fits need at least two distinct scales")
    y = np.log2(v)
    fit = stats.linregress(x, y)
    residual = float(np.sqrt(np.mean((y - (fit.intercept + fit.slope * x)) ** 2)))
    stderr = float(fit.stderr)
    if stderrs is not None:
        se = np.asarray(stderrs, dtype=float)
        weights = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
        stderr = float(np.sqrt(np.sum((weights * se / (v * math.log(2.0))) ** 2)))
    return SlopeFit(slope=float(fit.slope), intercept=float(fit.intercept), residual=residual, stderr=stderr)


def slope_verdict(fit: SlopeFit, target: float, direction: str, tol: float) -> Verdict:
    """eq: |slope - target| <= tol; le: slope <= target + tol; ge: slope >= target - tol."""
    if tol < 2.0 * fit.stderr:
        logger.warning("Slope %.3f has standard error %.3f; tolerance %.3f too tight to decide", fit.slope, fit.stderr, tol)
        return Verdict.INCONCLUSIVE
    if direction == "eq":
        ok = abs(fit.slope - target) <= tol
    elif direction == "le":
        ok = fit.slope <= target + tol
    elif direction == "ge":
        ok = fit.slope >= target - tol
    else:
        raise RejectedInputError(f"unknown slope direction {direction!r}")
    return Verdict.PASS if ok else Verdict.FAIL


def compute_c_theta(theta: float, gamma: float) -> float:
    """1 / sum_{n >= 1} n^gamma 2^(-n theta)."""
    if theta <= 0:
        raise RejectedInputError(f"theta must be positive, got {theta}")
    ratio = 2.0**-theta
    return 1.0 / (ratio * power_geometric_sum(gamma, ratio, 1))


@dataclass(frozen=True)
class CalibratedCheck:
    constant: float
    bounds: np.ndarray
    verdict: Verdict


def calibrated_check(
    scales: Sequence[float],
    probabilities: Sequence[float],
    stderrs: Sequence[float],
    rate: float,
    margin: float = CALIBRATION_MARGIN,
) -> CalibratedCheck:
    """P(s) <= C 2^(-rate s) with C fitted on the two smallest scales.

    Passes when every estimate sits under margin * C 2^(-rate s); fails when
    some estimate exceeds that bound by more than two standard errors.
    """
    s = np.asarray(scales, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    smallest = np.unique(s)[:2]
    calibrate = np.isin(s, smallest)
    constant = float(np.max(p[calibrate] * 2.0 ** (rate * s[calibrate])))
    bounds = margin * constant * 2.0 ** (-rate * s)
    if np.all(p <= bounds):
        verdict = Verdict.PASS
    elif np.any(p - 2.0 * se > bounds):
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.INCONCLUSIVE
    return CalibratedCheck(constant=constant, bounds=bounds, verdict=verdict)


def floor_probabilities(probabilities: Sequence[float], samples: int) -> tuple[np.ndarray, bool]:
    """Raise zero estimates to 0.5 / samples so they can enter a log2 fit.

    Returns the floored values and whether any estimate was zero.
    """
    if samples < 1:
        raise RejectedInputError(f"samples must be positive, got {samples}")
    values = np.asarray(probabilities, dtype=float)
    return np.maximum(values, 0.5 / samples), bool(np.any(values == 0.0))


def monotone_verdict(estimates: Sequence[float], stderrs: Sequence[float]) -> Verdict:
    """Non-increasing sequence check.

    Any increase fails unless it lies within two combined standard errors of
    zero, which is inconclusive.
    """
    values = np.asarray(estimates, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    if values.shape != se.shape:
        raise RejectedInputError(f"{values.size} estimates but {se.size} standard errors")
    rises = np.diff(values)
    if np.all(rises <= 0.0):
        return Verdict.PASS
    spread = 2.0 * np.hypot(se[:-1], se[1:])
    if np.any(rises > spread):
        return Verdict.FAIL
    return Verdict.INCONCLUSIVE

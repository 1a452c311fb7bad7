"""Monte Carlo checks of the quantitative lemmas, one registry entry per lemma id.

Moment checks sample the support blocks of increment functionals directly.
Path checks draw whole dyadic paths from the shared per-path seed schedule,
so every path-based lemma sees the same paths for a given seed.
"""

from __future__ import annotations

import logging
import math
import zlib
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from roughdyadic.core.errors import RejectedInputError, SpecViolationError, UnknownCaseError
from roughdyadic.core.parallel import PATH_STREAM, Chunk, map_chunks, path_seeds, plan_chunks
from roughdyadic.models import EstimateRow, RateCheckSpec, RhoParams, Verdict, cite, combine_verdicts
from roughdyadic.rough.dyadic_malliavin import (
    IncrementFunctional,
    RhoPowerFunctional,
    f_pow,
    g_pow,
    power_derivative_bound_check,
    sample_norms,
    x1,
    x2,
    y1,
    y2,
)
from roughdyadic.rough.dyadic_paths import generate
from roughdyadic.rough.level2_lift import diff_power_sums, grid_signatures, lift_power_sums
from roughdyadic.rough.variation_metrics import (
    d_p_signatures,
    default_anchors,
    le1_bound,
    single_path_ratios,
    weighted_level_sum,
)
from roughdyadic.verify.estimators import (
    calibrated_check,
    compute_c_theta,
    estimate_lq,
    estimate_probability,
    fit_slope,
    floor_probabilities,
    monotone_verdict,
    slope_verdict,
)

logger = logging.getLogger(__name__)

MOMENT = "moment"
PROBABILITY = "probability surrogate"
LE2_EXPONENTS = tuple(range(4, 11))
UNION_EXTRA_LEVELS = 200
BOUNDED_RATIO = 4.0
DP_BATCH = 256


@dataclass
class LemmaResult:
    lemma_id: str
    rows: list[EstimateRow] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        if not self.verdicts:
            return Verdict.INCONCLUSIVE
        return combine_verdicts(self.verdicts)


@dataclass(frozen=True)
class LemmaCheck:
    lemma_id: str
    summary: str
    reference: str
    run: Callable[[RateCheckSpec], LemmaResult]


LEMMAS: dict[str, LemmaCheck] = {}


def register(lemma_id: str, summary: str, kind: str = "lemma"):
    """Add a check to LEMMAS; its rows cite `kind lemma_id` in the anchor column."""

    def decorator(fn: Callable[[RateCheckSpec], LemmaResult]) -> Callable[[RateCheckSpec], LemmaResult]:
        LEMMAS[lemma_id] = LemmaCheck(lemma_id, summary, f"{kind} {lemma_id}", fn)
        return fn

    return decorator


def verify_lemma(lemma_id: str, spec: RateCheckSpec) -> LemmaResult:
    try:
        check = LEMMAS[lemma_id]
    except KeyError as e:
        raise UnknownCaseError(f"unknown lemma {lemma_id!r}; choose from {', '.join(LEMMAS)}") from e
    logger.info("Checking %s: %s (%d samples, seed %d)", lemma_id, check.summary, spec.samples, spec.seed)
    result = check.run(spec)
    if result.verdict is not Verdict.PASS:
        logger.warning("%s finished %s", lemma_id, result.verdict.value)
    else:
        logger.info("%s finished pass", lemma_id)
    return result


def _stream(*parts: object) -> int:
    label = "/".join(str(p) for p in parts)
    return zlib.crc32(label.encode()) + 1


class _Recorder:
    """Collects rows and sweep verdicts for one lemma."""

    def __init__(self, lemma_id: str, spec: RateCheckSpec):
        self.result = LemmaResult(lemma_id)
        self.spec = spec
        self.reference = LEMMAS[lemma_id].reference

    def note(self, message: str) -> None:
        logger.warning("%s: %s", self.result.lemma_id, message)
        self.result.notes.append(message)

    def row(self, statistic: str, estimate: float, anchor: str, kind: str = MOMENT, **fields) -> None:
        fields.setdefault("samples", self.spec.samples)
        self.result.rows.append(
            EstimateRow(
                lemma_id=self.result.lemma_id,
                statistic=statistic,
                estimate=estimate,
                anchor=cite(self.reference, anchor),
                kind=kind,
                **fields,
            )
        )

    def verdict(self, verdict: Verdict) -> Verdict:
        self.result.verdicts.append(verdict)
        return verdict

    def slope_sweep(
        self,
        statistic: str,
        points: Sequence[tuple[int, int]],
        estimates: Sequence[float],
        stderrs: Sequence[float] | None,
        axis: str,
        target: float,
        direction: str,
        anchor: str,
        q: float | None = None,
        kind: str = MOMENT,
    ) -> None:
        scales = [m if axis == "m" else n for m, n in points]
        slope = None
        verdict = None
        if len(points) < 3:
            self.note(f"{statistic}: {len(points)} point(s) in the {axis} sweep, slope not fitted")
        elif min(estimates) <= 0.0:
            self.note(f"{statistic}: non-positive estimates, slope not fitted")
            verdict = self.verdict(Verdict.INCONCLUSIVE)
        else:
            fit = fit_slope(scales, estimates, stderrs)
            slope = fit.slope
            verdict = self.verdict(slope_verdict(fit, target, direction, self.spec.tol))
            logger.info(
                "%s %s: slope in %s %.3f +- %.3f (target %s %.3f) -> %s",
                self.result.lemma_id, statistic, axis, fit.slope, fit.stderr, direction, target, verdict.value,
            )
        for (m, n), estimate, se in zip(points, estimates, stderrs or [0.0] * len(points)):
            self.row(statistic, estimate, anchor, kind, m=m, n=n, q=q, stderr=se, slope=slope, verdict=verdict)

    def zero_rows(self, statistic: str, points: Sequence[tuple[int, int]], estimates: Sequence[float], anchor: str) -> None:
        if not points:
            return
        verdict = self.verdict(Verdict.PASS if all(e == 0.0 for e in estimates) else Verdict.FAIL)
        for (m, n), estimate in zip(points, estimates):
            self.row(statistic, estimate, anchor, m=m, n=n, q=self.spec.q, verdict=verdict)

    def bounded(self, statistic: str, ms: Sequence[int], estimates: Sequence[float], stderrs: Sequence[float], anchor: str) -> None:
        low, high = min(estimates), max(estimates)
        ratio = high / low if low > 0.0 else math.inf
        verdict = self.verdict(Verdict.PASS if ratio <= BOUNDED_RATIO else Verdict.FAIL)
        logger.info("%s %s: max/min over m = %.3f -> %s", self.result.lemma_id, statistic, ratio, verdict.value)
        for m, estimate, se in zip(ms, estimates, stderrs):
            self.row(statistic, estimate, anchor, m=m, q=self.spec.q, stderr=se, verdict=verdict)
        self.row(f"{statistic} max/min", ratio, f"max/min <= {BOUNDED_RATIO:g}", verdict=verdict)

    def probability_sweep(
        self,
        statistic: str,
        points: Sequence[tuple[int, int]],
        scales: Sequence[int],
        events: Sequence[np.ndarray],
        rate: float,
        anchor: str,
    ) -> tuple[np.ndarray, np.ndarray, Verdict]:
        probabilities, stderrs = zip(*(estimate_probability(e) for e in events))
        check = calibrated_check(scales, probabilities, stderrs, rate)
        verdict = self.verdict(check.verdict)
        slope = None
        if len(set(scales)) >= 3:
            slope = fit_slope(scales, self.floored(statistic, probabilities)).slope
        logger.info(
            "%s %s: C = %.3g at rate %.3f -> %s", self.result.lemma_id, statistic, check.constant, rate, verdict.value
        )
        for (m, n), p, se in zip(points, probabilities, stderrs):
            self.row(statistic, p, anchor, PROBABILITY, m=m, n=n, stderr=se, slope=slope, verdict=verdict)
        return np.array(probabilities), np.array(stderrs), verdict

    def floored(self, statistic: str, probabilities: Sequence[float]) -> np.ndarray:
        values, hit_zero = floor_probabilities(probabilities, self.spec.samples)
        if hit_zero:
            self.note(f"{statistic}: zero probabilities floored at {0.5 / self.spec.samples:g} for the slope fit")
        return values


def _functional_moment(spec: RateCheckSpec, functional: IncrementFunctional, quantity: str, *label: object) -> tuple[float, float]:
    order = 2 if quantity == "D2F" else 1
    norms = sample_norms(
        functional,
        spec.samples,
        spec.seed,
        order,
        stream=_stream(*label, functional.descriptor),
        chunk_size=spec.chunk_size,
        threads=spec.threads,
    )
    return estimate_lq(norms[quantity], spec.q)


def _sobolev(spec: RateCheckSpec, functional: IncrementFunctional, *label: object) -> tuple[float, float]:
    norms = sample_norms(
        functional,
        spec.samples,
        spec.seed,
        spec.order,
        stream=_stream(*label, functional.descriptor),
        chunk_size=spec.chunk_size,
        threads=spec.threads,
    )
    parts = [estimate_lq(values, spec.q) for values in norms.values()]
    return sum(e for e, _ in parts), sum(se for _, se in parts)


def _moment_sweep(
    rec: _Recorder,
    statistic: str,
    points: list[tuple[int, int]],
    build: Callable[[int, int], IncrementFunctional],
    quantity: str,
    axis: str,
    target: float,
    anchor: str,
    direction: str = "eq",
) -> None:
    if not points:
        rec.note(f"{statistic}: no (m, n) pairs in range for this regime")
        return
    pairs = [_functional_moment(rec.spec, build(m, n), quantity, rec.result.lemma_id, statistic) for m, n in points]
    estimates, stderrs = zip(*pairs)
    rec.slope_sweep(statistic, points, estimates, stderrs, axis, target, direction, anchor, q=rec.spec.q)


def _path_statistics(
    spec: RateCheckSpec, resolution: int, compute: Callable[[np.ndarray], dict[str, np.ndarray]]
) -> dict[str, np.ndarray]:
    """Run `compute` on stacked path values (size, 2**M + 1, d) chunk by chunk."""
    seeds = path_seeds(spec.seed, spec.samples)

    def run(chunk) -> dict[str, np.ndarray]:
        batch = seeds[chunk.start : chunk.start + chunk.size]
        values = np.stack([generate(spec.dim, resolution, int(s)).values for s in batch])
        return compute(values)

    chunks = plan_chunks(spec.samples, spec.chunk_size, spec.seed, stream=PATH_STREAM)
    results = map_chunks(run, chunks, spec.threads)
    return {key: np.concatenate([r[key] for r in results]) for key in results[0]}


def _grid_values(values: np.ndarray, level: int) -> np.ndarray:
    """Vertices of w^(level) from stacked finer path values (size, 2**M + 1, d)."""
    resolution = (values.shape[-2] - 1).bit_length() - 1
    return values[:, :: 2 ** (resolution - level)]


def _level_increments(values: np.ndarray, level: int) -> np.ndarray:
    return np.diff(_grid_values(values, level), axis=-2)


def _single_power(values: np.ndarray, m: int, j: int, params: RhoParams) -> np.ndarray:
    """rho_j(w^(m))**(p/j) for a batch of paths."""
    xi_m = _level_increments(values, m)
    return weighted_level_sum(lambda n: lift_power_sums(xi_m, m, n, j, params.p), m, params)


def _diff_power(values: np.ndarray, m: int, j: int, params: RhoParams) -> np.ndarray:
    """rho_j(w^(m+1), w^(m))**(p/j) for a batch of paths."""
    eta = _level_increments(values, m + 1)
    return weighted_level_sum(lambda n: diff_power_sums(eta, m, n, j, params.p), m + 1, params)


def _regimes(spec: RateCheckSpec):
    m_lo, m_hi = min(spec.m_range), max(spec.m_range)
    n_lo, n_hi = min(spec.n_range), max(spec.n_range)
    return m_lo, m_hi, n_lo, n_hi


@register("lem1a", "L^q norms of X1, X2 in m and n")
def check_lem1a(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("lem1a", spec)
    m_lo, m_hi, n_lo, n_hi = _regimes(spec)
    d = spec.dim

    zero_points = [(m_lo, n) for n in spec.n_range if n <= m_lo]
    zeros = [_functional_moment(spec, x1(m, n, 1, d), "F", "lem1a", "X1")[0] for m, n in zero_points]
    rec.zero_rows("||X1||_q", zero_points, zeros, "||X1||_q = 0 for n <= m")

    _moment_sweep(rec, "||X1||_q", [(m_lo, n) for n in spec.n_range if n > m_lo],
                  lambda m, n: x1(m, n, 1, d), "F", "n", -1.0, "||X1||_q <= C q 2^(m/2) 2^(-n), n > m")
    _moment_sweep(rec, "||X2||_q", [(m_hi, n) for n in spec.n_range if n <= m_hi],
                  lambda m, n: x2(m, n, 1, d), "F", "n", -0.5, "||X2||_q <= C q sqrt(2^-(m+n)), n <= m")
    _moment_sweep(rec, "||X2||_q", [(m, n_lo) for m in spec.m_range if m >= n_lo],
                  lambda m, n: x2(m, n, 1, d), "F", "m", -0.5, "||X2||_q <= C q sqrt(2^-(m+n)), n <= m")
    _moment_sweep(rec, "||X2||_q", [(m_lo, n) for n in spec.n_range if n > m_lo],
                  lambda m, n: x2(m, n, 1, d), "F", "n", -2.0, "||X2||_q <= C q 2^m 2^(-2n), n > m")
    _moment_sweep(rec, "||X2||_q", [(m, n_hi) for m in spec.m_range if m < n_hi],
                  lambda m, n: x2(m, n, 1, d), "F", "m", 1.0, "||X2||_q <= C q 2^m 2^(-2n), n > m")
    return rec.result


def _tensor_sum_norms(spec: RateCheckSpec, size: int) -> np.ndarray:
    def run(chunk) -> np.ndarray:
        rng = chunk.rng()
        left = rng.standard_normal((chunk.size, size, spec.dim))
        right = rng.standard_normal((chunk.size, size, spec.dim))
        return np.linalg.norm(np.einsum("sni,snj->sij", left, right), axis=(-2, -1))

    chunks = plan_chunks(spec.samples, spec.chunk_size, spec.seed, stream=_stream("le2", size))
    return np.concatenate(map_chunks(run, chunks, spec.threads))


@register("le2", "L^q norm of sums of independent tensor products")
def check_le2(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le2", spec)
    qs = sorted(set(spec.q_values) | {2.0})
    norms = {e: _tensor_sum_norms(spec, 2**e) for e in LE2_EXPONENTS}
    estimates = {q: [estimate_lq(norms[e], q) for e in LE2_EXPONENTS] for q in qs}
    points = [(0, e) for e in LE2_EXPONENTS]
    anchor = "||sum_{i<=N} xi_i (x) xi~_i||_q <= C q sqrt(N); n column is log2 N"
    for q in qs:
        values, stderrs = zip(*estimates[q])
        rec.slope_sweep("||sum xi (x) xi~||_q", points, values, stderrs, "n", 0.5, "eq", anchor, q=q)

    exact_ok = True
    for e, (estimate, se) in zip(LE2_EXPONENTS, estimates[2.0]):
        exact = spec.dim * math.sqrt(2**e)
        ok = abs(estimate - exact) <= 3.0 * se
        exact_ok &= ok
        rec.row("||sum xi (x) xi~||_2 - d sqrt(N)", estimate - exact, "E|sum|^2 = d^2 N", n=e, q=2.0, stderr=se)
    rec.verdict(Verdict.PASS if exact_ok else Verdict.FAIL)

    q_lo, q_hi = min(spec.q_values), max(spec.q_values)
    if q_hi > q_lo:
        ratios = [hi[0] / lo[0] for hi, lo in zip(estimates[q_hi], estimates[q_lo])]
        constant = max(ratios[:2])
        verdict = rec.verdict(Verdict.PASS if max(ratios) <= 4.0 * constant else Verdict.FAIL)
        for e, ratio in zip(LE2_EXPONENTS, ratios):
            rec.row(f"q-ratio {q_hi:g}/{q_lo:g}", ratio, "ratio bounded by 4 C (C at the two smallest N)", n=e, verdict=verdict)
    return rec.result


def _path_rho_moments(spec: RateCheckSpec, kind: str) -> dict[str, np.ndarray]:
    params = spec.rho
    resolution = max(spec.m_range) + 1

    def compute(values: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for j in (1, 2):
            fn = _single_power if kind == "single" else _diff_power
            out[f"j{j}"] = np.stack([fn(values, m, j, params) for m in spec.m_range], axis=-1)
        return out

    return _path_statistics(spec, resolution, compute)


@register("le3", "rho_j(w^(m))^(p/j) bounded in L^q uniformly in m")
def check_le3(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le3", spec)
    stats = _path_rho_moments(spec, "single")
    for j in (1, 2):
        estimates, stderrs = zip(*(estimate_lq(stats[f"j{j}"][:, i], spec.q) for i in range(len(spec.m_range))))
        rec.bounded(f"||rho{j}(w^(m))^(p/{j})||_q", spec.m_range, estimates, stderrs,
                    f"||rho{j}(w^(m))^(p/{j})||_q <= C q^(p/2)")
    return rec.result


@register("le4", "decay of rho_j(w^(m+1), w^(m))^(p/j) in L^q")
def check_le4(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le4", spec)
    stats = _path_rho_moments(spec, "diff")
    rate = (spec.p - 2.0) / 4.0
    points = [(m, None) for m in spec.m_range]
    for j in (1, 2):
        estimates, stderrs = zip(*(estimate_lq(stats[f"j{j}"][:, i], spec.q) for i in range(len(spec.m_range))))
        rec.slope_sweep(f"||rho{j}(w^(m+1),w^(m))^(p/{j})||_q", points, estimates, stderrs,
                        "m", -rate, "le", f"<= C q^(p/2) 2^(-m (p-2)/4), decay rate {rate:g}", q=spec.q)
    return rec.result


def _rho_gradient_sweep(rec: _Recorder, kind: str, j: int, rate: float | None, anchor: str) -> None:
    spec = rec.spec
    pairs = [
        _functional_moment(spec, RhoPowerFunctional(kind, j, m, spec.dim, spec.rho), "DF", rec.result.lemma_id, kind, j)
        for m in spec.m_range
    ]
    estimates, stderrs = zip(*pairs)
    statistic = f"|| |D rho{j}-{kind}|_H ||_q"
    if rate is None:
        rec.bounded(statistic, spec.m_range, estimates, stderrs, anchor)
    else:
        rec.slope_sweep(statistic, [(m, None) for m in spec.m_range], estimates, stderrs, "m", -rate, "le", anchor, q=spec.q)


@register("le5", "gradient of rho_1(w^(m))^p bounded in L^q")
def check_le5(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le5", spec)
    _rho_gradient_sweep(rec, "single", 1, None, "|| |D rho1(w^(m))^p|_H ||_q <= C, uniformly in m")
    return rec.result


@register("le8", "decay of the gradient of rho_j(w^(m+1), w^(m))^(p/j)")
def check_le8(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le8", spec)
    rate = (spec.p - 2.0) / 4.0
    for j in (1, 2):
        _rho_gradient_sweep(rec, "diff", j, rate, f"|| |D rho{j}(w^(m+1),w^(m))^(p/{j})|_H ||_q <= C 2^(-m (p-2)/4)")
    return rec.result


@register("le9", "decay of the gradient of rho_1(w^(m))^p rho_1(w^(m+1), w^(m))^p")
def check_le9(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le9", spec)
    rate = (spec.p - 2.0) / 8.0
    _rho_gradient_sweep(rec, "product", 1, rate, "|| |D (rho1(w^(m))^p rho1(w^(m+1),w^(m))^p)|_H ||_q <= C 2^(-m (p-2)/8)")
    return rec.result


@register("le6", "H-norms of DY1, DX1, DX2")
def check_le6(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le6", spec)
    m_lo, m_hi, _, _ = _regimes(spec)
    d = spec.dim
    low = [(m_hi, n) for n in spec.n_range if n <= m_hi]
    high = [(m_lo, n) for n in spec.n_range if n > m_lo]
    _moment_sweep(rec, "|DY1|_H", low, lambda m, n: y1(m, n, 1, d), "DF", "n", -0.5, "|DY1|_H = sqrt(d 2^-n), n <= m")
    _moment_sweep(rec, "|DY1|_H", high, lambda m, n: y1(m, n, 1, d), "DF", "n", -1.0, "|DY1|_H = 2^(m-n) sqrt(d 2^-m), n > m")
    _moment_sweep(rec, "|DX1|_H", high, lambda m, n: x1(m, n, 1, d), "DF", "n", -1.0, "|DX1|_H <= C 2^(m-n) 2^(-m/2), n > m")
    _moment_sweep(rec, "|DX2|_H", low, lambda m, n: x2(m, n, 1, d), "DF", "n", -0.5, "|| |DX2|_H ||_q <= C q sqrt(2^-(m+n)), n <= m")
    _moment_sweep(rec, "|DX2|_H", high, lambda m, n: x2(m, n, 1, d), "DF", "n", -2.0, "|| |DX2|_H ||_q <= C q 2^m 2^(-2n), n > m")
    return rec.result


@register("le7", "derivatives of the power functionals f^j, g^j")
def check_le7(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le7", spec)
    m_lo, m_hi, _, _ = _regimes(spec)
    d, nt = spec.dim, spec.n_tilde
    low = [(m_hi, n) for n in spec.n_range if n <= m_hi]
    high = [(m_lo, n) for n in spec.n_range if n > m_lo]
    _moment_sweep(rec, "|Df1|_H", high, lambda m, n: f_pow(1, m, n, 1, nt, d), "DF", "n", -2.0 * nt,
                  f"|| |Df1|_H ||_q <= C (2^m / 2^(2n))^N, n > m, N={nt}")
    _moment_sweep(rec, "|Dg1|_H", low, lambda m, n: g_pow(1, m, n, 1, nt, d), "DF", "n", -1.0 * nt,
                  f"|| |Dg1|_H ||_q <= C 2^(-n N), n <= m, N={nt}")
    _moment_sweep(rec, "|Df2|_H", low, lambda m, n: f_pow(2, m, n, 1, nt, d), "DF", "n", -1.0 * nt,
                  f"|| |Df2|_H ||_q <= C 2^(-(m+n) N), n <= m, N={nt}")
    _moment_sweep(rec, "|Df2|_H", high, lambda m, n: f_pow(2, m, n, 1, nt, d), "DF", "n", -4.0 * nt,
                  f"|| |Df2|_H ||_q <= C (2^m / 2^(2n))^(2N), n > m, N={nt}")
    return rec.result


def _pointwise_bounds(rec: _Recorder) -> None:
    spec = rec.spec
    m = min(spec.m_range)
    d = spec.dim
    builders = {"X1": x1, "X2": x2, "Y1": y1, "Y2": y2}
    for name, build in builders.items():
        for n in (m, m + 1):
            base = build(m, n, 1, d)
            rng = Chunk(0, 0, spec.samples, spec.seed, _stream("lem-19", name, n)).rng()
            blocks = base.sample(rng, spec.samples)
            for order in (1, 2):
                check = power_derivative_bound_check(base, 1, order, blocks)
                rate = float(np.mean(check.passed))
                verdict = rec.verdict(Verdict.PASS if rate == 1.0 else Verdict.FAIL)
                bound = "|D|X|^2| <= 2|X||DX|" if order == 1 else "|D^2|X|^2| <= 2|DX|^2 + 2|X||D^2X|"
                rec.row(f"pointwise {name} order {order} pass rate", rate, bound, m=m, n=n, verdict=verdict)


@register("lem-19", "derivatives of |X|^2 scalings and pointwise chain-rule bounds")
def check_lem19(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("lem-19", spec)
    m_lo, m_hi, _, _ = _regimes(spec)
    d = spec.dim
    low = [(m_hi, n) for n in spec.n_range if n <= m_hi]
    below = [(m_hi, n) for n in spec.n_range if n < m_hi]
    high = [(m_lo, n) for n in spec.n_range if n > m_lo]

    _moment_sweep(rec, "|D|Y1|^2|_H", high, lambda m, n: g_pow(1, m, n, 1, 1, d), "DF", "n", -2.0,
                  "|| |D|Y1|^2|_H ||_q <= C 2^m 2^(-2n), n > m")
    _moment_sweep(rec, "|D|Y1|^2|_H", low, lambda m, n: g_pow(1, m, n, 1, 1, d), "DF", "n", -1.0,
                  "|| |D|Y1|^2|_H ||_q <= C 2^(-n), n <= m")
    zero_points = [(m_lo, n) for n in spec.n_range if n <= m_lo]
    zeros = [_functional_moment(spec, f_pow(1, m, n, 1, 1, d), "DF", "lem-19", "X1")[0] for m, n in zero_points]
    rec.zero_rows("|D|X1|^2|_H", zero_points, zeros, "D|X1|^2 = 0 for n <= m")
    _moment_sweep(rec, "|D|X1|^2|_H", high, lambda m, n: f_pow(1, m, n, 1, 1, d), "DF", "n", -2.0,
                  "|| |D|X1|^2|_H ||_q <= C 2^m 2^(-2n), n > m")
    _moment_sweep(rec, "|D|X2|^2|_H", high, lambda m, n: f_pow(2, m, n, 1, 1, d), "DF", "n", -4.0,
                  "|| |D|X2|^2|_H ||_q <= C 2^(2m) 2^(-4n), n >= m")
    _moment_sweep(rec, "|D|X2|^2|_H", below, lambda m, n: f_pow(2, m, n, 1, 1, d), "DF", "n", -1.0,
                  "|| |D|X2|^2|_H ||_q <= C 2^-(m+n), n < m")
    _pointwise_bounds(rec)
    return rec.result


@register("sobolev", "Sobolev norms of the power functionals f^j, g^j", kind="estimate")
def check_sobolev(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("sobolev", spec)
    m_lo, m_hi, _, _ = _regimes(spec)
    d, nt = spec.dim, spec.n_tilde
    low = [(m_hi, n) for n in spec.n_range if n <= m_hi]
    high = [(m_lo, n) for n in spec.n_range if n > m_lo]
    sweeps = [
        ("||f1||_{q,N}", high, lambda m, n: f_pow(1, m, n, 1, nt, d), -2.0 * nt, "<= C q^N (2^m / 2^(2n))^N, n > m"),
        ("||g1||_{q,N}", high, lambda m, n: g_pow(1, m, n, 1, nt, d), -2.0 * nt, "<= C q^N (2^m / 2^(2n))^N, n > m"),
        ("||g1||_{q,N}", low, lambda m, n: g_pow(1, m, n, 1, nt, d), -1.0 * nt, "<= C q^N 2^(-n N), n <= m"),
        ("||f2||_{q,N}", low, lambda m, n: f_pow(2, m, n, 1, nt, d), -1.0 * nt, "<= C q^(2N) 2^(-(m+n) N), n <= m"),
        ("||f2||_{q,N}", high, lambda m, n: f_pow(2, m, n, 1, nt, d), -4.0 * nt, "<= C q^(2N) (2^m / 2^(2n))^(2N), n > m"),
    ]
    for statistic, points, build, target, anchor in sweeps:
        if not points:
            rec.note(f"{statistic}: no (m, n) pairs in range for this regime")
            continue
        estimates, stderrs = zip(*(_sobolev(spec, build(m, n), "sobolev", statistic) for m, n in points))
        rec.slope_sweep(statistic, points, estimates, stderrs, "n", target, "eq", f"{anchor}, N={nt}, order {spec.order}", q=spec.q)
    return rec.result


def _check_j21(spec: RateCheckSpec) -> float:
    p, nt = spec.p, spec.rate_n_tilde
    room = p - 2.0 - p / nt
    if room <= 0.0:
        raise SpecViolationError(f"need p - 2 - p/N > 0, got {room:.4g} for p={p}, N={nt}")
    if spec.beta + spec.theta >= room / 2.0:
        raise SpecViolationError(f"need beta + theta < (p - 2 - p/N)/2 = {room / 2.0:.4g}, got {spec.beta + spec.theta:g}")
    return room


def j21_rate(spec: RateCheckSpec, j: int) -> float:
    """Tail decay exponent of the per-level sums: [(p-2)/2 - (theta+beta)] 2 j N / p - 1."""
    return ((spec.p - 2.0) / 2.0 - (spec.theta + spec.beta)) * 2.0 * j * spec.rate_n_tilde / spec.p - 1.0


@register("j2.1", "tail probabilities of the per-level sums of |X_j|^(p/j)", kind="proposition")
def check_j21(spec: RateCheckSpec) -> LemmaResult:
    _check_j21(spec)
    rec = _Recorder("j2.1", spec)
    params = spec.rho
    c_theta = compute_c_theta(spec.theta, spec.gamma)
    points = [(m, n) for m in spec.m_range for n in spec.n_range]

    def compute(values: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for j in (1, 2):
            columns = []
            for m, n in points:
                eta = _level_increments(values, m + 1)
                sums = diff_power_sums(eta, m, n, j, params.p)
                columns.append(sums > c_theta * 2.0 ** (-spec.beta * m) * 2.0 ** (-spec.theta * n))
            out[f"j{j}"] = np.stack(columns, axis=-1)
        return out

    events = _path_statistics(spec, max(spec.m_range) + 1, compute)
    scales = [max(m, n) for m, n in points]
    for j in (1, 2):
        rate = j21_rate(spec, j)
        rec.probability_sweep(
            f"P{{sum_k |X{j}|^(p/{j}) > C_theta 2^(-beta m) 2^(-theta n)}}",
            points, scales, [events[f"j{j}"][:, i] for i in range(len(points))], rate,
            f"<= C 2^(-eps_{j} max(m,n)), eps_{j} = {rate:.4g}",
        )
    return rec.result


def _dp_statistics(spec: RateCheckSpec, with_bounds: bool) -> dict[str, np.ndarray]:
    """Per-path d_p(w^(m+1), w^(m)) for every m, and optionally the le1 bound and single-path ratios.

    Paths are processed DP_BATCH at a time; each output has shape (paths, len(m_range)).
    """
    params = spec.rho
    resolution = max(spec.m_range) + 1

    def batch(block: np.ndarray) -> dict[str, list[np.ndarray]]:
        out: dict[str, list[np.ndarray]] = {"dp": [], "bound": [], "ratio1": [], "ratio2": []}
        for m in spec.m_range:
            anchors = default_anchors(m, spec.anchor_level_cap)
            level = anchors.size.bit_length() - 1
            coarse = grid_signatures(_grid_values(block, m), level)
            fine = grid_signatures(_grid_values(block, m + 1), level)
            out["dp"].append(d_p_signatures(fine, coarse, anchors, params.p))
            if not with_bounds:
                continue
            rho1_ab = _diff_power(block, m, 1, params) ** (1.0 / params.p)
            rho2_ab = _diff_power(block, m, 2, params) ** (2.0 / params.p)
            rho1_a = _single_power(block, m + 1, 1, params) ** (1.0 / params.p)
            rho1_b = _single_power(block, m, 1, params) ** (1.0 / params.p)
            rho2_b = _single_power(block, m, 2, params) ** (2.0 / params.p)
            out["bound"].append(le1_bound(rho1_ab, rho2_ab, rho1_a, rho1_b))
            ratio1, ratio2 = single_path_ratios(*coarse, anchors, params.p, rho1_b, rho2_b)
            out["ratio1"].append(ratio1)
            out["ratio2"].append(ratio2)
        return out

    def compute(values: np.ndarray) -> dict[str, np.ndarray]:
        parts = [batch(values[start : start + DP_BATCH]) for start in range(0, values.shape[0], DP_BATCH)]
        return {
            key: np.concatenate([np.stack(part[key], axis=-1) for part in parts])
            for key in parts[0]
            if parts[0][key]
        }

    return _path_statistics(spec, resolution, compute)


@register("le1", "d_p domination by the rho bounds")
def check_le1(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("le1", spec)
    stats = _dp_statistics(spec, with_bounds=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(stats["bound"] > 0.0, stats["dp"] / stats["bound"], 0.0)
    series = {
        "max d_p / le1 bound": (ratios, "d_p(w^(m+1), w^(m)) <= C max{rho1, rho2, rho1 (rho1(A) + rho1(B))}"),
        "max single-path ratio, level 1": (stats["ratio1"], "(sup sum |w1|^p)^(1/p) <= C rho1(w)"),
        "max single-path ratio, level 2": (stats["ratio2"], "(sup sum |w2|^(p/2))^(2/p) <= C (rho1(w)^2 + rho2(w))"),
    }
    points = [(m, None) for m in spec.m_range]
    for statistic, (values, anchor) in series.items():
        maxima = np.max(values, axis=0)
        if not np.all(np.isfinite(maxima)):
            rec.verdict(Verdict.FAIL)
            rec.note(f"{statistic}: non-finite ratio")
        rec.slope_sweep(statistic, points, maxima.tolist(), None, "m", 0.0, "le", anchor)
    return rec.result


@register("th8", "summability proxy for d_p(w^(m+1), w^(m))", kind="theorem")
def check_th8(spec: RateCheckSpec) -> LemmaResult:
    limit = (spec.p - 2.0) / (8.0 * spec.p)
    if not 0.0 < spec.beta < limit:
        raise SpecViolationError(f"th8 needs beta in (0, (p-2)/(8p)) = (0, {limit:.4g}), got {spec.beta:g}")
    rec = _Recorder("th8", spec)
    dp = _dp_statistics(spec, with_bounds=False)["dp"]
    ms = list(spec.m_range)
    constant = float(np.median(dp[:, 0] * 2.0 ** (spec.beta * ms[0])))
    events = [dp[:, i] > constant * 2.0 ** (-spec.beta * m) for i, m in enumerate(ms)]
    probabilities, stderrs = (np.array(v) for v in zip(*(estimate_probability(e) for e in events)))
    anchor = f"P{{d_p > C1 2^(-beta m)}} <= C 2^(-eps m), eps = {spec.eps:g}; C1 = {constant:.4g} at m = {ms[0]}"

    calibrated = calibrated_check(ms, probabilities, stderrs, spec.eps)
    monotone = monotone_verdict(probabilities, stderrs)
    if monotone is Verdict.FAIL:
        rec.note("estimated probabilities increase in m beyond two standard errors")
    verdicts = [calibrated.verdict, monotone]
    slope = None
    if len(ms) >= 3:
        fit = fit_slope(ms, rec.floored("th8", probabilities), stderrs)
        slope = fit.slope
        verdicts.append(slope_verdict(fit, -spec.eps, "le", spec.tol))
    else:
        rec.note("fewer than 3 values of m, slope not fitted")
    verdict = rec.verdict(combine_verdicts(verdicts))
    logger.info(
        "th8: C1 = %.4g, calibrated %s, monotone %s, slope %s -> %s",
        constant, calibrated.verdict.value, monotone.value, "n/a" if slope is None else f"{slope:.3f}", verdict.value,
    )
    for m, p, se in zip(ms, probabilities, stderrs):
        rec.row("P{d_p(w^(m+1),w^(m)) > C1 2^(-beta m)}", float(p), anchor, PROBABILITY, m=m, stderr=float(se), slope=slope, verdict=verdict)
    return rec.result


@register("4-21-8", "tail probability of rho_1(w^(m)) above 2^(m delta/p)", kind="estimate")
def check_4_21_8(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("4-21-8", spec)
    params = spec.rho
    stats = _path_rho_moments(spec, "single")["j1"]
    ms = list(spec.m_range)
    events = [stats[:, i] ** (1.0 / params.p) > 2.0 ** (m * spec.delta / params.p) for i, m in enumerate(ms)]
    rate = 2.0 * spec.delta * spec.rate_n_tilde / params.p
    rec.probability_sweep("P{rho1(w^(m)) > 2^(m delta/p)}", [(m, None) for m in ms], ms, events, rate,
                          f"<= C 2^(-m 2 delta N / p), rate {rate:.4g}")
    return rec.result


@register("4-22-5a", "tail probability of rho_j(w^(m+1), w^(m))^(p/j) above 2^(-beta m)", kind="estimate")
def check_4_22_5a(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("4-22-5a", spec)
    stats = _path_rho_moments(spec, "diff")
    ms = list(spec.m_range)
    for j in (1, 2):
        events = [stats[f"j{j}"][:, i] > 2.0 ** (-spec.beta * m) for i, m in enumerate(ms)]
        rec.probability_sweep(f"P{{rho{j}(w^(m+1),w^(m))^(p/{j}) > 2^(-beta m)}}", [(m, None) for m in ms], ms,
                              events, spec.eps, f"<= C 2^(-eps m), eps = {spec.eps:g}")
    return rec.result


@dataclass(frozen=True)
class UnionBoundReport:
    lam: float
    fired: int
    held: int

    @property
    def holds(self) -> bool:
        return self.held == self.fired


def union_bound_decomposition_check(
    level_sums: np.ndarray, level: int, params: RhoParams, theta: float, lam: float | None = None
) -> UnionBoundReport:
    """Whenever sum_n n^gamma S_n > lam, some n has S_n > C_theta lam 2^(-theta n).

    `level_sums[:, n-1]` holds S_n = sum_k |X_j|^(p/j) for n = 1..level; the
    pair is linear beyond `level`, so finer S_n follow from S_level. Defaults
    `lam` to the median of the weighted sums.
    """
    level_sums = np.atleast_2d(np.asarray(level_sums, dtype=float))
    if level_sums.shape[1] != level:
        raise RejectedInputError(f"need S_1..S_{level}, got {level_sums.shape[1]} columns")
    totals = weighted_level_sum(lambda n: level_sums[:, n - 1], level, params)
    totals = np.broadcast_to(np.asarray(totals, dtype=float), (level_sums.shape[0],))
    if lam is None:
        lam = float(np.median(totals))
    fired = totals > lam

    extra = np.arange(1, UNION_EXTRA_LEVELS + 1)
    tail = level_sums[:, -1:] * 2.0 ** (-extra * (params.p - 1.0))
    sums = np.concatenate([level_sums, tail], axis=1)
    ns = np.arange(1, level + UNION_EXTRA_LEVELS + 1)
    thresholds = compute_c_theta(theta, params.gamma) * lam * 2.0 ** (-theta * ns)
    witnessed = np.any(sums > thresholds, axis=1)
    return UnionBoundReport(lam=lam, fired=int(np.sum(fired)), held=int(np.sum(fired & witnessed)))


@register("union", "decomposition of {rho_j^(p/j) > lambda} into per-level events", kind="estimate")
def check_union(spec: RateCheckSpec) -> LemmaResult:
    rec = _Recorder("union", spec)
    params = spec.rho

    def compute(values: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for m in spec.m_range:
            eta = _level_increments(values, m + 1)
            for j in (1, 2):
                out[f"{m}/{j}"] = np.stack([diff_power_sums(eta, m, n, j, params.p) for n in range(1, m + 2)], axis=-1)
        return out

    sums = _path_statistics(spec, max(spec.m_range) + 1, compute)
    for m in spec.m_range:
        for j in (1, 2):
            report = union_bound_decomposition_check(sums[f"{m}/{j}"], m + 1, params, spec.theta)
            rate = report.held / report.fired if report.fired else 1.0
            verdict = rec.verdict(Verdict.PASS if report.holds else Verdict.FAIL)
            rec.row(
                f"union bound j={j}: held / fired",
                rate,
                "rho_j^(p/j) > lambda implies some n with sum_k |X_j|^(p/j) > C_theta lambda 2^(-theta n)",
                PROBABILITY,
                m=m,
                verdict=verdict,
            )
    return rec.result

"""Malliavin derivatives of polynomial functionals of dyadic increments.

A functional F here depends on a contiguous block of B increments
xi_L^{o+1} .. xi_L^{o+B} of one generation level L. Its derivative is

    DF = sum_{b, i} dF/dxi^{b,i} 1_{J_L^b} e_i,

and since the 1_J e_i are orthogonal in the Cameron-Martin space with
squared norm |J| = 2**-L, every H-norm reduces to a weighted sum of squared
partials. All methods take sample arrays of shape (..., B, d).
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from roughdyadic.core.errors import DimensionMismatchError, RejectedInputError
from roughdyadic.core.parallel import map_chunks, plan_chunks
from roughdyadic.models import RhoParams, TailMode
from roughdyadic.rough.dyadic_paths import parent_index
from roughdyadic.rough.variation_metrics import tail_weight
from roughdyadic.verify.estimators import estimate_lq

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
# dense Hessian entries materialized at once
HESSIAN_BATCH_ENTRIES = 2**24


class IncrementFunctional(ABC):
    generation_level: int
    offset: int
    block_size: int
    dim: int
    descriptor: str = "custom"

    @property
    def out_shape(self) -> tuple[int, ...]:
        return ()

    @property
    def variance(self) -> float:
        return 2.0**-self.generation_level

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw the support block; level-L increments are iid N(0, 2**-L I)."""
        return rng.standard_normal((size, self.block_size, self.dim)) * math.sqrt(self.variance)

    def restrict(self, increments: np.ndarray) -> np.ndarray:
        """Support block out of all 2**L increments of the generation level."""
        increments = np.asarray(increments, dtype=float)
        if increments.shape[-2:] != (2**self.generation_level, self.dim):
            raise DimensionMismatchError(
                f"expected level-{self.generation_level} increments of shape "
                f"{(2**self.generation_level, self.dim)}, got {increments.shape[-2:]}"
            )
        return increments[..., self.offset : self.offset + self.block_size, :]

    def _check(self, blocks: np.ndarray) -> np.ndarray:
        blocks = np.asarray(blocks, dtype=float)
        if blocks.shape[-2:] != (self.block_size, self.dim):
            raise DimensionMismatchError(
                f"{self.descriptor} needs samples of shape (..., {self.block_size}, {self.dim}), got {blocks.shape}"
            )
        return blocks

    @abstractmethod
    def value(self, blocks: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def gradient(self, blocks: np.ndarray) -> np.ndarray:
        """Partials, shape (..., *out_shape, B, d)."""

    def hessian(self, blocks: np.ndarray) -> np.ndarray:
        """Second partials, shape (..., *out_shape, B, d, B, d)."""
        raise RejectedInputError(f"second derivatives are not available for {self.descriptor}")

    def hessian_sq_norm(self, blocks: np.ndarray) -> np.ndarray:
        hess = self.hessian(blocks)
        return np.sum(hess.reshape(hess.shape[: blocks.ndim - 2] + (-1,)) ** 2, axis=-1)

    def hessian_contract(self, blocks: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """sum_alpha weights_alpha * hessian_alpha, shape (..., B, d, B, d)."""
        raise RejectedInputError(f"second derivatives are not available for {self.descriptor}")

    def partial(self, blocks: np.ndarray, k: int, i: int) -> np.ndarray:
        return self.gradient(blocks)[..., k, i]

    def partial2(self, blocks: np.ndarray, k: int, i: int, l: int, j: int) -> np.ndarray:
        return self.hessian(blocks)[..., k, i, l, j]

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.descriptor}, L={self.generation_level}, B={self.block_size})"


class LinearFunctional(IncrementFunctional):
    """F = sum_b c_b xi^b (vector valued) or its `component` coordinate."""

    def __init__(
        self,
        level: int,
        offset: int,
        coefficients: np.ndarray,
        dim: int,
        component: int | None = None,
        descriptor: str = "linear",
    ):
        self.generation_level = level
        self.offset = offset
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.block_size = self.coefficients.size
        self.dim = dim
        self.component = component
        self.descriptor = descriptor

    @property
    def out_shape(self) -> tuple[int, ...]:
        return () if self.component is not None else (self.dim,)

    def value(self, blocks: np.ndarray) -> np.ndarray:
        total = np.einsum("b,...bi->...i", self.coefficients, self._check(blocks))
        return total if self.component is None else total[..., self.component]

    def gradient(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        lead = blocks.shape[:-2]
        if self.component is None:
            grad = np.einsum("b,ij->ibj", self.coefficients, np.eye(self.dim))
        else:
            grad = np.zeros((self.block_size, self.dim))
            grad[:, self.component] = self.coefficients
        return np.broadcast_to(grad, lead + grad.shape)

    def hessian(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        shape = blocks.shape[:-2] + self.out_shape + (self.block_size, self.dim) * 2
        return np.zeros(shape)

    def hessian_sq_norm(self, blocks: np.ndarray) -> np.ndarray:
        return np.zeros(self._check(blocks).shape[:-2])

    def hessian_contract(self, blocks: np.ndarray, weights: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        return np.zeros(blocks.shape[:-2] + (self.block_size, self.dim) * 2)


class QuadraticFunctional(IncrementFunctional):
    """F_ab = sum_{t,u} Q_tu xi_t^a xi_u^b (matrix valued)."""

    def __init__(self, level: int, offset: int, q: np.ndarray, dim: int, descriptor: str = "quadratic"):
        self.generation_level = level
        self.offset = offset
        self.q = np.asarray(q, dtype=float)
        self.block_size = self.q.shape[0]
        self.dim = dim
        self.descriptor = descriptor

    @property
    def out_shape(self) -> tuple[int, ...]:
        return (self.dim, self.dim)

    def value(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        return np.einsum("tu,...ta,...ub->...ab", self.q, blocks, blocks)

    def gradient(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        eye = np.eye(self.dim)
        right = np.einsum("su,...ub->...sb", self.q, blocks)
        left = np.einsum("ts,...ta->...sa", self.q, blocks)
        return np.einsum("ai,...sb->...absi", eye, right) + np.einsum("bi,...sa->...absi", eye, left)

    def hessian(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        eye = np.eye(self.dim)
        hess = np.einsum("ai,bj,sr->absirj", eye, eye, self.q) + np.einsum("bi,aj,rs->absirj", eye, eye, self.q)
        return np.broadcast_to(hess, blocks.shape[:-2] + hess.shape)

    def hessian_sq_norm(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        d = self.dim
        value = 2.0 * d * d * np.sum(self.q**2) + 2.0 * d * np.trace(self.q @ self.q)
        return np.full(blocks.shape[:-2], value)

    def hessian_contract(self, blocks: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return np.einsum("...ij,sr->...sirj", weights, self.q) + np.einsum("...ji,rs->...sirj", weights, self.q)


def coordinate(level: int, k: int, i: int, dim: int) -> LinearFunctional:
    """The single coordinate xi_L^{k,i}."""
    if not 1 <= k <= 2**level or not 0 <= i < dim:
        raise RejectedInputError(f"coordinate ({k}, {i}) outside level {level} in R^{dim}")
    return LinearFunctional(level, k - 1, np.ones(1), dim, component=i, descriptor=f"xi(L={level},k={k},i={i})")


def _check_mnk(m: int, n: int, k: int) -> None:
    if m < 0 or n < 0:
        raise RejectedInputError(f"levels must be >= 0, got m={m}, n={n}")
    if not 1 <= k <= 2**n:
        raise RejectedInputError(f"index k={k} outside 1..{2**n}")


def y1(m: int, n: int, k: int, dim: int) -> LinearFunctional:
    """First level of w^(m) over the k-th level-n interval."""
    _check_mnk(m, n, k)
    name = f"Y1(m={m},n={n},k={k})"
    if n >= m:
        return LinearFunctional(m, parent_index(n, k, m) - 1, [2.0 ** (m - n)], dim, descriptor=name)
    width = 2 ** (m - n)
    return LinearFunctional(m, (k - 1) * width, np.ones(width), dim, descriptor=name)


def x1(m: int, n: int, k: int, dim: int) -> LinearFunctional:
    """w^(m+1),1 - w^(m),1 over the k-th level-n interval."""
    _check_mnk(m, n, k)
    name = f"X1(m={m},n={n},k={k})"
    if n <= m:
        return LinearFunctional(m + 1, (k - 1) * 2 ** (m + 1 - n), np.zeros(1), dim, descriptor=name)
    parent = parent_index(n, k, m)
    child = parent_index(n, k, m + 1)
    coefficients = np.full(2, -(2.0 ** (m - n)))
    coefficients[child - 1 - 2 * (parent - 1)] += 2.0 ** (m + 1 - n)
    return LinearFunctional(m + 1, 2 * (parent - 1), coefficients, dim, descriptor=name)


def y2(m: int, n: int, k: int, dim: int) -> QuadraticFunctional:
    """Second level of w^(m) over the k-th level-n interval."""
    _check_mnk(m, n, k)
    name = f"Y2(m={m},n={n},k={k})"
    if n >= m:
        q = np.array([[0.5 * 4.0 ** (m - n)]])
        return QuadraticFunctional(m, parent_index(n, k, m) - 1, q, dim, descriptor=name)
    width = 2 ** (m - n)
    q = np.triu(np.ones((width, width)), 1) + 0.5 * np.eye(width)
    return QuadraticFunctional(m, (k - 1) * width, q, dim, descriptor=name)


def x2(m: int, n: int, k: int, dim: int) -> QuadraticFunctional:
    """w^(m+1),2 - w^(m),2 over the k-th level-n interval."""
    _check_mnk(m, n, k)
    name = f"X2(m={m},n={n},k={k})"
    if n <= m:
        pairs = 2 ** (m - n)
        q = np.zeros((2 * pairs, 2 * pairs))
        odd = np.arange(0, 2 * pairs, 2)
        q[odd, odd + 1] = 0.5
        q[odd + 1, odd] = -0.5
        return QuadraticFunctional(m + 1, 2 * (k - 1) * pairs, q, dim, descriptor=name)
    parent = parent_index(n, k, m)
    child = parent_index(n, k, m + 1) - 1 - 2 * (parent - 1)
    q = -0.5 * 4.0 ** (m - n) * np.ones((2, 2))
    q[child, child] += 0.5 * 4.0 ** (m + 1 - n)
    return QuadraticFunctional(m + 1, 2 * (parent - 1), q, dim, descriptor=name)


class PowerFunctional(IncrementFunctional):
    """|X|**(2 n_tilde) for a linear or quadratic X (Euclidean / Frobenius norm)."""

    def __init__(self, base: IncrementFunctional, n_tilde: int, descriptor: str | None = None):
        if n_tilde < 1:
            raise RejectedInputError(f"n_tilde must be a positive integer, got {n_tilde}")
        self.base = base
        self.n_tilde = n_tilde
        self.generation_level = base.generation_level
        self.offset = base.offset
        self.block_size = base.block_size
        self.dim = base.dim
        self.descriptor = descriptor or f"|{base.descriptor}|^{2 * n_tilde}"

    def _flat(self, blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lead = blocks.shape[:-2]
        values = self.base.value(blocks).reshape(lead + (-1,))
        grads = self.base.gradient(blocks).reshape(lead + (-1, self.block_size, self.dim))
        return values, grads

    def value(self, blocks: np.ndarray) -> np.ndarray:
        values, _ = self._flat(self._check(blocks))
        return np.sum(values**2, axis=-1) ** self.n_tilde

    def gradient(self, blocks: np.ndarray) -> np.ndarray:
        values, grads = self._flat(self._check(blocks))
        s = np.sum(values**2, axis=-1)
        ds = 2.0 * np.einsum("...a,...abi->...bi", values, grads)
        return (self.n_tilde * s ** (self.n_tilde - 1))[..., None, None] * ds

    def hessian(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        values, grads = self._flat(blocks)
        n = self.n_tilde
        s = np.sum(values**2, axis=-1)
        ds = 2.0 * np.einsum("...a,...abi->...bi", values, grads)
        weights = self.base.value(blocks)
        k = 2.0 * (np.einsum("...abi,...acj->...bicj", grads, grads) + self.base.hessian_contract(blocks, weights))
        first = n * (n - 1) * s ** max(n - 2, 0) if n > 1 else np.zeros_like(s)
        outer = np.einsum("...bi,...cj->...bicj", ds, ds)
        return first[..., None, None, None, None] * outer + (n * s ** (n - 1))[..., None, None, None, None] * k

    def hessian_sq_norm(self, blocks: np.ndarray) -> np.ndarray:
        blocks = self._check(blocks)
        lead = blocks.shape[:-2]
        flat = blocks.reshape((-1,) + blocks.shape[-2:])
        per_sample = (self.block_size * self.dim) ** 2
        batch = max(1, HESSIAN_BATCH_ENTRIES // per_sample)
        out = np.empty(flat.shape[0])
        for start in range(0, flat.shape[0], batch):
            hess = self.hessian(flat[start : start + batch])
            out[start : start + batch] = np.sum(hess.reshape(hess.shape[0], -1) ** 2, axis=-1)
        return out.reshape(lead)


def f_pow(j: int, m: int, n: int, k: int, n_tilde: int, dim: int) -> PowerFunctional:
    """|X_j(m, n, k)|**(2 n_tilde)."""
    base = x1(m, n, k, dim) if j == 1 else x2(m, n, k, dim)
    return PowerFunctional(base, n_tilde, descriptor=f"f{j}(m={m},n={n},k={k},N={n_tilde})")


def g_pow(j: int, m: int, n: int, k: int, n_tilde: int, dim: int) -> PowerFunctional:
    """|Y_j(m, n, k)|**(2 n_tilde)."""
    base = y1(m, n, k, dim) if j == 1 else y2(m, n, k, dim)
    return PowerFunctional(base, n_tilde, descriptor=f"g{j}(m={m},n={n},k={k},N={n_tilde})")


def _norm(x: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    return np.sqrt(np.sum(x**2, axis=axes))


def _power(x: np.ndarray, exponent: float, axes: tuple[int, ...]) -> np.ndarray:
    return _norm(x, axes) ** exponent


def _power_grad(x: np.ndarray, exponent: float, axes: tuple[int, ...]) -> np.ndarray:
    """Gradient of |x|**exponent; zero at x = 0 (exponent > 1)."""
    norm = np.expand_dims(_norm(x, axes), axes)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0.0, exponent * norm ** (exponent - 2.0), 0.0)
    return scale * x


class RhoPowerFunctional(IncrementFunctional):
    """rho_j powers of w^(m) as exact functionals of dyadic increments.

    kind="single": rho_1(w^(m))**p, generation level m.
    kind="diff":   rho_j(w^(m+1), w^(m))**(p/j), generation level m + 1.
    kind="product": rho_1(w^(m))**p * rho_1(w^(m+1), w^(m))**p, generation level m + 1.
    """

    def __init__(self, kind: str, j: int, m: int, dim: int, params: RhoParams):
        if kind not in ("single", "diff", "product"):
            raise RejectedInputError(f"unknown rho functional kind {kind!r}")
        if j not in (1, 2) or (kind != "diff" and j != 1):
            raise RejectedInputError(f"rho functional {kind!r} is available for j=1 only (got j={j})")
        if m < 0:
            raise RejectedInputError(f"m must be >= 0, got {m}")
        self.kind = kind
        self.j = j
        self.m = m
        self.params = params
        self.dim = dim
        self.generation_level = m if kind == "single" else m + 1
        self.offset = 0
        self.block_size = 2**self.generation_level
        self.descriptor = f"rho{j}-{kind}(m={m})"

    def _direct_top(self, level: int) -> int:
        if self.params.tail_mode is TailMode.ANALYTIC_TAIL:
            return level
        return min(level, self.params.n_max)

    def _fine_weight(self) -> float:
        """Weight of level m + 1 and everything finer, where the difference is linear."""
        level = self.m + 1
        head = level**self.params.gamma if self._direct_top(level) == level else 0.0
        return head + tail_weight(self.params, level)

    def _single(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p, gamma, m = self.params.p, self.params.gamma, self.m
        weight = tail_weight(self.params, m)
        value = weight * np.sum(_power(xi, p, (-1,)), axis=-1)
        grad = weight * _power_grad(xi, p, (-1,))
        for n in range(1, self._direct_top(m) + 1):
            width = 2 ** (m - n)
            coarse = xi.reshape(xi.shape[:-2] + (2**n, width, self.dim)).sum(axis=-2)
            value = value + n**gamma * np.sum(_power(coarse, p, (-1,)), axis=-1)
            grad = grad + n**gamma * np.repeat(_power_grad(coarse, p, (-1,)), width, axis=-2)
        return value, grad

    def _diff1(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p = self.params.p
        scale = self._fine_weight() * 2.0 ** (1.0 - p)
        u = a - b
        grad = scale * _power_grad(u, p, (-1,))
        return scale * np.sum(_power(u, p, (-1,)), axis=-1), grad, -grad

    def _diff2(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p, gamma, m = self.params.p, self.params.gamma, self.m
        exponent = p / 2.0
        matrix = (-2, -1)
        lead = a.shape[:-2]

        bracket = 0.5 * (np.einsum("...ri,...rj->...rij", a, b) - np.einsum("...ri,...rj->...rij", b, a))
        value = np.zeros(lead)
        grad_a = np.zeros_like(a)
        grad_b = np.zeros_like(b)
        for n in range(1, self._direct_top(m) + 1):
            width = 2 ** (m - n)
            coarse = bracket.reshape(lead + (2**n, width, self.dim, self.dim)).sum(axis=-3)
            value = value + n**gamma * np.sum(_power(coarse, exponent, matrix), axis=-1)
            g = n**gamma * _power_grad(coarse, exponent, matrix)
            anti = np.repeat(0.5 * (g - np.swapaxes(g, -1, -2)), width, axis=-3)
            grad_a = grad_a + np.einsum("...rij,...rj->...ri", anti, b)
            grad_b = grad_b - np.einsum("...rij,...rj->...ri", anti, a)

        weight = self._fine_weight()
        total = a + b
        coarse_sq = 0.125 * np.einsum("...ri,...rj->...rij", total, total)
        m_a = 0.5 * np.einsum("...ri,...rj->...rij", a, a) - coarse_sq
        m_b = 0.5 * np.einsum("...ri,...rj->...rij", b, b) - coarse_sq
        value = value + weight * (np.sum(_power(m_a, exponent, matrix), axis=-1) + np.sum(_power(m_b, exponent, matrix), axis=-1))
        sym_a = _power_grad(m_a, exponent, matrix)
        sym_a = sym_a + np.swapaxes(sym_a, -1, -2)
        sym_b = _power_grad(m_b, exponent, matrix)
        sym_b = sym_b + np.swapaxes(sym_b, -1, -2)
        shared = 0.125 * np.einsum("...rij,...rj->...ri", sym_a + sym_b, total)
        grad_a = grad_a + weight * (0.5 * np.einsum("...rij,...rj->...ri", sym_a, a) - shared)
        grad_b = grad_b + weight * (0.5 * np.einsum("...rij,...rj->...ri", sym_b, b) - shared)
        return value, grad_a, grad_b

    def _evaluate(self, blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        blocks = self._check(blocks)
        if self.kind == "single":
            return self._single(blocks)
        pairs = blocks.reshape(blocks.shape[:-2] + (2**self.m, 2, self.dim))
        a, b = pairs[..., 0, :], pairs[..., 1, :]
        if self.kind == "diff":
            value, grad_a, grad_b = self._diff1(a, b) if self.j == 1 else self._diff2(a, b)
        else:
            single, single_grad = self._single(a + b)
            diff, diff_a, diff_b = self._diff1(a, b)
            value = single * diff
            grad_a = single[..., None, None] * diff_a + diff[..., None, None] * single_grad
            grad_b = single[..., None, None] * diff_b + diff[..., None, None] * single_grad
        grad = np.stack([grad_a, grad_b], axis=-2).reshape(blocks.shape)
        return value, grad

    def value(self, blocks: np.ndarray) -> np.ndarray:
        return self._evaluate(blocks)[0]

    def gradient(self, blocks: np.ndarray) -> np.ndarray:
        return self._evaluate(blocks)[1]


def grad_h_norm(functional: IncrementFunctional, blocks: np.ndarray) -> np.ndarray:
    """|DF|_H per sample (Hilbert-Schmidt over tensor outputs)."""
    blocks = np.asarray(blocks, dtype=float)
    grad = functional.gradient(blocks)
    lead = blocks.shape[:-2]
    squares = np.sum(grad.reshape(lead + (-1,)) ** 2, axis=-1)
    return np.sqrt(squares * functional.variance)


def hess_h_norm(functional: IncrementFunctional, blocks: np.ndarray) -> np.ndarray:
    """|D^2 F|_{H (x) H} per sample."""
    return np.sqrt(functional.hessian_sq_norm(np.asarray(blocks, dtype=float)) * functional.variance**2)


def value_norm(functional: IncrementFunctional, blocks: np.ndarray) -> np.ndarray:
    blocks = np.asarray(blocks, dtype=float)
    values = functional.value(blocks)
    return np.sqrt(np.sum(values.reshape(blocks.shape[:-2] + (-1,)) ** 2, axis=-1))


@dataclass(frozen=True)
class SobolevEstimate:
    value: float
    stderr: float
    parts: dict[str, tuple[float, float]]
    samples: int


def sample_norms(
    functional: IncrementFunctional,
    samples: int,
    seed: int,
    order: int = 1,
    *,
    stream: int = 1,
    chunk_size: int = 2000,
    threads: int = 1,
) -> dict[str, np.ndarray]:
    """Per-sample |F|, |DF|_H (and |D^2 F|) over seeded chunks."""
    if order not in (1, 2):
        raise RejectedInputError(f"derivative order must be 1 or 2, got {order}")

    def run(chunk) -> dict[str, np.ndarray]:
        blocks = functional.sample(chunk.rng(), chunk.size)
        out = {"F": value_norm(functional, blocks), "DF": grad_h_norm(functional, blocks)}
        if order == 2:
            out["D2F"] = hess_h_norm(functional, blocks)
        return out

    results = map_chunks(run, plan_chunks(samples, chunk_size, seed, stream), threads)
    return {key: np.concatenate([r[key] for r in results]) for key in results[0]}


def sobolev_q1_norm_mc(
    functional: IncrementFunctional,
    q: float,
    nsamples: int,
    seed: int,
    order: int = 1,
    **kwargs,
) -> SobolevEstimate:
    """||F||_q + || |DF|_H ||_q (+ || |D^2 F| ||_q for order 2), with standard errors."""
    norms = sample_norms(functional, nsamples, seed, order, **kwargs)
    parts = {key: estimate_lq(values, q) for key, values in norms.items()}
    value = sum(estimate for estimate, _ in parts.values())
    # parts share samples; the combined error adds them linearly as an upper bound
    stderr = sum(se for _, se in parts.values())
    logger.debug("Sobolev norm of %s at q=%g: %.4g +- %.2g", functional.descriptor, q, value, stderr)
    return SobolevEstimate(value=value, stderr=stderr, parts=parts, samples=nsamples)


@dataclass(frozen=True)
class BoundCheck:
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def passed(self) -> np.ndarray:
        return self.lhs <= self.rhs * (1.0 + 1e-10) + 1e-300


def power_derivative_bound_check(
    base: IncrementFunctional, n_tilde: int, order: int, blocks: np.ndarray
) -> BoundCheck:
    """Chain-rule bounds for |X|**(2N):

    order 1: |D|X|^2N| <= 2N |X|^(2N-1) |DX|
    order 2: |D^2 |X|^2N| <= 2N(2N-1) |X|^(2N-2) |DX|^2 + 2N |X|^(2N-1) |D^2 X|
    """
    if not isinstance(base, (LinearFunctional, QuadraticFunctional)):
        raise RejectedInputError(f"bound check needs X1, X2, Y1 or Y2, got {base.descriptor}")
    if order not in (1, 2):
        raise RejectedInputError(f"derivative order must be 1 or 2, got {order}")
    power = PowerFunctional(base, n_tilde)
    size = value_norm(base, blocks)
    grad = grad_h_norm(base, blocks)
    e = 2 * n_tilde
    if order == 1:
        return BoundCheck(lhs=grad_h_norm(power, blocks), rhs=e * size ** (e - 1) * grad)
    rhs = e * (e - 1) * size ** (e - 2) * grad**2 + e * size ** (e - 1) * hess_h_norm(base, blocks)
    return BoundCheck(lhs=hess_h_norm(power, blocks), rhs=rhs)


def validate_gradient(
    functional: IncrementFunctional, blocks: np.ndarray, h: float = FD_STEP, rtol: float = 1e-6
) -> float:
    """Largest relative gap between analytic partials and central differences."""
    blocks = np.asarray(functional._check(blocks), dtype=float)
    analytic = functional.gradient(blocks)
    lead = blocks.shape[:-2]
    scale = max(1.0, float(np.max(np.abs(analytic))))
    worst = 0.0
    for b in range(functional.block_size):
        for i in range(functional.dim):
            up = blocks.copy()
            down = blocks.copy()
            up[..., b, i] += h
            down[..., b, i] -= h
            numeric = (functional.value(up) - functional.value(down)) / (2.0 * h)
            worst = max(worst, float(np.max(np.abs(numeric - analytic[..., b, i]))) / scale)
    if worst > rtol:
        raise RejectedInputError(f"{functional.descriptor}: analytic gradient off by {worst:.3g} (relative)")
    logger.debug("Gradient of %s validated on %d samples (gap %.2g)", functional.descriptor, int(np.prod(lead)), worst)
    return worst

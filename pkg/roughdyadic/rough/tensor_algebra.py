"""Truncated tensor algebra T2(R^d): elements (1, a1, a2) and their Chen products.

Level 0 is implicitly the scalar 1. ``level2[i, j]`` holds the iterated
integral with the earlier increment in slot ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from roughdyadic.core.errors import DimensionMismatchError, RejectedInputError


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GroupTensor2:
    level1: np.ndarray
    level2: np.ndarray

    def __post_init__(self) -> None:
        level1 = np.array(self.level1, dtype=float)
        level2 = np.array(self.level2, dtype=float)
        if level1.ndim != 1 or level1.size < 1:
            raise RejectedInputError(f"level1 must be a non-empty vector, got shape {level1.shape}")
        dim = level1.size
        if level2.shape != (dim, dim):
            raise DimensionMismatchError(
                f"level2 must have shape {(dim, dim)}, got {level2.shape}"
            )
        if not (np.all(np.isfinite(level1)) and np.all(np.isfinite(level2))):
            raise RejectedInputError("tensor entries must be finite")
        object.__setattr__(self, "level1", _frozen(level1))
        object.__setattr__(self, "level2", _frozen(level2))

    @property
    def dim(self) -> int:
        return self.level1.size

    @classmethod
    def identity(cls, dim: int) -> GroupTensor2:
        if dim < 1:
            raise RejectedInputError(f"dim must be >= 1, got {dim}")
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    def __repr__(self) -> str:
        return f"GroupTensor2(dim={self.dim}, level1={self.level1.tolist()}, level2={self.level2.tolist()})"


def _check_same_dim(a: GroupTensor2, b: GroupTensor2) -> None:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")


def chen_mul(a: GroupTensor2, b: GroupTensor2) -> GroupTensor2:
    """Product in T2: (1, a1 + b1, a2 + b2 + a1 (x) b1)."""
    _check_same_dim(a, b)
    return GroupTensor2(
        a.level1 + b.level1,
        a.level2 + b.level2 + np.outer(a.level1, b.level1),
    )


def chen_inv(a: GroupTensor2) -> GroupTensor2:
    return GroupTensor2(-a.level1, -a.level2 + np.outer(a.level1, a.level1))


def _check_vectors(xi: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if xi.shape != eta.shape or xi.ndim != 1:
        raise DimensionMismatchError(f"bracket operands must be equal-length vectors, got {xi.shape} and {eta.shape}")
    return xi, eta


def lie_bracket(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """[xi, eta] = xi (x) eta - eta (x) xi."""
    xi, eta = _check_vectors(xi, eta)
    return np.outer(xi, eta) - np.outer(eta, xi)


def anti_bracket(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """{xi, eta} = xi (x) eta + eta (x) xi."""
    xi, eta = _check_vectors(xi, eta)
    return np.outer(xi, eta) + np.outer(eta, xi)


def level_norms(a: GroupTensor2) -> tuple[float, float]:
    return float(np.linalg.norm(a.level1)), float(np.linalg.norm(a.level2))


def dilate(a: GroupTensor2, lam: float) -> GroupTensor2:
    return GroupTensor2(lam * a.level1, lam * lam * a.level2)


def geometric_defect(a: GroupTensor2) -> float:
    """Frobenius norm of Sym(a2) - a1 (x) a1 / 2; zero for lifts of actual paths."""
    sym = 0.5 * (a.level2 + a.level2.T)
    return float(np.linalg.norm(sym - 0.5 * np.outer(a.level1, a.level1)))


def tensor_distance(a: GroupTensor2, b: GroupTensor2) -> float:
    """Largest level-wise norm of a - b."""
    _check_same_dim(a, b)
    return max(
        float(np.linalg.norm(a.level1 - b.level1)),
        float(np.linalg.norm(a.level2 - b.level2)),
    )


def chen_fold(level1: np.ndarray, level2: np.ndarray) -> GroupTensor2:
    """Ordered product of the elements (1, level1[i], level2[i]), i = 0..n-1.

    Args:
        level1: array of shape (n, d).
        level2: array of shape (n, d, d).

    Returns:
        The product of all n elements, left to right.
    """
    level1 = np.asarray(level1, dtype=float)
    level2 = np.asarray(level2, dtype=float)
    if level1.ndim != 2 or level2.shape != level1.shape + (level1.shape[1],):
        raise DimensionMismatchError(
            f"chen_fold expects (n, d) and (n, d, d) arrays, got {level1.shape} and {level2.shape}"
        )
    if level1.shape[0] == 0:
        return GroupTensor2.identity(level1.shape[1])
    before = np.cumsum(level1, axis=0) - level1
    total2 = level2.sum(axis=0) + np.einsum("ni,nj->ij", before, level1)
    return GroupTensor2(level1.sum(axis=0), total2)


def running_products(level1: np.ndarray, level2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prefix products of a sequence of T2 elements.

    Takes (..., n, d) and (..., n, d, d) and returns (..., n+1, d) and
    (..., n+1, d, d); entry 0 is the identity and entry i is the product of
    the first i elements. Leading axes are independent sequences.
    """
    level1 = np.asarray(level1, dtype=float)
    level2 = np.asarray(level2, dtype=float)
    *batch, n, dim = level1.shape
    sig1 = np.zeros((*batch, n + 1, dim))
    sig1[..., 1:, :] = np.cumsum(level1, axis=-2)
    terms = level2 + np.einsum("...ni,...nj->...nij", sig1[..., :-1, :], level1)
    sig2 = np.zeros((*batch, n + 1, dim, dim))
    sig2[..., 1:, :, :] = np.cumsum(terms, axis=-3)
    return sig1, sig2
